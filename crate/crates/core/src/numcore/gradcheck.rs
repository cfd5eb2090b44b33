use super::graph::{Graph, Var};
use super::params::{Bound, ParamStore};
use crate::error::{Result, VeError};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Outcome of comparing backward() against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

fn eval<F>(params: &ParamStore, f: &F) -> Result<f64>
where
    F: for<'p> Fn(&mut Graph<'p>, &Bound<'p>) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = g.bind(params)?;
    let loss = f(&mut g, &bound)?;
    g.scalar(loss)
}

/// Checks every trainable coordinate of `params`.
///
/// `f` builds a scalar loss on a fresh graph from the bound parameters and
/// must be deterministic. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(params: &ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'p> Fn(&mut Graph<'p>, &Bound<'p>) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(VeError::Contract(format!("eps must be positive, got {eps}")));
    }

    let analytic = {
        let mut g = Graph::new();
        let bound = g.bind(params)?;
        let loss = f(&mut g, &bound)?;
        g.backward(loss)?;
        bound.gradients(&g)
    };

    let base = eval(params, &f)?;
    if eval(params, &f)?.to_bits() != base.to_bits() {
        return Err(VeError::Contract(
            "loss function is not deterministic; gradient check is invalid".into(),
        ));
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    let names: Vec<(usize, String, bool)> = params
        .iter()
        .enumerate()
        .map(|(i, (n, p))| (i, n.to_string(), p.trainable))
        .collect();

    for (pi, name, trainable) in names {
        if !trainable {
            continue;
        }
        let grad = analytic.get(pi).expect("trainable param has a gradient").to_vec();
        for (ci, &a) in grad.iter().enumerate() {
            let orig = work.by_index_mut(pi).tensor.data()[ci];
            work.by_index_mut(pi).tensor.data_mut()[ci] = orig + eps;
            let plus = eval(&work, &f)?;
            work.by_index_mut(pi).tensor.data_mut()[ci] = orig - eps;
            let minus = eval(&work, &f)?;
            work.by_index_mut(pi).tensor.data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), ci));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn quadratic_store() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::from_rows(&[&[0.3, -1.2], &[2.0, 0.7]]), true)
            .unwrap();
        p.insert("frozen", Tensor::from_rows(&[&[1.0, 2.0]]), false).unwrap();
        p
    }

    fn quadratic<'p>(g: &mut Graph<'p>, b: &Bound<'p>) -> Result<Var> {
        let w = b.var("w")?;
        let x = b.var("frozen")?;
        let xw = g.matmul(x, w)?;
        let sq = g.mul(xw, xw)?;
        Ok(g.sum(sq))
    }

    #[test]
    fn quadratic_is_exact() {
        let report = finite_diff_check(&quadratic_store(), DEFAULT_EPS, quadratic).unwrap();
        assert_eq!(report.coordinates, 4);
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn zero_eps_is_a_contract_error() {
        let err = finite_diff_check(&quadratic_store(), 0.0, quadratic).unwrap_err();
        assert!(matches!(err, VeError::Contract(_)));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu'(0) is taken as 0 while the central difference sees 0.5
        let mut p = ParamStore::new();
        p.insert("w", Tensor::from_rows(&[&[0.0]]), true).unwrap();
        let report = finite_diff_check(&p, DEFAULT_EPS, |g, b| {
            let w = b.var("w")?;
            let r = g.relu(w);
            Ok(g.sum(r))
        })
        .unwrap();
        assert!(report.max_rel_error > 0.5);
    }
}
