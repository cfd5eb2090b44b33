use rand::Rng;

use crate::error::Result;
use crate::numcore::{Bound, Graph, ParamStore, Tensor, Var};

/// Graph handles for one GRU cell's weights, resolved from a bound store.
///
/// Row-vector convention: `x` is `1×input`, `h` is `1×hidden`, input
/// weights are `input×hidden` and recurrent weights `hidden×hidden`.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl GruParams {
    /// Adds `{prefix}.{w,u,b}_{z,r,h}` to `store`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<()> {
        for gate in GATES {
            store.insert(format!("{prefix}.w_{gate}"), Tensor::glorot(input, hidden, rng), true)?;
            store.insert(format!("{prefix}.u_{gate}"), Tensor::glorot(hidden, hidden, rng), true)?;
            store.insert(format!("{prefix}.b_{gate}"), Tensor::zeros(&[1, hidden]), true)?;
        }
        Ok(())
    }

    pub fn bind(bound: &Bound<'_>, prefix: &str) -> Result<Self> {
        let v = |n: &str| bound.var(&format!("{prefix}.{n}"));
        Ok(Self {
            w_z: v("w_z")?,
            u_z: v("u_z")?,
            b_z: v("b_z")?,
            w_r: v("w_r")?,
            u_r: v("u_r")?,
            b_r: v("b_r")?,
            w_h: v("w_h")?,
            u_h: v("u_h")?,
            b_h: v("b_h")?,
        })
    }

    pub fn hidden(&self, g: &Graph<'_>) -> usize {
        g.shape(self.u_z).0
    }
}

/// One GRU update:
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h̃  = tanh(x W_h + (r∘h) U_h + b_h)
/// h' = (1 − z)∘h + z∘h̃
/// ```
pub fn gru_step(g: &mut Graph<'_>, x: Var, h_prev: Var, p: &GruParams) -> Result<Var> {
    let gate = |g: &mut Graph<'_>, w: Var, u: Var, b: Var, h: Var| -> Result<Var> {
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add_row_bias(s, b)
    };
    let z_pre = gate(g, p.w_z, p.u_z, p.b_z, h_prev)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.w_r, p.u_r, p.b_r, h_prev)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h_prev)?;
    let cand_pre = gate(g, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = g.tanh(cand_pre);
    // (1 − z)∘h + z∘h̃ = h + z∘(h̃ − h)
    let diff = g.sub(cand, h_prev)?;
    let step = g.mul(z, diff)?;
    g.add(h_prev, step)
}
