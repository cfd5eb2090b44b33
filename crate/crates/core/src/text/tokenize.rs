/// Characters removed from every word. The two-character quote forms
/// `` and '' are covered by their single characters.
pub const PUNCTUATION: &[char] = &['`', '\'', ',', '.', '-', '?', '!'];

/// Splits on whitespace, lowercases, and removes [`PUNCTUATION`]. Words that
/// consist only of punctuation disappear.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !PUNCTUATION.contains(c))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("A human playing guitar."), ["a", "human", "playing", "guitar"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Two children are swimming in the ocean."),
            ["two", "children", "are", "swimming", "in", "the", "ocean"]
        );
        assert_eq!(
            tokenize("``Hi'' , she said - well-known?!"),
            ["hi", "she", "said", "wellknown"]
        );
    }

    proptest! {
        #[test]
        fn idempotent(s in "[ a-zA-Z.,!?'`\\-]{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once);
        }
    }
}
