//! Token segmentation used to match token counts when corrupting text.

use crate::error::Result;

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<String>>;

    /// Rebuild text from tokens. The default joins with single spaces, which
    /// is exact (up to whitespace normalisation) for whitespace tokenizers.
    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }

    fn count(&self, text: &str) -> Result<usize> {
        Ok(self.tokenize(text)?.len())
    }
}

/// Splits on Unicode whitespace.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<String>> {
        Ok(text.split_whitespace().map(str::to_owned).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_tokens() {
        let t = WhitespaceTokenizer;
        assert!(t.tokenize("").unwrap().is_empty());
        assert_eq!(t.count("a b c").unwrap(), 3);
        assert_eq!(t.count("  a\n\tb  ").unwrap(), 2);
        assert_eq!(t.detokenize(&["a".into(), "b".into()]), "a b");
    }
}
