use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Lang;

/// Tokenizer used for length statistics, BILOU tagging and token graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    /// Maximal runs of non-whitespace.
    Whitespace,
    /// Whitespace runs with ASCII punctuation split off as separate tokens.
    WhitespacePunct,
    /// One token per non-whitespace code point.
    Char,
}

impl Tokenization {
    pub fn default_for(lang: Lang) -> Self {
        match lang {
            Lang::En => Tokenization::Whitespace,
            Lang::Zh => Tokenization::Char,
        }
    }
}

/// A token with code-point offsets into its source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(text: &str, mode: Tokenization) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    // (byte offset, char offset) of the token being built
    let mut open: Option<(usize, usize)> = None;
    let mut ci = 0usize;
    fn close<'a>(text: &'a str, open: &mut Option<(usize, usize)>, out: &mut Vec<Token<'a>>, byte: usize, ci: usize) {
        if let Some((b, c)) = open.take() {
            out.push(Token {
                text: &text[b..byte],
                start: c,
                end: ci,
            });
        }
    }
    for (byte, ch) in text.char_indices() {
        if ch.is_whitespace() {
            close(text, &mut open, &mut out, byte, ci);
        } else {
            match mode {
                Tokenization::Whitespace => {
                    if open.is_none() {
                        open = Some((byte, ci));
                    }
                }
                Tokenization::WhitespacePunct if ch.is_ascii_punctuation() => {
                    close(text, &mut open, &mut out, byte, ci);
                    out.push(Token {
                        text: &text[byte..byte + ch.len_utf8()],
                        start: ci,
                        end: ci + 1,
                    });
                }
                Tokenization::WhitespacePunct => {
                    if open.is_none() {
                        open = Some((byte, ci));
                    }
                }
                Tokenization::Char => {
                    out.push(Token {
                        text: &text[byte..byte + ch.len_utf8()],
                        start: ci,
                        end: ci + 1,
                    });
                }
            }
        }
        ci += 1;
    }
    close(text, &mut open, &mut out, text.len(), ci);
    out
}

pub fn token_count(text: &str, mode: Tokenization) -> usize {
    tokenize(text, mode).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn texts<'a>(t: &[Token<'a>]) -> Vec<&'a str> {
        t.iter().map(|t| t.text).collect()
    }

    #[test]
    fn whitespace_tokens_carry_char_offsets() {
        let t = tokenize("  Twitter Inc  gained", Tokenization::Whitespace);
        assert_eq!(texts(&t), vec!["Twitter", "Inc", "gained"]);
        assert_eq!((t[0].start, t[0].end), (2, 9));
        assert_eq!((t[2].start, t[2].end), (15, 21));
    }

    #[test]
    fn punct_split() {
        let t = tokenize("FX losses, seen.", Tokenization::WhitespacePunct);
        assert_eq!(texts(&t), vec!["FX", "losses", ",", "seen", "."]);
        assert_eq!((t[2].start, t[2].end), (9, 10));
    }

    #[test]
    fn char_tokens_skip_spaces() {
        let t = tokenize("荣联 科技", Tokenization::Char);
        assert_eq!(texts(&t), vec!["荣", "联", "科", "技"]);
        assert_eq!(t[2].start, 3);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("", Tokenization::Whitespace).is_empty());
        assert!(tokenize("   ", Tokenization::Char).is_empty());
    }
}
