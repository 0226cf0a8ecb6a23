use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::{char_slice, CorpusError, Document, EntityAnnotation, Polarity, Tokenization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BilouTag {
    Begin(Polarity),
    Inside(Polarity),
    Last(Polarity),
    Unit(Polarity),
    Outside,
}

impl fmt::Display for BilouTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BilouTag::Begin(p) => write!(f, "B-{p}"),
            BilouTag::Inside(p) => write!(f, "I-{p}"),
            BilouTag::Last(p) => write!(f, "L-{p}"),
            BilouTag::Unit(p) => write!(f, "U-{p}"),
            BilouTag::Outside => f.write_str("O"),
        }
    }
}

impl FromStr for BilouTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        if s == "O" {
            return Ok(BilouTag::Outside);
        }
        let (prefix, label) = s.split_once('-').ok_or(())?;
        let p = Polarity::from_label(label).ok_or(())?;
        match prefix {
            "B" => Ok(BilouTag::Begin(p)),
            "I" => Ok(BilouTag::Inside(p)),
            "L" => Ok(BilouTag::Last(p)),
            "U" => Ok(BilouTag::Unit(p)),
            _ => Err(()),
        }
    }
}

/// One token with its code-point span and BILOU tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub token: String,
    pub start: usize,
    pub end: usize,
    pub tag: BilouTag,
}

pub fn to_bilou(doc: &Document, mode: Tokenization) -> Result<Vec<TaggedToken>, CorpusError> {
    let tokens = super::tokenize(&doc.text, mode);
    let mut out: Vec<TaggedToken> = tokens
        .iter()
        .map(|t| TaggedToken {
            token: String::from(t.text),
            start: t.start,
            end: t.end,
            tag: BilouTag::Outside,
        })
        .collect();
    for e in &doc.entities {
        let first = tokens.iter().position(|t| t.start == e.start);
        let last = tokens.iter().position(|t| t.end == e.end);
        let (first, last) = match (first, last) {
            (Some(f), Some(l)) if f <= l => (f, l),
            _ => {
                return Err(CorpusError::TokenBoundaryMismatch {
                    start: e.start,
                    end: e.end,
                })
            }
        };
        let p = e.sentiment;
        if first == last {
            out[first].tag = BilouTag::Unit(p);
        } else {
            out[first].tag = BilouTag::Begin(p);
            for t in &mut out[first + 1..last] {
                t.tag = BilouTag::Inside(p);
            }
            out[last].tag = BilouTag::Last(p);
        }
    }
    Ok(out)
}

/// Rebuilds entity annotations from a tagged token sequence over `text`.
pub fn from_bilou(text: &str, tagged: &[TaggedToken]) -> Result<Vec<EntityAnnotation>, CorpusError> {
    let malformed = |position, reason| CorpusError::MalformedTagSequence { position, reason };
    let mut out = Vec::new();
    let mut open: Option<(usize, Polarity)> = None;
    for (i, t) in tagged.iter().enumerate() {
        match (t.tag, open) {
            (BilouTag::Outside, None) => {}
            (BilouTag::Unit(p), None) => out.push(entity(text, t.start, t.end, p, i)?),
            (BilouTag::Begin(p), None) => open = Some((t.start, p)),
            (BilouTag::Inside(p), Some((_, q))) if p == q => {}
            (BilouTag::Last(p), Some((start, q))) if p == q => {
                out.push(entity(text, start, t.end, p, i)?);
                open = None;
            }
            (BilouTag::Inside(_) | BilouTag::Last(_), Some(_)) => {
                return Err(malformed(i, "polarity changes inside an entity"))
            }
            (BilouTag::Inside(_) | BilouTag::Last(_), None) => {
                return Err(malformed(i, "continuation tag without a preceding B-"))
            }
            (_, Some(_)) => return Err(malformed(i, "entity opened by B- is never closed by L-")),
        }
    }
    if open.is_some() {
        return Err(malformed(tagged.len(), "dangling B- at end of sequence"));
    }
    Ok(out)
}

fn entity(text: &str, start: usize, end: usize, p: Polarity, pos: usize) -> Result<EntityAnnotation, CorpusError> {
    let value = char_slice(text, start, end).ok_or(CorpusError::MalformedTagSequence {
        position: pos,
        reason: "token offsets fall outside the text",
    })?;
    Ok(EntityAnnotation::new(value, start, end, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Lang;
    use alloc::vec;

    fn tags(v: &[TaggedToken]) -> Vec<String> {
        v.iter().map(|t| alloc::format!("{}", t.tag)).collect()
    }

    #[test]
    fn no_entities_all_outside() {
        let doc = Document::new("d", "abc def", Lang::En);
        let t = to_bilou(&doc, Tokenization::Whitespace).unwrap();
        assert_eq!(tags(&t), vec!["O", "O"]);
        assert!(from_bilou(&doc.text, &t).unwrap().is_empty());
    }

    #[test]
    fn multi_token_entity() {
        let doc = Document::new("d", "Twitter Inc gained", Lang::En)
            .with_entities(vec![EntityAnnotation::new("Twitter Inc", 0, 11, Polarity::Positive)]);
        let t = to_bilou(&doc, Tokenization::Whitespace).unwrap();
        assert_eq!(tags(&t), vec!["B-Positive", "L-Positive", "O"]);
        assert_eq!(from_bilou(&doc.text, &t).unwrap(), doc.entities);
    }

    #[test]
    fn three_token_entity_has_inside() {
        let doc = Document::new("d", "Bank of America fell", Lang::En)
            .with_entities(vec![EntityAnnotation::new("Bank of America", 0, 15, Polarity::Negative)]);
        let t = to_bilou(&doc, Tokenization::Whitespace).unwrap();
        assert_eq!(tags(&t), vec!["B-Negative", "I-Negative", "L-Negative", "O"]);
    }

    #[test]
    fn single_token_entity_is_unit() {
        let doc = Document::new("d", "Rupiah leads Asia FX losses", Lang::En)
            .with_entities(vec![EntityAnnotation::new("Rupiah", 0, 6, Polarity::Negative)]);
        let t = to_bilou(&doc, Tokenization::Whitespace).unwrap();
        assert_eq!(t[0].tag, BilouTag::Unit(Polarity::Negative));
    }

    #[test]
    fn chinese_per_character() {
        let doc = Document::new("d", "东风集团股份", Lang::Zh)
            .with_entities(vec![EntityAnnotation::new("东风集团", 0, 4, Polarity::Negative)]);
        let t = to_bilou(&doc, Tokenization::Char).unwrap();
        assert_eq!(
            tags(&t),
            vec!["B-Negative", "I-Negative", "I-Negative", "L-Negative", "O", "O"]
        );
        assert_eq!(from_bilou(&doc.text, &t).unwrap(), doc.entities);
    }

    #[test]
    fn boundary_mismatch_reports_span() {
        let doc = Document::new("d", "Apple, Inc rose", Lang::En)
            .with_entities(vec![EntityAnnotation::new("Apple", 0, 5, Polarity::Positive)]);
        assert_eq!(
            to_bilou(&doc, Tokenization::Whitespace),
            Err(CorpusError::TokenBoundaryMismatch { start: 0, end: 5 })
        );
        assert!(to_bilou(&doc, Tokenization::WhitespacePunct).is_ok());
    }

    fn seq(text: &str, tags: &[&str]) -> Vec<TaggedToken> {
        super::super::tokenize(text, Tokenization::Whitespace)
            .iter()
            .zip(tags)
            .map(|(t, tag)| TaggedToken {
                token: t.text.into(),
                start: t.start,
                end: t.end,
                tag: tag.parse().unwrap(),
            })
            .collect()
    }

    #[test]
    fn mixed_polarity_is_malformed() {
        let s = seq("a b", &["B-Positive", "L-Negative"]);
        assert!(matches!(from_bilou("a b", &s), Err(CorpusError::MalformedTagSequence { position: 1, .. })));
    }

    #[test]
    fn dangling_tags_are_malformed() {
        for tags in [&["B-Positive", "O"][..], &["B-Positive", "I-Positive"], &["O", "L-Neutral"], &["I-Neutral", "O"]] {
            let s = seq("a b", tags);
            assert!(from_bilou("a b", &s).is_err(), "{tags:?}");
        }
    }

    #[test]
    fn tag_strings_parse() {
        assert_eq!("U-Neutral".parse::<BilouTag>(), Ok(BilouTag::Unit(Polarity::Neutral)));
        assert_eq!("O".parse::<BilouTag>(), Ok(BilouTag::Outside));
        assert!("X-Positive".parse::<BilouTag>().is_err());
    }
}
