use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Document, Lang, Tokenization};

/// Coarse part-of-speech classes assigned by the rule tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosTag {
    Noun,
    Verb,
    Func,
    Num,
    Punct,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 6] = [PosTag::Noun, PosTag::Verb, PosTag::Func, PosTag::Num, PosTag::Punct, PosTag::Other];

    pub fn index(self) -> usize {
        self as usize
    }
}

const N_TAGS: usize = 6;
/// Bigram vector length: (BOS + tags) × (tags + EOS).
pub const BIGRAM_DIM: usize = (N_TAGS + 1) * (N_TAGS + 1);

const EN_FUNC: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "from", "by", "with", "and", "or", "but", "as", "than",
    "that", "this", "these", "those", "its", "it", "their", "they", "he", "she", "his", "her", "we", "our", "you",
    "i", "not", "no", "into", "over", "after", "before", "amid", "while", "about", "against", "per", "if", "so",
    "up", "down", "out", "off", "which", "who", "whose", "what", "when", "where", "all", "some", "any", "each",
];

const EN_VERB: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "has", "have", "had", "do", "does", "did", "will", "would",
    "can", "could", "may", "might", "shall", "should", "must", "rose", "rise", "rises", "fell", "fall", "falls",
    "gain", "gains", "jump", "jumps", "drop", "drops", "slip", "slips", "sank", "sink", "sinks", "soar", "soars",
    "climb", "climbs", "plunge", "plunges", "hit", "hits", "beat", "beats", "miss", "misses", "cut", "cuts", "buy",
    "buys", "sell", "sells", "say", "says", "said", "expect", "expects", "report", "reports", "post", "posts",
    "raise", "raises", "lower", "lowers", "see", "sees", "saw", "make", "makes", "made", "get", "gets", "got",
];

fn tag_en(token: &str) -> PosTag {
    let mut chars = token.chars();
    let first = match chars.next() {
        Some(c) => c,
        None => return PosTag::Other,
    };
    if token.chars().count() == 1 && first.is_ascii_punctuation() {
        return PosTag::Punct;
    }
    if first.is_ascii_digit() || ((first == '$' || first == '-' || first == '+') && chars.next().is_some_and(|c| c.is_ascii_digit())) {
        return PosTag::Num;
    }
    if !token.chars().any(|c| c.is_alphabetic()) {
        return PosTag::Other;
    }
    let lower: String = token.to_lowercase();
    if EN_FUNC.contains(&lower.as_str()) {
        return PosTag::Func;
    }
    if EN_VERB.contains(&lower.as_str()) {
        return PosTag::Verb;
    }
    let n = lower.chars().count();
    if n > 4 && (lower.ends_with("ed") || lower.ends_with("ing")) {
        return PosTag::Verb;
    }
    if n > 4 && lower.ends_with("ly") {
        return PosTag::Other;
    }
    PosTag::Noun
}

const ZH_NUM: &str = "零一二三四五六七八九十百千万亿两〇%％.．";
const ZH_FUNC: &str = "的了在是和与及或而但也就都又把被对于从向以之其这那此该个为将所着过等并";
const ZH_VERB: &str = "涨跌升降增减买卖发布称表示认为预计达到出现推出实现完成获得下滑上涨下跌收购投资";

fn tag_zh(ch: char) -> PosTag {
    if ch.is_ascii_digit() || ZH_NUM.contains(ch) {
        PosTag::Num
    } else if ch.is_ascii_punctuation() || "，。、；：？！“”‘’（）《》【】—…·".contains(ch) {
        PosTag::Punct
    } else if ZH_FUNC.contains(ch) {
        PosTag::Func
    } else if ZH_VERB.contains(ch) {
        PosTag::Verb
    } else if ('\u{4e00}'..='\u{9fff}').contains(&ch) || ch.is_alphabetic() {
        PosTag::Noun
    } else {
        PosTag::Other
    }
}

/// Splits edge punctuation off a whitespace token, keeping numeric
/// decorations such as `$5`, `-3` and `4%` inside the word.
fn peel(tok: &str) -> (&str, &str, &str) {
    let keep_lead = |c: char, rest: &str| matches!(c, '$' | '-' | '+') && rest.starts_with(|d: char| d.is_ascii_digit());
    let mut start = 0;
    for (i, c) in tok.char_indices() {
        if c.is_ascii_punctuation() && !keep_lead(c, &tok[i + 1..]) {
            start = i + 1;
        } else {
            break;
        }
    }
    let mut end = tok.len();
    for (i, c) in tok[start..].char_indices().rev() {
        if c.is_ascii_punctuation() && c != '%' {
            end = start + i;
        } else {
            break;
        }
    }
    (&tok[..start], &tok[start..end], &tok[end..])
}

/// Coarse tags of a document's tokens (English: whitespace tokens with edge
/// punctuation split off; Chinese: one tag per character).
pub fn pos_tags(text: &str, lang: Lang) -> Vec<PosTag> {
    match lang {
        Lang::En => {
            let mut out = Vec::new();
            for t in tokenize(text, Tokenization::Whitespace) {
                let (lead, core, trail) = peel(t.text);
                out.extend(lead.chars().map(|_| PosTag::Punct));
                if !core.is_empty() {
                    out.push(tag_en(core));
                }
                out.extend(trail.chars().map(|_| PosTag::Punct));
            }
            out
        }
        Lang::Zh => text.chars().filter(|c| !c.is_whitespace()).map(tag_zh).collect(),
    }
}

/// Tag-bigram counts including sentence boundaries. Empty documents yield
/// the zero vector.
pub fn pos_bigram_vector(doc: &Document) -> Vec<f64> {
    let tags = pos_tags(&doc.text, doc.lang);
    let mut v = vec![0.0; BIGRAM_DIM];
    if tags.is_empty() {
        return v;
    }
    let bos = N_TAGS;
    let eos = N_TAGS;
    let mut prev = bos;
    for t in &tags {
        v[prev * (N_TAGS + 1) + t.index()] += 1.0;
        prev = t.index();
    }
    v[prev * (N_TAGS + 1) + eos] += 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosTag::*;

    #[test]
    fn english_rules() {
        assert_eq!(pos_tags("Apple rose sharply", Lang::En), vec![Noun, Verb, Other]);
        assert_eq!(pos_tags("the stock fell 3.5% .", Lang::En), vec![Func, Noun, Verb, Num, Punct]);
        assert_eq!(pos_tags("Shares climbed, analysts said", Lang::En), vec![Noun, Verb, Punct, Noun, Verb]);
        assert_eq!(pos_tags("(\"$5\")", Lang::En), vec![Punct, Punct, Num, Punct, Punct]);
    }

    #[test]
    fn chinese_rules() {
        assert_eq!(pos_tags("股价上涨了三倍。", Lang::Zh), vec![Noun, Noun, Verb, Verb, Func, Num, Noun, Punct]);
    }

    #[test]
    fn bigram_layout() {
        let v = pos_bigram_vector(&Document::new("a", "Apple rose", Lang::En));
        assert_eq!(v.iter().sum::<f64>(), 3.0);
        assert_eq!(v[6 * 7 + Noun.index()], 1.0);
        assert_eq!(v[Noun.index() * 7 + Verb.index()], 1.0);
        assert_eq!(v[Verb.index() * 7 + 6], 1.0);
        assert!(pos_bigram_vector(&Document::new("e", "", Lang::En)).iter().all(|x| *x == 0.0));
    }
}
