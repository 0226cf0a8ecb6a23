use alloc::string::String;
use alloc::vec::Vec;

use super::{CorpusError, EntityAnnotation, Lang, Polarity};

/// Assigns character spans to entity surface strings.
///
/// Values are placed longest-first (ties keep source order); each takes the
/// leftmost occurrence that does not intersect an already placed span.
/// English values fall back to a case-insensitive match when no exact
/// occurrence is free, and the annotation then carries the text's own
/// surface form. The result is sorted by start offset.
pub fn align_spans(
    text: &str,
    lang: Lang,
    entity_values: &[(String, Polarity)],
) -> Result<Vec<EntityAnnotation>, CorpusError> {
    let chars: Vec<char> = text.chars().collect();
    let mut order: Vec<usize> = (0..entity_values.len()).collect();
    order.sort_by_key(|&i| core::cmp::Reverse(entity_values[i].0.chars().count()));

    let mut placed: Vec<EntityAnnotation> = Vec::with_capacity(entity_values.len());
    for i in order {
        let (value, polarity) = &entity_values[i];
        let needle: Vec<char> = value.chars().collect();
        let free = |start: usize| {
            let end = start + needle.len();
            placed.iter().all(|p| end <= p.start || p.end <= start)
        };
        let exact = find_free(&chars, &needle, |a, b| a == b, free);
        let found = match (exact, lang) {
            (Some(s), _) => Some(s),
            (None, Lang::En) => find_free(&chars, &needle, chars_eq_ignore_case, free),
            (None, Lang::Zh) => None,
        };
        let start = found.ok_or_else(|| CorpusError::UnalignableEntity {
            value: value.clone(),
        })?;
        let end = start + needle.len();
        placed.push(EntityAnnotation {
            value: chars[start..end].iter().collect(),
            start,
            end,
            sentiment: *polarity,
        });
    }
    placed.sort_by_key(|e| e.start);
    Ok(placed)
}

fn find_free(
    hay: &[char],
    needle: &[char],
    eq: impl Fn(char, char) -> bool,
    free: impl Fn(usize) -> bool,
) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len())
        .find(|&s| hay[s..s + needle.len()].iter().zip(needle).all(|(a, b)| eq(*a, *b)) && free(s))
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}
