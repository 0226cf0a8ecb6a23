use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::record::{format_records, PredictionRecord};
use crate::corpus::{Document, Lang};

/// Placeholder names recognised in template bodies as `{name}`.
pub const PLACEHOLDERS: [&str; 5] = [
    "task_description",
    "examples",
    "input_text",
    "pseudo_labels",
    "retrieved_examples",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
}

impl Stage {
    fn required(self) -> &'static [&'static str] {
        match self {
            Stage::Stage1 => &["task_description", "examples", "input_text"],
            Stage::Stage2 => &["retrieved_examples", "input_text", "pseudo_labels"],
        }
    }

    /// The correction prompt carries no task-description block.
    fn forbidden(self) -> &'static [&'static str] {
        match self {
            Stage::Stage1 => &["pseudo_labels", "retrieved_examples"],
            Stage::Stage2 => &["task_description", "examples"],
        }
    }
}

/// Retriever channel an in-context example was selected through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Linguistic,
    Sentiment,
    Average,
    Fixed,
}

impl Channel {
    fn label(self, lang: Lang) -> &'static str {
        match (self, lang) {
            (Channel::Linguistic, Lang::En) => "linguistic",
            (Channel::Sentiment, Lang::En) => "sentiment",
            (Channel::Average, Lang::En) => "average",
            (Channel::Fixed, Lang::En) => "fixed",
            (Channel::Linguistic, Lang::Zh) => "语言",
            (Channel::Sentiment, Lang::Zh) => "情感",
            (Channel::Average, Lang::Zh) => "平均",
            (Channel::Fixed, Lang::Zh) => "固定",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template:?} lacks required placeholder {{{name}}}")]
    MissingPlaceholder { template: String, name: &'static str },
    #[error("template {template:?} must not use placeholder {{{name}}} at this stage")]
    ForbiddenPlaceholder { template: String, name: &'static str },
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("no {stage:?} template for language {lang:?}")]
    NoTemplate { stage: Stage, lang: Lang },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    pub lang: Lang,
    /// Substituted for `{task_description}`; unused by stage-2 templates.
    #[serde(default)]
    pub task_description: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, stage: Stage, lang: Lang, body: impl Into<String>) -> Self {
        let task_description = match (stage, lang) {
            (Stage::Stage2, _) => String::new(),
            (Stage::Stage1, Lang::En) => TASK_EN.trim().to_string(),
            (Stage::Stage1, Lang::Zh) => TASK_ZH.trim().to_string(),
        };
        Self {
            id: id.into(),
            stage,
            lang,
            task_description,
            body: body.into(),
        }
    }

    pub fn with_task_description(mut self, text: impl Into<String>) -> Self {
        self.task_description = text.into();
        self
    }

    /// Placeholder names occurring in the body, in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut found = Vec::new();
        scan(&self.body, |piece| {
            if let Piece::Slot(name) = piece {
                found.push(name);
            }
        });
        found
    }

    pub fn check(&self) -> Result<(), TemplateError> {
        let present = self.placeholders();
        if let Some(name) = self.stage.required().iter().find(|n| !present.contains(n)) {
            return Err(TemplateError::MissingPlaceholder {
                template: self.id.clone(),
                name,
            });
        }
        if let Some(name) = self.stage.forbidden().iter().find(|n| present.contains(n)) {
            return Err(TemplateError::ForbiddenPlaceholder {
                template: self.id.clone(),
                name,
            });
        }
        Ok(())
    }

    fn fill(&self, value_of: impl Fn(&str) -> String) -> String {
        let mut out = String::with_capacity(self.body.len() * 2);
        scan(&self.body, |piece| match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => out.push_str(&value_of(name)),
        });
        out
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'static str),
}

fn scan<'a>(body: &'a str, mut f: impl FnMut(Piece<'a>)) {
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let slot = after
            .find('}')
            .and_then(|close| PLACEHOLDERS.iter().find(|p| **p == &after[..close]).map(|p| (close, *p)));
        match slot {
            Some((close, name)) => {
                f(Piece::Text(&rest[..open]));
                f(Piece::Slot(name));
                rest = &after[close + 1..];
            }
            None => {
                f(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    f(Piece::Text(rest));
}

/// An in-context correction example: a training text with its
/// pseudo-labels, whether they were right, and the gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionExample {
    pub doc_id: String,
    pub text: String,
    pub pseudo: Vec<PredictionRecord>,
    pub correct: bool,
    pub gold: Vec<PredictionRecord>,
    pub channel: Channel,
}

/// Renders the pseudo-label generation prompt with `demos` as gold-labelled
/// demonstrations. With no demos the examples section is empty.
pub fn render_stage1(t: &PromptTemplate, doc: &Document, demos: &[Document]) -> Result<String, TemplateError> {
    if t.stage != Stage::Stage1 {
        return Err(TemplateError::UnknownTemplate(t.id.clone()));
    }
    t.check()?;
    let examples = if demos.is_empty() {
        String::new()
    } else {
        let (header, text_label, output_label) = match t.lang {
            Lang::En => ("Examples:", "Text: ", "Output:"),
            Lang::Zh => ("示例：", "文本：", "输出："),
        };
        let mut s = String::new();
        let _ = writeln!(s, "{header}");
        for d in demos {
            let recs: Vec<PredictionRecord> = d.entities.iter().map(PredictionRecord::from).collect();
            let _ = write!(
                s,
                "{text_label}{}\n{output_label}\n{}\n\n",
                d.text,
                format_records(&recs, t.lang)
            );
        }
        s
    };
    Ok(t.fill(|name| match name {
        "task_description" => t.task_description.clone(),
        "examples" => examples.clone(),
        "input_text" => doc.text.clone(),
        _ => String::new(),
    }))
}

/// Renders the correction prompt: the input, its pseudo-labels and the
/// retrieved examples, each marked correct or incorrect (with gold labels
/// when incorrect).
pub fn render_stage2(
    t: &PromptTemplate,
    doc: &Document,
    pseudo: &[PredictionRecord],
    retrieved: &[CorrectionExample],
) -> Result<String, TemplateError> {
    if t.stage != Stage::Stage2 {
        return Err(TemplateError::UnknownTemplate(t.id.clone()));
    }
    t.check()?;
    let mut examples = String::new();
    for (i, ex) in retrieved.iter().enumerate() {
        let n = i + 1;
        let ch = ex.channel.label(t.lang);
        let pseudo = format_records(&ex.pseudo, t.lang);
        let gold = format_records(&ex.gold, t.lang);
        let _ = match (t.lang, ex.correct) {
            (Lang::En, true) => write!(
                examples,
                "Example {n} ({ch})\nText: {}\nPseudo-labels:\n{pseudo}\nJudgement: correct. The pseudo-labels are kept.\n\n",
                ex.text
            ),
            (Lang::En, false) => write!(
                examples,
                "Example {n} ({ch})\nText: {}\nPseudo-labels:\n{pseudo}\nJudgement: incorrect. Corrected labels:\n{gold}\n\n",
                ex.text
            ),
            (Lang::Zh, true) => write!(
                examples,
                "示例 {n}（{ch}）\n文本：{}\n伪标签：\n{pseudo}\n判断：正确，保留伪标签。\n\n",
                ex.text
            ),
            (Lang::Zh, false) => write!(
                examples,
                "示例 {n}（{ch}）\n文本：{}\n伪标签：\n{pseudo}\n判断：错误，修正后的标签：\n{gold}\n\n",
                ex.text
            ),
        };
    }
    let pseudo_block = format_records(pseudo, t.lang);
    Ok(t.fill(|name| match name {
        "retrieved_examples" => examples.clone(),
        "input_text" => doc.text.clone(),
        "pseudo_labels" => pseudo_block.clone(),
        _ => String::new(),
    }))
}

/// Expected correction-model answer: a verdict followed by the final labels.
pub fn correction_target(gold: &[PredictionRecord], correct: bool, lang: Lang) -> String {
    let labels = format_records(gold, lang);
    match (lang, correct) {
        (Lang::En, true) => alloc::format!("The pseudo-labels are correct.\n{labels}"),
        (Lang::En, false) => alloc::format!("The pseudo-labels are incorrect. Corrected labels:\n{labels}"),
        (Lang::Zh, true) => alloc::format!("伪标签正确。\n{labels}"),
        (Lang::Zh, false) => alloc::format!("伪标签错误，修正后的标签：\n{labels}"),
    }
}

const TASK_EN: &str = include_str!("../../templates/task_en.txt");
const TASK_ZH: &str = include_str!("../../templates/task_zh.txt");

const BUILTIN: [(&str, Stage, Lang, &str); 6] = [
    ("stage1_en_a", Stage::Stage1, Lang::En, include_str!("../../templates/stage1_en_a.txt")),
    ("stage1_en_b", Stage::Stage1, Lang::En, include_str!("../../templates/stage1_en_b.txt")),
    ("stage1_zh_a", Stage::Stage1, Lang::Zh, include_str!("../../templates/stage1_zh_a.txt")),
    ("stage2_en_a", Stage::Stage2, Lang::En, include_str!("../../templates/stage2_en_a.txt")),
    ("stage2_en_b", Stage::Stage2, Lang::En, include_str!("../../templates/stage2_en_b.txt")),
    ("stage2_zh_a", Stage::Stage2, Lang::Zh, include_str!("../../templates/stage2_zh_a.txt")),
];

/// A pool of template variants; several may exist per stage and language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

impl TemplateSet {
    /// The variants shipped with the crate.
    pub fn builtin() -> Self {
        let mut set = Self::default();
        for (id, stage, lang, body) in BUILTIN {
            set.insert(PromptTemplate::new(id, stage, lang, body));
        }
        set
    }

    /// Adds or replaces (by id) a template. Ids stay sorted.
    pub fn insert(&mut self, t: PromptTemplate) {
        match self.templates.binary_search_by(|x| x.id.cmp(&t.id)) {
            Ok(i) => self.templates[i] = t,
            Err(i) => self.templates.insert(i, t),
        }
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| TemplateError::UnknownTemplate(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.iter()
    }

    /// Seeded choice among the variants for `(stage, lang)`; `key` (usually
    /// a document id) makes the choice vary per use but stay reproducible.
    pub fn pick(&self, stage: Stage, lang: Lang, seed: u64, key: &str) -> Result<&PromptTemplate, TemplateError> {
        let pool: Vec<&PromptTemplate> = self.templates.iter().filter(|t| t.stage == stage && t.lang == lang).collect();
        if pool.is_empty() {
            return Err(TemplateError::NoTemplate { stage, lang });
        }
        let mut bytes = Vec::with_capacity(8 + key.len());
        bytes.extend_from_slice(&seed.to_le_bytes());
        bytes.extend_from_slice(key.as_bytes());
        let i = (crate::math::fnv1a(&bytes) % pool.len() as u64) as usize;
        Ok(pool[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityAnnotation, Polarity};
    use alloc::vec;

    fn twitter_demo() -> Document {
        Document::new(
            "demo1",
            "Micro-blogging site Twitter Inc <TWTR.N> gained 3.8%, adding to its 27% surge in the previous session, after saying it will name top shareholder and Tesla Inc <TSLA.O> CEO Elon Musk to its board.",
            Lang::En,
        )
        .with_entities(vec![
            EntityAnnotation::new("Twitter Inc", 20, 31, Polarity::Positive),
            EntityAnnotation::new("Tesla Inc", 149, 158, Polarity::Neutral),
        ])
    }

    fn input() -> Document {
        Document::new("q", "Rupiah leads Asia FX losses after solid US data, weekly slides seen.", Lang::En)
    }

    #[test]
    fn builtin_templates_are_well_formed() {
        let set = TemplateSet::builtin();
        for t in set.iter() {
            t.check().unwrap();
        }
        assert_eq!(set.iter().count(), 6);
    }

    #[test]
    fn stage1_without_demos_is_instruction_plus_input() {
        let set = TemplateSet::builtin();
        let t = set.get("stage1_en_a").unwrap();
        let p = render_stage1(t, &input(), &[]).unwrap();
        assert_eq!(p, alloc::format!("{}\n\nText: {}\nOutput:\n", t.task_description, input().text));
    }

    #[test]
    fn stage1_demo_appears_verbatim() {
        let set = TemplateSet::builtin();
        let t = set.get("stage1_en_a").unwrap();
        let p = render_stage1(t, &input(), &[twitter_demo()]).unwrap();
        assert!(p.contains("{value: Twitter Inc, start: 20, end: 31, tag: Positive}"));
        assert!(p.contains("{value: Tesla Inc, start: 149, end: 158, tag: Neutral}"));
        assert_eq!(p, render_stage1(t, &input(), &[twitter_demo()]).unwrap());
    }

    #[test]
    fn missing_placeholder_is_reported() {
        let t = PromptTemplate::new("bad", Stage::Stage1, Lang::En, "{task_description}\n{input_text}");
        assert_eq!(
            render_stage1(&t, &input(), &[]),
            Err(TemplateError::MissingPlaceholder {
                template: "bad".into(),
                name: "examples"
            })
        );
        let t = PromptTemplate::new("bad2", Stage::Stage2, Lang::En, "{task_description}{retrieved_examples}{input_text}{pseudo_labels}");
        assert!(matches!(t.check(), Err(TemplateError::ForbiddenPlaceholder { .. })));
    }

    #[test]
    fn unknown_braces_stay_literal() {
        let t = PromptTemplate::new("lit", Stage::Stage1, Lang::En, "{task_description}{examples}{input_text} {not_a_slot} {")
            .with_task_description("T");
        let p = render_stage1(&t, &input(), &[]).unwrap();
        assert!(p.ends_with(" {not_a_slot} {"));
    }

    #[test]
    fn substituted_text_is_not_re_expanded() {
        let t = PromptTemplate::new("s", Stage::Stage1, Lang::En, "{task_description}|{examples}|{input_text}")
            .with_task_description("x");
        let doc = Document::new("q", "{input_text} {examples}", Lang::En);
        assert_eq!(render_stage1(&t, &doc, &[]).unwrap(), "x||{input_text} {examples}");
    }

    #[test]
    fn stage2_marks_incorrect_examples_with_gold() {
        let set = TemplateSet::builtin();
        let t = set.get("stage2_en_a").unwrap();
        let demo = twitter_demo();
        let gold: Vec<PredictionRecord> = demo.entities.iter().map(PredictionRecord::from).collect();
        let mut pseudo = gold.clone();
        pseudo[1].tag = Polarity::Positive;
        let ex = CorrectionExample {
            doc_id: demo.id.clone(),
            text: demo.text.clone(),
            pseudo: pseudo.clone(),
            correct: false,
            gold,
            channel: Channel::Sentiment,
        };
        let p = render_stage2(t, &input(), &[], &[ex]).unwrap();
        assert!(p.contains("{value: Tesla Inc, start: 149, end: 158, tag: Positive}"));
        assert!(p.contains("Corrected labels:\n{value: Twitter Inc, start: 20, end: 31, tag: Positive}\n{value: Tesla Inc, start: 149, end: 158, tag: Neutral}"));
        assert!(p.contains("incorrect"));
        let task = set.get("stage1_en_a").unwrap().task_description.clone();
        assert!(!p.contains(&task));
    }

    #[test]
    fn stage2_with_no_examples() {
        let set = TemplateSet::builtin();
        let t = set.get("stage2_zh_a").unwrap();
        let doc = Document::new("z", "东风集团股份在港交所公告", Lang::Zh);
        let pseudo = vec![PredictionRecord::new("东风集团股份", 0, 6, Polarity::Negative)];
        let p = render_stage2(t, &doc, &pseudo, &[]).unwrap();
        assert!(p.contains("{value: 东风集团股份, start: 0, end: 6, tag: 负面}"));
        assert!(!p.contains("示例 1"));
    }

    #[test]
    fn seeded_pick_is_stable_and_covers_variants() {
        let set = TemplateSet::builtin();
        let a = set.pick(Stage::Stage1, Lang::En, 7, "doc-1").unwrap().id.clone();
        assert_eq!(a, set.pick(Stage::Stage1, Lang::En, 7, "doc-1").unwrap().id);
        let ids: alloc::collections::BTreeSet<String> = (0..40)
            .map(|i| set.pick(Stage::Stage1, Lang::En, 7, &alloc::format!("d{i}")).unwrap().id.clone())
            .collect();
        assert_eq!(ids.len(), 2);
        assert_eq!(set.pick(Stage::Stage2, Lang::Zh, 0, "x").unwrap().id, "stage2_zh_a");
    }

    #[test]
    fn correction_target_parses_back_to_gold() {
        let gold = vec![PredictionRecord::new("Rupiah", 0, 6, Polarity::Negative)];
        for (lang, ok) in [(Lang::En, true), (Lang::En, false), (Lang::Zh, true), (Lang::Zh, false)] {
            let t = correction_target(&gold, ok, lang);
            assert_eq!(super::super::parse_prediction(&t).unwrap(), gold);
        }
    }
}
