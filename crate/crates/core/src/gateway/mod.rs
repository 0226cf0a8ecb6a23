//! Model-facing text codecs: prompt templates for both stages and the
//! prediction record format models read and write.
//!
//! Transport, retries and the mock backend are in the `silc` crate; this
//! module holds only the pure rendering and parsing logic.

mod record;
mod template;

pub use record::{format_records, parse_prediction, ParseError, PredictionRecord, NO_ENTITIES};
pub use template::{
    correction_target, render_stage1, render_stage2, Channel, CorrectionExample, PromptTemplate, Stage,
    TemplateError, TemplateSet, PLACEHOLDERS,
};

/// Stable hex fingerprint of a prompt, used as the mock lookup key.
pub fn fingerprint(prompt: &str) -> alloc::string::String {
    alloc::format!("{:016x}", crate::math::fnv1a(prompt.as_bytes()))
}
