//! The zero-shot instruction prompt.

use crate::error::CliError;

/// Fixed instruction placed before every question. Straight ASCII quotes, one
/// trailing space.
pub const INSTRUCTION_PREFIX: &str = "The correct answer type is one of ['number', 'words', 'yes', 'no']. \
If it is impossible to answer an image-related question or there is no existing information, \
please reply as 'unanswerable'. Question: ";

/// Prefix followed by the question verbatim; nothing is escaped or trimmed.
pub fn build_instruction(question: &str) -> Result<String, CliError> {
    if question.is_empty() {
        return Err(CliError::Usage("question must not be empty".into()));
    }
    Ok(format!("{INSTRUCTION_PREFIX}{question}"))
}
