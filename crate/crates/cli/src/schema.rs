//! JSON file formats.
//!
//! Prediction files are arrays of `{"image", "answer"}`. Annotation files
//! follow the public VizWiz layout: `{"image", "question", "answers":
//! [{"answer"}; 10], "answer_type", "answerable": 0|1}`. Unknown fields are
//! ignored; missing required fields are errors. Everything is validated
//! before any scoring starts.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use segvqa_core::metrics::{AnnotationRecord, AnswerType, Prediction, HUMAN_ANSWERS};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub image: String,
    pub answer: String,
}

#[derive(Debug, Deserialize)]
struct HumanAnswer {
    answer: String,
}

#[derive(Debug, Deserialize)]
struct AnnotationEntry {
    image: String,
    question: String,
    answers: Vec<HumanAnswer>,
    answer_type: AnswerType,
    answerable: u8,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_unique<'a>(path: &Path, ids: impl Iterator<Item = &'a str>) -> Result<(), CliError> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(CliError::Data(format!("{}: empty image id", path.display())));
        }
        if !seen.insert(id) {
            return Err(CliError::Data(format!("{}: duplicate image id {id:?}", path.display())));
        }
    }
    Ok(())
}

pub fn parse_predictions(path: &Path, text: &str) -> Result<Vec<Prediction>, CliError> {
    let entries: Vec<PredictionEntry> =
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    check_unique(path, entries.iter().map(|e| e.image.as_str()))?;
    Ok(entries.into_iter().map(|e| Prediction::new(e.image, e.answer)).collect())
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse_predictions(path, &text)
}

pub fn parse_annotations(path: &Path, text: &str) -> Result<Vec<AnnotationRecord>, CliError> {
    let entries: Vec<AnnotationEntry> =
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    check_unique(path, entries.iter().map(|e| e.image.as_str()))?;
    entries
        .into_iter()
        .map(|e| {
            if e.answers.len() != HUMAN_ANSWERS {
                return Err(CliError::Data(format!(
                    "{}: image {:?} has {} answers, expected {HUMAN_ANSWERS}",
                    path.display(),
                    e.image,
                    e.answers.len()
                )));
            }
            let answerable = match e.answerable {
                0 => false,
                1 => true,
                other => {
                    return Err(CliError::Data(format!(
                        "{}: image {:?} has answerable = {other}, expected 0 or 1",
                        path.display(),
                        e.image
                    )))
                }
            };
            let humans = e.answers.into_iter().map(|a| a.answer).collect();
            AnnotationRecord::new(e.image, e.question, humans, e.answer_type, answerable).map_err(CliError::from)
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse_annotations(path, &text)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
