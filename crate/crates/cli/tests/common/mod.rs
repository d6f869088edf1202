//! Fixture builders shared by the CLI integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn segvqa() -> Command {
    Command::new(env!("CARGO_BIN_EXE_segvqa"))
}

pub fn run(args: &[&str]) -> Output {
    segvqa().args(args).output().expect("spawn segvqa")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).expect("write fixture");
    path
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// One annotation entry with the given human answers.
pub fn annotation(image: &str, answer_type: &str, humans: &[String]) -> Value {
    let answers: Vec<Value> = humans
        .iter()
        .map(|a| json!({"answer": a, "answer_confidence": "yes"}))
        .collect();
    json!({
        "image": image,
        "question": "What is this?",
        "answers": answers,
        "answer_type": answer_type,
        "answerable": if answer_type == "unanswerable" { 0 } else { 1 },
    })
}

/// Ten human answers, the first `matching` of which equal `answer`.
pub fn humans(matching: usize, answer: &str) -> Vec<String> {
    (0..10)
        .map(|i| if i < matching { answer.to_string() } else { format!("other{i}") })
        .collect()
}

pub fn predictions(pairs: &[(&str, &str)]) -> Value {
    Value::Array(pairs.iter().map(|(i, a)| json!({"image": i, "answer": a})).collect())
}

/// Four questions, one per answer type, whose per-category accuracies are
/// 100, 90, 0 and 100 when every prediction is "ans".
pub fn four_question_fixture() -> (Value, Value) {
    let anns = json!([
        annotation("img_a", "yes/no", &humans(10, "ans")),
        annotation("img_b", "number", &humans(3, "ans")),
        annotation("img_c", "other", &humans(0, "ans")),
        annotation("img_d", "unanswerable", &humans(10, "ans")),
    ]);
    let preds = predictions(&[("img_a", "ans"), ("img_b", "ans"), ("img_c", "ans"), ("img_d", "ans")]);
    (anns, preds)
}

const WORDS: [&str; 12] = [
    "red", "blue", "green", "seven", "twelve", "milk", "coffee", "bottle", "keyboard", "yes", "no", "unanswerable",
];

/// Which models (1-based) answer correctly in each of the five 10-question
/// blocks. Every model is right in exactly three blocks.
pub const BENCHMARK_COVERAGE: [&[usize]; 5] = [&[1, 2], &[1, 3], &[2, 3], &[1, 2], &[3]];

/// Fifty questions with unanimous human answers and three prediction files,
/// each correct on 60% of questions. Wrong answers never coincide with each
/// other or with the truth.
pub fn benchmark() -> (Value, [Value; 3]) {
    let types = ["yes/no", "number", "other", "unanswerable"];
    let mut anns = Vec::new();
    let mut preds: [Vec<Value>; 3] = Default::default();
    for (block, correct) in BENCHMARK_COVERAGE.iter().enumerate() {
        for j in 0..10 {
            let q = block * 10 + j;
            let image = format!("VizWiz_bench_{q:05}.jpg");
            let truth = WORDS[q % WORDS.len()];
            anns.push(annotation(&image, types[q % types.len()], &vec![truth.to_string(); 10]));
            for model in 1..=3 {
                let answer = if correct.contains(&model) {
                    truth.to_string()
                } else {
                    format!("wrong{model} {}", WORDS[(q + 3 * model) % WORDS.len()])
                };
                preds[model - 1].push(json!({"image": image, "answer": answer}));
            }
        }
    }
    (Value::Array(anns), preds.map(Value::Array))
}
