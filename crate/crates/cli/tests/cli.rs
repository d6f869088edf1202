mod common;

use std::fs;

use common::*;
use segvqa_core::imageops::{encode_pgm, encode_ppm, read_image, ImageBuffer, MaskBuffer};
use serde_json::Value;
use tempfile::tempdir;

fn json_of(text: &str) -> Value {
    serde_json::from_str(text).expect("valid JSON")
}

#[test]
fn eval_writes_report_and_prints_table() {
    let dir = tempdir().unwrap();
    let (anns, preds) = four_question_fixture();
    let a = write(dir.path(), "anns.json", &anns.to_string());
    let p = write(dir.path(), "preds.json", &preds.to_string());
    let report = dir.path().join("report.json");

    let out = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p), "--out", path_str(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.lines().nth(1).unwrap().ends_with("72.50"), "{table}");
    assert!(table.contains("90.00"));

    let json = json_of(&fs::read_to_string(&report).unwrap());
    assert_eq!(json["overall"]["accuracy"], 72.5);
    assert_eq!(json["overall"]["count"], 4);
    assert_eq!(json["per_category"]["number"]["accuracy"], 90.0);
    assert_eq!(json["per_category"]["other"]["accuracy"], 0.0);
}

#[test]
fn eval_without_out_sends_json_to_stdout() {
    let dir = tempdir().unwrap();
    let (anns, preds) = four_question_fixture();
    let a = write(dir.path(), "anns.json", &anns.to_string());
    let p = write(dir.path(), "preds.json", &preds.to_string());
    let out = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&stdout(&out))["overall"]["accuracy"], 72.5);
    assert!(stderr(&out).contains("72.50"));
}

#[test]
fn no_normalize_is_verbatim() {
    let dir = tempdir().unwrap();
    let anns = serde_json::json!([annotation("img", "other", &humans(10, "Coke"))]);
    let a = write(dir.path(), "anns.json", &anns.to_string());
    let p = write(dir.path(), "preds.json", &predictions(&[("img", "coke.")]).to_string());

    let normalized = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p)]);
    assert_eq!(json_of(&stdout(&normalized))["overall"]["accuracy"], 100.0);
    let verbatim = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p), "--no-normalize"]);
    assert_eq!(json_of(&stdout(&verbatim))["overall"]["accuracy"], 0.0);
}

#[test]
fn nine_answers_fail_before_writing() {
    let dir = tempdir().unwrap();
    let mut short = humans(10, "ans");
    short.pop();
    let anns = serde_json::json!([
        annotation("img_ok", "other", &humans(10, "ans")),
        annotation("img_short", "other", &short),
    ]);
    let a = write(dir.path(), "anns.json", &anns.to_string());
    let p = write(dir.path(), "preds.json", &predictions(&[("img_ok", "ans")]).to_string());
    let report = dir.path().join("report.json");

    let out = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p), "--out", path_str(&report)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("img_short"), "{}", stderr(&out));
    assert!(!report.exists());
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempdir().unwrap();
    let p = write(dir.path(), "preds.json", "[]");
    let missing = dir.path().join("nope.json");
    let out = run(&["eval", "--annotations", path_str(&missing), "--predictions", path_str(&p)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["ensemble"]).status.code(), Some(2));
    assert_eq!(run(&["prompt", "--question", ""]).status.code(), Some(2));
    assert_eq!(run(&["toy", "fit", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn ensemble_of_identical_files_is_that_file_sorted() {
    let dir = tempdir().unwrap();
    let preds = predictions(&[("img_2", "Blue"), ("img_1", "red"), ("img_3", "two")]);
    let f = write(dir.path(), "p.json", &preds.to_string());
    let out = run(&["ensemble", "--predictions", path_str(&f), path_str(&f), path_str(&f)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let expected = predictions(&[("img_1", "red"), ("img_2", "Blue"), ("img_3", "two")]);
    assert_eq!(json_of(&stdout(&out)), expected);
}

#[test]
fn ensemble_majority_and_medoid() {
    let dir = tempdir().unwrap();
    let a = write(dir.path(), "a.json", &predictions(&[("q1", "coke"), ("q2", "cat")]).to_string());
    let b = write(dir.path(), "b.json", &predictions(&[("q1", "Coke."), ("q2", "cart")]).to_string());
    let c = write(dir.path(), "c.json", &predictions(&[("q1", "pepsi"), ("q2", "dog")]).to_string());
    let out_file = dir.path().join("ens.json");
    let out = run(&[
        "ensemble",
        "--predictions",
        path_str(&a),
        path_str(&b),
        path_str(&c),
        "--out",
        path_str(&out_file),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());
    let got = json_of(&fs::read_to_string(&out_file).unwrap());
    assert_eq!(got, predictions(&[("q1", "coke"), ("q2", "cat")]));
}

#[test]
fn ensemble_covers_union_of_images() {
    let dir = tempdir().unwrap();
    let a = write(dir.path(), "a.json", &predictions(&[("q1", "yes")]).to_string());
    let b = write(dir.path(), "b.json", &predictions(&[("q2", "no")]).to_string());
    let out = run(&["ensemble", "--predictions", path_str(&a), path_str(&b)]);
    assert_eq!(json_of(&stdout(&out)), predictions(&[("q1", "yes"), ("q2", "no")]));
}

#[test]
fn ensemble_rejects_duplicate_image_in_a_file() {
    let dir = tempdir().unwrap();
    let a = write(dir.path(), "a.json", &predictions(&[("q1", "yes"), ("q1", "no")]).to_string());
    let out_file = dir.path().join("ens.json");
    let out = run(&["ensemble", "--predictions", path_str(&a), "--out", path_str(&out_file)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_file.exists());
}

#[test]
fn ensemble_then_eval_matches_direct_eval() {
    let dir = tempdir().unwrap();
    let (anns, preds) = four_question_fixture();
    let a = write(dir.path(), "anns.json", &anns.to_string());
    let p = write(dir.path(), "preds.json", &preds.to_string());
    let ens = dir.path().join("ens.json");
    let out = run(&["ensemble", "--predictions", path_str(&p), "--out", path_str(&ens)]);
    assert_eq!(out.status.code(), Some(0));

    let direct = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&p)]);
    let composed = run(&["eval", "--annotations", path_str(&a), "--predictions", path_str(&ens)]);
    assert_eq!(direct.stdout, composed.stdout);
}

#[test]
fn prompt_prints_golden_line() {
    let out = run(&["prompt", "--question", "What is this?"]);
    assert_eq!(out.status.code(), Some(0));
    let mut expected = include_bytes!("golden/prompt_what_is_this.txt").to_vec();
    expected.push(b'\n');
    assert_eq!(out.stdout, expected);
}

fn gradient_image(w: usize, h: usize) -> ImageBuffer {
    let pixels = (0..w * h)
        .map(|i| [(i * 7 % 256) as u8, (i * 13 % 256) as u8, (i * 29 % 256) as u8])
        .collect();
    ImageBuffer::new(w, h, pixels).unwrap()
}

#[test]
fn enhance_highlight_full_mask_adds_gain() {
    let dir = tempdir().unwrap();
    let img = ImageBuffer::filled(3, 2, [100, 200, 0]).unwrap();
    let mask = MaskBuffer::filled(3, 2, 255).unwrap();
    fs::write(dir.path().join("in.ppm"), encode_ppm(&img)).unwrap();
    fs::write(dir.path().join("m.pgm"), encode_pgm(&mask)).unwrap();
    let out_path = dir.path().join("out.ppm");
    let out = run(&[
        "enhance",
        "--image",
        path_str(&dir.path().join("in.ppm")),
        "--mask",
        path_str(&dir.path().join("m.pgm")),
        "--mode",
        "highlight",
        "--out",
        path_str(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let result = read_image(&out_path).unwrap();
    assert!(result.pixels().iter().all(|p| *p == [196, 255, 96]));
}

#[test]
fn enhance_identity_settings_copy_bytes() {
    let dir = tempdir().unwrap();
    let img = gradient_image(5, 4);
    let input = dir.path().join("in.ppm");
    fs::write(&input, encode_ppm(&img)).unwrap();
    let zero = dir.path().join("zero.pgm");
    fs::write(&zero, encode_pgm(&MaskBuffer::filled(5, 4, 0).unwrap())).unwrap();
    let full = dir.path().join("full.pgm");
    fs::write(&full, encode_pgm(&MaskBuffer::filled(5, 4, 255).unwrap())).unwrap();

    for (mask, mode, extra) in [
        (&zero, "highlight", vec![]),
        (&full, "highlight", vec!["--gain", "0"]),
        (&full, "contrast", vec![]),
        (&zero, "contrast", vec!["--dim", "1"]),
    ] {
        let out_path = dir.path().join("out.ppm");
        let mut args = vec![
            "enhance",
            "--image",
            path_str(&input),
            "--mask",
            path_str(mask),
            "--mode",
            mode,
            "--out",
            path_str(&out_path),
        ];
        args.extend(extra.iter().copied());
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert_eq!(fs::read(&out_path).unwrap(), fs::read(&input).unwrap(), "{mode} {extra:?}");
    }
}

#[test]
fn enhance_errors() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    fs::write(&input, encode_ppm(&gradient_image(4, 4))).unwrap();
    let mask = dir.path().join("m.pgm");
    fs::write(&mask, encode_pgm(&MaskBuffer::filled(3, 4, 0).unwrap())).unwrap();
    let out_path = dir.path().join("out.ppm");
    let base = ["enhance", "--image", path_str(&input), "--mask", path_str(&mask), "--out", path_str(&out_path)];

    let mismatch = run(&[&base[..], &["--mode", "contrast"]].concat());
    assert_eq!(mismatch.status.code(), Some(3));
    assert!(!out_path.exists());

    let bad_dim = run(&[&base[..], &["--mode", "contrast", "--dim", "1.5"]].concat());
    assert_eq!(bad_dim.status.code(), Some(2));
    let bad_threshold = run(&[&base[..], &["--mode", "highlight", "--threshold", "-0.1"]].concat());
    assert_eq!(bad_threshold.status.code(), Some(2));

    let png = write(dir.path(), "x.png", "\u{89}PNG");
    let not_ppm = run(&[
        "enhance",
        "--image",
        path_str(&png),
        "--mask",
        path_str(&mask),
        "--mode",
        "highlight",
        "--out",
        path_str(&out_path),
    ]);
    assert_eq!(not_ppm.status.code(), Some(3));
}

#[test]
fn toy_params_from_config() {
    let dir = tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"d": 8, "heads": 2, "n_vit": 4,
            "lora": {"rank": 2, "alpha": 4.0, "targets": ["lm.in"]},
            "cross_attention_trainable": false, "integration": null}"#,
    );
    let out = run(&["toy", "params", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = json_of(&stdout(&out));
    // Frozen: 4·64 attention + 2·64 lm bases. Trainable: one adapter, r·(8+8).
    assert_eq!(report["trainable"], 32);
    assert_eq!(report["frozen"], 384);
    assert_eq!(report["total"], 416);
}

#[test]
fn toy_config_errors_are_data_errors() {
    let dir = tempdir().unwrap();
    let bad_target = write(
        dir.path(),
        "cfg.json",
        r#"{"d": 8, "heads": 1, "n_vit": 4, "lora": {"rank": 2, "alpha": 4.0, "targets": ["lm.mid"]},
            "cross_attention_trainable": true, "integration": null}"#,
    );
    assert_eq!(run(&["toy", "params", "--config", path_str(&bad_target)]).status.code(), Some(3));
    let bad_heads = write(
        dir.path(),
        "heads.json",
        r#"{"d": 8, "heads": 3, "n_vit": 4, "lora": {"rank": 2, "alpha": 4.0, "targets": []},
            "cross_attention_trainable": true, "integration": null}"#,
    );
    assert_eq!(run(&["toy", "params", "--config", path_str(&bad_heads)]).status.code(), Some(3));
}

#[test]
fn toy_grad_check_passes_by_default() {
    let out = run(&["toy", "grad-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = json_of(&stdout(&out));
    assert_eq!(report["passed"], true);
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["seed"], 42);
}

#[test]
fn toy_fit_is_deterministic_and_keeps_frozen_weights() {
    let a = run(&["toy", "fit", "--steps", "20"]);
    let b = run(&["toy", "fit", "--steps", "20"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let report = json_of(&stdout(&a));
    assert_eq!(report["frozen_unchanged"], true);
    assert_eq!(report["losses"].as_array().unwrap().len(), 21);
    assert!(report["final_loss"].as_f64().unwrap() < report["initial_loss"].as_f64().unwrap());

    let other_seed = run(&["toy", "fit", "--steps", "20", "--seed", "7"]);
    assert_ne!(a.stdout, other_seed.stdout);
}
