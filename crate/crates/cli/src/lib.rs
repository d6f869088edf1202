//! Command-line surface for segvqa: evaluation, ensembling, image
//! enhancement, prompt building and the toy training core.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use segvqa_core::ensemble::{ensemble_run, Candidate, CandidateSet, EnsembleConfig};
use segvqa_core::imageops::{self, EnhanceMode, EnhanceParams, DEFAULT_DIM, DEFAULT_GAIN};
use segvqa_core::metrics::evaluate;
use segvqa_core::toynet::{self, ToyConfig, ToyProblem, DEFAULT_SEED};
use segvqa_core::NormalizationRules;
use serde::Serialize;

pub mod error;
pub mod prompt;
pub mod schema;

pub use error::CliError;
use schema::PredictionEntry;

/// Maximum relative gradient error accepted by `toy grad-check`.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "segvqa", version, about = "VizWiz-style VQA evaluation, answer ensembling and segmentation enhancement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against annotations, per answer type.
    Eval {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Compare answers verbatim.
        #[arg(long)]
        no_normalize: bool,
        /// Write the JSON report here; the text table then goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge prediction files by Levenshtein consensus.
    Ensemble {
        #[arg(long, num_args = 1.., required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_normalize: bool,
    },
    /// Apply segment-highlight or segment-contrast to a PPM using a PGM mask.
    Enhance {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Highlight strength added at full mask weight.
        #[arg(long, default_value_t = DEFAULT_GAIN)]
        gain: u8,
        /// Brightness factor applied outside the mask.
        #[arg(long, default_value_t = DEFAULT_DIM, value_parser = unit_interval)]
        dim: f64,
        /// Binarize the mask at this weight first.
        #[arg(long, value_parser = unit_interval)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the zero-shot instruction prompt for a question.
    Prompt {
        #[arg(long)]
        question: String,
    },
    /// Toy cross-attention + LoRA core.
    #[command(subcommand)]
    Toy(ToyCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Highlight,
    Contrast,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Model config JSON; defaults to the standard d=8 fixture.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Compare analytic gradients with central finite differences.
    GradCheck {
        #[command(flatten)]
        args: ToyArgs,
        #[arg(long, default_value_t = 1e-5, value_parser = positive)]
        epsilon: f64,
    },
    /// Train the trainable parameters by gradient descent.
    Fit {
        #[command(flatten)]
        args: ToyArgs,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value_t = 0.05, value_parser = non_negative)]
        lr: f64,
    },
    /// Count trainable and frozen parameters.
    Params {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be non-negative"))
    }
}

fn rules(no_normalize: bool) -> NormalizationRules {
    if no_normalize {
        NormalizationRules::none()
    } else {
        NormalizationRules::all()
    }
}

/// Writes to `out` when given, otherwise to `stdout`.
fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path.display(), e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

/// Runs one command. Payloads go to `stdout` or `--out`, auxiliary output
/// (the eval table when JSON goes to stdout) to `stderr`.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Eval {
            annotations,
            predictions,
            no_normalize,
            out,
        } => {
            let anns = schema::read_annotations(&annotations)?;
            let preds = schema::read_predictions(&predictions)?;
            let report = evaluate(&preds, &anns, &rules(no_normalize))?;
            let json = schema::to_json(&report);
            let table = report.to_table();
            match out {
                Some(path) => {
                    emit(Some(&path), &json, stdout)?;
                    emit(None, &table, stdout)
                }
                None => {
                    emit(None, &json, stdout)?;
                    emit(None, &table, stderr)
                }
            }
        }
        Command::Ensemble {
            predictions,
            out,
            no_normalize,
        } => {
            let files = predictions
                .iter()
                .map(|p| schema::read_predictions(p))
                .collect::<Result<Vec<_>, _>>()?;
            let sets = candidate_sets(&files);
            let results = ensemble_run(&sets, &EnsembleConfig::new(rules(no_normalize)))?;
            let entries: Vec<PredictionEntry> = results
                .into_iter()
                .map(|r| PredictionEntry {
                    image: r.question_key,
                    answer: r.answer,
                })
                .collect();
            emit(out.as_deref(), &schema::to_json(&entries), stdout)
        }
        Command::Enhance {
            image,
            mask,
            mode,
            gain,
            dim,
            threshold,
            out,
        } => {
            let img = imageops::read_image(&image)?;
            let mask = imageops::read_mask(&mask)?;
            let params = EnhanceParams {
                mode: match mode {
                    Mode::Highlight => EnhanceMode::Highlight,
                    Mode::Contrast => EnhanceMode::Contrast,
                },
                gain,
                dim,
                threshold,
            };
            let result = imageops::enhance(&img, &mask, &params)?;
            imageops::write_image(&out, &result)?;
            Ok(())
        }
        Command::Prompt { question } => {
            let mut text = prompt::build_instruction(&question)?;
            text.push('\n');
            emit(None, &text, stdout)
        }
        Command::Toy(cmd) => run_toy(cmd, stdout),
    }
}

/// One candidate set per image, with candidates in file order. Model ids are
/// `m1`, `m2`, ... by file position.
pub fn candidate_sets(files: &[Vec<segvqa_core::metrics::Prediction>]) -> Vec<CandidateSet> {
    let mut by_image: BTreeMap<&str, Vec<Candidate>> = BTreeMap::new();
    for (i, preds) in files.iter().enumerate() {
        for p in preds {
            by_image
                .entry(&p.image_id)
                .or_default()
                .push(Candidate::new(format!("m{}", i + 1), p.answer.clone()));
        }
    }
    by_image
        .into_iter()
        .map(|(image, candidates)| CandidateSet::new(image, candidates))
        .collect()
}

fn load_config(path: Option<&Path>) -> Result<ToyConfig, CliError> {
    let cfg = match path {
        Some(p) => schema::read_json(p)?,
        None => ToyConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct GradCheckOutput<'a> {
    config: &'a ToyConfig,
    seed: u64,
    tolerance: f64,
    passed: bool,
    #[serde(flatten)]
    report: toynet::GradCheckReport,
}

#[derive(Serialize)]
struct FitOutput<'a> {
    config: &'a ToyConfig,
    seed: u64,
    params: toynet::ParamReport,
    #[serde(flatten)]
    report: toynet::FitReport,
}

fn run_toy(cmd: ToyCommand, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ToyCommand::GradCheck { args, epsilon } => {
            let cfg = load_config(args.config.as_deref())?;
            let (mut model, batch) = toynet::grad_check_fixture(&cfg, args.seed)?;
            let report = toynet::grad_check(&mut ToyProblem { model: &mut model, batch: &batch }, epsilon)?;
            let output = GradCheckOutput {
                config: &cfg,
                seed: args.seed,
                tolerance: GRAD_CHECK_TOLERANCE,
                passed: report.max_relative_error < GRAD_CHECK_TOLERANCE,
                report,
            };
            emit(None, &schema::to_json(&output), stdout)
        }
        ToyCommand::Fit { args, steps, lr } => {
            let cfg = load_config(args.config.as_deref())?;
            let (mut model, batch) = toynet::seeded_fixture(&cfg, args.seed)?;
            let steps = usize::try_from(steps).map_err(|_| CliError::Usage("--steps is too large".into()))?;
            let report = toynet::fit_toy(&mut model, &batch, steps, lr)?;
            let output = FitOutput {
                config: &cfg,
                seed: args.seed,
                params: toynet::count_params(&model),
                report,
            };
            emit(None, &schema::to_json(&output), stdout)
        }
        ToyCommand::Params { config } => {
            let cfg = load_config(Some(&config))?;
            // Counts depend only on shapes, so any seed will do.
            let model = toynet::ToyModel::from_seed(&cfg, DEFAULT_SEED)?;
            emit(None, &schema::to_json(&toynet::count_params(&model)), stdout)
        }
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    match run(cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
