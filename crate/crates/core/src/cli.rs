//! Command-line front end: `ask`, `bench`, `trace ls|verify`, `config show`.
//!
//! Exit codes: 0 success, 1 usage/configuration/IO errors, 2 a failed
//! pipeline stage or an unparsable manifest, 3 a benchmark whose failure
//! rate exceeded `max_failure_rate`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::backends::{Backends, TranscriptStore};
use crate::bench::{load_dataset, run_benchmark, BenchError, ManifestFormat};
use crate::config::{load_config, EngineConfig, ReplayMode};
use crate::pipeline::{run_question_at, RunRecord};
use crate::question::{FinalAnswer, QuestionSpec};

#[derive(Debug, Parser)]
#[command(name = "vidqa", version, about = "Agentic zero-shot video question answering")]
pub struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TraceFlags {
    /// Serve every model, detector and probe call from this transcript directory.
    #[arg(long, value_name = "DIR", conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Persist every call into this transcript directory, reusing what is there.
    #[arg(long, value_name = "DIR")]
    pub record: Option<PathBuf>,
}

impl TraceFlags {
    fn apply(&self, cfg: &mut EngineConfig) {
        if let Some(dir) = &self.replay {
            cfg.replay_mode = ReplayMode::Replay;
            cfg.cache_dir = dir.clone();
        } else if let Some(dir) = &self.record {
            cfg.replay_mode = ReplayMode::Record;
            cfg.cache_dir = dir.clone();
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one question about one video.
    Ask {
        video: PathBuf,
        question: String,
        /// Answer option; repeat for each option, in order.
        #[arg(long = "option", value_name = "TEXT")]
        options: Vec<String>,
        /// Dataset id, selects the answer-format subinstruction file.
        #[arg(long)]
        dataset: Option<String>,
        /// Question type tag, carried into the run record.
        #[arg(long)]
        tag: Option<String>,
        /// Write the full run record as JSON to this path.
        #[arg(long, value_name = "PATH")]
        emit_run_record: Option<PathBuf>,
        #[command(flatten)]
        trace: TraceFlags,
    },
    /// Run a manifest and report accuracy.
    Bench {
        manifest: PathBuf,
        #[arg(long, value_enum)]
        format: ManifestFormat,
        /// Directory for report.json and report.txt.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Print one accuracy row per question type tag.
        #[arg(long)]
        tag_breakdown: bool,
        /// Questions processed in parallel.
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[command(flatten)]
        trace: TraceFlags,
    },
    /// Inspect a transcript directory.
    Trace {
        #[command(subcommand)]
        action: TraceAction,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum TraceAction {
    /// List transcripts.
    Ls { dir: Option<PathBuf> },
    /// Check that every transcript is stored under its content key.
    Verify { dir: Option<PathBuf> },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the effective configuration as TOML.
    Show,
}

fn print_answer(out: &mut dyn Write, answer: &FinalAnswer) {
    let _ = writeln!(out, "answer: {}", answer.answer);
    if let Some(i) = answer.chosen_option_index {
        let _ = writeln!(out, "option: {i}");
    }
    let _ = writeln!(out, "provenance: {}", serde_json::to_value(answer.provenance).unwrap().as_str().unwrap_or(""));
    let _ = writeln!(out, "reasoning: {}", answer.reasoning);
}

fn emit(path: &Path, record: &RunRecord, err: &mut dyn Write) -> bool {
    match std::fs::write(path, record.to_json() + "\n") {
        Ok(()) => true,
        Err(e) => {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            false
        }
    }
}

/// Runs the CLI with explicit arguments and environment; returns the exit code.
pub fn run<I, T>(args: I, env: &HashMap<String, String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let mut cfg = match load_config(cli.config.as_deref(), env) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    match cli.command {
        Command::Ask {
            video,
            question,
            options,
            dataset,
            tag,
            emit_run_record,
            trace,
        } => {
            trace.apply(&mut cfg);
            let mut spec = if options.is_empty() {
                QuestionSpec::open(question)
            } else {
                QuestionSpec::with_options(question, options)
            };
            spec.dataset_id = dataset;
            spec.question_type_tag = tag;
            let backends = match Backends::from_config(&cfg) {
                Ok(b) => b,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            match run_question_at(&backends, &cfg, &video, &spec) {
                Ok(record) => {
                    print_answer(out, record.final_answer.as_ref().expect("completed run has an answer"));
                    if let Some(path) = emit_run_record {
                        if !emit(&path, &record, err) {
                            return 1;
                        }
                    }
                    0
                }
                Err(failure) => {
                    let _ = writeln!(err, "error: stage {} failed: {}", failure.stage, failure.error);
                    if let Some(fallback) = &failure.partial.final_answer {
                        let _ = writeln!(err, "falling back to the first-sight answer");
                        print_answer(out, fallback);
                    }
                    if let Some(path) = emit_run_record {
                        emit(&path, &failure.partial, err);
                    }
                    2
                }
            }
        }
        Command::Bench {
            manifest,
            format,
            out: out_dir,
            tag_breakdown,
            concurrency,
            trace,
        } => {
            trace.apply(&mut cfg);
            let items = match load_dataset(&manifest, format) {
                Ok(items) => items,
                Err(e @ BenchError::ManifestParse { .. }) => {
                    let _ = writeln!(err, "error: {e}");
                    return 2;
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            let backends = match Backends::from_config(&cfg) {
                Ok(b) => b,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            let report = run_benchmark(&backends, &cfg, &items, concurrency);
            let _ = write!(out, "{}", report.to_text(tag_breakdown));
            if let Some(dir) = out_dir {
                if let Err(e) = report.write(&dir, tag_breakdown) {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            }
            if report.failure_rate() > cfg.max_failure_rate {
                let _ = writeln!(
                    err,
                    "error: failure rate {:.4} exceeds ceiling {:.4}",
                    report.failure_rate(),
                    cfg.max_failure_rate
                );
                return 3;
            }
            0
        }
        Command::Trace { action } => {
            let dir = match &action {
                TraceAction::Ls { dir } | TraceAction::Verify { dir } => {
                    dir.clone().unwrap_or_else(|| cfg.cache_dir.clone())
                }
            };
            let store = match TranscriptStore::open_existing(&dir) {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            match action {
                TraceAction::Ls { .. } => match store.list() {
                    Ok(entries) => {
                        for (file, parsed) in entries {
                            match parsed {
                                Ok(t) => {
                                    let _ = writeln!(out, "{} {} {}", t.key, t.body.kind(), t.timestamp);
                                }
                                Err(e) => {
                                    let _ = writeln!(out, "{} unreadable: {e}", file.display());
                                }
                            }
                        }
                        0
                    }
                    Err(e) => {
                        let _ = writeln!(err, "error: {e}");
                        1
                    }
                },
                TraceAction::Verify { .. } => match store.verify() {
                    Ok((total, issues)) => {
                        for issue in &issues {
                            let _ = writeln!(out, "{issue}");
                        }
                        let _ = writeln!(out, "{total} transcripts, {} issues", issues.len());
                        if issues.is_empty() {
                            0
                        } else {
                            1
                        }
                    }
                    Err(e) => {
                        let _ = writeln!(err, "error: {e}");
                        1
                    }
                },
            }
        }
        Command::Config { action: ConfigAction::Show } => {
            let _ = write!(out, "{}", cfg.to_toml());
            0
        }
    }
}
