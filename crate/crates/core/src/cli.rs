//! The `run`, `profile` and `compare` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Overrides, RunConfig, PROFILED_HEAD_SET};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_run, exact_match, load_dataset, split, token_f1, write_atomic, InstanceScore, Method, QAInstance,
    RunRecord,
};
use crate::matching::EmbeddingProvider;
use crate::model::{load_or_init_model, ModelHandle};
use crate::pipeline::{answer, PipelineConfig};
use crate::profiling::{profile, ModelDims, PipelineEvaluator, ProfilingReport};
use crate::steering::HeadSet;

#[derive(Debug, Parser)]
#[command(name = "attn-steer", version, about = "Attention steering for open-book QA on a toy transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer the test split with one method and write a run file.
    Run(CommandArgs),
    /// Search for a head set on the profiling split.
    Profile(CommandArgs),
    /// Run all three methods and write a comparison table.
    Compare(CommandArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommandArgs {
    /// TOML file with defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

impl CommandArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => Overrides::load(p)?,
            None => Overrides::default(),
        };
        self.overrides.clone().over(file).resolve()
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// text to print.
pub fn run_cli<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::error::ErrorKind;
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => Ok(e.to_string()),
        Err(e) => Err(Error::Argument(e.to_string())),
    }
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => {
            let cfg = a.resolve()?;
            with_pool(&cfg, || cmd_run(&cfg)).map(|r| r.summary)
        }
        Command::Profile(a) => {
            let cfg = a.resolve()?;
            with_pool(&cfg, || cmd_profile(&cfg)).map(|r| r.summary)
        }
        Command::Compare(a) => {
            let cfg = a.resolve()?;
            with_pool(&cfg, || cmd_compare(&cfg)).map(|t| t.render())
        }
    }
}

fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?
        .install(f)
}

struct Inputs {
    model: ModelHandle,
    pipeline: PipelineConfig,
    provider: Box<dyn EmbeddingProvider>,
    profiling: Vec<QAInstance>,
    test: Vec<QAInstance>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let data = load_dataset(cfg.dataset_path()?)?;
    let parts = split(data, cfg.profiling_count, cfg.split_seed);
    Ok(Inputs {
        model: load_or_init_model(cfg.model_config()?, &cfg.model_source())?,
        pipeline: cfg.pipeline_config()?,
        provider: cfg.embedding_provider()?,
        profiling: parts.profiling,
        test: parts.test,
    })
}

/// The head set used by the steered method and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedHeadSet {
    pub head_set: HeadSet,
    pub path: PathBuf,
    pub provenance: String,
}

/// `--head-set` if given, otherwise the file left by an earlier `profile`
/// run in the output directory.
pub fn resolve_head_set(cfg: &RunConfig) -> Result<ResolvedHeadSet> {
    let (path, default_provenance) = match &cfg.head_set {
        Some(p) => (p.clone(), "head-set file"),
        None => {
            let p = cfg.output_dir.join(PROFILED_HEAD_SET);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "the autopasta method needs --head-set or a prior `profile` run ({} not found)",
                    p.display()
                )));
            }
            (p, "profiled in-domain")
        }
    };
    let head_set = HeadSet::load(&path)?;
    head_set.validate(cfg.num_layers, cfg.num_heads)?;
    Ok(ResolvedHeadSet {
        head_set,
        path,
        provenance: cfg.provenance.clone().unwrap_or_else(|| default_provenance.to_string()),
    })
}

/// Last query row of every head for one forward call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub id: String,
    pub method: Method,
    pub step: usize,
    pub query_position: usize,
    /// `weights[layer][head][key]`.
    pub weights: Vec<Vec<Vec<f64>>>,
}

struct MethodRun {
    record: RunRecord,
    snapshots: Vec<SnapshotRecord>,
}

fn hashed_config(cfg: &RunConfig, method: Method, head_set: Option<&ResolvedHeadSet>) -> Result<String> {
    let mut c = cfg.clone();
    c.method = method;
    c.head_set = match method {
        Method::Steered => head_set.map(|h| h.path.clone()),
        _ => None,
    };
    c.config_hash()
}

fn run_method(
    cfg: &RunConfig,
    inputs: &Inputs,
    method: Method,
    head_set: Option<&ResolvedHeadSet>,
) -> Result<MethodRun> {
    if inputs.test.is_empty() {
        return Err(Error::Config("test split is empty; lower --profiling-count".into()));
    }
    let empty = HeadSet::new();
    let heads = head_set.map(|h| &h.head_set).unwrap_or(&empty);
    let results = inputs
        .test
        .par_iter()
        .map(|inst| {
            let r = answer(method, &inputs.model, inst, heads, cfg.delta, &inputs.pipeline, inputs.provider.as_ref())?;
            let score = InstanceScore {
                id: inst.id.clone(),
                em: exact_match(&r.answer, &inst.answers),
                f1: token_f1(&r.answer, &inst.answers),
                prediction: r.answer,
                matched_sentences: r.matched_sentences.iter().map(|s| s.index).collect(),
                steering_applied: r.steering_applied,
            };
            let snaps: Vec<SnapshotRecord> = r
                .snapshots
                .iter()
                .enumerate()
                .map(|(step, s)| SnapshotRecord {
                    id: inst.id.clone(),
                    method,
                    step,
                    query_position: s.query_start + s.weights[0][0].len() - 1,
                    weights: s
                        .weights
                        .iter()
                        .map(|layer| layer.iter().map(|rows| rows.last().cloned().unwrap_or_default()).collect())
                        .collect(),
                })
                .collect();
            Ok((score, snaps))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scores, snaps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(MethodRun {
        record: aggregate_run(method, hashed_config(cfg, method, head_set)?, scores),
        snapshots: snaps.into_iter().flatten().collect(),
    })
}

fn write_method_outputs(cfg: &RunConfig, run: &MethodRun) -> Result<PathBuf> {
    let tag = run.record.method.tag();
    let path = cfg.output_dir.join(format!("run-{tag}.json"));
    run.record.save(&path)?;
    if cfg.capture_snapshots {
        let mut text = String::new();
        for s in &run.snapshots {
            text.push_str(&serde_json::to_string(s)?);
            text.push('\n');
        }
        write_atomic(&cfg.output_dir.join(format!("snapshots-{tag}.jsonl")), text.as_bytes())?;
    }
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub path: PathBuf,
    pub summary: String,
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let head_set = match cfg.method {
        Method::Steered => Some(resolve_head_set(cfg)?),
        _ => None,
    };
    let inputs = load_inputs(cfg)?;
    let run = run_method(cfg, &inputs, cfg.method, head_set.as_ref())?;
    let path = write_method_outputs(cfg, &run)?;
    let r = &run.record;
    let summary = format!(
        "{}: EM {:.2}  token-F1 {:.2}  ({} instances) -> {}\n",
        r.method.label(),
        r.em,
        r.token_f1,
        r.num_instances,
        path.display()
    );
    Ok(RunOutcome {
        record: run.record,
        path,
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct ProfileOutcome {
    pub report: ProfilingReport,
    pub report_path: PathBuf,
    pub head_set_path: PathBuf,
    pub summary: String,
}

pub fn cmd_profile(cfg: &RunConfig) -> Result<ProfileOutcome> {
    let points = cfg.grid_points()?;
    let inputs = load_inputs(cfg)?;
    let mut instances = inputs.profiling.clone();
    if let Some(n) = cfg.subsample {
        instances.truncate(n);
    }
    if instances.is_empty() {
        return Err(Error::Config("profiling split is empty; raise --profiling-count".into()));
    }
    let evaluator = PipelineEvaluator::new(
        &inputs.model,
        &instances,
        cfg.delta,
        &inputs.pipeline,
        inputs.provider.as_ref(),
    )?;
    let report = profile(ModelDims::new(cfg.num_layers, cfg.num_heads), &points, &evaluator)?;
    let report_path = cfg.output_dir.join("profile-report.json");
    let head_set_path = cfg.output_dir.join(PROFILED_HEAD_SET);
    write_atomic(&report_path, report.to_json().as_bytes())?;
    write_atomic(&head_set_path, report.chosen.to_json().as_bytes())?;
    let summary = format!(
        "chosen: {} ({} heads)\nstrategy: {}\nprofiling token-F1 {:.2}  EM {:.2} on {} instances\nsearch evaluations: {} used / {} predicted, plus {} selection evaluations\n-> {}\n-> {}\n",
        report.chosen,
        report.chosen.len(),
        report.chosen_strategy,
        report.chosen_score.token_f1,
        report.chosen_score.em,
        report.chosen_score.num_instances,
        report.budget.evaluations_used,
        report.budget.evaluations_predicted,
        report.selection_evaluations,
        report_path.display(),
        head_set_path.display()
    );
    Ok(ProfileOutcome {
        report,
        report_path,
        head_set_path,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub label: String,
    pub em: f64,
    pub token_f1: f64,
    /// Mean of `em` and `token_f1`.
    pub average: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub caption: String,
    pub num_instances: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes") + "\n"
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>8} {:>10} {:>8}", "Method", "EM", "Token-F1", "Avg");
        for r in &self.rows {
            let _ = writeln!(out, "{:<22} {:>8.2} {:>10.2} {:>8.2}", r.label, r.em, r.token_f1, r.average);
        }
        let _ = writeln!(out, "{}", self.caption);
        out
    }
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonTable> {
    let head_set = resolve_head_set(cfg)?;
    let inputs = load_inputs(cfg)?;
    let mut rows = Vec::with_capacity(Method::ALL.len());
    let mut n = 0;
    for method in Method::ALL {
        let run = run_method(cfg, &inputs, method, Some(&head_set))?;
        write_method_outputs(cfg, &run)?;
        let r = run.record;
        n = r.num_instances;
        rows.push(ComparisonRow {
            method,
            label: method.label().to_string(),
            em: r.em,
            token_f1: r.token_f1,
            average: (r.em + r.token_f1) / 2.0,
            config_hash: r.config_hash,
        });
    }
    let table = ComparisonTable {
        caption: format!(
            "EM and token F1 (x100) on {n} test instances. Head set: {} ({} heads, {}); delta {:.4}.",
            file_name(&head_set.path),
            head_set.head_set.len(),
            head_set.provenance,
            cfg.delta
        ),
        num_instances: n,
        rows,
    };
    write_atomic(&cfg.output_dir.join("compare.json"), table.to_json().as_bytes())?;
    Ok(table)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}
