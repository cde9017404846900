//! `geovqa`: generate datasets, run models over them, evaluate, verify.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geovqa_core::eval::{
    aggregate, compare_modes, render_report, score, EvalTable, ReportFormat, ScoredTrace,
};
use geovqa_core::pipeline::{
    read_traces, run_dataset, Mode, PipelineTrace, RunMeta, RunMode, StageBackends, RUN_META_FILE,
    TRACES_FILE,
};
use geovqa_core::tasks::{generate_dataset, read_manifest, verify_dataset, TaskId, MANIFEST_FILE};

use config::CliConfig;

#[derive(Parser)]
#[command(
    name = "geovqa",
    version,
    about = "Geometry VQA benchmark: generate, run, evaluate, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    Captioned,
    Both,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Direct => RunMode::Direct,
            ModeArg::Captioned => RunMode::Captioned,
            ModeArg::Both => RunMode::Both,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Json,
    Csv,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset: PNG and SVG per instance plus manifest.jsonl.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated task ids; all eight by default.
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<u32>>,
        /// Instances per task.
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run direct and/or captioned mode over a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_concurrency: Option<usize>,
    },
    /// Score runs and write accuracy and significance reports.
    Evaluate {
        /// Run directory; repeat to put several models in one table.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Defaults to the manifest of the dataset recorded in the first run.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        /// Directory for report files; markdown goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label, overriding the label stored with each run.
        #[arg(long)]
        label: Option<String>,
    },
    /// Recompute every stored ground truth from the SVG scenes.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Exit code for a run where more than half of the traces failed.
const DEGRADED: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            out,
            tasks,
            n,
            seed,
        } => cmd_generate(config.as_deref(), out, tasks, n, seed),
        Command::Run {
            config,
            dataset,
            mode,
            out,
            max_concurrency,
        } => cmd_run(&config, dataset, mode.map(Into::into), out, max_concurrency),
        Command::Evaluate {
            runs,
            manifest,
            format,
            out,
            label,
        } => cmd_evaluate(&runs, manifest, format, out, label),
        Command::Verify { dataset } => cmd_verify(&dataset),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    path.map_or_else(|| Ok(CliConfig::default()), CliConfig::load)
}

fn cmd_generate(
    config: Option<&Path>,
    out: Option<PathBuf>,
    tasks: Option<Vec<u32>>,
    n: Option<u32>,
    seed: Option<u64>,
) -> Result<u8> {
    let cfg = load_config(config)?;
    let out = out
        .or(cfg.output.dataset.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output.dataset"))?;
    let mut gen = cfg.generator;
    if let Some(tasks) = tasks {
        gen.tasks = tasks
            .into_iter()
            .map(TaskId::new)
            .collect::<Result<_, _>>()?;
    }
    if let Some(n) = n {
        gen.instances_per_task = n;
    }
    if let Some(seed) = seed {
        gen.master_seed = seed;
    }
    let ds = generate_dataset(&gen, &out)?;
    if !ds.failures.is_empty() {
        for f in &ds.failures {
            eprintln!("task {} instance {}: {}", f.task_id, f.index, f.error);
        }
        bail!("{} instance(s) failed to generate", ds.failures.len());
    }
    let mut per_task: BTreeMap<TaskId, usize> = BTreeMap::new();
    for inst in &ds.instances {
        *per_task.entry(inst.task_id).or_default() += 1;
    }
    println!("manifest: {}", ds.manifest_path().display());
    for (task, count) in per_task {
        println!("task {task} ({}): {count}", task.title());
    }
    println!("total: {}", ds.instances.len());
    Ok(0)
}

fn cmd_run(
    config: &Path,
    dataset: Option<PathBuf>,
    mode: Option<RunMode>,
    out: Option<PathBuf>,
    max_concurrency: Option<usize>,
) -> Result<u8> {
    let cfg = CliConfig::load(config)?;
    let dataset = dataset
        .or(cfg.output.dataset.clone())
        .ok_or_else(|| anyhow!("no dataset: pass --dataset or set output.dataset"))?;
    let out = out
        .or(cfg.output.run.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output.run"))?;
    let run_config = cfg.run_config(mode, max_concurrency)?;
    // HTTP backends read their key variables here, before any work starts
    let backends = StageBackends::from_config(&run_config)?;
    let output = run_dataset(&dataset, &run_config, &backends, &out)?;

    let counts = output.meta.counts;
    println!(
        "traces: {} ({} instances)",
        output.traces_path.display(),
        counts.instances
    );
    println!(
        "{} traces, {} stage errors, {} parse failures, {} keyword fallbacks, {} ms",
        counts.traces,
        counts.errors,
        counts.parse_failures,
        counts.keyword_fallbacks,
        output.meta.wall_time_ms
    );
    let mut by_kind: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for e in output.traces.iter().filter_map(|t| t.error.as_ref()) {
        *by_kind.entry((&e.stage, &e.kind)).or_default() += 1;
    }
    for ((stage, kind), n) in &by_kind {
        eprintln!("  {stage}: {kind} x{n}");
    }

    let mut misses: Vec<&str> = output
        .traces
        .iter()
        .filter_map(|t| t.error.as_ref())
        .filter(|e| e.kind == "missing_cache_entry")
        .filter_map(|e| e.digest.as_deref())
        .collect();
    misses.sort();
    misses.dedup();
    if !misses.is_empty() {
        eprintln!("replay cache is missing {} request(s):", misses.len());
        for d in &misses {
            eprintln!("  {d}");
        }
        return Ok(1);
    }
    if counts.degraded() {
        eprintln!("more than half of the traces failed");
        return Ok(DEGRADED);
    }
    Ok(0)
}

struct LoadedRun {
    label: String,
    traces: Vec<PipelineTrace>,
    meta: Option<RunMeta>,
}

fn load_run(dir: &Path, label: Option<&str>) -> Result<LoadedRun> {
    let traces = read_traces(&dir.join(TRACES_FILE))?;
    let meta_path = dir.join(RUN_META_FILE);
    let meta: Option<RunMeta> = if meta_path.is_file() {
        let text = fs::read_to_string(&meta_path)
            .with_context(|| format!("reading {}", meta_path.display()))?;
        Some(
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", meta_path.display()))?,
        )
    } else {
        None
    };
    let label = label
        .map(str::to_string)
        .or_else(|| meta.as_ref().and_then(|m| m.label.clone()))
        .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "run".into());
    Ok(LoadedRun {
        label,
        traces,
        meta,
    })
}

fn cmd_evaluate(
    runs: &[PathBuf],
    manifest: Option<PathBuf>,
    format: FormatArg,
    out: Option<PathBuf>,
    label: Option<String>,
) -> Result<u8> {
    let loaded: Vec<LoadedRun> = runs
        .iter()
        .map(|r| load_run(r, label.as_deref()))
        .collect::<Result<_>>()?;
    let manifest = manifest
        .or_else(|| {
            loaded
                .iter()
                .find_map(|r| r.meta.as_ref())
                .map(|m| m.dataset.join(MANIFEST_FILE))
        })
        .ok_or_else(|| anyhow!("no manifest: pass --manifest (the runs carry no run_meta.json)"))?;
    let instances =
        read_manifest(&manifest).with_context(|| format!("manifest {}", manifest.display()))?;

    // runs sharing a label form one row, in order of first appearance
    let mut groups: Vec<(String, Vec<ScoredTrace>)> = Vec::new();
    for run in &loaded {
        let scored = score(&instances, &run.traces)?;
        match groups.iter_mut().find(|(l, _)| *l == run.label) {
            Some((_, s)) => s.extend(scored),
            None => groups.push((run.label.clone(), scored)),
        }
    }
    let mut table = EvalTable::default();
    let mut comparisons = Vec::new();
    for (label, scored) in &groups {
        table.rows.push(aggregate(scored, label)?);
        let has = |m: Mode| scored.iter().any(|s| s.trace.mode == m);
        if has(Mode::Direct) && has(Mode::Captioned) {
            comparisons.extend(compare_modes(scored, label)?);
        }
    }

    let formats: &[ReportFormat] = match format {
        FormatArg::Markdown => &[ReportFormat::Markdown],
        FormatArg::Json => &[ReportFormat::Json],
        FormatArg::Csv => &[ReportFormat::Csv],
        FormatArg::All => &[
            ReportFormat::Markdown,
            ReportFormat::Json,
            ReportFormat::Csv,
        ],
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for &f in formats {
                let path = dir.join(format!("report.{}", f.extension()));
                fs::write(&path, render_report(&table, &comparisons, f))
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {}", path.display());
            }
        }
        None if formats.len() == 1 => print!("{}", render_report(&table, &comparisons, formats[0])),
        None => bail!("--format all needs --out"),
    }
    Ok(0)
}

fn cmd_verify(dataset: &Path) -> Result<u8> {
    let report = verify_dataset(dataset)?;
    for m in &report.mismatches {
        match &m.found {
            Ok(v) => eprintln!(
                "{}: manifest says {}, scene gives {}",
                m.instance_id, m.expected, v
            ),
            Err(e) => eprintln!(
                "{}: manifest says {}, recomputation failed: {e}",
                m.instance_id, m.expected
            ),
        }
    }
    println!(
        "checked {} instances, {} mismatches",
        report.checked,
        report.mismatches.len()
    );
    Ok(if report.ok() { 0 } else { 1 })
}
