//! Runs instances through direct VQA and the keyword -> caption -> answer
//! pipeline, recording one trace per (instance, mode).

mod prompts;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    request_digest, Backend, BackendConfig, BackendError, CacheStats, ModelRequest, Part,
};
use crate::parsing::{parse_for_shape, ParseOutcome, PARSER_VERSION};
use crate::tasks::{read_manifest, TaskError, TaskId, TaskInstance, MANIFEST_FILE};

pub use prompts::{
    fallback_keywords, parse_keywords, PromptTemplates, MAX_KEYWORDS, TEMPLATE_SETS, V1,
};

pub const TRACES_FILE: &str = "traces.jsonl";
pub const RUN_META_FILE: &str = "run_meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Captioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Direct,
    Captioned,
    Both,
}

impl RunMode {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            RunMode::Direct => &[Mode::Direct],
            RunMode::Captioned => &[Mode::Captioned],
            RunMode::Both => &[Mode::Direct, Mode::Captioned],
        }
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_templates() -> String {
    V1.name.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_backend: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_backend: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_backend: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_backend: Option<BackendConfig>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_templates")]
    pub prompt_template_set: String,
}

impl RunConfig {
    pub fn new(mode: RunMode) -> Self {
        Self {
            label: None,
            mode,
            keyword_backend: None,
            caption_backend: None,
            answer_backend: None,
            direct_backend: None,
            max_concurrency: default_concurrency(),
            prompt_template_set: default_templates(),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates, PipelineError> {
        PromptTemplates::by_name(&self.prompt_template_set).ok_or_else(|| {
            PipelineError::Config(format!(
                "unknown prompt template set {:?}",
                self.prompt_template_set
            ))
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.max_concurrency == 0 {
            return Err(PipelineError::Config(
                "max_concurrency must be at least 1".into(),
            ));
        }
        self.templates()?;
        let modes = self.mode.modes();
        if modes.contains(&Mode::Direct) && self.direct_backend.is_none() {
            return Err(PipelineError::Config(
                "direct mode needs direct_backend".into(),
            ));
        }
        if modes.contains(&Mode::Captioned) {
            for (name, b) in [
                ("keyword_backend", &self.keyword_backend),
                ("caption_backend", &self.caption_backend),
                ("answer_backend", &self.answer_backend),
            ] {
                if b.is_none() {
                    return Err(PipelineError::Config(format!(
                        "captioned mode needs {name}"
                    )));
                }
            }
        }
        for b in [
            &self.keyword_backend,
            &self.caption_backend,
            &self.answer_backend,
            &self.direct_backend,
        ]
        .into_iter()
        .flatten()
        {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Dataset(#[from] TaskError),
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Backends used by each stage. Fields are public so tests can swap in
/// instrumented transports.
#[derive(Clone, Default)]
pub struct StageBackends {
    pub keywords: Option<Arc<Backend>>,
    pub caption: Option<Arc<Backend>>,
    pub answer: Option<Arc<Backend>>,
    pub direct: Option<Arc<Backend>>,
}

impl StageBackends {
    /// Builds every configured backend; HTTP backends fail here when their
    /// API key variable is unset.
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        let build = |c: &Option<BackendConfig>| -> Result<Option<Arc<Backend>>, PipelineError> {
            Ok(match c {
                Some(c) => Some(Arc::new(Backend::from_config(c.clone())?)),
                None => None,
            })
        };
        Ok(Self {
            keywords: build(&config.keyword_backend)?,
            caption: build(&config.caption_backend)?,
            answer: build(&config.answer_backend)?,
            direct: build(&config.direct_backend)?,
        })
    }

    fn named(&self) -> [(&'static str, &Option<Arc<Backend>>); 4] {
        [
            ("keywords", &self.keywords),
            ("caption", &self.caption),
            ("answer", &self.answer),
            ("direct", &self.direct),
        ]
    }

    pub fn ids(&self) -> BTreeMap<String, String> {
        self.named()
            .into_iter()
            .filter_map(|(stage, b)| b.as_ref().map(|b| (stage.to_string(), b.id())))
            .collect()
    }

    pub fn cache_stats(&self) -> BTreeMap<String, CacheStats> {
        self.named()
            .into_iter()
            .filter_map(|(stage, b)| Some((stage.to_string(), b.as_ref()?.cache_stats()?)))
            .collect()
    }
}

/// Failure of one stage, recorded on the trace instead of aborting the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

impl StageError {
    fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            kind: kind.into(),
            message: message.into(),
            digest: None,
        }
    }

    fn backend(stage: &str, digest: &str, e: &BackendError) -> Self {
        Self {
            digest: Some(digest.to_string()),
            ..Self::new(stage, e.kind(), e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub instance_id: String,
    pub task_id: TaskId,
    pub mode: Mode,
    pub keywords: Option<Vec<String>>,
    #[serde(default)]
    pub keyword_fallback: bool,
    pub caption: Option<String>,
    pub raw_answer: Option<String>,
    pub parsed: Option<ParseOutcome>,
    pub correct: Option<bool>,
    pub stage_latencies_ms: BTreeMap<String, u64>,
    pub backend_ids: BTreeMap<String, String>,
    pub request_digests: BTreeMap<String, String>,
    pub error: Option<StageError>,
}

impl PipelineTrace {
    fn new(inst: &TaskInstance, mode: Mode) -> Self {
        Self {
            instance_id: inst.instance_id.clone(),
            task_id: inst.task_id,
            mode,
            keywords: None,
            keyword_fallback: false,
            caption: None,
            raw_answer: None,
            parsed: None,
            correct: None,
            stage_latencies_ms: BTreeMap::new(),
            backend_ids: BTreeMap::new(),
            request_digests: BTreeMap::new(),
            error: None,
        }
    }
}

/// Request for the keyword stage.
pub fn keyword_request(t: &PromptTemplates, model_id: &str, question: &str) -> ModelRequest {
    ModelRequest::user(model_id, vec![Part::Text(t.keyword_prompt(question))])
}

/// Request for the caption stage: image first, then the keyword prompt.
pub fn caption_request(
    t: &PromptTemplates,
    model_id: &str,
    png: Arc<Vec<u8>>,
    keywords: &[String],
) -> ModelRequest {
    ModelRequest::user(
        model_id,
        vec![Part::png(png), Part::Text(t.caption_prompt(keywords))],
    )
}

/// Request for the answer stage. Text only: this stage never sees the image.
pub fn answer_request(
    t: &PromptTemplates,
    model_id: &str,
    caption: &str,
    question: &str,
) -> ModelRequest {
    ModelRequest::user(
        model_id,
        vec![Part::Text(t.answer_prompt(caption, question))],
    )
}

pub fn direct_request(model_id: &str, png: Arc<Vec<u8>>, question: &str) -> ModelRequest {
    ModelRequest::user(
        model_id,
        vec![Part::png(png), Part::Text(question.to_string())],
    )
}

#[derive(Debug, Error, PartialEq)]
pub enum KeywordError {
    #[error("reply contained no usable keyword")]
    EmptyKeywords,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Asks the keyword backend and parses its reply.
pub fn extract_keywords(
    t: &PromptTemplates,
    question: &str,
    backend: &Backend,
) -> Result<Vec<String>, KeywordError> {
    let reply = backend.complete(&keyword_request(t, backend.model_id(), question))?;
    let kws = parse_keywords(&reply.text);
    if kws.is_empty() {
        return Err(KeywordError::EmptyKeywords);
    }
    Ok(kws)
}

#[derive(Debug, Clone)]
struct KeywordOutcome {
    digest: String,
    latency_ms: Option<u64>,
    result: Result<(Vec<String>, bool), StageError>,
}

fn keywords_for(t: &PromptTemplates, question: &str, backend: &Backend) -> KeywordOutcome {
    let req = keyword_request(t, backend.model_id(), question);
    let digest = request_digest(&req);
    let (latency_ms, result) = match backend.complete(&req) {
        Ok(resp) => {
            let kws = parse_keywords(&resp.text);
            let result = if kws.is_empty() {
                let fb = fallback_keywords(question);
                if fb.is_empty() {
                    Err(StageError::new(
                        "keywords",
                        "empty_keywords",
                        "no keywords and no content words to fall back on",
                    ))
                } else {
                    Ok((fb, true))
                }
            } else {
                Ok((kws, false))
            };
            (Some(resp.latency_ms), result)
        }
        Err(e) => (None, Err(StageError::backend("keywords", &digest, &e))),
    };
    KeywordOutcome {
        digest,
        latency_ms,
        result,
    }
}

struct Job<'a> {
    root: &'a Path,
    inst: &'a TaskInstance,
    mode: Mode,
}

struct Ctx<'a> {
    templates: PromptTemplates,
    backends: &'a StageBackends,
    keywords: &'a HashMap<String, KeywordOutcome>,
}

fn call(
    trace: &mut PipelineTrace,
    stage: &str,
    backend: &Backend,
    req: &ModelRequest,
) -> Result<String, StageError> {
    let digest = request_digest(req);
    trace.backend_ids.insert(stage.into(), backend.id());
    trace.request_digests.insert(stage.into(), digest.clone());
    let resp = backend
        .complete(req)
        .map_err(|e| StageError::backend(stage, &digest, &e))?;
    trace
        .stage_latencies_ms
        .insert(stage.into(), resp.latency_ms);
    Ok(resp.text)
}

fn load_png(job: &Job) -> Result<Arc<Vec<u8>>, StageError> {
    let path = job.root.join(&job.inst.image_path);
    fs::read(&path).map(Arc::new).map_err(|e| {
        StageError::new(
            "load",
            "image_unreadable",
            format!("{}: {e}", path.display()),
        )
    })
}

fn run_direct(ctx: &Ctx, job: &Job, trace: &mut PipelineTrace) -> Result<String, StageError> {
    let backend = ctx
        .backends
        .direct
        .as_deref()
        .expect("validated: direct backend");
    let png = load_png(job)?;
    call(
        trace,
        "direct",
        backend,
        &direct_request(backend.model_id(), png, &job.inst.question),
    )
}

fn run_captioned(ctx: &Ctx, job: &Job, trace: &mut PipelineTrace) -> Result<String, StageError> {
    let kb = ctx
        .backends
        .keywords
        .as_deref()
        .expect("validated: keyword backend");
    let cb = ctx
        .backends
        .caption
        .as_deref()
        .expect("validated: caption backend");
    let ab = ctx
        .backends
        .answer
        .as_deref()
        .expect("validated: answer backend");

    let kw = &ctx.keywords[&job.inst.question];
    trace.backend_ids.insert("keywords".into(), kb.id());
    trace
        .request_digests
        .insert("keywords".into(), kw.digest.clone());
    if let Some(ms) = kw.latency_ms {
        trace.stage_latencies_ms.insert("keywords".into(), ms);
    }
    let (keywords, fallback) = kw.result.clone()?;
    trace.keywords = Some(keywords.clone());
    trace.keyword_fallback = fallback;

    let png = load_png(job)?;
    let caption = call(
        trace,
        "caption",
        cb,
        &caption_request(&ctx.templates, cb.model_id(), png, &keywords),
    )?;
    let caption = caption.trim().to_string();
    trace.caption = Some(caption.clone());
    if caption.is_empty() {
        return Err(StageError::new(
            "answer",
            "empty_caption",
            "caption stage returned no text",
        ));
    }
    call(
        trace,
        "answer",
        ab,
        &answer_request(&ctx.templates, ab.model_id(), &caption, &job.inst.question),
    )
}

fn run_job(ctx: &Ctx, job: &Job) -> PipelineTrace {
    let mut trace = PipelineTrace::new(job.inst, job.mode);
    let raw = match job.mode {
        Mode::Direct => run_direct(ctx, job, &mut trace),
        Mode::Captioned => run_captioned(ctx, job, &mut trace),
    };
    match raw {
        Ok(text) => {
            trace.parsed = Some(parse_for_shape(job.inst.task_id.answer_shape(), &text));
            trace.raw_answer = Some(text);
        }
        Err(e) => trace.error = Some(e),
    }
    trace
}

/// Runs every (instance, mode) pair with at most `max_concurrency` requests in
/// flight. Stage failures land on the trace. Output order is (task, instance,
/// mode) whatever the completion order, given a manifest in (task, index)
/// order as the generator writes it.
pub fn execute(
    dataset_root: &Path,
    instances: &[TaskInstance],
    config: &RunConfig,
    backends: &StageBackends,
) -> Result<Vec<PipelineTrace>, PipelineError> {
    config.validate()?;
    let templates = config.templates()?;
    let modes = config.mode.modes();
    for (stage, b) in backends.named() {
        let needed = match stage {
            "direct" => modes.contains(&Mode::Direct),
            _ => modes.contains(&Mode::Captioned),
        };
        if needed && b.is_none() {
            return Err(PipelineError::Config(format!(
                "no backend for stage {stage}"
            )));
        }
    }

    // one keyword request per distinct question, in manifest order
    let mut keywords = HashMap::new();
    if modes.contains(&Mode::Captioned) {
        let kb = backends.keywords.as_deref().expect("checked above");
        for inst in instances {
            if !keywords.contains_key(&inst.question) {
                keywords.insert(
                    inst.question.clone(),
                    keywords_for(&templates, &inst.question, kb),
                );
            }
        }
    }

    let jobs: Vec<Job> = instances
        .iter()
        .flat_map(|inst| {
            modes.iter().map(move |&mode| Job {
                root: dataset_root,
                inst,
                mode,
            })
        })
        .collect();
    let ctx = Ctx {
        templates,
        backends,
        keywords: &keywords,
    };
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = config.max_concurrency.min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let trace = run_job(&ctx, job);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")
                    .push((i, trace));
            });
        }
    });
    let mut traces = results.into_inner().expect("workers finished");
    traces.sort_by_key(|(i, _)| *i);
    Ok(traces.into_iter().map(|(_, t)| t).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub instances: usize,
    pub traces: usize,
    pub errors: usize,
    pub parse_failures: usize,
    pub keyword_fallbacks: usize,
}

impl RunCounts {
    pub fn of(instances: usize, traces: &[PipelineTrace]) -> Self {
        Self {
            instances,
            traces: traces.len(),
            errors: traces.iter().filter(|t| t.error.is_some()).count(),
            parse_failures: traces
                .iter()
                .filter(|t| t.parsed.as_ref().is_some_and(ParseOutcome::is_failure))
                .count(),
            keyword_fallbacks: traces.iter().filter(|t| t.keyword_fallback).count(),
        }
    }

    /// More than half of the traces ended in a stage error.
    pub fn degraded(&self) -> bool {
        self.errors * 2 > self.traces
    }
}

/// Contents of `run_meta.json`. Timing fields are the only nondeterministic part
/// of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: Option<String>,
    pub dataset: PathBuf,
    pub config: RunConfig,
    pub prompt_template_set: String,
    pub parser_version: String,
    pub backend_ids: BTreeMap<String, String>,
    pub cache_stats: BTreeMap<String, CacheStats>,
    pub counts: RunCounts,
    pub started_unix_ms: u64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub traces: Vec<PipelineTrace>,
    pub meta: RunMeta,
    pub traces_path: PathBuf,
}

/// Reads `<dataset>/manifest.jsonl`, runs it, and writes `traces.jsonl` and
/// `run_meta.json` under `out`.
pub fn run_dataset(
    dataset_root: &Path,
    config: &RunConfig,
    backends: &StageBackends,
    out: &Path,
) -> Result<RunOutput, PipelineError> {
    let instances = read_manifest(&dataset_root.join(MANIFEST_FILE))?;
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let clock = Instant::now();
    let traces = execute(dataset_root, &instances, config, backends)?;
    let wall_time_ms = clock.elapsed().as_millis() as u64;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let traces_path = out.join(TRACES_FILE);
    write_traces(&traces_path, &traces)?;
    let meta = RunMeta {
        label: config.label.clone(),
        // absolute, so the run can be evaluated from any directory
        dataset: fs::canonicalize(dataset_root).map_err(io_err(dataset_root))?,
        config: config.clone(),
        prompt_template_set: config.prompt_template_set.clone(),
        parser_version: PARSER_VERSION.to_string(),
        backend_ids: backends.ids(),
        cache_stats: backends.cache_stats(),
        counts: RunCounts::of(instances.len(), &traces),
        started_unix_ms,
        wall_time_ms,
    };
    let meta_path = out.join(RUN_META_FILE);
    let mut text = serde_json::to_string_pretty(&meta).expect("run meta serializes");
    text.push('\n');
    fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
    Ok(RunOutput {
        traces,
        meta,
        traces_path,
    })
}

pub fn write_traces(path: &Path, traces: &[PipelineTrace]) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    for t in traces {
        serde_json::to_writer(&mut buf, t).expect("trace serializes");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_traces(path: &Path) -> Result<Vec<PipelineTrace>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Io {
                path: format!("{}:{}", path.display(), i + 1),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}
