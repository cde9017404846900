//! Rebuilds `testdata/replay_bundle`: a 16-instance dataset, a response cache
//! recorded from scripted backends with a known correctness pattern, a CLI
//! config that replays it, and the golden report.
//!
//! Pattern, per task (instance 0, instance 1):
//!   tasks 1-6  direct right, wrong    captioned right, right   captioned better
//!   task 7     direct right, right    captioned right, wrong   direct better
//!   task 8     direct right, wrong    captioned wrong, right   tie
//!
//! Run with `cargo run -p geovqa-core --example build_fixture`.

use std::fs;
use std::path::Path;

use geovqa_core::backends::{image_sha256, BackendConfig, CacheMode, ScriptRule};
use geovqa_core::eval::{aggregate, compare_modes, render_report, score, EvalTable, ReportFormat};
use geovqa_core::pipeline::{run_dataset, RunConfig, RunMode, StageBackends};
use geovqa_core::tasks::{generate_dataset, AnswerValue, GeneratorConfig, TaskInstance};

const SEED: u64 = 20_241_018;
const LABEL: &str = "fixture-model";
const KEYWORD_MODEL: &str = "fixture-keywords";
const VLM: &str = "fixture-vlm";
const LLM: &str = "fixture-llm";

fn wrong(v: AnswerValue) -> AnswerValue {
    match v {
        AnswerValue::Count(n) => AnswerValue::Count(if n == 0 { 1 } else { n - 1 }),
        AnswerValue::YesNo(b) => AnswerValue::YesNo(!b),
        AnswerValue::Letter(c) => {
            AnswerValue::Letter(if c == 'z' { 'y' } else { (c as u8 + 1) as char })
        }
        AnswerValue::GridDims { rows, cols } => AnswerValue::GridDims {
            rows: rows + 1,
            cols,
        },
    }
}

fn say(v: AnswerValue) -> String {
    match v {
        AnswerValue::Count(n) => format!("I count {n}."),
        AnswerValue::YesNo(true) => "Yes, they intersect.".into(),
        AnswerValue::YesNo(false) => "No, they do not intersect.".into(),
        AnswerValue::Letter(c) => format!("The circled letter is '{c}'."),
        AnswerValue::GridDims { rows, cols } => {
            format!("The grid has {rows} rows and {cols} columns.")
        }
    }
}

/// (direct right, captioned right) for one instance.
fn pattern(task: u32, index: u32) -> (bool, bool) {
    match (task, index) {
        (1..=6, i) => (i == 0, true),
        (7, i) => (true, i == 0),
        (_, i) => (i == 0, i == 1),
    }
}

fn keywords_reply(task: u32) -> &'static str {
    match task {
        1 => "count, intersections, lines",
        2 => "segments; intersect",
        3 => "Count, nested squares",
        4 => "count, circles, rings",
        5 => "circled letter, word",
        // nothing usable: the pipeline falls back to question words
        6 => "",
        7 => "rows, columns, grid",
        _ => "circles, intersect",
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/replay_bundle");
    if root.exists() {
        fs::remove_dir_all(&root).expect("clear old bundle");
    }
    let dataset = root.join("dataset");
    let cache = root.join("cache");
    let gen = GeneratorConfig {
        instances_per_task: 2,
        master_seed: SEED,
        ..GeneratorConfig::default()
    };
    let instances = generate_dataset(&gen, &dataset)
        .expect("generate")
        .instances;
    assert_eq!(instances.len(), 16);

    let mut kw_rules = Vec::new();
    let mut caption_rules = Vec::new();
    let mut answer_rules = Vec::new();
    let mut direct_rules = Vec::new();
    for inst in &instances {
        let TaskInstance {
            instance_id,
            task_id,
            ground_truth,
            ..
        } = inst;
        let task = task_id.get();
        let index = inst.index().expect("generated id");
        if index == 0 {
            kw_rules.push(ScriptRule::contains(&inst.question, keywords_reply(task)));
        }
        let hash = image_sha256(&fs::read(dataset.join(&inst.image_path)).expect("png"));
        let (direct_ok, captioned_ok) = pattern(task, index);
        let pick = |ok: bool| {
            if ok {
                *ground_truth
            } else {
                wrong(*ground_truth)
            }
        };
        let direct_reply = if task == 3 && index == 1 {
            // a reply with no answer in it: a parse failure, scored wrong
            "I cannot determine that from the image.".to_string()
        } else {
            say(pick(direct_ok))
        };
        direct_rules.push(ScriptRule::image(&hash, &direct_reply));
        caption_rules.push(ScriptRule::image(
            &hash,
            &format!(
                "Scene {instance_id}: {} rendered on a white background.",
                task_id.title()
            ),
        ));
        answer_rules.push(ScriptRule::contains(
            &format!("Scene {instance_id}:"),
            &format!("Based on the caption: {}", say(pick(captioned_ok))),
        ));
    }

    let record = |model: &str, rules| BackendConfig {
        cache_mode: CacheMode::Record,
        cache_dir: Some(cache.clone()),
        ..BackendConfig::scripted(model, rules, None)
    };
    let config = RunConfig {
        label: Some(LABEL.into()),
        keyword_backend: Some(record(KEYWORD_MODEL, kw_rules)),
        caption_backend: Some(record(VLM, caption_rules)),
        answer_backend: Some(record(LLM, answer_rules)),
        direct_backend: Some(record(VLM, direct_rules)),
        ..RunConfig::new(RunMode::Both)
    };
    let backends = StageBackends::from_config(&config).expect("backends");
    let scratch = std::env::temp_dir().join(format!("geovqa-fixture-{}", std::process::id()));
    let out = run_dataset(&dataset, &config, &backends, &scratch).expect("record run");
    fs::remove_dir_all(&scratch).ok();
    assert_eq!(out.meta.counts.errors, 0, "recording must not fail");

    let scored = score(&instances, &out.traces).expect("score");
    let table = EvalTable {
        rows: vec![aggregate(&scored, LABEL).expect("aggregate")],
    };
    let comparisons = compare_modes(&scored, LABEL).expect("compare");
    fs::write(
        root.join("report.md"),
        render_report(&table, &comparisons, ReportFormat::Markdown),
    )
    .expect("report");

    let replay = |model: &str| serde_json::json!({"kind": "replay", "model_id": model, "cache_dir": "cache"});
    let cli_config = serde_json::json!({
        "backends": {
            "keywords": replay(KEYWORD_MODEL),
            "vlm": replay(VLM),
            "llm": replay(LLM),
        },
        "run": {
            "label": LABEL,
            "mode": "both",
            "keyword_backend": "keywords",
            "caption_backend": "vlm",
            "answer_backend": "llm",
            "direct_backend": "vlm",
        },
        "output": {"dataset": "dataset"},
    });
    let mut text = serde_json::to_string_pretty(&cli_config).expect("config json");
    text.push('\n');
    fs::write(root.join("config.json"), text).expect("config");
    let writes: u64 = backends.cache_stats().values().map(|s| s.writes).sum();
    println!(
        "bundle written to {} ({writes} cached responses)",
        root.display()
    );
}
