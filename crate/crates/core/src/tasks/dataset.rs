//! Dataset materialization and verification.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    generate, truth, AnswerValue, GeneratorConfig, TaskError, TaskId, TaskInstance, WORDS_SOURCE,
};
use crate::render::{decode_png, font, parse_svg, rasterize, scene_to_svg};

pub const GENERATOR_VERSION: &str = concat!("geovqa-gen/", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const META_FILE: &str = "dataset_meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub master_seed: u64,
    pub generator_version: String,
    pub font_sha256: String,
    pub words_sha256: String,
    pub instance_count: usize,
    pub config: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceFailure {
    pub task_id: TaskId,
    pub index: u32,
    pub error: String,
}

#[derive(Debug)]
pub struct GeneratedDataset {
    pub root: PathBuf,
    pub instances: Vec<TaskInstance>,
    pub failures: Vec<InstanceFailure>,
    pub meta: DatasetMeta,
}

impl GeneratedDataset {
    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TaskError + '_ {
    move |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), TaskError> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Generates every configured instance under `out`. Instances whose generator
/// fails are reported in `failures` and left out of the manifest.
pub fn generate_dataset(
    config: &GeneratorConfig,
    out: &Path,
) -> Result<GeneratedDataset, TaskError> {
    config.validate()?;
    for sub in ["images", "svg"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut tasks = config.tasks.clone();
    tasks.sort();
    tasks.dedup();
    let jobs: Vec<(TaskId, u32)> = tasks
        .iter()
        .flat_map(|&t| (0..config.instances_per_task).map(move |i| (t, i)))
        .collect();

    let results: Vec<Result<TaskInstance, (TaskId, u32, TaskError)>> = jobs
        .par_iter()
        .map(|&(task, index)| {
            let build = || -> Result<TaskInstance, TaskError> {
                let (instance, scene) = generate(config, task, index)?;
                write_file(
                    &out.join(&instance.svg_path),
                    scene_to_svg(&scene).as_bytes(),
                )?;
                write_file(&out.join(&instance.image_path), &rasterize(&scene)?)?;
                Ok(instance)
            };
            build().map_err(|e| (task, index, e))
        })
        .collect();

    let mut instances = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(inst) => instances.push(inst),
            // I/O errors are fatal; generator failures are per instance
            Err((_, _, e @ TaskError::Io { .. })) => return Err(e),
            Err((task_id, index, e)) => failures.push(InstanceFailure {
                task_id,
                index,
                error: e.to_string(),
            }),
        }
    }
    write_manifest(&out.join(MANIFEST_FILE), &instances)?;
    let meta = DatasetMeta {
        master_seed: config.master_seed,
        generator_version: GENERATOR_VERSION.to_string(),
        font_sha256: font::font_checksum(),
        words_sha256: hex::encode(Sha256::digest(WORDS_SOURCE.as_bytes())),
        instance_count: instances.len(),
        config: config.clone(),
    };
    let meta_path = out.join(META_FILE);
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    write_file(&meta_path, text.as_bytes())?;
    Ok(GeneratedDataset {
        root: out.to_path_buf(),
        instances,
        failures,
        meta,
    })
}

pub fn write_manifest(path: &Path, instances: &[TaskInstance]) -> Result<(), TaskError> {
    let mut buf = Vec::new();
    for inst in instances {
        serde_json::to_writer(&mut buf, inst).expect("instance serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<TaskInstance>, TaskError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance = serde_json::from_str(&line).map_err(|e| TaskError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub instance_id: String,
    pub expected: AnswerValue,
    /// Recomputed answer, or the reason none could be recovered.
    pub found: Result<AnswerValue, String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn check_instance(root: &Path, inst: &TaskInstance) -> Result<AnswerValue, String> {
    let svg_path = root.join(&inst.svg_path);
    let svg = fs::read_to_string(&svg_path).map_err(|e| format!("{}: {e}", svg_path.display()))?;
    let scene = parse_svg(&svg).map_err(|e| e.to_string())?;
    let png_path = root.join(&inst.image_path);
    let png = fs::read(&png_path).map_err(|e| format!("{}: {e}", png_path.display()))?;
    let img = decode_png(&png).map_err(|e| e.to_string())?;
    if (img.width, img.height) != (scene.width(), scene.height()) {
        return Err(format!(
            "image is {}x{}, scene is {}x{}",
            img.width,
            img.height,
            scene.width(),
            scene.height()
        ));
    }
    truth::recompute(inst.task_id, &scene).map_err(|e| e.to_string())
}

/// Recomputes every ground truth in the dataset at `root` from its stored SVG.
/// An empty manifest is an error.
pub fn verify_dataset(root: &Path) -> Result<VerifyReport, TaskError> {
    let instances = read_manifest(&root.join(MANIFEST_FILE))?;
    if instances.is_empty() {
        return Err(TaskError::Manifest {
            line: 0,
            message: "dataset has no instances".into(),
        });
    }
    let mismatches: Vec<Mismatch> = instances
        .par_iter()
        .filter_map(|inst| {
            let found = check_instance(root, inst);
            (found.as_ref() != Ok(&inst.ground_truth)).then(|| Mismatch {
                instance_id: inst.instance_id.clone(),
                expected: inst.ground_truth,
                found,
            })
        })
        .collect();
    Ok(VerifyReport {
        checked: instances.len(),
        mismatches,
    })
}
