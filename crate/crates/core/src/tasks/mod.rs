//! Seeded procedural generators for the eight benchmark tasks.
//!
//! Every generator is a pure function of `(master seed, task, index)`: the
//! instance draws from its own ChaCha stream, so serial and parallel generation
//! agree bit for bit. Ground truth comes from [`crate::geometry`], and
//! [`truth::recompute`] derives the same answer back from a stored scene.

mod dataset;
mod grid;
mod letters;
mod plots;
mod shapes;
mod subway;
pub mod truth;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::render::{Rgb, Scene, DEFAULT_CANVAS};

pub use dataset::{
    generate_dataset, read_manifest, verify_dataset, write_manifest, DatasetMeta, GeneratedDataset,
    InstanceFailure, Mismatch, VerifyReport, GENERATOR_VERSION, MANIFEST_FILE, META_FILE,
};
pub use letters::{word_list, WORDS_SOURCE};

/// Rejection-sampling budget per instance.
pub const MAX_ATTEMPTS: u32 = 10_000;

/// Colors usable for task elements; all at least 100 luma points darker than white.
pub const PALETTE: [Rgb; 8] = [
    Rgb(0, 0, 255),
    Rgb(220, 0, 0),
    Rgb(0, 128, 0),
    Rgb(128, 0, 128),
    Rgb(230, 110, 0),
    Rgb(0, 128, 128),
    Rgb(139, 69, 19),
    Rgb(200, 0, 200),
];

pub const BLUE: Rgb = PALETTE[0];
pub const RED: Rgb = PALETTE[1];

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task id {0} (expected 1-8)")]
    UnknownTask(u32),
    #[error("task {task}: rejection budget of {MAX_ATTEMPTS} attempts exhausted for index {index} (seed {seed:#018x})")]
    Exhausted { task: TaskId, index: u32, seed: u64 },
    #[error("task {task}: {message}")]
    Layout { task: TaskId, message: String },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error("cannot recover ground truth from scene: {0}")]
    Recover(String),
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TaskId(u8);

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId(1),
        TaskId(2),
        TaskId(3),
        TaskId(4),
        TaskId(5),
        TaskId(6),
        TaskId(7),
        TaskId(8),
    ];

    pub fn new(id: u32) -> Result<Self, TaskError> {
        match id {
            1..=8 => Ok(Self(id as u8)),
            _ => Err(TaskError::UnknownTask(id)),
        }
    }

    pub fn get(self) -> u32 {
        u32::from(self.0)
    }

    pub fn answer_shape(self) -> AnswerShape {
        match self.0 {
            1 | 3 | 4 | 6 => AnswerShape::Count,
            2 | 8 => AnswerShape::YesNo,
            5 => AnswerShape::Letter,
            _ => AnswerShape::GridDims,
        }
    }

    pub fn question(self) -> &'static str {
        match self.0 {
            1 => {
                "How many times do the blue line and the red line intersect? Answer with a number."
            }
            2 => "Do the two line segments intersect? Answer yes or no.",
            3 => "How many squares are in the image? Answer with a number.",
            4 => "How many circles are in the image? Answer with a number.",
            5 => "Which letter in the word is circled in red? Answer with one letter.",
            6 => "How many paths connect station A to station B? Answer with a number.",
            7 => "How many rows and how many columns are in the grid? Answer as rows,columns.",
            _ => "Do the two circles intersect? Answer yes or no.",
        }
    }

    pub fn title(self) -> &'static str {
        match self.0 {
            1 => "line intersections",
            2 => "segment crossing",
            3 => "nested squares",
            4 => "olympic rings",
            5 => "circled letter",
            6 => "subway paths",
            7 => "grid size",
            _ => "circle pair",
        }
    }

    /// Report-time grouping: tasks whose answer is a count of objects.
    pub fn is_counting(self) -> bool {
        matches!(self.0, 1 | 3 | 4 | 6 | 7)
    }
}

impl TryFrom<u32> for TaskId {
    type Error = TaskError;

    fn try_from(v: u32) -> Result<Self, Self::Error> {
        TaskId::new(v)
    }
}

impl From<TaskId> for u32 {
    fn from(t: TaskId) -> u32 {
        t.get()
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerShape {
    Count,
    YesNo,
    Letter,
    GridDims,
}

/// Typed answer. Counts stay within 0..=20, grid dimensions within 1..=20.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AnswerValue {
    Count(u32),
    YesNo(bool),
    Letter(char),
    GridDims { rows: u32, cols: u32 },
}

impl AnswerValue {
    pub const MAX_COUNT: u32 = 20;

    pub fn shape(&self) -> AnswerShape {
        match self {
            AnswerValue::Count(_) => AnswerShape::Count,
            AnswerValue::YesNo(_) => AnswerShape::YesNo,
            AnswerValue::Letter(_) => AnswerShape::Letter,
            AnswerValue::GridDims { .. } => AnswerShape::GridDims,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            AnswerValue::Count(n) => n <= Self::MAX_COUNT,
            AnswerValue::YesNo(_) => true,
            AnswerValue::Letter(c) => c.is_ascii_lowercase(),
            AnswerValue::GridDims { rows, cols } => {
                (1..=Self::MAX_COUNT).contains(&rows) && (1..=Self::MAX_COUNT).contains(&cols)
            }
        }
    }

    /// Short canonical text a model could have answered with.
    pub fn render(&self) -> String {
        match *self {
            AnswerValue::Count(n) => n.to_string(),
            AnswerValue::YesNo(true) => "yes".into(),
            AnswerValue::YesNo(false) => "no".into(),
            AnswerValue::Letter(c) => format!("'{c}'"),
            AnswerValue::GridDims { rows, cols } => format!("{rows}x{cols}"),
        }
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub instance_id: String,
    pub task_id: TaskId,
    pub seed: u64,
    pub question: String,
    pub ground_truth: AnswerValue,
    pub image_path: String,
    pub svg_path: String,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl TaskInstance {
    /// Position within its task, recovered from the instance id.
    pub fn index(&self) -> Option<u32> {
        self.instance_id.rsplit('_').next()?.parse().ok()
    }
}

pub fn instance_id(task: TaskId, index: u32) -> String {
    format!("t{task}_{index:04}")
}

/// Inclusive range of a per-task parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: u32,
    pub max: u32,
}

impl Span {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn len(&self) -> u32 {
        self.max - self.min + 1
    }

    pub fn is_empty(&self) -> bool {
        self.max < self.min
    }

    /// Deterministic cyclic schedule over the range, so every window of
    /// `len()` consecutive indices covers all values.
    pub fn scheduled(&self, index: u32) -> u32 {
        self.min + index % self.len()
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskRanges {
    pub line_crossings: Span,
    pub nested_squares: Span,
    pub rings: Span,
    pub subway_paths: Span,
    pub subway_distractors: Span,
    pub grid_rows: Span,
    pub grid_cols: Span,
}

impl Default for TaskRanges {
    fn default() -> Self {
        Self {
            line_crossings: Span::new(0, 2),
            nested_squares: Span::new(2, 5),
            rings: Span::new(4, 9),
            subway_paths: Span::new(0, 3),
            subway_distractors: Span::new(1, 3),
            grid_rows: Span::new(3, 9),
            grid_cols: Span::new(3, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub instances_per_task: u32,
    pub master_seed: u64,
    pub canvas_size: u32,
    pub tasks: Vec<TaskId>,
    pub ranges: TaskRanges,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            instances_per_task: 100,
            master_seed: 0,
            canvas_size: DEFAULT_CANVAS,
            tasks: TaskId::ALL.to_vec(),
            ranges: TaskRanges::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: &str| Err(TaskError::Config(m.to_string()));
        if self.instances_per_task < 1 {
            return bad("instances_per_task must be at least 1");
        }
        if !(crate::render::MIN_CANVAS..=crate::render::MAX_CANVAS).contains(&self.canvas_size) {
            return bad("canvas_size outside [256, 2048]");
        }
        if self.tasks.is_empty() {
            return bad("no tasks selected");
        }
        let r = &self.ranges;
        let checks = [
            (r.line_crossings, 0, 3, "line_crossings"),
            (r.nested_squares, 2, 5, "nested_squares"),
            (r.rings, 1, 9, "rings"),
            (r.subway_paths, 0, 3, "subway_paths"),
            (r.subway_distractors, 0, 3, "subway_distractors"),
            (r.grid_rows, 1, 12, "grid_rows"),
            (r.grid_cols, 1, 12, "grid_cols"),
        ];
        for (span, lo, hi, name) in checks {
            if span.is_empty() || span.min < lo || span.max > hi {
                return Err(TaskError::Config(format!(
                    "{name} range {}..={} must lie within {lo}..={hi}",
                    span.min, span.max
                )));
            }
        }
        Ok(())
    }
}

/// Per-instance seed: first 8 bytes of SHA-256 over the identifying triple.
pub fn instance_seed(master_seed: u64, task: TaskId, index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(b"geovqa-instance");
    h.update(master_seed.to_le_bytes());
    h.update([task.0]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

pub(crate) fn instance_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rounds to the three decimals the SVG serializer keeps, so stored scenes
/// reproduce the generator's geometry.
pub(crate) fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

pub(crate) type Params = BTreeMap<String, serde_json::Value>;

/// Output of one generator before file paths are attached.
#[derive(Debug, Clone)]
pub struct Generated {
    pub scene: Scene,
    pub ground_truth: AnswerValue,
    pub params: Params,
}

pub(crate) struct GenContext<'a> {
    pub task: TaskId,
    pub index: u32,
    pub seed: u64,
    pub size: f64,
    pub ranges: &'a TaskRanges,
}

impl GenContext<'_> {
    pub fn exhausted(&self) -> TaskError {
        TaskError::Exhausted {
            task: self.task,
            index: self.index,
            seed: self.seed,
        }
    }

    pub fn layout(&self, message: impl Into<String>) -> TaskError {
        TaskError::Layout {
            task: self.task,
            message: message.into(),
        }
    }

    pub fn blank_scene(&self) -> Result<Scene, TaskError> {
        let side = self.size as u32;
        Ok(Scene::new(side, side, Rgb::WHITE)?)
    }
}

/// Runs the generator for `task` at `index`.
pub fn generate(
    config: &GeneratorConfig,
    task: TaskId,
    index: u32,
) -> Result<(TaskInstance, Scene), TaskError> {
    let seed = instance_seed(config.master_seed, task, index);
    let ctx = GenContext {
        task,
        index,
        seed,
        size: f64::from(config.canvas_size),
        ranges: &config.ranges,
    };
    let mut rng = instance_rng(seed);
    let generated = match task.0 {
        1 => plots::line_intersections(&ctx, &mut rng)?,
        2 => plots::segment_pair(&ctx, &mut rng)?,
        3 => shapes::nested_squares(&ctx, &mut rng)?,
        4 => shapes::olympic_rings(&ctx, &mut rng)?,
        5 => letters::circled_letter(&ctx, &mut rng)?,
        6 => subway::subway_paths(&ctx, &mut rng)?,
        7 => grid::grid(&ctx, &mut rng)?,
        _ => shapes::circle_pair(&ctx, &mut rng)?,
    };
    debug_assert!(generated.ground_truth.is_valid());
    debug_assert_eq!(generated.ground_truth.shape(), task.answer_shape());
    let id = instance_id(task, index);
    let instance = TaskInstance {
        image_path: format!("images/{id}.png"),
        svg_path: format!("svg/{id}.svg"),
        instance_id: id,
        task_id: task,
        seed,
        question: task.question().to_string(),
        ground_truth: generated.ground_truth,
        params: generated.params,
    };
    Ok((instance, generated.scene))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_shape_mapping_is_fixed() {
        use AnswerShape::*;
        let shapes: Vec<AnswerShape> = TaskId::ALL.iter().map(|t| t.answer_shape()).collect();
        assert_eq!(
            shapes,
            vec![Count, YesNo, Count, Count, Letter, Count, GridDims, YesNo]
        );
        assert!(TaskId::new(0).is_err());
        assert!(TaskId::new(9).is_err());
    }

    #[test]
    fn answer_value_json_shape() {
        let v = serde_json::to_value(AnswerValue::GridDims { rows: 4, cols: 7 }).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"kind": "grid_dims", "value": {"rows": 4, "cols": 7}})
        );
        let v = serde_json::to_value(AnswerValue::Letter('k')).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "letter", "value": "k"}));
        let back: AnswerValue = serde_json::from_str(r#"{"kind":"yes_no","value":true}"#).unwrap();
        assert_eq!(back, AnswerValue::YesNo(true));
    }

    #[test]
    fn answer_value_validity() {
        assert!(AnswerValue::Count(20).is_valid());
        assert!(!AnswerValue::Count(21).is_valid());
        assert!(!AnswerValue::GridDims { rows: 0, cols: 3 }.is_valid());
        assert!(!AnswerValue::Letter('A').is_valid());
    }

    #[test]
    fn palette_contrast_against_white() {
        for c in PALETTE {
            assert!(Rgb::WHITE.luminance() - c.luminance() >= 100.0, "{c}");
        }
        for (i, a) in PALETTE.iter().enumerate() {
            assert!(!PALETTE[i + 1..].contains(a));
        }
    }

    #[test]
    fn seeds_differ_per_coordinate() {
        let t1 = TaskId::new(1).unwrap();
        let t2 = TaskId::new(2).unwrap();
        let a = instance_seed(7, t1, 0);
        assert_eq!(a, instance_seed(7, t1, 0));
        assert_ne!(a, instance_seed(7, t1, 1));
        assert_ne!(a, instance_seed(7, t2, 0));
        assert_ne!(a, instance_seed(8, t1, 0));
    }

    #[test]
    fn span_schedule_cycles() {
        let s = Span::new(4, 9);
        let vals: Vec<u32> = (0..6).map(|i| s.scheduled(i)).collect();
        assert_eq!(vals, vec![4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn config_validation() {
        assert!(GeneratorConfig::default().validate().is_ok());
        let zero = GeneratorConfig {
            instances_per_task: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let mut bad_range = GeneratorConfig::default();
        bad_range.ranges.rings = Span::new(4, 12);
        assert!(bad_range.validate().is_err());
    }
}
