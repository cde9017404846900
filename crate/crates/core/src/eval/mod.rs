//! Scoring, Figure-1-style accuracy grids, paired mode comparisons, reports.

mod mcnemar;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parsing::ParseOutcome;
use crate::pipeline::{Mode, PipelineTrace};
use crate::tasks::{TaskId, TaskInstance};

pub use mcnemar::mcnemar_exact;
pub use report::{render_report, ReportFormat};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trace refers to instance {0}, which is not in the manifest")]
    UnknownInstance(String),
    #[error("no traces to aggregate")]
    Empty,
    #[error("{model}: modes cover different instances ({only_direct} direct-only, {only_captioned} captioned-only, e.g. {example})")]
    UnmatchedInstances {
        model: String,
        only_direct: usize,
        only_captioned: usize,
        example: String,
    },
    #[error("{model}: duplicate {mode:?} trace for {instance_id}")]
    DuplicateTrace {
        model: String,
        instance_id: String,
        mode: Mode,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrace {
    pub trace: PipelineTrace,
    pub correct: bool,
}

/// Exact-match scoring: stage errors and parse failures are wrong.
pub fn score(
    manifest: &[TaskInstance],
    traces: &[PipelineTrace],
) -> Result<Vec<ScoredTrace>, EvalError> {
    let truth: HashMap<&str, &TaskInstance> = manifest
        .iter()
        .map(|i| (i.instance_id.as_str(), i))
        .collect();
    traces
        .iter()
        .map(|t| {
            let inst = truth
                .get(t.instance_id.as_str())
                .ok_or_else(|| EvalError::UnknownInstance(t.instance_id.clone()))?;
            let correct = t.error.is_none()
                && matches!(&t.parsed, Some(ParseOutcome::Parsed { answer }) if *answer == inst.ground_truth);
            let mut trace = t.clone();
            trace.correct = Some(correct);
            Ok(ScoredTrace { trace, correct })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub correct: u32,
    pub total: u32,
    pub parse_failures: u32,
    pub errors: u32,
}

/// One (task, mode) accuracy. Counts are absent for rows built from
/// published percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<CellCounts>,
}

impl Cell {
    pub fn from_counts(counts: CellCounts) -> Self {
        Self {
            accuracy: 100.0 * counts.correct as f64 / counts.total as f64,
            counts: Some(counts),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskCells {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captioned: Option<Cell>,
}

impl TaskCells {
    pub fn get(&self, mode: Mode) -> Option<&Cell> {
        match mode {
            Mode::Direct => self.direct.as_ref(),
            Mode::Captioned => self.captioned.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub tasks: BTreeMap<TaskId, TaskCells>,
    pub average_direct: Option<f64>,
    pub average_captioned: Option<f64>,
}

impl EvalRow {
    /// Row from published per-task percentages, tasks 1 to 8 in order.
    pub fn from_accuracies(model: &str, direct: [f64; 8], captioned: [f64; 8]) -> Self {
        let cell = |a: f64| {
            Some(Cell {
                accuracy: a,
                counts: None,
            })
        };
        let tasks = TaskId::ALL
            .iter()
            .zip(direct.iter().zip(captioned.iter()))
            .map(|(&t, (&d, &c))| {
                (
                    t,
                    TaskCells {
                        direct: cell(d),
                        captioned: cell(c),
                    },
                )
            })
            .collect();
        Self::with_averages(model, tasks)
    }

    fn with_averages(model: &str, tasks: BTreeMap<TaskId, TaskCells>) -> Self {
        let avg = |mode| {
            let values: Vec<f64> = tasks
                .values()
                .filter_map(|c: &TaskCells| c.get(mode))
                .map(|c| c.accuracy)
                .collect();
            (!values.is_empty()).then(|| task_mean(&values))
        };
        Self {
            model: model.to_string(),
            average_direct: avg(Mode::Direct),
            average_captioned: avg(Mode::Captioned),
            tasks,
        }
    }

    pub fn average(&self, mode: Mode) -> Option<f64> {
        match mode {
            Mode::Direct => self.average_direct,
            Mode::Captioned => self.average_captioned,
        }
    }
}

/// Rounds half away from zero to two decimals. The nudge absorbs binary
/// representation error so 39.625 rounds to 39.63.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    (scaled + scaled.signum() * 1e-9).round() / 100.0
}

/// Unweighted mean of per-task accuracies, rounded to two decimals.
pub fn task_mean(accuracies: &[f64]) -> f64 {
    round2(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

/// Per-task, per-mode accuracy for one model. Averages run over the tasks
/// present in the traces.
pub fn aggregate(scored: &[ScoredTrace], model: &str) -> Result<EvalRow, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<(TaskId, Mode), CellCounts> = BTreeMap::new();
    for s in scored {
        let c = counts.entry((s.trace.task_id, s.trace.mode)).or_default();
        c.total += 1;
        c.correct += u32::from(s.correct);
        c.errors += u32::from(s.trace.error.is_some());
        c.parse_failures += u32::from(
            s.trace
                .parsed
                .as_ref()
                .is_some_and(ParseOutcome::is_failure),
        );
    }
    let mut tasks: BTreeMap<TaskId, TaskCells> = BTreeMap::new();
    for ((task, mode), c) in counts {
        let cells = tasks.entry(task).or_default();
        let cell = Some(Cell::from_counts(c));
        match mode {
            Mode::Direct => cells.direct = cell,
            Mode::Captioned => cells.captioned = cell,
        }
    }
    Ok(EvalRow::with_averages(model, tasks))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CaptionedBetter,
    DirectBetter,
    Tie,
}

/// Direct vs captioned on the same instances. `b`: direct right, captioned
/// wrong; `c`: the reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub model: String,
    /// "1" to "8", or "all".
    pub task: String,
    pub n: u64,
    pub b: u64,
    pub c: u64,
    pub p_value: f64,
    pub direction: Direction,
}

impl PairedComparison {
    fn new(model: &str, task: String, n: u64, b: u64, c: u64) -> Self {
        let direction = match c.cmp(&b) {
            std::cmp::Ordering::Greater => Direction::CaptionedBetter,
            std::cmp::Ordering::Less => Direction::DirectBetter,
            std::cmp::Ordering::Equal => Direction::Tie,
        };
        Self {
            model: model.to_string(),
            task,
            n,
            b,
            c,
            p_value: mcnemar_exact(b, c),
            direction,
        }
    }
}

/// McNemar comparison per task plus "all": always nine entries. Both modes
/// must cover the same instances.
pub fn compare_modes(
    scored: &[ScoredTrace],
    model: &str,
) -> Result<Vec<PairedComparison>, EvalError> {
    let mut by_mode: [BTreeMap<&str, (TaskId, bool)>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for s in scored {
        let slot = &mut by_mode[s.trace.mode as usize];
        if slot
            .insert(&s.trace.instance_id, (s.trace.task_id, s.correct))
            .is_some()
        {
            return Err(EvalError::DuplicateTrace {
                model: model.to_string(),
                instance_id: s.trace.instance_id.clone(),
                mode: s.trace.mode,
            });
        }
    }
    let [direct, captioned] = by_mode;
    let d_ids: BTreeSet<&str> = direct.keys().copied().collect();
    let c_ids: BTreeSet<&str> = captioned.keys().copied().collect();
    if d_ids != c_ids {
        let only_d: Vec<&&str> = d_ids.difference(&c_ids).collect();
        let only_c: Vec<&&str> = c_ids.difference(&d_ids).collect();
        return Err(EvalError::UnmatchedInstances {
            model: model.to_string(),
            only_direct: only_d.len(),
            only_captioned: only_c.len(),
            example: only_d
                .first()
                .or(only_c.first())
                .map(|s| s.to_string())
                .unwrap_or_default(),
        });
    }
    let mut per_task: BTreeMap<TaskId, (u64, u64, u64)> =
        TaskId::ALL.iter().map(|&t| (t, (0, 0, 0))).collect();
    for (id, &(task, d_ok)) in &direct {
        let c_ok = captioned[id].1;
        let e = per_task.get_mut(&task).expect("all tasks seeded");
        e.0 += 1;
        e.1 += u64::from(d_ok && !c_ok);
        e.2 += u64::from(!d_ok && c_ok);
    }
    let mut out: Vec<PairedComparison> = per_task
        .iter()
        .map(|(t, &(n, b, c))| PairedComparison::new(model, t.to_string(), n, b, c))
        .collect();
    let (n, b, c) = per_task
        .values()
        .fold((0, 0, 0), |a, v| (a.0 + v.0, a.1 + v.1, a.2 + v.2));
    out.push(PairedComparison::new(model, "all".into(), n, b, c));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::AnswerValue;

    fn inst(task: u32, idx: u32, truth: AnswerValue) -> TaskInstance {
        let task_id = TaskId::new(task).unwrap();
        TaskInstance {
            instance_id: crate::tasks::instance_id(task_id, idx),
            task_id,
            seed: 0,
            question: task_id.question().into(),
            ground_truth: truth,
            image_path: String::new(),
            svg_path: String::new(),
            params: Default::default(),
        }
    }

    fn trace(i: &TaskInstance, mode: Mode, parsed: ParseOutcome) -> PipelineTrace {
        serde_json::from_value(serde_json::json!({
            "instance_id": i.instance_id, "task_id": i.task_id, "mode": mode,
            "keywords": null, "caption": null, "raw_answer": "x", "parsed": parsed, "correct": null,
            "stage_latencies_ms": {}, "backend_ids": {}, "request_digests": {}, "error": null
        }))
        .unwrap()
    }

    fn parsed(v: AnswerValue) -> ParseOutcome {
        ParseOutcome::Parsed { answer: v }
    }

    #[test]
    fn scoring_is_exact_match() {
        let count = inst(1, 0, AnswerValue::Count(3));
        let grid = inst(7, 0, AnswerValue::GridDims { rows: 4, cols: 7 });
        let manifest = vec![count.clone(), grid.clone()];
        let cases = [
            (
                trace(&count, Mode::Direct, parsed(AnswerValue::Count(3))),
                true,
            ),
            (
                trace(
                    &grid,
                    Mode::Direct,
                    parsed(AnswerValue::GridDims { rows: 7, cols: 4 }),
                ),
                false,
            ),
            (
                trace(
                    &grid,
                    Mode::Direct,
                    parsed(AnswerValue::GridDims { rows: 4, cols: 7 }),
                ),
                true,
            ),
            (
                trace(
                    &count,
                    Mode::Direct,
                    ParseOutcome::NoAnswerFound {
                        reason: "none".into(),
                    },
                ),
                false,
            ),
        ];
        for (t, want) in cases {
            let s = score(&manifest, &[t]).unwrap();
            assert_eq!(s[0].correct, want);
            assert_eq!(s[0].trace.correct, Some(want));
        }
        let stray = trace(
            &inst(2, 9, AnswerValue::YesNo(true)),
            Mode::Direct,
            parsed(AnswerValue::YesNo(true)),
        );
        assert_eq!(
            score(&manifest, &[stray]),
            Err(EvalError::UnknownInstance("t2_0009".into()))
        );
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(39.625), 39.63);
        assert_eq!(round2(27.5625), 27.56);
        assert_eq!(round2(43.875), 43.88);
        assert_eq!(round2(2.675), 2.68);
        assert_eq!(round2(1.0049), 1.0);
    }

    #[test]
    fn aggregate_counts_and_averages() {
        let a = inst(1, 0, AnswerValue::Count(2));
        let b = inst(1, 1, AnswerValue::Count(5));
        let c = inst(8, 0, AnswerValue::YesNo(false));
        let manifest = vec![a.clone(), b.clone(), c.clone()];
        let traces = vec![
            trace(&a, Mode::Direct, parsed(AnswerValue::Count(2))),
            trace(
                &b,
                Mode::Direct,
                ParseOutcome::NoAnswerFound { reason: "r".into() },
            ),
            trace(&c, Mode::Direct, parsed(AnswerValue::YesNo(false))),
        ];
        let row = aggregate(&score(&manifest, &traces).unwrap(), "m").unwrap();
        let t1 = row.tasks[&TaskId::new(1).unwrap()].direct.unwrap();
        assert_eq!(t1.accuracy, 50.0);
        assert_eq!(
            t1.counts.unwrap(),
            CellCounts {
                correct: 1,
                total: 2,
                parse_failures: 1,
                errors: 0
            }
        );
        assert_eq!(row.average_direct, Some(75.0));
        assert_eq!(row.average_captioned, None);
        assert_eq!(aggregate(&[], "m"), Err(EvalError::Empty));
    }

    #[test]
    fn comparisons_have_nine_entries() {
        let a = inst(1, 0, AnswerValue::Count(2));
        let manifest = vec![a.clone()];
        let traces = vec![
            trace(&a, Mode::Direct, parsed(AnswerValue::Count(1))),
            trace(&a, Mode::Captioned, parsed(AnswerValue::Count(2))),
        ];
        let cmp = compare_modes(&score(&manifest, &traces).unwrap(), "m").unwrap();
        assert_eq!(cmp.len(), 9);
        assert_eq!(
            (cmp[0].n, cmp[0].b, cmp[0].c, cmp[0].direction),
            (1, 0, 1, Direction::CaptionedBetter)
        );
        assert_eq!(cmp[8].task, "all");
        assert!(cmp[1..8]
            .iter()
            .all(|c| c.n == 0 && c.p_value == 1.0 && c.direction == Direction::Tie));

        let missing = compare_modes(&score(&manifest, &traces[..1]).unwrap(), "m");
        assert!(matches!(
            missing,
            Err(EvalError::UnmatchedInstances { only_direct: 1, .. })
        ));
    }
}
