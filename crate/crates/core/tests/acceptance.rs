//! Acceptance checks. Runs as a plain binary so each criterion prints one
//! PASS/FAIL line in the test log; exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use geovqa_core::backends::{
    Backend, BackendConfig, CountingTransport, ScriptedTransport, Transport,
};
use geovqa_core::eval::{
    aggregate, compare_modes, mcnemar_exact, render_report, score, Direction, EvalRow, EvalTable,
    PairedComparison, ReportFormat,
};
use geovqa_core::geometry::{
    circles_intersect, count_polyline_intersections, segment_intersection, Circle, Point, Polyline,
    Segment,
};
use geovqa_core::parsing::{parse_for_task, ParseOutcome};
use geovqa_core::pipeline::{
    read_traces, run_dataset, RunConfig, RunMode, StageBackends, TRACES_FILE,
};
use geovqa_core::tasks::{
    generate_dataset, read_manifest, verify_dataset, GeneratorConfig, TaskId, MANIFEST_FILE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
/// (model, direct per task, captioned per task, printed direct and captioned averages)
type FigureRow = (&'static str, [f64; 8], [f64; 8], f64, f64);
type Xy = (f64, f64);
/// Centre x, centre y, radius.
type Xyr = (f64, f64, f64);

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn bundle() -> PathBuf {
    manifest_dir().join("testdata/replay_bundle")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// aggregation fidelity

fn aggregation_fidelity() -> Outcome {
    let rows: [FigureRow; 3] = [
        (
            "Gemini",
            [40.0, 78.0, 49.0, 24.0, 33.0, 15.0, 13.0, 65.0],
            [43.0, 88.0, 51.0, 26.0, 41.0, 14.0, 15.0, 74.0],
            39.63,
            44.00,
        ),
        (
            "Paligemma",
            [3.0, 90.0, 60.0, 21.0, 3.0, 0.0, 6.0, 37.5],
            [49.0, 84.0, 40.0, 34.0, 34.0, 24.0, 6.0, 55.0],
            27.56,
            40.75,
        ),
        (
            "GPT4omini",
            [46.0, 58.0, 18.0, 39.0, 40.0, 22.0, 48.0, 80.0],
            [71.0, 96.0, 41.0, 46.0, 56.0, 21.0, 54.0, 79.0],
            43.88,
            58.00,
        ),
    ];
    let mut got = Vec::new();
    for (model, direct, captioned, want_d, want_c) in rows {
        let row = EvalRow::from_accuracies(model, direct, captioned);
        for (avg, want) in [
            (row.average_direct, want_d),
            (row.average_captioned, want_c),
        ] {
            let avg = avg.ok_or("missing average")?;
            ensure((avg - want).abs() <= 0.005, || {
                format!("{model}: {avg} vs printed {want}")
            })?;
            got.push(format!("{avg:.2}"));
        }
    }
    // the rendered grid carries the printed values too
    let table = EvalTable {
        rows: vec![EvalRow::from_accuracies("Gemini", rows[0].1, rows[0].2)],
    };
    let md = render_report(&table, &[], ReportFormat::Markdown);
    ensure(md.contains("| 39.63 | 44.00 |"), || {
        "markdown lacks the Gemini averages".into()
    })?;
    Ok(format!("averages {}", got.join(", ")))
}

// ---------------------------------------------------------------------------
// oracle closure and generation determinism share one 800-instance dataset

struct Generated {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn full_config() -> GeneratorConfig {
    GeneratorConfig {
        instances_per_task: 100,
        master_seed: 1234,
        ..GeneratorConfig::default()
    }
}

fn generate_full() -> Result<Generated, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("ds");
    let ds = generate_dataset(&full_config(), &root).map_err(|e| e.to_string())?;
    ensure(ds.failures.is_empty(), || {
        format!("{} generation failures", ds.failures.len())
    })?;
    Ok(Generated { _dir: dir, root })
}

fn oracle_closure(ds: &Generated) -> Outcome {
    let report = verify_dataset(&ds.root).map_err(|e| e.to_string())?;
    ensure(report.checked == 800, || {
        format!("checked {} instances, expected 800", report.checked)
    })?;
    ensure(report.ok(), || {
        format!(
            "{} mismatches, first {:?}",
            report.mismatches.len(),
            report.mismatches.first()
        )
    })?;
    Ok(format!(
        "{} instances recomputed, 0 mismatches",
        report.checked
    ))
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism(first: &Generated) -> Outcome {
    let second = generate_full()?;
    let a = tree_bytes(&first.root);
    let b = tree_bytes(&second.root);
    ensure(a.len() == b.len(), || {
        format!("{} vs {} files", a.len(), b.len())
    })?;
    for (path, bytes) in &a {
        ensure(b.get(path) == Some(bytes), || {
            format!("{} differs between runs", path.display())
        })?;
    }
    let svgs = a
        .keys()
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .count();
    ensure(svgs == 800, || format!("{svgs} SVG files"))?;

    let runs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut traces = Vec::new();
    for workers in [1, 8] {
        let (config, backends, _) = replay_setup(workers);
        let out = runs.path().join(format!("c{workers}"));
        run_dataset(&bundle().join("dataset"), &config, &backends, &out)
            .map_err(|e| e.to_string())?;
        traces.push(fs::read(out.join(TRACES_FILE)).map_err(|e| e.to_string())?);
    }
    ensure(traces[0] == traces[1], || {
        "traces differ between concurrency 1 and 8".into()
    })?;
    Ok(format!(
        "{} files identical across two generations; traces identical at concurrency 1 and 8 ({} bytes)",
        a.len(),
        traces[0].len()
    ))
}

// ---------------------------------------------------------------------------
// geometry oracles

const SAMPLES: usize = 10_000;
const THRESHOLD: f64 = 1e-6;
/// Below this the oracle calls two shapes touching; between it and THRESHOLD
/// is the band where a dense sampler cannot decide.
const TOUCH: f64 = 1e-9;

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Minimum of a function that is unimodal around its best sample: golden
/// section over the two neighbouring sample intervals.
fn refine_min(f: impl Fn(f64) -> f64, samples: usize, lo: f64, hi: f64) -> f64 {
    let step = (hi - lo) / (samples - 1) as f64;
    let (best, _) = (0..samples).map(|i| (i, f(lo + i as f64 * step))).fold(
        (0, f64::INFINITY),
        |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
    );
    let mut a = (lo + (best as f64 - 1.0) * step).max(lo);
    let mut b = (lo + (best as f64 + 1.0) * step).min(hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f((a + b) / 2.0).min(f(lo + best as f64 * step))
}

/// Distance between two segments, found by sampling each segment densely
/// against the other and refining around the closest sample.
fn sampled_segment_distance(s1: ((f64, f64), (f64, f64)), s2: ((f64, f64), (f64, f64))) -> f64 {
    let along = |s: ((f64, f64), (f64, f64)), other: ((f64, f64), (f64, f64))| {
        refine_min(
            |t| {
                let p = (
                    s.0 .0 + t * (s.1 .0 - s.0 .0),
                    s.0 .1 + t * (s.1 .1 - s.0 .1),
                );
                point_segment_distance(p, other.0, other.1)
            },
            SAMPLES,
            0.0,
            1.0,
        )
    };
    along(s1, s2).min(along(s2, s1))
}

enum Verdict {
    Agree,
    Band,
    Disagree(String),
}

fn judge(predicate: bool, oracle_distance: f64, what: impl FnOnce() -> String) -> Verdict {
    if oracle_distance <= TOUCH {
        if predicate {
            Verdict::Agree
        } else {
            Verdict::Disagree(format!(
                "{}: oracle touches ({oracle_distance:e}), predicate says no",
                what()
            ))
        }
    } else if oracle_distance > THRESHOLD {
        if predicate {
            Verdict::Disagree(format!(
                "{}: oracle apart ({oracle_distance:e}), predicate says yes",
                what()
            ))
        } else {
            Verdict::Agree
        }
    } else {
        Verdict::Band
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(0.0..500.0), rng.random_range(0.0..500.0))
}

fn segment_cases(rng: &mut ChaCha8Rng) -> Vec<(Xy, Xy, Xy, Xy)> {
    let mut cases = Vec::new();
    while cases.len() < 1000 {
        let (a, b, c) = (random_point(rng), random_point(rng), random_point(rng));
        let d = match cases.len() % 4 {
            // free placement
            0 | 1 => random_point(rng),
            // second segment ends on the first: an exact endpoint touch
            2 => {
                let t: f64 = rng.random_range(0.0..1.0);
                (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
            }
            // ends just short of, or just past, the first segment
            _ => {
                let t: f64 = rng.random_range(0.1..0.9);
                let (nx, ny) = (-(b.1 - a.1), b.0 - a.0);
                let len = (nx * nx + ny * ny).sqrt();
                let gap = [1e-3, -1e-3, 1e-2, -1e-2][rng.random_range(0..4)];
                let side = if (c.0 - a.0) * nx + (c.1 - a.1) * ny >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
                (
                    a.0 + t * (b.0 - a.0) + side * gap * nx / len,
                    a.1 + t * (b.1 - a.1) + side * gap * ny / len,
                )
            }
        };
        if a != b && c != d {
            cases.push((a, b, c, d));
        }
    }
    cases
}

fn random_polyline(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.random_range(3..=8);
    let mut xs: Vec<f64> = (0..n - 2).map(|_| rng.random_range(1.0..499.0)).collect();
    xs.push(0.0);
    xs.push(500.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.into_iter()
        .map(|x| (x, rng.random_range(0.0..500.0)))
        .collect()
}

fn eval_polyline(pts: &[(f64, f64)], x: f64) -> f64 {
    let i = pts
        .windows(2)
        .position(|w| x <= w[1].0)
        .unwrap_or(pts.len() - 2);
    let (a, b) = (pts[i], pts[i + 1]);
    a.1 + (x - a.0) / (b.0 - a.0) * (b.1 - a.1)
}

/// Crossing count by dense sampling of the height difference. `None` when the
/// sampling cannot resolve it: a near-zero sample, or a vertex so close to the
/// other line that two sign changes could share one interval.
fn sampled_crossings(p1: &[(f64, f64)], p2: &[(f64, f64)]) -> Option<usize> {
    let h = |x: f64| eval_polyline(p1, x) - eval_polyline(p2, x);
    let step = 500.0 / (SAMPLES - 1) as f64;
    let values: Vec<f64> = (0..SAMPLES).map(|i| h(i as f64 * step)).collect();
    if values.iter().any(|v| v.abs() <= THRESHOLD) {
        return None;
    }
    let slope = p1
        .windows(2)
        .chain(p2.windows(2))
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max);
    let guard = 2.0 * slope * step;
    if p1.iter().chain(p2).any(|&(x, _)| h(x).abs() <= guard) {
        return None;
    }
    Some(
        values
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count(),
    )
}

/// Signed distance of the boundary point at angle `t` on `c1` from the boundary of `c2`.
fn boundary_gap(c1: (f64, f64, f64), c2: (f64, f64, f64), t: f64) -> f64 {
    let (x, y) = (c1.0 + c1.2 * t.cos(), c1.1 + c1.2 * t.sin());
    ((x - c2.0).powi(2) + (y - c2.1).powi(2)).sqrt() - c2.2
}

/// Whether the boundaries meet, from dense angular sampling: the gap function
/// takes both signs, or comes within TOUCH of zero.
fn sampled_circle_contact(c1: (f64, f64, f64), c2: (f64, f64, f64)) -> f64 {
    let tau = std::f64::consts::TAU;
    let min = refine_min(|t| boundary_gap(c1, c2, t), SAMPLES, 0.0, tau);
    let max = -refine_min(|t| -boundary_gap(c1, c2, t), SAMPLES, 0.0, tau);
    if min <= 0.0 && max >= 0.0 {
        0.0
    } else {
        min.abs().min(max.abs())
    }
}

fn circle_cases(rng: &mut ChaCha8Rng) -> Vec<(Xyr, Xyr)> {
    let mut cases = Vec::new();
    while cases.len() < 500 {
        // integer centres and radii so forced tangencies are exact
        let r1 = rng.random_range(10..150) as f64;
        let r2 = rng.random_range(10..150) as f64;
        let c1 = (
            rng.random_range(100..400) as f64,
            rng.random_range(100..400) as f64,
            r1,
        );
        let kind = cases.len() % 5;
        let (dx, dy) = match kind {
            0 | 1 => (
                rng.random_range(-300..300) as f64,
                rng.random_range(-300..300) as f64,
            ),
            // exact external or internal tangency along an axis
            2 => (r1 + r2, 0.0),
            3 if r1 != r2 => (0.0, (r1 - r2).abs()),
            3 => (0.0, r1 + r2),
            // near tangency, off by a small fraction either way
            _ => {
                let base = if rng.random_bool(0.5) {
                    r1 + r2
                } else {
                    (r1 - r2).abs().max(1.0)
                };
                let delta = [1e-2, -1e-2, 1e-3, -1e-3][rng.random_range(0..4)];
                (base + delta, 0.0)
            }
        };
        cases.push((c1, (c1.0 + dx, c1.1 + dy, r2)));
    }
    cases
}

fn geometry_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut band = [0usize; 3];
    let mut yes = [0usize; 3];

    for (i, (a, b, c, d)) in segment_cases(&mut rng).into_iter().enumerate() {
        let pt = |p: (f64, f64)| Point::new(p.0, p.1);
        let s1 = Segment::new(pt(a), pt(b)).unwrap();
        let s2 = Segment::new(pt(c), pt(d)).unwrap();
        let predicate = segment_intersection(&s1, &s2).is_some();
        yes[0] += usize::from(predicate);
        match judge(predicate, sampled_segment_distance((a, b), (c, d)), || {
            format!("segment case {i}")
        }) {
            Verdict::Agree => {}
            Verdict::Band => band[0] += 1,
            Verdict::Disagree(m) => failures.push(m),
        }
    }

    let mut resolved = 0;
    let mut polyline_cases = 0;
    while resolved < 300 {
        polyline_cases += 1;
        let (p1, p2) = (random_polyline(&mut rng), random_polyline(&mut rng));
        let to_poly = |v: &[(f64, f64)]| {
            Polyline::new(v.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
        };
        let (l1, l2) = (to_poly(&p1), to_poly(&p2));
        let count = count_polyline_intersections(&l1, &l2);
        if count != count_polyline_intersections(&l2, &l1) {
            failures.push(format!(
                "polyline case {polyline_cases}: count not symmetric"
            ));
        }
        match sampled_crossings(&p1, &p2) {
            None => band[1] += 1,
            Some(want) if want == count => {
                resolved += 1;
                yes[1] += count;
            }
            Some(want) => {
                resolved += 1;
                failures.push(format!(
                    "polyline case {polyline_cases}: predicate {count}, sampling {want}"
                ));
            }
        }
    }

    for (i, (c1, c2)) in circle_cases(&mut rng).into_iter().enumerate() {
        let mk = |c: (f64, f64, f64)| Circle::new(Point::new(c.0, c.1), c.2).unwrap();
        let predicate = circles_intersect(&mk(c1), &mk(c2));
        if predicate != circles_intersect(&mk(c2), &mk(c1)) {
            failures.push(format!("circle case {i}: not symmetric"));
        }
        yes[2] += usize::from(predicate);
        match judge(predicate, sampled_circle_contact(c1, c2), || {
            format!("circle case {i}")
        }) {
            Verdict::Agree => {}
            Verdict::Band => band[2] += 1,
            Verdict::Disagree(m) => failures.push(m),
        }
    }

    ensure(failures.is_empty(), || {
        format!(
            "{} disagreements: {}",
            failures.len(),
            failures[..failures.len().min(3)].join("; ")
        )
    })?;
    Ok(format!(
        "1000 segment pairs ({} meet, {} in band), 300 resolved polyline pairs of {polyline_cases} ({} crossings), \
         500 circle pairs ({} meet, {} in band); 0 disagreements",
        yes[0], band[0], yes[1], yes[2], band[2]
    ))
}

// ---------------------------------------------------------------------------
// hermetic end-to-end and directional sanity, both on the replay bundle

fn replay_setup(max_concurrency: usize) -> (RunConfig, StageBackends, Arc<CountingTransport>) {
    let cache = bundle().join("cache");
    // anything reaching this transport would be a network call in a live setup
    let counter = Arc::new(CountingTransport::new(Arc::new(ScriptedTransport::new(
        vec![],
        Some("live".into()),
    ))));
    let replay = |model: &str| {
        let cfg = BackendConfig::replay(model, cache.clone());
        (
            Some(cfg.clone()),
            Some(Arc::new(
                Backend::with_transport(cfg, counter.clone() as Arc<dyn Transport>).unwrap(),
            )),
        )
    };
    let (kc, kb) = replay("fixture-keywords");
    let (vc, vb) = replay("fixture-vlm");
    let (lc, lb) = replay("fixture-llm");
    let config = RunConfig {
        label: Some("fixture-model".into()),
        keyword_backend: kc,
        caption_backend: vc.clone(),
        answer_backend: lc,
        direct_backend: vc,
        max_concurrency,
        ..RunConfig::new(RunMode::Both)
    };
    let backends = StageBackends {
        keywords: kb,
        caption: vb.clone(),
        answer: lb,
        direct: vb,
    };
    (config, backends, counter)
}

struct BundleRun {
    table: EvalTable,
    comparisons: Vec<PairedComparison>,
    markdown: String,
    transport_calls: usize,
    elapsed: Duration,
}

fn run_bundle() -> Result<BundleRun, String> {
    let started = Instant::now();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (config, backends, counter) = replay_setup(4);
    let dataset = bundle().join("dataset");
    let run = run_dataset(&dataset, &config, &backends, out.path()).map_err(|e| e.to_string())?;
    ensure(run.meta.counts.errors == 0, || {
        format!("{} stage errors", run.meta.counts.errors)
    })?;
    let manifest = read_manifest(&dataset.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let traces = read_traces(&run.traces_path).map_err(|e| e.to_string())?;
    let scored = score(&manifest, &traces).map_err(|e| e.to_string())?;
    let table = EvalTable {
        rows: vec![aggregate(&scored, "fixture-model").map_err(|e| e.to_string())?],
    };
    let comparisons = compare_modes(&scored, "fixture-model").map_err(|e| e.to_string())?;
    let markdown = render_report(&table, &comparisons, ReportFormat::Markdown);
    Ok(BundleRun {
        table,
        comparisons,
        markdown,
        transport_calls: counter.calls(),
        elapsed: started.elapsed(),
    })
}

fn hermetic_end_to_end(run: &BundleRun) -> Outcome {
    ensure(run.transport_calls == 0, || {
        format!("{} transport calls", run.transport_calls)
    })?;
    let row = &run.table.rows[0];
    // construction: direct right on instance 0 of tasks 1-6 and 8 and both of task 7;
    // captioned right on both of tasks 1-6 and one each of tasks 7 and 8
    for t in TaskId::ALL {
        let cells = row
            .tasks
            .get(&t)
            .ok_or_else(|| format!("task {t} missing"))?;
        let want_direct = if t.get() == 7 { 100.0 } else { 50.0 };
        let want_captioned = if t.get() <= 6 { 100.0 } else { 50.0 };
        let d = cells.direct.ok_or("no direct cell")?;
        let c = cells.captioned.ok_or("no captioned cell")?;
        ensure(
            d.accuracy == want_direct && c.accuracy == want_captioned,
            || format!("task {t}: direct {} captioned {}", d.accuracy, c.accuracy),
        )?;
        ensure(
            d.counts.map(|c| c.total) == Some(2) && c.counts.map(|c| c.total) == Some(2),
            || format!("task {t}: cell totals"),
        )?;
    }
    ensure(
        row.average_direct == Some(56.25) && row.average_captioned == Some(87.5),
        || {
            format!(
                "averages {:?} / {:?}",
                row.average_direct, row.average_captioned
            )
        },
    )?;
    let t3 = row.tasks[&TaskId::new(3).unwrap()]
        .direct
        .unwrap()
        .counts
        .unwrap();
    ensure(t3.parse_failures == 1, || {
        "task 3 direct should hold one parse failure".into()
    })?;
    let golden = fs::read_to_string(bundle().join("report.md")).map_err(|e| e.to_string())?;
    ensure(run.markdown == golden, || {
        "markdown report differs from the golden file".into()
    })?;
    ensure(run.elapsed < Duration::from_secs(10), || {
        format!("took {:.2?}", run.elapsed)
    })?;
    Ok(format!(
        "direct 56.25, captioned 87.50, golden markdown matched, 0 transport calls, {:.2?}",
        run.elapsed
    ))
}

fn directional_sanity(run: &BundleRun) -> Outcome {
    let expected = |task: &str| match task {
        "7" => Direction::DirectBetter,
        "8" => Direction::Tie,
        _ => Direction::CaptionedBetter,
    };
    ensure(run.comparisons.len() == 9, || {
        format!("{} comparisons", run.comparisons.len())
    })?;
    for c in &run.comparisons {
        ensure(c.direction == expected(&c.task), || {
            format!("task {}: {:?}", c.task, c.direction)
        })?;
        ensure(
            c.b + c.c <= c.n && c.p_value > 0.0 && c.p_value <= 1.0,
            || format!("task {}: bad counts", c.task),
        )?;
    }
    let all = run.comparisons.last().unwrap();
    ensure((all.b, all.c) == (2, 7), || {
        format!("overall b={} c={}", all.b, all.c)
    })?;
    let better: Vec<&str> = run
        .comparisons
        .iter()
        .filter(|c| c.direction == Direction::CaptionedBetter)
        .map(|c| c.task.as_str())
        .collect();
    Ok(format!(
        "captioned better on {}; direct better on 7; tie on 8",
        better.join(",")
    ))
}

// ---------------------------------------------------------------------------
// McNemar

fn mcnemar_correctness() -> Outcome {
    let text = fs::read_to_string(manifest_dir().join("testdata/mcnemar_reference.csv"))
        .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (b, c): (u64, u64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let want: f64 = f[2].parse().unwrap();
        let got = mcnemar_exact(b, c);
        ensure((got - want).abs() <= 1e-15 * want, || {
            format!("({b},{c}): {got} vs {want}")
        })?;
        checked += 1;
    }
    ensure(checked == 231, || {
        format!("reference table has {checked} rows")
    })?;
    for n in 0..=30u64 {
        for b in 0..=n {
            let p = mcnemar_exact(b, n - b);
            ensure(p == mcnemar_exact(n - b, b), || {
                format!("asymmetric at ({b},{})", n - b)
            })?;
            ensure(p > 0.0 && p <= 1.0, || format!("p={p} out of range"))?;
        }
        for b in 1..=n / 2 {
            // moving one discordant pair toward balance never lowers p
            ensure(
                mcnemar_exact(b - 1, n - b + 1) <= mcnemar_exact(b, n - b),
                || format!("not monotone at n={n}, b={b}"),
            )?;
        }
    }
    Ok(format!(
        "{checked} reference values matched; symmetry and monotonicity hold for b+c <= 30"
    ))
}

// ---------------------------------------------------------------------------
// parser corpus and fuzz

fn fuzz_text(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &[
        "yes",
        "no",
        "not",
        "intersect",
        "don't",
        "three",
        "twenty",
        "21",
        "7",
        "0",
        "rows",
        "columns",
        "by",
        "x",
        "letter",
        "is",
        "'q'",
        "\"b\"",
        "I",
        "a",
        "grid",
        "4x5",
        "5,",
        "circles",
        "never",
        "maybe",
        "the",
        "answer",
    ];
    let len = rng.random_range(0..16);
    let mut s = String::new();
    for _ in 0..len {
        match rng.random_range(0..4) {
            0 => s.push_str(WORDS[rng.random_range(0..WORDS.len())]),
            1 => s.push(char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?')),
            2 => s.push_str(&rng.random_range(0..200u32).to_string()),
            _ => {
                const PUNCT: &[u8] = b" ,.;:!?*\n\t'\"";
                s.push(PUNCT[rng.random_range(0..PUNCT.len())] as char)
            }
        }
        if rng.random_bool(0.7) {
            s.push(' ');
        }
    }
    s
}

fn well_formed(o: &ParseOutcome, task: u32) -> bool {
    match o {
        ParseOutcome::Parsed { answer } => {
            answer.is_valid() && answer.shape() == TaskId::new(task).unwrap().answer_shape()
        }
        ParseOutcome::Ambiguous { candidates } => {
            candidates.len() >= 2
                && candidates
                    .iter()
                    .enumerate()
                    .all(|(i, c)| !candidates[..i].contains(c))
        }
        ParseOutcome::NoAnswerFound { .. } => true,
    }
}

fn parser_corpus() -> Outcome {
    #[derive(serde::Deserialize)]
    struct Fixture {
        task_id: u32,
        text: String,
        expected: serde_json::Value,
    }
    let text = fs::read_to_string(manifest_dir().join("testdata/parser_fixtures.jsonl"))
        .map_err(|e| e.to_string())?;
    let fixtures: Vec<Fixture> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    ensure(fixtures.len() >= 30, || {
        format!("only {} fixtures", fixtures.len())
    })?;
    for f in &fixtures {
        let got = parse_for_task(f.task_id, &f.text).map_err(|e| e.to_string())?;
        let ok = match f.expected["outcome"].as_str() {
            Some("no_answer_found") => matches!(got, ParseOutcome::NoAnswerFound { .. }),
            _ => serde_json::to_value(&got).unwrap() == f.expected,
        };
        ensure(ok, || format!("{:?}: got {got:?}", f.text))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut kinds = [0usize; 3];
    for i in 0..10_000 {
        let input = fuzz_text(&mut rng);
        let task = (i % 8) as u32 + 1;
        let outcome = std::panic::catch_unwind(|| parse_for_task(task, &input))
            .map_err(|_| format!("parser panicked on {input:?}"))?
            .map_err(|e| e.to_string())?;
        ensure(well_formed(&outcome, task), || {
            format!("{input:?} -> {outcome:?}")
        })?;
        kinds[match outcome {
            ParseOutcome::Parsed { .. } => 0,
            ParseOutcome::NoAnswerFound { .. } => 1,
            ParseOutcome::Ambiguous { .. } => 2,
        }] += 1;
    }
    ensure(kinds.iter().sum::<usize>() == 10_000, || {
        "not every input produced an outcome".into()
    })?;
    ensure(kinds.iter().all(|&k| k > 0), || {
        format!("fuzz never reached every outcome kind: {kinds:?}")
    })?;
    Ok(format!(
        "{} fixtures passed; 10000 fuzz inputs all classified (parsed {}, no answer {}, ambiguous {})",
        fixtures.len(),
        kinds[0],
        kinds[1],
        kinds[2]
    ))
}

// ---------------------------------------------------------------------------

fn report(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let outcome = f();
    let elapsed = started.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(limit)) if elapsed > limit => {
            Err(format!("took {elapsed:.2?}, limit {limit:.0?}"))
        }
        (o, _) => o,
    };
    let bound = limit
        .map(|l| format!(", limit {l:.0?}"))
        .unwrap_or_default();
    match &outcome {
        Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}{bound}]"),
        Err(why) => println!("FAIL  {name}: {why} [{elapsed:.2?}{bound}]"),
    }
    outcome.is_ok()
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report("aggregation fidelity", Some(secs(1)), aggregation_fidelity);

    let generated = generate_full();
    match &generated {
        Ok(ds) => {
            ok &= report("oracle closure", Some(secs(60)), || oracle_closure(ds));
            ok &= report("determinism", None, || determinism(ds));
        }
        Err(e) => {
            for name in ["oracle closure", "determinism"] {
                println!("FAIL  {name}: dataset generation failed: {e}");
            }
            ok = false;
        }
    }

    ok &= report("geometry oracles", Some(secs(30)), geometry_oracles);

    let bundle_run = run_bundle();
    match &bundle_run {
        Ok(run) => {
            ok &= report("hermetic end-to-end", Some(secs(10)), || {
                hermetic_end_to_end(run)
            });
            ok &= report("directional sanity", None, || directional_sanity(run));
        }
        Err(e) => {
            for name in ["hermetic end-to-end", "directional sanity"] {
                println!("FAIL  {name}: replay run failed: {e}");
            }
            ok = false;
        }
    }

    ok &= report("mcnemar correctness", None, mcnemar_correctness);
    ok &= report("parser corpus", None, parser_corpus);

    if !ok {
        std::process::exit(1);
    }
}
