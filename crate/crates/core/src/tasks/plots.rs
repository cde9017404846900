//! Task 1 (two line plots) and Task 2 (two segments).

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    quantize, AnswerValue, GenContext, Generated, Params, TaskError, BLUE, MAX_ATTEMPTS, PALETTE,
    RED,
};
use crate::geometry::{
    polyline_intersection_points, segment_intersection, Point, Polyline, Segment,
};
use crate::render::{Scene, SceneElement, Shape, Style};

pub(crate) const PLOT_SAMPLES: usize = 4;
pub(crate) const PLOT_MARGIN: f64 = 40.0;
pub(crate) const LINE_WIDTH: f64 = 4.0;
/// Crossings keep this distance from each other and from polyline vertices.
pub(crate) const CROSSING_CLEARANCE: f64 = 10.0;
/// Vertical separation required when the plots must not cross.
pub(crate) const DISJOINT_GAP: f64 = 30.0;
/// Segment crossings stay this far from endpoints; disjoint segments keep this gap.
pub(crate) const SEGMENT_MARGIN: f64 = 10.0;
pub(crate) const MIN_SEGMENT_LENGTH: f64 = 80.0;

pub(crate) fn plot_scene(
    ctx: &GenContext,
    blue: &Polyline,
    red: &Polyline,
) -> Result<Scene, TaskError> {
    let mut scene = ctx.blank_scene()?;
    for (line, color, tag) in [(blue, BLUE, "blue-line"), (red, RED, "red-line")] {
        scene.push(
            SceneElement::new(
                Shape::Polyline(line.points().to_vec()),
                Style::stroke(color, LINE_WIDTH),
            )
            .tagged(tag),
        )?;
    }
    Ok(scene)
}

/// Whether a sampled pair of plots meets the layout constraints for `target` crossings.
pub(crate) fn plots_acceptable(blue: &Polyline, red: &Polyline, target: usize) -> bool {
    let crossings = polyline_intersection_points(blue, red);
    if crossings.len() != target {
        return false;
    }
    if target == 0 {
        // Shared sample xs: the gap between two non-crossing piecewise-linear
        // graphs is smallest at a sample.
        return blue
            .points()
            .iter()
            .zip(red.points())
            .all(|(b, r)| (b.y - r.y).abs() >= DISJOINT_GAP);
    }
    let vertices: Vec<&Point> = blue.points().iter().chain(red.points()).collect();
    crossings.iter().enumerate().all(|(i, c)| {
        vertices.iter().all(|v| v.distance(c) >= CROSSING_CLEARANCE)
            && crossings[i + 1..]
                .iter()
                .all(|o| o.distance(c) >= CROSSING_CLEARANCE)
    })
}

pub(crate) fn line_intersections(
    ctx: &GenContext,
    rng: &mut ChaCha8Rng,
) -> Result<Generated, TaskError> {
    let target = ctx.ranges.line_crossings.scheduled(ctx.index) as usize;
    let span = ctx.size - 2.0 * PLOT_MARGIN;
    let xs: Vec<f64> = (0..PLOT_SAMPLES)
        .map(|i| quantize(PLOT_MARGIN + span * i as f64 / (PLOT_SAMPLES - 1) as f64))
        .collect();
    let sample = |rng: &mut ChaCha8Rng| -> Result<Polyline, TaskError> {
        let pts = xs
            .iter()
            .map(|&x| {
                Point::new(
                    x,
                    quantize(rng.random_range(PLOT_MARGIN..ctx.size - PLOT_MARGIN)),
                )
            })
            .collect();
        Polyline::new(pts).map_err(|e| ctx.layout(e.to_string()))
    };
    for _ in 0..MAX_ATTEMPTS {
        let blue = sample(rng)?;
        let red = sample(rng)?;
        if !plots_acceptable(&blue, &red, target) {
            continue;
        }
        let mut params = Params::new();
        params.insert("target_crossings".into(), json!(target));
        params.insert("samples".into(), json!(PLOT_SAMPLES));
        return Ok(Generated {
            scene: plot_scene(ctx, &blue, &red)?,
            ground_truth: AnswerValue::Count(target as u32),
            params,
        });
    }
    Err(ctx.exhausted())
}

/// Classifies a candidate pair: `Some(true)` crossing with margin, `Some(false)`
/// disjoint with margin, `None` too close to call.
pub(crate) fn segment_pair_verdict(s1: &Segment, s2: &Segment) -> Option<bool> {
    match segment_intersection(s1, s2) {
        Some(p) => {
            let ends = [s1.a(), s1.b(), s2.a(), s2.b()];
            ends.iter()
                .all(|e| e.distance(&p) >= SEGMENT_MARGIN)
                .then_some(true)
        }
        None => (s1.distance_to_segment(s2) >= SEGMENT_MARGIN).then_some(false),
    }
}

pub(crate) fn segment_pair(ctx: &GenContext, rng: &mut ChaCha8Rng) -> Result<Generated, TaskError> {
    let want = ctx.index.is_multiple_of(2);
    let colors: Vec<_> = PALETTE.choose_multiple(rng, 2).copied().collect();
    let lo = PLOT_MARGIN;
    let hi = ctx.size - PLOT_MARGIN;
    let point = |rng: &mut ChaCha8Rng| {
        Point::new(
            quantize(rng.random_range(lo..hi)),
            quantize(rng.random_range(lo..hi)),
        )
    };
    for _ in 0..MAX_ATTEMPTS {
        let (a, b, c, d) = (point(rng), point(rng), point(rng), point(rng));
        let (Ok(s1), Ok(s2)) = (Segment::new(a, b), Segment::new(c, d)) else {
            continue;
        };
        if s1.length() < MIN_SEGMENT_LENGTH || s2.length() < MIN_SEGMENT_LENGTH {
            continue;
        }
        if segment_pair_verdict(&s1, &s2) != Some(want) {
            continue;
        }
        let mut scene = ctx.blank_scene()?;
        for (s, color) in [(s1, colors[0]), (s2, colors[1])] {
            scene.push(
                SceneElement::new(
                    Shape::Polyline(vec![s.a(), s.b()]),
                    Style::stroke(color, LINE_WIDTH),
                )
                .tagged("segment"),
            )?;
        }
        let mut params = Params::new();
        params.insert("intersect".into(), json!(want));
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::YesNo(want),
            params,
        });
    }
    Err(ctx.exhausted())
}
