//! Task 3 (nested squares), Task 4 (interlocking rings), Task 8 (circle pair).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    quantize, AnswerValue, GenContext, Generated, Params, TaskError, MAX_ATTEMPTS, PALETTE,
};
use crate::geometry::{
    circles_intersect, ring_overlap_count, squares_strictly_nested, Circle, Point, Square,
};
use crate::render::{SceneElement, Shape, Style};

pub(crate) const SQUARE_CLEARANCE: f64 = 8.0;
pub(crate) const SQUARE_WIDTH: f64 = 4.0;
pub(crate) const RING_WIDTH: f64 = 4.0;
pub(crate) const RING_MARGIN: f64 = 20.0;
pub(crate) const CIRCLE_WIDTH: f64 = 4.0;

const CANVAS_MARGIN: f64 = 20.0;
const MIN_SQUARE_HALF: f64 = 12.0;

pub(crate) fn nested_squares(
    ctx: &GenContext,
    rng: &mut ChaCha8Rng,
) -> Result<Generated, TaskError> {
    let n = ctx.ranges.nested_squares.scheduled(ctx.index) as usize;
    let color = *PALETTE.choose(rng).expect("palette is non-empty");
    let mid = ctx.size / 2.0;
    let max_outer = mid - CANVAS_MARGIN - SQUARE_WIDTH;
    for _ in 0..MAX_ATTEMPTS {
        let outer_half = quantize(rng.random_range(0.6 * max_outer..max_outer));
        let slack = max_outer - outer_half;
        let center = Point::new(
            quantize(mid + rng.random_range(-slack..=slack)),
            quantize(mid + rng.random_range(-slack..=slack)),
        );
        let mut squares =
            vec![Square::new(center, outer_half, 0.0).map_err(|e| ctx.layout(e.to_string()))?];
        while squares.len() < n {
            let prev = squares[squares.len() - 1];
            let half = quantize(prev.half_size() * rng.random_range(0.55..0.8));
            // two extra units keep the recheck on rounded coordinates safe
            let room = prev.half_size() - half - SQUARE_CLEARANCE - 2.0;
            if half < MIN_SQUARE_HALF || room < 0.0 {
                break;
            }
            let c = Point::new(
                quantize(prev.center().x + rng.random_range(-room..=room)),
                quantize(prev.center().y + rng.random_range(-room..=room)),
            );
            squares.push(Square::new(c, half, 0.0).map_err(|e| ctx.layout(e.to_string()))?);
        }
        if squares.len() != n || !squares_strictly_nested(&squares, SQUARE_CLEARANCE) {
            continue;
        }
        let mut scene = ctx.blank_scene()?;
        for sq in &squares {
            scene.push(
                SceneElement::new(Shape::Square(*sq), Style::stroke(color, SQUARE_WIDTH))
                    .tagged("square"),
            )?;
        }
        let mut params = Params::new();
        params.insert("squares".into(), json!(n));
        params.insert("clearance".into(), json!(SQUARE_CLEARANCE));
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::Count(n as u32),
            params,
        });
    }
    Err(ctx.exhausted())
}

/// Ring counts per row: `ceil(n/2)` on top, the rest below.
pub fn ring_rows(n: usize) -> (usize, usize) {
    let top = n.div_ceil(2);
    (top, n - top)
}

/// Intersecting pairs in a valid layout: each lower ring meets its two upper neighbours.
pub fn expected_ring_overlaps(n: usize) -> usize {
    let (top, bottom) = ring_rows(n);
    (0..bottom).map(|i| 1 + usize::from(i + 1 < top)).sum()
}

/// Ring centers: upper row at `spacing` intervals, lower row shifted by half a spacing.
pub fn ring_layout(n: usize, origin: Point, spacing: f64, drop: f64) -> Vec<Point> {
    let (top, bottom) = ring_rows(n);
    let upper = (0..top).map(|i| Point::new(origin.x + i as f64 * spacing, origin.y));
    let lower =
        (0..bottom).map(|i| Point::new(origin.x + (i as f64 + 0.5) * spacing, origin.y + drop));
    upper.chain(lower).collect()
}

/// Checks the interlocking pattern: diagonal neighbours meet, nothing else does,
/// and every pair sits at least two stroke widths from tangency.
pub fn rings_valid(rings: &[Circle], stroke: f64) -> bool {
    let n = rings.len();
    let (top, _) = ring_rows(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&rings[i], &rings[j]);
            let should_meet = i < top && j >= top && {
                let lower = j - top;
                i == lower || i == lower + 1
            };
            if circles_intersect(a, b) != should_meet {
                return false;
            }
            let d = a.center().distance(&b.center());
            let sum = a.radius() + b.radius();
            let diff = (a.radius() - b.radius()).abs();
            if (d - sum).abs() < 2.0 * stroke || (d - diff).abs() < 2.0 * stroke {
                return false;
            }
        }
    }
    ring_overlap_count(rings) == expected_ring_overlaps(n)
}

pub(crate) fn olympic_rings(
    ctx: &GenContext,
    rng: &mut ChaCha8Rng,
) -> Result<Generated, TaskError> {
    let n = ctx.ranges.rings.scheduled(ctx.index) as usize;
    let (top, bottom) = ring_rows(n);
    let mut colors = PALETTE.to_vec();
    colors.shuffle(rng);
    let lo = RING_MARGIN + RING_WIDTH / 2.0;
    let hi = ctx.size - RING_MARGIN - RING_WIDTH / 2.0;
    for _ in 0..MAX_ATTEMPTS {
        let r = quantize(rng.random_range(30.0..70.0));
        let spacing = quantize(r * rng.random_range(2.2..2.5));
        let drop = if bottom > 0 {
            quantize(r * rng.random_range(0.7..1.1))
        } else {
            0.0
        };
        // with an even count the shifted lower row sticks out half a spacing
        let extra = if bottom == top { 0.5 } else { 0.0 };
        let width = ((top - 1) as f64 + extra) * spacing + 2.0 * r;
        let height = drop + 2.0 * r;
        if width > hi - lo || height > hi - lo {
            continue;
        }
        let origin = Point::new(
            quantize(rng.random_range(lo + r..=hi - width + r)),
            quantize(rng.random_range(lo + r..=hi - height + r)),
        );
        let rings: Vec<Circle> = ring_layout(n, origin, spacing, drop)
            .into_iter()
            .map(|c| Circle::new(Point::new(quantize(c.x), quantize(c.y)), r))
            .collect::<Result<_, _>>()
            .map_err(|e| ctx.layout(e.to_string()))?;
        if !rings_valid(&rings, RING_WIDTH) {
            continue;
        }
        let mut scene = ctx.blank_scene()?;
        for (i, ring) in rings.iter().enumerate() {
            let style = Style::stroke(colors[i % colors.len()], RING_WIDTH);
            scene.push(SceneElement::new(Shape::Circle(*ring), style).tagged("ring"))?;
        }
        let mut params = Params::new();
        params.insert("rings".into(), json!(n));
        params.insert("radius".into(), json!(r));
        params.insert("overlapping_pairs".into(), json!(expected_ring_overlaps(n)));
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::Count(n as u32),
            params,
        });
    }
    Err(ctx.exhausted())
}

/// `Some(meets)` when the pair is at least two stroke widths from both tangencies.
pub(crate) fn circle_pair_verdict(a: &Circle, b: &Circle, stroke: f64) -> Option<bool> {
    let d = a.center().distance(&b.center());
    let sum = a.radius() + b.radius();
    let diff = (a.radius() - b.radius()).abs();
    let clear = (d - sum).abs() >= 2.0 * stroke && (d - diff).abs() >= 2.0 * stroke;
    clear.then(|| circles_intersect(a, b))
}

pub(crate) fn circle_pair(ctx: &GenContext, rng: &mut ChaCha8Rng) -> Result<Generated, TaskError> {
    let want = ctx.index.is_multiple_of(2);
    let colors: Vec<_> = PALETTE.choose_multiple(rng, 2).copied().collect();
    let edge = CANVAS_MARGIN + CIRCLE_WIDTH;
    for _ in 0..MAX_ATTEMPTS {
        let circle = |rng: &mut ChaCha8Rng| {
            let r = quantize(rng.random_range(40.0..140.0));
            let c = Point::new(
                quantize(rng.random_range(edge + r..ctx.size - edge - r)),
                quantize(rng.random_range(edge + r..ctx.size - edge - r)),
            );
            Circle::new(c, r)
        };
        let (Ok(a), Ok(b)) = (circle(rng), circle(rng)) else {
            continue;
        };
        if circle_pair_verdict(&a, &b, CIRCLE_WIDTH) != Some(want) {
            continue;
        }
        let mut scene = ctx.blank_scene()?;
        for (c, color) in [(a, colors[0]), (b, colors[1])] {
            scene.push(
                SceneElement::new(Shape::Circle(c), Style::stroke(color, CIRCLE_WIDTH))
                    .tagged("circle"),
            )?;
        }
        let mut params = Params::new();
        params.insert("intersect".into(), json!(want));
        params.insert(
            "center_distance".into(),
            json!(quantize(a.center().distance(&b.center()))),
        );
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::YesNo(want),
            params,
        });
    }
    Err(ctx.exhausted())
}
