//! Recomputes ground truth from a scene alone, using the tags each generator
//! attaches to its elements. Used to verify stored SVGs against the manifest.

use std::collections::BTreeMap;

use super::{AnswerValue, TaskError, TaskId};
use crate::geometry::{
    circles_intersect, count_polyline_intersections, count_terminal_paths, segment_intersection,
    squares_strictly_nested, Circle, GridNode, Point, Polyline, Segment, Square, StationGraph,
    TransitPath,
};
use crate::render::{glyph_box, Scene, SceneElement, Shape};

/// Coordinates closer than this are the same grid position.
const SNAP: f64 = 0.01;

fn recover(msg: impl Into<String>) -> TaskError {
    TaskError::Recover(msg.into())
}

fn polyline_points(e: &SceneElement) -> Result<&[Point], TaskError> {
    match &e.shape {
        Shape::Polyline(p) => Ok(p),
        other => Err(recover(format!("expected a polyline, found {other:?}"))),
    }
}

fn circle(e: &SceneElement) -> Result<Circle, TaskError> {
    match &e.shape {
        Shape::Circle(c) => Ok(*c),
        other => Err(recover(format!("expected a circle, found {other:?}"))),
    }
}

fn exactly<T>(items: Vec<T>, n: usize, what: &str) -> Result<Vec<T>, TaskError> {
    if items.len() == n {
        Ok(items)
    } else {
        Err(recover(format!(
            "expected {n} {what}, found {}",
            items.len()
        )))
    }
}

fn single<'a>(scene: &'a Scene, tag: &'a str) -> Result<&'a SceneElement, TaskError> {
    let found: Vec<_> = scene.tagged(tag).collect();
    Ok(exactly(found, 1, tag)?[0])
}

/// Answer implied by `scene` for `task`.
pub fn recompute(task: TaskId, scene: &Scene) -> Result<AnswerValue, TaskError> {
    match task.get() {
        1 => line_crossings(scene),
        2 => segments_cross(scene),
        3 => square_count(scene),
        4 => Ok(AnswerValue::Count(scene.tagged("ring").count() as u32)),
        5 => circled_letter(scene),
        6 => subway_count(scene),
        7 => grid_dims(scene),
        _ => circles_meet(scene),
    }
}

fn line_crossings(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let line = |tag| -> Result<Polyline, TaskError> {
        let pts = polyline_points(single(scene, tag)?)?;
        Polyline::new(pts.to_vec()).map_err(|e| recover(e.to_string()))
    };
    let n = count_polyline_intersections(&line("blue-line")?, &line("red-line")?);
    Ok(AnswerValue::Count(n as u32))
}

fn segments_cross(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let segs = scene
        .tagged("segment")
        .map(|e| match polyline_points(e)? {
            [a, b] => Segment::new(*a, *b).map_err(|e| recover(e.to_string())),
            _ => Err(recover("segment with more than two points")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let segs = exactly(segs, 2, "segments")?;
    Ok(AnswerValue::YesNo(
        segment_intersection(&segs[0], &segs[1]).is_some(),
    ))
}

fn square_count(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let mut squares: Vec<Square> = scene
        .tagged("square")
        .map(|e| match &e.shape {
            Shape::Square(s) => Ok(*s),
            other => Err(recover(format!("expected a square, found {other:?}"))),
        })
        .collect::<Result<_, _>>()?;
    squares.sort_by(|a, b| b.half_size().total_cmp(&a.half_size()));
    if squares.is_empty() || !squares_strictly_nested(&squares, 0.0) {
        return Err(recover("squares missing or not nested"));
    }
    Ok(AnswerValue::Count(squares.len() as u32))
}

fn circled_letter(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let Shape::Glyphs {
        text,
        origin,
        font_size,
    } = &single(scene, "word")?.shape
    else {
        return Err(recover("word is not a glyph run"));
    };
    let Shape::AnnotationEllipse { center, .. } = &single(scene, "marker")?.shape else {
        return Err(recover("marker is not an ellipse"));
    };
    for (i, ch) in text.chars().enumerate() {
        if glyph_box(text, i, *origin, *font_size)?.contains(center) {
            return Ok(AnswerValue::Letter(ch));
        }
    }
    Err(recover("marker is not centered on any letter"))
}

/// Sorted distinct values, merging those within `SNAP`.
fn axis(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < SNAP);
    v
}

fn snap(axis: &[f64], v: f64) -> Result<u32, TaskError> {
    axis.iter()
        .position(|a| (a - v).abs() < SNAP)
        .map(|i| i as u32)
        .ok_or_else(|| recover(format!("coordinate {v} is off the station grid")))
}

fn subway_count(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let dots = scene
        .tagged("station")
        .map(circle)
        .collect::<Result<Vec<_>, _>>()?;
    let xs = axis(dots.iter().map(|c| c.center().x));
    let ys = axis(dots.iter().map(|c| c.center().y));
    if xs.len() * ys.len() != dots.len() {
        return Err(recover("station dots do not form a full lattice"));
    }
    let node = |p: Point| -> Result<GridNode, TaskError> {
        Ok(GridNode::new(snap(&xs, p.x)?, snap(&ys, p.y)?))
    };

    let terminals = scene
        .tagged("terminal")
        .map(|e| circle(e).map(|c| c.center()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut stations = BTreeMap::new();
    for e in scene.tagged("label") {
        let Shape::Glyphs { text, .. } = &e.shape else {
            return Err(recover("label is not a glyph run"));
        };
        let label = text.chars().next().ok_or_else(|| recover("empty label"))?;
        let at = e.bounds().center();
        let nearest = terminals
            .iter()
            .min_by(|a, b| a.distance(&at).total_cmp(&b.distance(&at)))
            .ok_or_else(|| recover("labels without terminals"))?;
        if stations.insert(label, node(*nearest)?).is_some() {
            return Err(recover(format!("label {label} appears twice")));
        }
    }
    let paths = scene
        .tagged("route")
        .map(|e| {
            let nodes = polyline_points(e)?
                .iter()
                .map(|p| node(*p))
                .collect::<Result<_, _>>()?;
            Ok(TransitPath {
                color: e.style.stroke.to_array(),
                nodes,
            })
        })
        .collect::<Result<Vec<_>, TaskError>>()?;
    let graph = StationGraph::new(
        xs.len() as u32,
        ys.len() as u32,
        stations,
        paths,
        ('A', 'B'),
    )
    .map_err(|e| recover(e.to_string()))?;
    Ok(AnswerValue::Count(count_terminal_paths(&graph) as u32))
}

fn grid_dims(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let (mut horizontal, mut vertical) = (Vec::new(), Vec::new());
    for e in scene.tagged("grid-line") {
        match polyline_points(e)? {
            [a, b] if (a.y - b.y).abs() < SNAP => horizontal.push(a.y),
            [a, b] if (a.x - b.x).abs() < SNAP => vertical.push(a.x),
            _ => return Err(recover("grid line is neither horizontal nor vertical")),
        }
    }
    let rows = axis(horizontal.into_iter()).len();
    let cols = axis(vertical.into_iter()).len();
    if rows < 2 || cols < 2 {
        return Err(recover("grid needs at least two lines each way"));
    }
    Ok(AnswerValue::GridDims {
        rows: rows as u32 - 1,
        cols: cols as u32 - 1,
    })
}

fn circles_meet(scene: &Scene) -> Result<AnswerValue, TaskError> {
    let cs = scene
        .tagged("circle")
        .map(circle)
        .collect::<Result<Vec<_>, _>>()?;
    let cs = exactly(cs, 2, "circles")?;
    Ok(AnswerValue::YesNo(circles_intersect(&cs[0], &cs[1])))
}
