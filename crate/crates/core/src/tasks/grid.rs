//! Task 7: count rows and columns of a ruled grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{quantize, AnswerValue, GenContext, Generated, Params, TaskError, MAX_ATTEMPTS};
use crate::geometry::Point;
use crate::render::{Rgb, SceneElement, Shape, Style};

pub(crate) const GRID_LINE_WIDTH: f64 = 3.0;
const GRID_MARGIN: f64 = 40.0;

pub(crate) fn grid(ctx: &GenContext, rng: &mut ChaCha8Rng) -> Result<Generated, TaskError> {
    let r = ctx.ranges;
    let rows = rng.random_range(r.grid_rows.min..=r.grid_rows.max);
    let cols = rng.random_range(r.grid_cols.min..=r.grid_cols.max);
    let avail = ctx.size - 2.0 * GRID_MARGIN;
    for _ in 0..MAX_ATTEMPTS {
        let cell_w = quantize(rng.random_range(0.6..=1.0) * avail / f64::from(cols));
        let cell_h = quantize(rng.random_range(0.6..=1.0) * avail / f64::from(rows));
        // cells must stay wider than a few stroke widths to read as cells
        if cell_w < 4.0 * GRID_LINE_WIDTH || cell_h < 4.0 * GRID_LINE_WIDTH {
            continue;
        }
        let width = cell_w * f64::from(cols);
        let height = cell_h * f64::from(rows);
        let x0 = quantize(GRID_MARGIN + rng.random_range(0.0..=(avail - width).max(0.0)));
        let y0 = quantize(GRID_MARGIN + rng.random_range(0.0..=(avail - height).max(0.0)));
        let (x1, y1) = (quantize(x0 + width), quantize(y0 + height));

        let mut scene = ctx.blank_scene()?;
        let style = Style::stroke(Rgb::BLACK, GRID_LINE_WIDTH);
        for i in 0..=rows {
            let y = quantize(y0 + f64::from(i) * cell_h);
            let line = vec![Point::new(x0, y), Point::new(x1, y)];
            scene.push(SceneElement::new(Shape::Polyline(line), style).tagged("grid-line"))?;
        }
        for j in 0..=cols {
            let x = quantize(x0 + f64::from(j) * cell_w);
            let line = vec![Point::new(x, y0), Point::new(x, y1)];
            scene.push(SceneElement::new(Shape::Polyline(line), style).tagged("grid-line"))?;
        }
        let mut params = Params::new();
        params.insert("rows".into(), json!(rows));
        params.insert("cols".into(), json!(cols));
        params.insert("cell".into(), json!([cell_w, cell_h]));
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::GridDims { rows, cols },
            params,
        });
    }
    Err(ctx.exhausted())
}
