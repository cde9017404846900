use std::io::Cursor;

use tiny_skia::{
    Color, FillRule, LineCap, LineJoin, Paint, Path, PathBuilder, Pixmap, Rect as SkRect, Stroke,
    Transform,
};

use super::{font, RenderError, Rgb, Scene, SceneElement, Shape};

/// Decoded 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        Rgb(self.data[i], self.data[i + 1], self.data[i + 2])
    }
}

fn paint_for(color: Rgb) -> Paint<'static> {
    let mut paint = Paint::default();
    paint.set_color_rgba8(color.0, color.1, color.2, 255);
    paint.anti_alias = true;
    paint
}

fn polygon(points: &[(f64, f64)], close: bool) -> Option<Path> {
    let mut pb = PathBuilder::new();
    let (first, rest) = points.split_first()?;
    pb.move_to(first.0 as f32, first.1 as f32);
    for p in rest {
        pb.line_to(p.0 as f32, p.1 as f32);
    }
    if close {
        pb.close();
    }
    pb.finish()
}

fn glyph_path(text: &str, origin_x: f64, origin_y: f64, font_size: f64) -> Option<Path> {
    let cell = font::CELL_RATIO * font_size;
    let advance = font::advance(font_size);
    let mut pb = PathBuilder::new();
    for (i, ch) in text.chars().enumerate() {
        let bits = font::glyph(ch);
        let x0 = origin_x + i as f64 * advance + font::INK_OFFSET_CELLS * cell;
        let y0 = origin_y + font::INK_OFFSET_CELLS * cell;
        for (col, row) in font::ink_cells(&bits) {
            let rect = SkRect::from_xywh(
                (x0 + col as f64 * cell) as f32,
                (y0 + row as f64 * cell) as f32,
                cell as f32,
                cell as f32,
            )?;
            pb.push_rect(rect);
        }
    }
    pb.finish()
}

fn draw_element(pixmap: &mut Pixmap, element: &SceneElement) -> Result<(), RenderError> {
    let style = &element.style;
    let stroke = Stroke {
        width: style.stroke_width as f32,
        line_cap: LineCap::Round,
        line_join: LineJoin::Round,
        ..Stroke::default()
    };
    let degenerate = || RenderError::Raster(format!("degenerate geometry in {:?}", element.tag));
    let (path, closed) = match &element.shape {
        Shape::Polyline(points) => {
            let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
            (polygon(&pts, false).ok_or_else(degenerate)?, false)
        }
        Shape::Circle(c) => {
            let p = c.center();
            let path = PathBuilder::from_circle(p.x as f32, p.y as f32, c.radius() as f32)
                .ok_or_else(degenerate)?;
            (path, true)
        }
        Shape::Square(s) => {
            let pts: Vec<(f64, f64)> = s.corners().iter().map(|p| (p.x, p.y)).collect();
            (polygon(&pts, true).ok_or_else(degenerate)?, true)
        }
        Shape::AnnotationEllipse { center, rx, ry } => {
            let oval = SkRect::from_xywh(
                (center.x - rx) as f32,
                (center.y - ry) as f32,
                (2.0 * rx) as f32,
                (2.0 * ry) as f32,
            )
            .ok_or_else(degenerate)?;
            (PathBuilder::from_oval(oval).ok_or_else(degenerate)?, true)
        }
        Shape::Glyphs {
            text,
            origin,
            font_size,
        } => {
            // Glyph runs are filled with the stroke color and never outlined.
            if let Some(path) = glyph_path(text, origin.x, origin.y, *font_size) {
                pixmap.fill_path(
                    &path,
                    &paint_for(style.stroke),
                    FillRule::Winding,
                    Transform::identity(),
                    None,
                );
            }
            return Ok(());
        }
    };
    if let (Some(fill), true) = (style.fill, closed) {
        pixmap.fill_path(
            &path,
            &paint_for(fill),
            FillRule::Winding,
            Transform::identity(),
            None,
        );
    }
    pixmap.stroke_path(
        &path,
        &paint_for(style.stroke),
        &stroke,
        Transform::identity(),
        None,
    );
    Ok(())
}

fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| RenderError::Encode(e.to_string()))?;
        writer
            .write_image_data(rgb)
            .map_err(|e| RenderError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Renders the scene to an 8-bit RGB PNG of exactly `width x height` pixels.
pub fn rasterize(scene: &Scene) -> Result<Vec<u8>, RenderError> {
    let mut pixmap = Pixmap::new(scene.width, scene.height).ok_or_else(|| {
        RenderError::Raster(format!(
            "cannot allocate a {}x{} pixmap",
            scene.width, scene.height
        ))
    })?;
    let bg = scene.background;
    pixmap.fill(Color::from_rgba8(bg.0, bg.1, bg.2, 255));
    for element in &scene.elements {
        draw_element(&mut pixmap, element)?;
    }
    let mut rgb = Vec::with_capacity(pixmap.pixels().len() * 3);
    for px in pixmap.pixels() {
        let c = px.demultiply();
        rgb.extend_from_slice(&[c.red(), c.green(), c.blue()]);
    }
    encode_png(scene.width, scene.height, &rgb)
}

/// Decodes any 8-bit PNG into RGB, dropping alpha.
pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, RenderError> {
    let err = |e: png::DecodingError| RenderError::Decode(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RenderError::Decode("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    let buf = &buf[..info.buffer_size()];
    let data = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => {
            return Err(RenderError::Decode(format!(
                "unsupported color type {other:?}"
            )))
        }
    };
    Ok(RgbImage {
        width: info.width,
        height: info.height,
        data,
    })
}
