//! Scene description, SVG serialization and rasterization.

pub mod font;
mod raster;
mod svg;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Circle, Point, Square};

pub use raster::{decode_png, rasterize, RgbImage};
pub use svg::{parse_svg, scene_to_svg};

pub const MIN_CANVAS: u32 = 256;
pub const MAX_CANVAS: u32 = 2048;
pub const DEFAULT_CANVAS: u32 = 512;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("glyph index {index} out of range for text of length {len}")]
    GlyphIndex { index: usize, len: usize },
    #[error("rasterization failed: {0}")]
    Raster(String),
    #[error("PNG encoding failed: {0}")]
    Encode(String),
    #[error("PNG decoding failed: {0}")]
    Decode(String),
    #[error("malformed SVG: {0}")]
    Svg(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const WHITE: Rgb = Rgb(255, 255, 255);
    pub const BLACK: Rgb = Rgb(0, 0, 0);

    /// Rec. 601 luma in 0..=255.
    pub fn luminance(&self) -> f64 {
        0.299 * f64::from(self.0) + 0.587 * f64::from(self.1) + 0.114 * f64::from(self.2)
    }

    pub fn to_array(self) -> [u8; 3] {
        [self.0, self.1, self.2]
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rgb({},{},{})", self.0, self.1, self.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub stroke: Rgb,
    pub stroke_width: f64,
    pub fill: Option<Rgb>,
}

impl Style {
    pub fn stroke(color: Rgb, width: f64) -> Self {
        Self {
            stroke: color,
            stroke_width: width,
            fill: None,
        }
    }

    pub fn with_fill(mut self, fill: Rgb) -> Self {
        self.fill = Some(fill);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Open polyline; unlike [`crate::geometry::Polyline`] it may run in any direction.
    Polyline(Vec<Point>),
    Circle(Circle),
    Square(Square),
    /// Text drawn with the embedded font; `origin` is the top-left of the line box.
    Glyphs {
        text: String,
        origin: Point,
        font_size: f64,
    },
    AnnotationEllipse {
        center: Point,
        rx: f64,
        ry: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneElement {
    pub shape: Shape,
    pub style: Style,
    /// Semantic label, serialized as the SVG `class` attribute.
    pub tag: Option<String>,
}

impl SceneElement {
    pub fn new(shape: Shape, style: Style) -> Self {
        Self {
            shape,
            style,
            tag: None,
        }
    }

    pub fn tagged(mut self, tag: &str) -> Self {
        self.tag = Some(tag.to_string());
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tag.as_deref() == Some(tag)
    }

    /// Axis-aligned extent of the geometry, ignoring stroke width.
    pub fn bounds(&self) -> Rect {
        match &self.shape {
            Shape::Polyline(points) => Rect::enclosing(points),
            Shape::Circle(c) => {
                let (p, r) = (c.center(), c.radius());
                Rect::new(p.x - r, p.y - r, 2.0 * r, 2.0 * r)
            }
            Shape::Square(s) => Rect::enclosing(&s.corners()),
            Shape::Glyphs {
                text,
                origin,
                font_size,
            } => Rect::new(
                origin.x,
                origin.y,
                text.chars().count() as f64 * font::advance(*font_size),
                font::line_height(*font_size),
            ),
            Shape::AnnotationEllipse { center, rx, ry } => {
                Rect::new(center.x - rx, center.y - ry, 2.0 * rx, 2.0 * ry)
            }
        }
    }

    fn validate(&self, width: f64, height: f64) -> Result<(), RenderError> {
        let invalid = |msg: String| Err(RenderError::InvalidScene(msg));
        let sw = self.style.stroke_width;
        if !(sw > 0.0 && sw.is_finite()) {
            return invalid(format!("stroke width must be positive, got {sw}"));
        }
        match &self.shape {
            Shape::Polyline(points) if points.len() < 2 => {
                return invalid("polyline needs at least 2 points".into())
            }
            Shape::Polyline(points) if points.iter().any(|p| !p.is_finite()) => {
                return invalid("polyline has a non-finite point".into())
            }
            Shape::Glyphs {
                text,
                font_size,
                origin,
            } => {
                if text.is_empty()
                    || !(font_size.is_finite() && *font_size > 0.0)
                    || !origin.is_finite()
                {
                    return invalid(
                        "glyph run needs text, a finite origin and a positive size".into(),
                    );
                }
            }
            Shape::AnnotationEllipse { center, rx, ry }
                if !(*rx > 0.0 && *ry > 0.0) || !center.is_finite() =>
            {
                return invalid("ellipse radii must be positive".into());
            }
            _ => {}
        }
        let b = self.bounds();
        if b.x < -sw || b.y < -sw || b.right() > width + sw || b.bottom() > height + sw {
            return invalid(format!("element {:?} leaves the canvas: {b:?}", self.tag));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    width: u32,
    height: u32,
    background: Rgb,
    elements: Vec<SceneElement>,
}

impl Scene {
    pub fn new(width: u32, height: u32, background: Rgb) -> Result<Self, RenderError> {
        for (name, v) in [("width", width), ("height", height)] {
            if !(MIN_CANVAS..=MAX_CANVAS).contains(&v) {
                return Err(RenderError::InvalidScene(format!(
                    "{name} {v} outside [{MIN_CANVAS}, {MAX_CANVAS}]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            background,
            elements: Vec::new(),
        })
    }

    pub fn push(&mut self, element: SceneElement) -> Result<(), RenderError> {
        element.validate(f64::from(self.width), f64::from(self.height))?;
        self.elements.push(element);
        Ok(())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn elements(&self) -> &[SceneElement] {
        &self.elements
    }

    pub fn tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a SceneElement> + 'a {
        self.elements.iter().filter(move |e| e.has_tag(tag))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    fn enclosing(points: &[Point]) -> Self {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (self.x..=self.right()).contains(&p.x) && (self.y..=self.bottom()).contains(&p.y)
    }

    /// Width of the horizontal overlap with `other` (zero when disjoint).
    pub fn horizontal_overlap(&self, other: &Rect) -> f64 {
        (self.right().min(other.right()) - self.x.max(other.x)).max(0.0)
    }
}

/// Advance box of the `index`-th character of `text` set at `origin`.
pub fn glyph_box(
    text: &str,
    index: usize,
    origin: Point,
    font_size: f64,
) -> Result<Rect, RenderError> {
    let len = text.chars().count();
    if index >= len {
        return Err(RenderError::GlyphIndex { index, len });
    }
    let advance = font::advance(font_size);
    Ok(Rect::new(
        origin.x + index as f64 * advance,
        origin.y,
        advance,
        font::line_height(font_size),
    ))
}
