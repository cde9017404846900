use std::fmt::Write;

use roxmltree::{Document, Node};

use super::{font, RenderError, Rgb, Scene, SceneElement, Shape, Style};
use crate::geometry::{Circle, Point, Square};

/// Fixed three-decimal formatting; negative zero prints as zero.
fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn paint_attrs(style: &Style) -> String {
    let fill = style
        .fill
        .map_or_else(|| "none".to_string(), |c| c.to_string());
    format!(
        r#"fill="{fill}" stroke="{}" stroke-width="{}""#,
        style.stroke,
        num(style.stroke_width)
    )
}

fn class_attr(element: &SceneElement) -> String {
    element
        .tag
        .as_deref()
        .map(|t| format!(r#"class="{}" "#, escape(t)))
        .unwrap_or_default()
}

/// Serializes a scene as an SVG 1.1 document. Equal scenes give identical bytes.
pub fn scene_to_svg(scene: &Scene) -> String {
    let (w, h) = (scene.width, scene.height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect class="background" x="0.000" y="0.000" width="{}" height="{}" fill="{}"/>"#,
        num(f64::from(w)),
        num(f64::from(h)),
        scene.background
    );
    for element in &scene.elements {
        let class = class_attr(element);
        let paint = paint_attrs(&element.style);
        match &element.shape {
            Shape::Polyline(points) => {
                let pts: Vec<String> = points
                    .iter()
                    .map(|p| format!("{},{}", num(p.x), num(p.y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline {class}points="{}" {paint} stroke-linecap="round" stroke-linejoin="round"/>"#,
                    pts.join(" ")
                );
            }
            Shape::Circle(c) => {
                let _ = writeln!(
                    out,
                    r#"<circle {class}cx="{}" cy="{}" r="{}" {paint}/>"#,
                    num(c.center().x),
                    num(c.center().y),
                    num(c.radius())
                );
            }
            Shape::Square(s) => {
                let (c, half) = (s.center(), s.half_size());
                let transform = if s.rotation() == 0.0 {
                    String::new()
                } else {
                    format!(
                        r#" transform="rotate({} {} {})""#,
                        num(s.rotation().to_degrees()),
                        num(c.x),
                        num(c.y)
                    )
                };
                let _ = writeln!(
                    out,
                    r#"<rect {class}x="{}" y="{}" width="{}" height="{}" {paint}{transform}/>"#,
                    num(c.x - half),
                    num(c.y - half),
                    num(2.0 * half),
                    num(2.0 * half)
                );
            }
            Shape::Glyphs {
                text,
                origin,
                font_size,
            } => {
                let length = text.chars().count() as f64 * font::advance(*font_size);
                let _ = writeln!(
                    out,
                    r#"<text {class}x="{}" y="{}" font-family="monospace" font-size="{}" textLength="{}" lengthAdjust="spacingAndGlyphs" dominant-baseline="text-before-edge" fill="{}">{}</text>"#,
                    num(origin.x),
                    num(origin.y),
                    num(*font_size),
                    num(length),
                    element.style.stroke,
                    escape(text)
                );
            }
            Shape::AnnotationEllipse { center, rx, ry } => {
                let _ = writeln!(
                    out,
                    r#"<ellipse {class}cx="{}" cy="{}" rx="{}" ry="{}" {paint}/>"#,
                    num(center.x),
                    num(center.y),
                    num(*rx),
                    num(*ry)
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

fn svg_err(msg: impl Into<String>) -> RenderError {
    RenderError::Svg(msg.into())
}

fn attr<'a>(node: &Node<'a, '_>, name: &str) -> Result<&'a str, RenderError> {
    node.attribute(name)
        .ok_or_else(|| svg_err(format!("<{}> lacks {name}", node.tag_name().name())))
}

fn num_attr(node: &Node, name: &str) -> Result<f64, RenderError> {
    let raw = attr(node, name)?;
    raw.trim()
        .parse()
        .map_err(|_| svg_err(format!("{name}={raw:?} is not a number")))
}

fn parse_rgb(raw: &str) -> Result<Rgb, RenderError> {
    let inner = raw
        .trim()
        .strip_prefix("rgb(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| svg_err(format!("unsupported color {raw:?}")))?;
    let parts: Vec<u8> = inner
        .split(',')
        .map(|p| p.trim().parse::<u8>())
        .collect::<Result<_, _>>()
        .map_err(|_| svg_err(format!("bad color component in {raw:?}")))?;
    match parts[..] {
        [r, g, b] => Ok(Rgb(r, g, b)),
        _ => Err(svg_err(format!("color {raw:?} needs 3 components"))),
    }
}

fn parse_style(node: &Node) -> Result<Style, RenderError> {
    let fill = match node.attribute("fill") {
        None | Some("none") => None,
        Some(c) => Some(parse_rgb(c)?),
    };
    Ok(Style {
        stroke: parse_rgb(attr(node, "stroke")?)?,
        stroke_width: num_attr(node, "stroke-width")?,
        fill,
    })
}

fn parse_points(raw: &str) -> Result<Vec<Point>, RenderError> {
    raw.split_whitespace()
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| svg_err(format!("bad point {pair:?}")))?;
            let parse = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| svg_err(format!("bad point {pair:?}")))
            };
            Ok(Point::new(parse(x)?, parse(y)?))
        })
        .collect()
}

fn parse_rotation(raw: Option<&str>) -> Result<f64, RenderError> {
    let Some(raw) = raw else { return Ok(0.0) };
    let degrees = raw
        .trim()
        .strip_prefix("rotate(")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|d| d.parse::<f64>().ok())
        .ok_or_else(|| svg_err(format!("unsupported transform {raw:?}")))?;
    Ok(degrees.to_radians())
}

fn geometry_err(e: crate::geometry::GeometryError) -> RenderError {
    svg_err(e.to_string())
}

/// Reads back a document written by [`scene_to_svg`].
///
/// Numbers come back rounded to three decimals; everything else is preserved.
pub fn parse_svg(text: &str) -> Result<Scene, RenderError> {
    let doc = Document::parse(text).map_err(|e| svg_err(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(svg_err("root element is not <svg>"));
    }
    let dim = |name: &str| -> Result<u32, RenderError> {
        attr(&root, name)?
            .parse()
            .map_err(|_| svg_err(format!("bad {name}")))
    };
    let mut background = Rgb::WHITE;
    let mut elements = Vec::new();
    for node in root.children().filter(Node::is_element) {
        let tag = node.attribute("class").map(str::to_string);
        if tag.as_deref() == Some("background") {
            background = parse_rgb(attr(&node, "fill")?)?;
            continue;
        }
        let (shape, style) = match node.tag_name().name() {
            "polyline" => (
                Shape::Polyline(parse_points(attr(&node, "points")?)?),
                parse_style(&node)?,
            ),
            "circle" => {
                let center = Point::new(num_attr(&node, "cx")?, num_attr(&node, "cy")?);
                let circle = Circle::new(center, num_attr(&node, "r")?).map_err(geometry_err)?;
                (Shape::Circle(circle), parse_style(&node)?)
            }
            "rect" => {
                let half = num_attr(&node, "width")? / 2.0;
                let center = Point::new(num_attr(&node, "x")? + half, num_attr(&node, "y")? + half);
                let rotation = parse_rotation(node.attribute("transform"))?;
                let square = Square::new(center, half, rotation).map_err(geometry_err)?;
                (Shape::Square(square), parse_style(&node)?)
            }
            "text" => {
                let text: String = node.text().unwrap_or_default().to_string();
                let style = Style::stroke(parse_rgb(attr(&node, "fill")?)?, 1.0);
                let shape = Shape::Glyphs {
                    text,
                    origin: Point::new(num_attr(&node, "x")?, num_attr(&node, "y")?),
                    font_size: num_attr(&node, "font-size")?,
                };
                (shape, style)
            }
            "ellipse" => {
                let shape = Shape::AnnotationEllipse {
                    center: Point::new(num_attr(&node, "cx")?, num_attr(&node, "cy")?),
                    rx: num_attr(&node, "rx")?,
                    ry: num_attr(&node, "ry")?,
                };
                (shape, parse_style(&node)?)
            }
            other => return Err(svg_err(format!("unsupported element <{other}>"))),
        };
        elements.push(SceneElement { shape, style, tag });
    }
    let mut scene = Scene::new(dim("width")?, dim("height")?, background)?;
    for e in elements {
        scene.push(e)?;
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_scene() -> Scene {
        let mut scene = Scene::new(512, 512, Rgb::WHITE).unwrap();
        let c = Circle::new(Point::new(256.0, 256.0), 100.0).unwrap();
        scene
            .push(
                SceneElement::new(Shape::Circle(c), Style::stroke(Rgb::BLACK, 4.0)).tagged("ring"),
            )
            .unwrap();
        scene
    }

    #[test]
    fn empty_scene_has_only_background() {
        let scene = Scene::new(512, 512, Rgb::WHITE).unwrap();
        let svg = scene_to_svg(&scene);
        let body: Vec<&str> = svg.lines().collect();
        assert_eq!(body.len(), 4);
        assert!(body[2].starts_with(r#"<rect class="background""#));
        assert!(body[2].contains(r#"fill="rgb(255,255,255)""#));
    }

    #[test]
    fn circle_attributes_use_three_decimals() {
        let svg = scene_to_svg(&circle_scene());
        assert!(svg.contains(r#"cx="256.000""#));
        assert!(svg.contains(r#"r="100.000""#));
        assert!(svg.contains(r#"stroke-width="4.000""#));
        assert_eq!(svg, scene_to_svg(&circle_scene()));
    }

    #[test]
    fn negative_zero_prints_as_zero() {
        assert_eq!(num(-0.0), "0.000");
        assert_eq!(num(-0.0001), "0.000");
        assert_eq!(num(1.23456), "1.235");
    }

    #[test]
    fn round_trip_preserves_elements() {
        let mut scene = circle_scene();
        let sq = Square::new(Point::new(200.0, 220.0), 50.0, 30f64.to_radians()).unwrap();
        scene
            .push(SceneElement::new(
                Shape::Square(sq),
                Style::stroke(Rgb(0, 128, 0), 3.0),
            ))
            .unwrap();
        scene
            .push(SceneElement::new(
                Shape::Polyline(vec![
                    Point::new(10.0, 10.0),
                    Point::new(300.5, 20.25),
                    Point::new(30.0, 400.0),
                ]),
                Style::stroke(Rgb(0, 0, 255), 2.0),
            ))
            .unwrap();
        scene
            .push(
                SceneElement::new(
                    Shape::Glyphs {
                        text: "a<b".into(),
                        origin: Point::new(100.0, 100.0),
                        font_size: 40.0,
                    },
                    Style::stroke(Rgb::BLACK, 1.0),
                )
                .tagged("word"),
            )
            .unwrap();
        scene
            .push(SceneElement::new(
                Shape::AnnotationEllipse {
                    center: Point::new(112.0, 120.0),
                    rx: 15.6,
                    ry: 26.0,
                },
                Style::stroke(Rgb(220, 0, 0), 3.0),
            ))
            .unwrap();
        let svg = scene_to_svg(&scene);
        let back = parse_svg(&svg).unwrap();
        assert_eq!(scene_to_svg(&back), svg);
        assert_eq!(back.elements().len(), 5);
        match &back.elements()[1].shape {
            Shape::Square(s) => assert!((s.rotation() - 30f64.to_radians()).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_foreign_markup() {
        assert!(parse_svg("<html/>").is_err());
        let bad = r#"<svg width="512" height="512"><path d="M0 0"/></svg>"#;
        assert!(parse_svg(bad).is_err());
    }
}
