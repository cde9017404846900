//! Task 5: one letter of a word circled in red.

use std::sync::LazyLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{quantize, AnswerValue, GenContext, Generated, Params, TaskError, MAX_ATTEMPTS, RED};
use crate::geometry::Point;
use crate::render::{font, glyph_box, Rect, Rgb, SceneElement, Shape, Style};

pub const WORDS_SOURCE: &str = include_str!("../../assets/words.txt");

static WORDS: LazyLock<Vec<&'static str>> = LazyLock::new(|| {
    WORDS_SOURCE
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .collect()
});

pub fn word_list() -> &'static [&'static str] {
    &WORDS
}

/// Annotation ellipse radii relative to the glyph box (1.3x the box).
pub(crate) const ELLIPSE_SCALE: f64 = 1.3;
pub(crate) const ELLIPSE_WIDTH: f64 = 3.0;
/// Maximum share of a neighbouring glyph box the ellipse may cover horizontally.
pub(crate) const MAX_NEIGHBOUR_OVERLAP: f64 = 0.25;

const MIN_FONT: f64 = 36.0;
const MAX_FONT: f64 = 64.0;
const SIDE_MARGIN: f64 = 40.0;

/// Ellipse circling the glyph at `index`.
pub fn annotation_for(
    text: &str,
    index: usize,
    origin: Point,
    font_size: f64,
) -> Result<(Point, f64, f64), TaskError> {
    let b = glyph_box(text, index, origin, font_size)?;
    Ok((
        b.center(),
        ELLIPSE_SCALE * b.width / 2.0,
        ELLIPSE_SCALE * b.height / 2.0,
    ))
}

fn neighbour_overlap_ok(
    text: &str,
    index: usize,
    origin: Point,
    font_size: f64,
    ellipse: &Rect,
) -> bool {
    [index.checked_sub(1), Some(index + 1)]
        .into_iter()
        .flatten()
        .filter_map(|i| glyph_box(text, i, origin, font_size).ok())
        .all(|nb| ellipse.horizontal_overlap(&nb) <= MAX_NEIGHBOUR_OVERLAP * nb.width)
}

pub(crate) fn circled_letter(
    ctx: &GenContext,
    rng: &mut ChaCha8Rng,
) -> Result<Generated, TaskError> {
    let words = word_list();
    for _ in 0..MAX_ATTEMPTS {
        let word = words[rng.random_range(0..words.len())];
        let len = word.chars().count();
        let index = rng.random_range(0..len);
        let max_font =
            ((ctx.size - 2.0 * SIDE_MARGIN) / (len as f64 * font::ADVANCE_RATIO)).min(MAX_FONT);
        if max_font < MIN_FONT {
            return Err(ctx.layout(format!("canvas too small for word {word:?}")));
        }
        let font_size = quantize(rng.random_range(MIN_FONT..=max_font));
        let text_width = len as f64 * font::advance(font_size);
        let slack = (ctx.size - 2.0 * SIDE_MARGIN - text_width) / 2.0;
        let origin = Point::new(
            quantize((ctx.size - text_width) / 2.0 + rng.random_range(-slack..=slack)),
            quantize(rng.random_range(0.25 * ctx.size..0.65 * ctx.size)),
        );
        let (center, rx, ry) = annotation_for(word, index, origin, font_size)?;
        let ellipse = Rect::new(center.x - rx, center.y - ry, 2.0 * rx, 2.0 * ry);
        if !neighbour_overlap_ok(word, index, origin, font_size, &ellipse) {
            continue;
        }
        let mut scene = ctx.blank_scene()?;
        scene.push(
            SceneElement::new(
                Shape::Glyphs {
                    text: word.to_string(),
                    origin,
                    font_size,
                },
                Style::stroke(Rgb::BLACK, 1.0),
            )
            .tagged("word"),
        )?;
        scene.push(
            SceneElement::new(
                Shape::AnnotationEllipse { center, rx, ry },
                Style::stroke(RED, ELLIPSE_WIDTH),
            )
            .tagged("marker"),
        )?;
        let letter = word.chars().nth(index).expect("index drawn below len");
        let mut params = Params::new();
        params.insert("word".into(), json!(word));
        params.insert("letter_index".into(), json!(index));
        params.insert("font_size".into(), json!(font_size));
        return Ok(Generated {
            scene,
            ground_truth: AnswerValue::Letter(letter),
            params,
        });
    }
    Err(ctx.exhausted())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn word_list_is_pinned() {
        let words = word_list();
        assert_eq!(words.len(), 200);
        assert!(words
            .iter()
            .all(|w| (5..=10).contains(&w.len()) && w.chars().all(|c| c.is_ascii_lowercase())));
        let mut sorted = words.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 200, "duplicate words");
        assert_eq!(
            hex::encode(Sha256::digest(WORDS_SOURCE.as_bytes())),
            "5832cb3bb69357e3a3f987069048621bfd2258700d3625991029e2dd5fba1be6"
        );
    }

    #[test]
    fn annotation_is_centered_on_its_glyph() {
        let origin = Point::new(100.0, 200.0);
        let (c, rx, ry) = annotation_for("plant", 2, origin, 40.0).unwrap();
        let b = glyph_box("plant", 2, origin, 40.0).unwrap();
        assert_eq!(c, b.center());
        assert!((rx - 0.65 * b.width).abs() < 1e-12);
        assert!((ry - 0.65 * b.height).abs() < 1e-12);
        assert_eq!("plant".chars().nth(2), Some('a'));
    }

    #[test]
    fn ellipse_covers_at_most_a_quarter_of_each_neighbour() {
        let origin = Point::new(50.0, 50.0);
        for index in 0..5 {
            let (c, rx, ry) = annotation_for("plant", index, origin, 40.0).unwrap();
            let ellipse = Rect::new(c.x - rx, c.y - ry, 2.0 * rx, 2.0 * ry);
            assert!(neighbour_overlap_ok("plant", index, origin, 40.0, &ellipse));
        }
    }
}
