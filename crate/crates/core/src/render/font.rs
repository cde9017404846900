//! The single embedded bitmap font used for every glyph the benchmark draws.
//!
//! Glyph geometry depends only on (origin, font size, character index), so the
//! circled-letter task can place its annotation without measuring rendered text.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use sha2::{Digest, Sha256};

pub const FONT_SOURCE: &str = include_str!("../../assets/mono5x9.font");

/// SHA-256 of `assets/mono5x9.font`. Changing the font changes every dataset.
pub const FONT_SHA256: &str = "b395c17938c70349c8c54cc6bcd8cd293b58f1ed70a94bc253792b35a7df2e05";

/// Horizontal advance per character, as a fraction of the font size.
pub const ADVANCE_RATIO: f64 = 0.6;
/// Line box height, as a fraction of the font size.
pub const LINE_HEIGHT_RATIO: f64 = 1.0;
/// Side of one bitmap cell, as a fraction of the font size.
pub const CELL_RATIO: f64 = 0.1;

pub const GLYPH_COLS: usize = 5;
pub const GLYPH_ROWS: usize = 9;

/// Ink columns start half a cell into the advance box; rows likewise.
pub const INK_OFFSET_CELLS: f64 = 0.5;

/// One glyph: row-major bits, bit 4 is the leftmost column.
pub type GlyphBits = [u8; GLYPH_ROWS];

static GLYPHS: LazyLock<BTreeMap<char, GlyphBits>> = LazyLock::new(|| parse_font(FONT_SOURCE));

fn parse_font(source: &str) -> BTreeMap<char, GlyphBits> {
    let mut glyphs = BTreeMap::new();
    for line in source.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let Some(ch) = parts.next().and_then(|s| s.chars().next()) else {
            continue;
        };
        let mut bits = [0u8; GLYPH_ROWS];
        for (row, pattern) in parts.take(GLYPH_ROWS).enumerate() {
            bits[row] = pattern
                .bytes()
                .fold(0u8, |acc, b| (acc << 1) | u8::from(b == b'#'));
        }
        glyphs.insert(ch, bits);
    }
    glyphs
}

/// Bitmap for `ch`; characters outside the font render as `?`, space as nothing.
pub fn glyph(ch: char) -> GlyphBits {
    if ch == ' ' {
        return [0; GLYPH_ROWS];
    }
    GLYPHS
        .get(&ch)
        .or_else(|| GLYPHS.get(&'?'))
        .copied()
        .unwrap_or([0; GLYPH_ROWS])
}

pub fn has_glyph(ch: char) -> bool {
    GLYPHS.contains_key(&ch)
}

pub fn advance(font_size: f64) -> f64 {
    ADVANCE_RATIO * font_size
}

pub fn line_height(font_size: f64) -> f64 {
    LINE_HEIGHT_RATIO * font_size
}

pub fn font_checksum() -> String {
    hex::encode(Sha256::digest(FONT_SOURCE.as_bytes()))
}

/// Iterates the ink cells of `bits` as (column, row).
pub fn ink_cells(bits: &GlyphBits) -> impl Iterator<Item = (usize, usize)> + '_ {
    bits.iter().enumerate().flat_map(|(row, &mask)| {
        (0..GLYPH_COLS)
            .filter(move |col| mask & (1 << (GLYPH_COLS - 1 - col)) != 0)
            .map(move |col| (col, row))
    })
}
