//! Embedded 5×7 bitmap glyphs and three derived faces, rasterized with
//! nearest-neighbor scaling.

use std::sync::OnceLock;

/// Symbols every face can draw, in recognizer alphabet order.
pub const CHARSET: &str = "abcdefghijklmnopqrstuvwxyz0123456789 %.-";

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

#[rustfmt::skip]
const GLYPHS: [(char, [&str; 7]); 40] = [
    ('a', ["01110", "10001", "10001", "11111", "10001", "10001", "10001"]),
    ('b', ["11110", "10001", "10001", "11110", "10001", "10001", "11110"]),
    ('c', ["01110", "10001", "10000", "10000", "10000", "10001", "01110"]),
    ('d', ["11110", "10001", "10001", "10001", "10001", "10001", "11110"]),
    ('e', ["11111", "10000", "10000", "11110", "10000", "10000", "11111"]),
    ('f', ["11111", "10000", "10000", "11110", "10000", "10000", "10000"]),
    ('g', ["01110", "10001", "10000", "10111", "10001", "10001", "01111"]),
    ('h', ["10001", "10001", "10001", "11111", "10001", "10001", "10001"]),
    ('i', ["01110", "00100", "00100", "00100", "00100", "00100", "01110"]),
    ('j', ["00111", "00010", "00010", "00010", "00010", "10010", "01100"]),
    ('k', ["10001", "10010", "10100", "11000", "10100", "10010", "10001"]),
    ('l', ["10000", "10000", "10000", "10000", "10000", "10000", "11111"]),
    ('m', ["10001", "11011", "10101", "10101", "10001", "10001", "10001"]),
    ('n', ["10001", "10001", "11001", "10101", "10011", "10001", "10001"]),
    ('o', ["01110", "10001", "10001", "10001", "10001", "10001", "01110"]),
    ('p', ["11110", "10001", "10001", "11110", "10000", "10000", "10000"]),
    ('q', ["01110", "10001", "10001", "10001", "10101", "10010", "01101"]),
    ('r', ["11110", "10001", "10001", "11110", "10100", "10010", "10001"]),
    ('s', ["01111", "10000", "10000", "01110", "00001", "00001", "11110"]),
    ('t', ["11111", "00100", "00100", "00100", "00100", "00100", "00100"]),
    ('u', ["10001", "10001", "10001", "10001", "10001", "10001", "01110"]),
    ('v', ["10001", "10001", "10001", "10001", "10001", "01010", "00100"]),
    ('w', ["10001", "10001", "10001", "10101", "10101", "10101", "01010"]),
    ('x', ["10001", "10001", "01010", "00100", "01010", "10001", "10001"]),
    ('y', ["10001", "10001", "10001", "01010", "00100", "00100", "00100"]),
    ('z', ["11111", "00001", "00010", "00100", "01000", "10000", "11111"]),
    ('0', ["01110", "10001", "10011", "10101", "11001", "10001", "01110"]),
    ('1', ["00100", "01100", "00100", "00100", "00100", "00100", "01110"]),
    ('2', ["01110", "10001", "00001", "00010", "00100", "01000", "11111"]),
    ('3', ["11111", "00010", "00100", "00010", "00001", "10001", "01110"]),
    ('4', ["00010", "00110", "01010", "10010", "11111", "00010", "00010"]),
    ('5', ["11111", "10000", "11110", "00001", "00001", "10001", "01110"]),
    ('6', ["00110", "01000", "10000", "11110", "10001", "10001", "01110"]),
    ('7', ["11111", "00001", "00010", "00100", "01000", "01000", "01000"]),
    ('8', ["01110", "10001", "10001", "01110", "10001", "10001", "01110"]),
    ('9', ["01110", "10001", "10001", "01111", "00001", "00010", "01100"]),
    (' ', ["00000", "00000", "00000", "00000", "00000", "00000", "00000"]),
    ('%', ["11000", "11001", "00010", "00100", "01000", "10011", "00011"]),
    ('.', ["00000", "00000", "00000", "00000", "00000", "01100", "01100"]),
    ('-', ["00000", "00000", "00000", "11111", "00000", "00000", "00000"]),
];

/// One glyph in glyph units: `width` columns of `GLYPH_H` rows plus the pen advance.
#[derive(Debug, Clone)]
struct Glyph {
    bits: Vec<bool>,
    width: usize,
    advance: usize,
}

#[derive(Debug, Clone)]
pub struct Font {
    pub name: &'static str,
    glyphs: Vec<(char, Glyph)>,
}

fn base_bits(rows: &[&str; 7]) -> Vec<bool> {
    rows.iter().flat_map(|r| r.bytes().map(|b| b == b'1')).collect()
}

fn ink_columns(bits: &[bool], width: usize) -> Option<(usize, usize)> {
    let cols: Vec<usize> = (0..width)
        .filter(|&x| (0..GLYPH_H).any(|y| bits[y * width + x]))
        .collect();
    Some((*cols.first()?, *cols.last()?))
}

fn build(name: &'static str, style: u8) -> Font {
    let glyphs = GLYPHS
        .iter()
        .map(|(ch, rows)| {
            let bits = base_bits(rows);
            let glyph = match style {
                // Monospace: full cell plus one column of spacing.
                0 => Glyph {
                    bits,
                    width: GLYPH_W,
                    advance: GLYPH_W + 1,
                },
                // Proportional: trimmed to ink.
                1 => match ink_columns(&bits, GLYPH_W) {
                    Some((lo, hi)) => {
                        let w = hi - lo + 1;
                        let trimmed = (0..GLYPH_H)
                            .flat_map(|y| (lo..=hi).map(move |x| (y, x)))
                            .map(|(y, x)| bits[y * GLYPH_W + x])
                            .collect();
                        Glyph {
                            bits: trimmed,
                            width: w,
                            advance: w + 1,
                        }
                    }
                    None => Glyph {
                        bits: vec![false; 3 * GLYPH_H],
                        width: 3,
                        advance: 3,
                    },
                },
                // Bold: horizontally dilated by one column.
                _ => {
                    let w = GLYPH_W + 1;
                    let mut out = vec![false; w * GLYPH_H];
                    for y in 0..GLYPH_H {
                        for x in 0..GLYPH_W {
                            if bits[y * GLYPH_W + x] {
                                out[y * w + x] = true;
                                out[y * w + x + 1] = true;
                            }
                        }
                    }
                    Glyph {
                        bits: out,
                        width: w,
                        advance: w + 1,
                    }
                }
            };
            (*ch, glyph)
        })
        .collect();
    Font { name, glyphs }
}

/// The bundled faces: monospace, proportional, bold.
pub fn fonts() -> &'static [Font] {
    static FONTS: OnceLock<Vec<Font>> = OnceLock::new();
    FONTS.get_or_init(|| vec![build("mono", 0), build("proportional", 1), build("bold", 2)])
}

/// A rendered line of text: row-major coverage mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl TextMask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }
}

impl Font {
    fn glyph(&self, ch: char) -> Option<&Glyph> {
        self.glyphs.iter().find(|(c, _)| *c == ch).map(|(_, g)| g)
    }

    pub fn supports(&self, text: &str) -> bool {
        text.chars().all(|c| self.glyph(c).is_some())
    }

    /// Layout width in glyph units (trailing spacing excluded).
    fn units(&self, text: &str) -> usize {
        let mut pen = 0;
        let mut last_right = 0;
        for ch in text.chars() {
            if let Some(g) = self.glyph(ch) {
                last_right = pen + g.width;
                pen += g.advance;
            }
        }
        last_right
    }

    /// Pixel size of `text` at cap height `size_px`.
    pub fn measure(&self, text: &str, size_px: usize) -> (usize, usize) {
        let s = size_px as f64 / GLYPH_H as f64;
        let w = (self.units(text) as f64 * s).ceil() as usize;
        (w.max(1), size_px)
    }

    /// Rasterizes `text` at cap height `size_px`. Each target pixel takes the
    /// glyph bit under `floor(target / scale)`.
    pub fn render(&self, text: &str, size_px: usize) -> TextMask {
        let (width, height) = self.measure(text, size_px);
        let scale = size_px as f64 / GLYPH_H as f64;
        // Glyph-unit column -> (glyph, column within glyph).
        let units = self.units(text).max(1);
        let mut column_src: Vec<Option<(&Glyph, usize)>> = vec![None; units];
        let mut pen = 0;
        for ch in text.chars() {
            if let Some(g) = self.glyph(ch) {
                for x in 0..g.width {
                    if pen + x < units {
                        column_src[pen + x] = Some((g, x));
                    }
                }
                pen += g.advance;
            }
        }
        let mut bits = vec![false; width * height];
        for ty in 0..height {
            let gy = ((ty as f64 / scale).floor() as usize).min(GLYPH_H - 1);
            for tx in 0..width {
                let gx = ((tx as f64 / scale).floor() as usize).min(units - 1);
                if let Some((g, x)) = column_src[gx] {
                    bits[ty * width + tx] = g.bits[gy * g.width + x];
                }
            }
        }
        TextMask { width, height, bits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_face_covers_the_charset() {
        for f in fonts() {
            assert!(f.supports(CHARSET), "{}", f.name);
        }
        assert_eq!(fonts().len(), 3);
    }

    #[test]
    fn mono_width_is_linear() {
        let f = &fonts()[0];
        assert_eq!(f.measure("ab", 7), (11, 7));
        assert_eq!(f.measure("abc", 14), (34, 14));
    }

    #[test]
    fn render_is_deterministic_and_sized() {
        for f in fonts() {
            let a = f.render("sales 10%", 11);
            assert_eq!(a, f.render("sales 10%", 11));
            assert_eq!((a.width, a.height), f.measure("sales 10%", 11));
            assert!(a.bits.iter().any(|b| *b));
        }
    }

    #[test]
    fn glyphs_are_distinct() {
        for (i, (_, a)) in GLYPHS.iter().enumerate() {
            for (_, b) in &GLYPHS[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }
}
