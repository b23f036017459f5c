//! Diagram output: subcolumn grids as ASCII or SVG, levels bottom-up.
//!
//! Each block renders as one character (or rect) per subcolumn and one
//! row per level; `#` marks a selected rung, `A` a marked rung, `-` an
//! untouched one. Blocks sit side by side in block order.

use std::collections::BTreeSet;
use std::fmt::Write;

/// Rung marks for one block: selected set and marked set, as
/// `(subcolumn, level)` pairs.
pub type Marks = (BTreeSet<(u32, u32)>, BTreeSet<(u32, u32)>);

fn glyph(blocks: &[Marks], block: usize, sub: u32, level: u32) -> char {
    let (b, a) = &blocks[block];
    if b.contains(&(sub, level)) {
        '#'
    } else if a.contains(&(sub, level)) {
        'A'
    } else {
        '-'
    }
}

/// Rows from `hi` down to `lo`, so level `lo` is the bottom line.
pub fn ascii(n: u32, lo: u32, hi: u32, blocks: &[Marks]) -> String {
    let mut out = String::new();
    for level in (lo..=hi).rev() {
        for (k, _) in blocks.iter().enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            for sub in 1..=n {
                out.push(glyph(blocks, k, sub, level));
            }
        }
        out.push('\n');
    }
    out
}

const CELL: u32 = 14;
const GAP: u32 = 18;
const PAD: u32 = 6;

pub fn svg(n: u32, lo: u32, hi: u32, blocks: &[Marks]) -> String {
    let cols = blocks.len() as u32;
    let width = 2 * PAD + cols * n * CELL + cols.saturating_sub(1) * GAP;
    let rows = hi - lo + 1;
    let height = 2 * PAD + rows * CELL;
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
    )
    .unwrap();
    for (k, _) in blocks.iter().enumerate() {
        let x0 = PAD + k as u32 * (n * CELL + GAP);
        for level in lo..=hi {
            let y = PAD + (hi - level) * CELL;
            for sub in 1..=n {
                let x = x0 + (sub - 1) * CELL;
                let (fill, stroke_width) = match glyph(blocks, k, sub, level) {
                    '#' => ("#1a1a1a", 2),
                    'A' => ("#8c8c8c", 2),
                    _ => ("#ffffff", 1),
                };
                writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#4d4d4d\" stroke-width=\"{stroke_width}\"/>"
                )
                .unwrap();
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
