use std::sync::OnceLock;

use crate::imaging::Frame;

/// Cells per side of the histogram grid.
pub const LBP_CELLS: usize = 4;
/// 58 uniform patterns plus one bin for all others.
pub const LBP_BINS: usize = 59;

/// Per-cell LBP histograms, cell-major, `LBP_CELLS²·LBP_BINS` counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbpHistogram {
    pub counts: Vec<u32>,
}

impl LbpHistogram {
    pub fn cell(&self, c: usize) -> &[u32] {
        &self.counts[c * LBP_BINS..(c + 1) * LBP_BINS]
    }
}

fn luminance(c: [f64; 3]) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

/// 8-neighbor code of a 3×3 luminance patch (row-major). Neighbors are read
/// clockwise from the top-left, most significant bit first; a bit is set when
/// the neighbor is at least the center.
pub fn lbp_code(patch: &[f64; 9]) -> u8 {
    const ORDER: [usize; 8] = [0, 1, 2, 5, 8, 7, 6, 3];
    let center = patch[4];
    ORDER
        .iter()
        .fold(0u8, |code, &k| (code << 1) | (patch[k] >= center) as u8)
}

fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

/// Bin of an 8-bit code: uniform codes (at most two circular bit changes)
/// in ascending order, every other code in the last bin.
pub fn uniform_bin(code: u8) -> usize {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            t[code as usize] = if transitions(code) <= 2 {
                next += 1;
                next - 1
            } else {
                (LBP_BINS - 1) as u8
            };
        }
        t
    });
    table[code as usize] as usize
}

/// Uniform-pattern LBP histograms of the luminance over a 4×4 cell grid.
/// Border pixels use clamp-to-edge neighbors, so every pixel is counted.
pub fn compute_lbp(texture: &Frame) -> LbpHistogram {
    let (w, h) = (texture.width, texture.height);
    let lum: Vec<f64> = (0..w * h).map(|i| luminance(texture.pixel(i))).collect();
    let at = |x: i64, y: i64| lum[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];
    let mut counts = vec![0u32; LBP_CELLS * LBP_CELLS * LBP_BINS];
    for y in 0..h {
        let cy = y * LBP_CELLS / h;
        for x in 0..w {
            let cx = x * LBP_CELLS / w;
            let mut patch = [0.0; 9];
            for dy in 0..3 {
                for dx in 0..3 {
                    patch[dy * 3 + dx] = at(x as i64 + dx as i64 - 1, y as i64 + dy as i64 - 1);
                }
            }
            let bin = uniform_bin(lbp_code(&patch));
            counts[(cy * LBP_CELLS + cx) * LBP_BINS + bin] += 1;
        }
    }
    LbpHistogram { counts }
}
