//! Continuous image sampling in pixel coordinates (pixel centers at `+0.5`).

use super::Frame;

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Bilinear sample with clamp-to-edge boundary handling.
pub fn sample_bilinear(frame: &Frame, u: f64, v: f64) -> [f64; 3] {
    let su = u - 0.5;
    let sv = v - 0.5;
    let x0 = su.floor();
    let y0 = sv.floor();
    let tx = su - x0;
    let ty = sv - y0;
    let x0 = x0 as i64;
    let y0 = y0 as i64;
    let xa = clamp_index(x0, frame.width);
    let xb = clamp_index(x0 + 1, frame.width);
    let ya = clamp_index(y0, frame.height);
    let yb = clamp_index(y0 + 1, frame.height);
    let p00 = frame.get(xa, ya);
    let p10 = frame.get(xb, ya);
    let p01 = frame.get(xa, yb);
    let p11 = frame.get(xb, yb);
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = (1.0 - ty) * ((1.0 - tx) * p00[c] + tx * p10[c]) + ty * ((1.0 - tx) * p01[c] + tx * p11[c]);
    }
    out
}
