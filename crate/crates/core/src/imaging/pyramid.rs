use super::Frame;
use crate::{Error, Result};

/// Returns `levels` frames, finest first; each coarser level is a 2×2 box
/// filter of the previous one.
pub fn build_pyramid(frame: &Frame, levels: usize) -> Result<Vec<Frame>> {
    if levels == 0 {
        return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
    }
    let div = 1usize << (levels - 1);
    if frame.width % div != 0 || frame.height % div != 0 || frame.width == 0 || frame.height == 0 {
        return Err(Error::InvalidConfig(format!(
            "{}x{} frame is not divisible by {div} for {levels} pyramid levels",
            frame.width, frame.height
        )));
    }
    let mut out = Vec::with_capacity(levels);
    out.push(frame.clone());
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let (w, h) = (prev.width / 2, prev.height / 2);
        let mut next = Frame::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let a = prev.get(2 * x, 2 * y);
                let b = prev.get(2 * x + 1, 2 * y);
                let c = prev.get(2 * x, 2 * y + 1);
                let d = prev.get(2 * x + 1, 2 * y + 1);
                let mut px = [0.0; 3];
                for k in 0..3 {
                    px[k] = 0.25 * (a[k] + b[k] + c[k] + d[k]);
                }
                next.set(x, y, px);
            }
        }
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_is_the_frame() {
        let f = Frame::filled(4, 4, [0.1, 0.2, 0.3]);
        assert_eq!(build_pyramid(&f, 1).unwrap(), vec![f]);
    }

    #[test]
    fn constant_image_stays_constant() {
        let f = Frame::filled(16, 8, [0.25, 0.5, 0.75]);
        let p = build_pyramid(&f, 3).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!((p[2].width, p[2].height), (4, 2));
        for level in &p {
            assert!(level.rgb.chunks(3).all(|c| c == [0.25, 0.5, 0.75]));
        }
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let mut f = Frame::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let v = ((x + y) % 2) as f64;
                f.set(x, y, [v; 3]);
            }
        }
        let p = build_pyramid(&f, 2).unwrap();
        assert!(p[1].rgb.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rejects_non_divisible_sizes() {
        let f = Frame::new(6, 4);
        assert!(build_pyramid(&f, 3).is_err());
        assert!(build_pyramid(&f, 0).is_err());
    }
}
