use super::{MouthChart, MouthDatabase, Retrieval, RetrievalState};
use crate::energy::SceneParams;
use crate::imaging::{interpolate_normal_albedo, sample_bilinear, sh_irradiance, Frame, Illumination, RasterOutput};
use crate::imaging::{SurfaceState, NO_TRIANGLE};
use crate::model::FacePrior;
use crate::{Result, Vec3};

/// Largest shift, in texels per axis, tried when aligning textures.
pub const ALIGN_RADIUS: i64 = 4;
/// Weight of the new retrieval when blending with the previous one.
pub const BLEND_WEIGHT: f64 = 0.5;
pub const ILLUMINATION_EPSILON: f64 = 1e-3;
pub const RATIO_RANGE: [f64; 2] = [0.2, 5.0];

/// `tex` moved by `shift` texels: `out(p) = tex(p − shift)`, bilinear with
/// clamp-to-edge.
pub fn shift_texture(tex: &Frame, shift: (f64, f64)) -> Frame {
    let mut out = Frame::new(tex.width, tex.height);
    for y in 0..tex.height {
        for x in 0..tex.width {
            let c = sample_bilinear(tex, x as f64 + 0.5 - shift.0, y as f64 + 0.5 - shift.1);
            out.set(x, y, c);
        }
    }
    out
}

fn ssd(a: &Frame, b: &Frame) -> f64 {
    a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y).powi(2)).sum()
}

fn parabola_offset(minus: Option<f64>, mid: f64, plus: Option<f64>) -> f64 {
    match (minus, plus) {
        (Some(m), Some(p)) => {
            let curv = m - 2.0 * mid + p;
            if curv > 0.0 {
                (0.5 * (m - p) / curv).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Translation minimizing the SSD between `prev` shifted and `new`: an
/// integer search over `[−ALIGN_RADIUS, ALIGN_RADIUS]²` refined per axis by
/// a parabola through the neighboring integer shifts.
pub fn align_translation(prev: &Frame, new: &Frame) -> (f64, f64) {
    let r = ALIGN_RADIUS;
    let side = (2 * r + 1) as usize;
    let mut cost = vec![0.0; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            let i = (dy + r) as usize * side + (dx + r) as usize;
            cost[i] = ssd(&shift_texture(prev, (dx as f64, dy as f64)), new);
        }
    }
    let best = cost
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &c)| if c < b.1 { (i, c) } else { b })
        .0;
    let (by, bx) = ((best / side) as i64 - r, (best % side) as i64 - r);
    let at = |dx: i64, dy: i64| {
        (dx.abs() <= r && dy.abs() <= r).then(|| cost[(dy + r) as usize * side + (dx + r) as usize])
    };
    let mid = cost[best];
    let fx = parabola_offset(at(bx - 1, by), mid, at(bx + 1, by));
    let fy = parabola_offset(at(bx, by - 1), mid, at(bx, by + 1));
    let lim = r as f64;
    ((bx as f64 + fx).clamp(-lim, lim), (by as f64 + fy).clamp(-lim, lim))
}

/// `irradiance(n, γ_now) / max(irradiance(n, γ_retrieved), ε)`, clamped.
pub fn illumination_ratio(n: &Vec3, now: &Illumination, retrieved: &Illumination) -> [f64; 3] {
    let a = sh_irradiance(n, now);
    let b = sh_irradiance(n, retrieved);
    [0, 1, 2].map(|c| (a[c] / b[c].max(ILLUMINATION_EPSILON)).clamp(RATIO_RANGE[0], RATIO_RANGE[1]))
}

/// Face alpha: rendered coverage eroded by one pixel (8-neighborhood, the
/// image border counts as uncovered), 0.5 on the eroded region's border ring
/// and 1 inside it.
pub fn feathered_alpha(render: &RasterOutput) -> Vec<f64> {
    let (w, h) = (render.width as i64, render.height as i64);
    let inside = |mask: &[bool], x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask[(y * w + x) as usize];
    let ring_full = |mask: &[bool], x: i64, y: i64| {
        (-1..=1).all(|dy| (-1..=1).all(|dx| inside(mask, x + dx, y + dy)))
    };
    let covered: Vec<bool> = render.tri_id.iter().map(|&t| t != NO_TRIANGLE).collect();
    let eroded: Vec<bool> = (0..w * h).map(|i| ring_full(&covered, i % w, i / w)).collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if !eroded[i as usize] {
                0.0
            } else if ring_full(&eroded, x, y) {
                1.0
            } else {
                0.5
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Composite {
    pub frame: Frame,
    /// Aligned, blended and illumination-corrected mouth texture.
    pub mouth_texture: Frame,
    /// Background, face and mouth weight per pixel.
    pub weights: Vec<[f64; 3]>,
}

/// Blends the retrieved mouth with the previous one, corrects it to the
/// current light, and composites video, rendered face and mouth.
#[allow(clippy::too_many_arguments)]
pub fn blend_and_composite(
    prior: &FacePrior,
    chart: &MouthChart,
    db: &MouthDatabase,
    retrieval: Retrieval,
    state: &mut RetrievalState,
    video: &Frame,
    render: &RasterOutput,
    params: &SceneParams,
) -> Result<Composite> {
    let sample = &db.samples[retrieval.inbetween];
    let new = &sample.texture;
    let blended = match &state.last_texture {
        Some(prev) => {
            let aligned = shift_texture(prev, align_translation(prev, new));
            let rgb = aligned
                .rgb
                .iter()
                .zip(&new.rgb)
                .map(|(p, n)| (1.0 - BLEND_WEIGHT) * p + BLEND_WEIGHT * n)
                .collect();
            Frame::from_rgb(new.width, new.height, rgb)
        }
        None => new.clone(),
    };
    state.last_texture = Some(blended.clone());

    let surface = SurfaceState::new(prior, params)?;
    let mut corrected = blended;
    let ratios: Vec<[f64; 3]> = chart
        .texels
        .iter()
        .map(|texel| match texel {
            Some((t, b)) => {
                let (n, _) = interpolate_normal_albedo(&surface, &prior.triangles[*t], b);
                illumination_ratio(&(params.pose.rotation * n), &params.gamma, &sample.gamma)
            }
            None => [1.0; 3],
        })
        .collect();
    for i in 0..ratios.len() {
        let r = ratios[chart.source[i]];
        let c = corrected.pixel(i);
        corrected.set_pixel(i, [c[0] * r[0], c[1] * r[1], c[2] * r[2]]);
    }

    let mut in_mouth = vec![false; prior.triangles.len()];
    for &t in &prior.mouth_region {
        in_mouth[t] = true;
    }
    let alpha = feathered_alpha(render);
    let mut out = video.clone();
    let mut weights = vec![[1.0, 0.0, 0.0]; video.pixel_count()];
    for &idx in &render.visible {
        let a = alpha[idx];
        if a == 0.0 {
            continue;
        }
        let t = render.tri_id[idx] as usize;
        let face = render.color.pixel(idx).map(|v| v.clamp(0.0, 1.0));
        let (m, mouth) = if in_mouth[t] {
            let b = render.bary[idx];
            let tri = prior.triangles[t];
            let uv = [0, 1].map(|k| (0..3).map(|j| b[j] * prior.uv_coords[tri[j]][k]).sum::<f64>());
            let (u, v) = chart.texture_coords(uv);
            (1.0, sample_bilinear(&corrected, u, v))
        } else {
            (0.0, [0.0; 3])
        };
        let w = [1.0 - a, a * (1.0 - m), a * m];
        let bg = video.pixel(idx);
        out.set_pixel(idx, [0, 1, 2].map(|c| w[0] * bg[c] + w[1] * face[c] + w[2] * mouth[c]));
        weights[idx] = w;
    }
    Ok(Composite {
        frame: out,
        mouth_texture: corrected,
        weights,
    })
}
