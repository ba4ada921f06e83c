use crate::energy::SceneParams;
use crate::imaging::{sample_bilinear, Frame, SurfaceState, Z_NEAR};
use crate::model::FacePrior;
use crate::{Error, Result};

/// Normalization fails when fewer mouth triangles than this fraction face
/// the camera.
pub const MIN_MOUTH_VISIBILITY: f64 = 0.5;

/// The mouth region's UV bounding box resampled on a square texel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthChart {
    pub size: usize,
    pub uv_min: [f64; 2],
    pub uv_max: [f64; 2],
    /// Triangle and UV barycentrics of each texel center, row-major.
    pub texels: Vec<Option<(usize, [f64; 3])>>,
    /// Covered texel whose value an uncovered texel copies.
    pub source: Vec<usize>,
    mouth_triangles: Vec<usize>,
}

fn uv_barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    let l0 = 1.0 - l1 - l2;
    let tol = -1e-12;
    (l0 >= tol && l1 >= tol && l2 >= tol).then_some([l0, l1, l2])
}

impl MouthChart {
    pub fn new(prior: &FacePrior, size: usize) -> Result<Self> {
        if prior.mouth_region.is_empty() {
            return Err(Error::InvalidConfig("prior has no mouth region".into()));
        }
        if size == 0 {
            return Err(Error::InvalidConfig("mouth texture size must be positive".into()));
        }
        let mut uv_min = [f64::INFINITY; 2];
        let mut uv_max = [f64::NEG_INFINITY; 2];
        for &t in &prior.mouth_region {
            for &v in &prior.triangles[t] {
                for k in 0..2 {
                    uv_min[k] = uv_min[k].min(prior.uv_coords[v][k]);
                    uv_max[k] = uv_max[k].max(prior.uv_coords[v][k]);
                }
            }
        }
        let mut texels = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let uv = [
                    uv_min[0] + (j as f64 + 0.5) / size as f64 * (uv_max[0] - uv_min[0]),
                    uv_min[1] + (i as f64 + 0.5) / size as f64 * (uv_max[1] - uv_min[1]),
                ];
                let hit = prior.mouth_region.iter().find_map(|&t| {
                    let [a, b, c] = prior.triangles[t].map(|v| prior.uv_coords[v]);
                    uv_barycentric(uv, a, b, c).map(|bary| (t, bary))
                });
                texels.push(hit);
            }
        }
        let covered: Vec<usize> = (0..texels.len()).filter(|&i| texels[i].is_some()).collect();
        if covered.is_empty() {
            return Err(Error::InvalidConfig("mouth chart covers no texel".into()));
        }
        let source = (0..texels.len())
            .map(|i| {
                if texels[i].is_some() {
                    return i;
                }
                let (y, x) = ((i / size) as i64, (i % size) as i64);
                *covered
                    .iter()
                    .min_by_key(|&&c| {
                        let (cy, cx) = ((c / size) as i64, (c % size) as i64);
                        (cy - y).pow(2) + (cx - x).pow(2)
                    })
                    .expect("at least one covered texel")
            })
            .collect();
        Ok(Self {
            size,
            uv_min,
            uv_max,
            texels,
            source,
            mouth_triangles: prior.mouth_region.clone(),
        })
    }

    /// Texels filled from their nearest covered neighbor.
    pub fn inpainted(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.texels.len()).filter(|&i| self.texels[i].is_none())
    }

    /// Texture pixel coordinates (pixel centers at +0.5) of a UV point.
    pub fn texture_coords(&self, uv: [f64; 2]) -> (f64, f64) {
        let s = self.size as f64;
        (
            (uv[0] - self.uv_min[0]) / (self.uv_max[0] - self.uv_min[0]) * s,
            (uv[1] - self.uv_min[1]) / (self.uv_max[1] - self.uv_min[1]) * s,
        )
    }

    /// Fraction of mouth triangles in front of the camera and facing it.
    pub fn visible_fraction(&self, prior: &FacePrior, surface: &SurfaceState) -> f64 {
        let front = self
            .mouth_triangles
            .iter()
            .filter(|&&t| {
                let c = prior.triangles[t].map(|v| surface.camera_positions[v]);
                c.iter().all(|v| v.z > Z_NEAR) && (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&c[0]) < 0.0
            })
            .count();
        front as f64 / self.mouth_triangles.len() as f64
    }
}

/// Samples `frame` at the projection of every texel's surface point.
/// Uncovered texels copy their nearest covered texel.
pub fn normalize_mouth(prior: &FacePrior, chart: &MouthChart, frame: &Frame, params: &SceneParams) -> Result<Frame> {
    let surface = SurfaceState::new(prior, params)?;
    let visible = chart.visible_fraction(prior, &surface);
    if visible < MIN_MOUTH_VISIBILITY {
        return Err(Error::MouthHidden(visible));
    }
    let mut tex = Frame::new(chart.size, chart.size);
    for (i, texel) in chart.texels.iter().enumerate() {
        let Some((t, b)) = texel else { continue };
        let p = prior.triangles[*t]
            .iter()
            .zip(b)
            .fold(crate::Vec3::zeros(), |acc, (&v, w)| acc + surface.camera_positions[v] * *w);
        let c = match params.camera.project(&p) {
            Some(q) => sample_bilinear(frame, q.x, q.y),
            None => [0.0; 3],
        };
        tex.set_pixel(i, c);
    }
    for i in chart.inpainted() {
        tex.set_pixel(i, tex.pixel(chart.source[i]));
    }
    Ok(tex)
}
