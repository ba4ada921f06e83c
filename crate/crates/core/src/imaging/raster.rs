//! Deterministic z-buffered software rasterizer.
//!
//! Triangles are back-face culled in camera space and rasterized at pixel
//! centers with an inclusive edge test. Barycentric coordinates are
//! perspective-correct, so the interpolated surface point of a pixel projects
//! exactly onto its center. Depth ties go to the lower triangle index. Rows
//! are processed in parallel, each row walking its triangles in index order,
//! which makes the result independent of the thread count.

use rayon::prelude::*;

use super::{sh_shade, CameraIntrinsics, Frame, Z_NEAR};
use crate::energy::SceneParams;
use crate::model::{vertex, FacePrior};
use crate::{Result, Vec3};

pub const NO_TRIANGLE: u32 = u32::MAX;

/// Vertex data of the posed model, shared by the rasterizer and the
/// Jacobian assembly.
#[derive(Clone, Debug)]
pub struct SurfaceState {
    /// Model-space positions.
    pub positions: Vec<Vec3>,
    /// Camera-space positions `R·x + t`.
    pub camera_positions: Vec<Vec3>,
    /// Unnormalized area-weighted model-space vertex normals.
    pub normals_raw: Vec<Vec3>,
    /// Unit model-space vertex normals.
    pub normals: Vec<Vec3>,
    pub albedo: Vec<[f64; 3]>,
}

impl SurfaceState {
    pub fn new(prior: &FacePrior, params: &SceneParams) -> Result<Self> {
        let geo = prior.eval_geometry(&params.alpha, &params.delta)?;
        let alb = prior.eval_albedo(&params.beta)?;
        let n = prior.n_vertices;
        let positions: Vec<Vec3> = (0..n).map(|i| vertex(&geo, i)).collect();
        let camera_positions = positions.iter().map(|p| params.pose.apply(p)).collect();
        let mut normals_raw = vec![Vec3::zeros(); n];
        for t in &prior.triangles {
            let e1 = positions[t[1]] - positions[t[0]];
            let e2 = positions[t[2]] - positions[t[0]];
            let c = e1.cross(&e2);
            for &v in t {
                normals_raw[v] += c;
            }
        }
        let normals = normals_raw
            .iter()
            .map(|m| {
                let len = m.norm();
                if len > 0.0 {
                    m / len
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        let albedo = (0..n).map(|i| [alb[3 * i], alb[3 * i + 1], alb[3 * i + 2]]).collect();
        Ok(Self {
            positions,
            camera_positions,
            normals_raw,
            normals,
            albedo,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub back_facing: usize,
    pub behind_camera: usize,
    pub degenerate: usize,
}

#[derive(Clone, Debug)]
pub struct RasterOutput {
    pub width: usize,
    pub height: usize,
    /// Synthesized color, unclamped.
    pub color: Frame,
    /// Camera-space depth, `+∞` where nothing is visible.
    pub depth: Vec<f64>,
    /// Triangle index per pixel or [`NO_TRIANGLE`].
    pub tri_id: Vec<u32>,
    /// Perspective-correct barycentrics, zero where nothing is visible.
    pub bary: Vec<[f64; 3]>,
    /// Row-major indices of covered pixels, ascending.
    pub visible: Vec<usize>,
    pub stats: RasterStats,
}

impl RasterOutput {
    pub fn pixel_xy(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }
}

struct SetupTriangle {
    p: [[f64; 2]; 3],
    inv_z: [f64; 3],
    inv_area: f64,
}

fn edge(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0])
}

/// Renders the model at `params` into a `width`×`height` image.
pub fn rasterize(prior: &FacePrior, params: &SceneParams, width: usize, height: usize) -> Result<RasterOutput> {
    let surface = SurfaceState::new(prior, params)?;
    Ok(rasterize_surface(prior, &surface, params, width, height))
}

pub fn rasterize_surface(
    prior: &FacePrior,
    surface: &SurfaceState,
    params: &SceneParams,
    width: usize,
    height: usize,
) -> RasterOutput {
    let cam: &CameraIntrinsics = &params.camera;
    let mut stats = RasterStats::default();
    let mut setups: Vec<Option<SetupTriangle>> = Vec::with_capacity(prior.triangles.len());
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); height];

    for (ti, t) in prior.triangles.iter().enumerate() {
        let c = [
            surface.camera_positions[t[0]],
            surface.camera_positions[t[1]],
            surface.camera_positions[t[2]],
        ];
        if c.iter().any(|v| v.z <= Z_NEAR) {
            stats.behind_camera += 1;
            setups.push(None);
            continue;
        }
        if (c[1] - c[0]).cross(&(c[2] - c[0])).dot(&c[0]) >= 0.0 {
            stats.back_facing += 1;
            setups.push(None);
            continue;
        }
        let p = c.map(|v| {
            let q = cam.project(&v).expect("depth checked above");
            [q.x, q.y]
        });
        let area = edge(p[0], p[1], p[2]);
        if !area.is_finite() || area.abs() < 1e-12 {
            stats.degenerate += 1;
            setups.push(None);
            continue;
        }
        let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if y0 <= y1 {
            for y in y0 as usize..=y1 as usize {
                rows[y].push(ti as u32);
            }
        }
        setups.push(Some(SetupTriangle {
            p,
            inv_z: [1.0 / c[0].z, 1.0 / c[1].z, 1.0 / c[2].z],
            inv_area: 1.0 / area,
        }));
    }

    let row_results: Vec<Vec<(f64, u32, [f64; 3])>> = rows
        .par_iter()
        .enumerate()
        .map(|(y, tris)| {
            let mut out = vec![(f64::INFINITY, NO_TRIANGLE, [0.0; 3]); width];
            let qy = y as f64 + 0.5;
            for &ti in tris {
                let s = setups[ti as usize].as_ref().expect("binned triangles are set up");
                let min_x = s.p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
                let max_x = s.p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
                let x0 = (min_x - 0.5).ceil().max(0.0);
                let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
                if x0 > x1 {
                    continue;
                }
                for x in x0 as usize..=x1 as usize {
                    let q = [x as f64 + 0.5, qy];
                    let l0 = edge(s.p[1], s.p[2], q) * s.inv_area;
                    let l1 = edge(s.p[2], s.p[0], q) * s.inv_area;
                    let l2 = edge(s.p[0], s.p[1], q) * s.inv_area;
                    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                        continue;
                    }
                    let w = [l0 * s.inv_z[0], l1 * s.inv_z[1], l2 * s.inv_z[2]];
                    let sum = w[0] + w[1] + w[2];
                    let depth = 1.0 / sum;
                    if depth < out[x].0 {
                        out[x] = (depth, ti, [w[0] / sum, w[1] / sum, w[2] / sum]);
                    }
                }
            }
            out
        })
        .collect();

    let n_pix = width * height;
    let mut depth = vec![f64::INFINITY; n_pix];
    let mut tri_id = vec![NO_TRIANGLE; n_pix];
    let mut bary = vec![[0.0; 3]; n_pix];
    let mut visible = Vec::new();
    for (y, row) in row_results.into_iter().enumerate() {
        for (x, (d, t, b)) in row.into_iter().enumerate() {
            if t != NO_TRIANGLE {
                let idx = y * width + x;
                depth[idx] = d;
                tri_id[idx] = t;
                bary[idx] = b;
                visible.push(idx);
            }
        }
    }

    let shaded: Vec<[f64; 3]> = visible
        .par_iter()
        .map(|&idx| {
            let t = prior.triangles[tri_id[idx] as usize];
            let b = bary[idx];
            let (n, albedo) = interpolate_normal_albedo(surface, &t, &b);
            sh_shade(&(params.pose.rotation * n), &albedo, &params.gamma)
        })
        .collect();
    let mut color = Frame::new(width, height);
    for (&idx, c) in visible.iter().zip(shaded) {
        color.set_pixel(idx, c);
    }

    RasterOutput {
        width,
        height,
        color,
        depth,
        tri_id,
        bary,
        visible,
        stats,
    }
}

/// Unit model-space normal and albedo at barycentric `b` of triangle `t`.
pub fn interpolate_normal_albedo(surface: &SurfaceState, t: &[usize; 3], b: &[f64; 3]) -> (Vec3, [f64; 3]) {
    let mut n = Vec3::zeros();
    let mut a = [0.0; 3];
    for k in 0..3 {
        n += b[k] * surface.normals[t[k]];
        for c in 0..3 {
            a[c] += b[k] * surface.albedo[t[k]][c];
        }
    }
    let len = n.norm();
    if len > 0.0 {
        n /= len;
    }
    (n, a)
}
