//! Linear face prior: `geometry = mean_shape + E_id·α + E_exp·δ` and
//! `albedo = mean_albedo + E_alb·β`, plus a deterministic synthetic prior
//! generator.
//!
//! Coefficients are unnormalized; the standard deviations only enter the
//! statistical regularizer.
//!
//! # Synthetic prior construction
//!
//! The base mesh is a regular `(n+1)×(n+1)` vertex grid over the UV square,
//! wrapped onto a half ellipsoid facing the camera (`-z` in model space, `y`
//! pointing down) with a Gaussian nose bump. Every basis column starts as a
//! sum of a few random low-frequency cosine fields over UV with random 3D
//! amplitudes, and the columns of each basis are orthonormalized with two
//! passes of modified Gram-Schmidt. Expression columns are additionally
//! weighted toward the mouth and share a fixed fraction of their direction
//! with the identity span, so that a single frame cannot fully separate
//! identity from expression. Standard deviations decay geometrically and are
//! scaled so the worst-case displacement at ±3σ stays bounded.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{ContainerReader, ContainerWriter};
use crate::{Error, Result, Vec3};

pub const PRIOR_MAGIC: &[u8] = b"F2FPRIOR1";

/// Positions of the four named mouth landmarks inside `landmark_vertices`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouthLandmarks {
    pub left_corner: usize,
    pub right_corner: usize,
    pub upper_mid: usize,
    pub lower_mid: usize,
}

impl MouthLandmarks {
    pub fn as_array(&self) -> [usize; 4] {
        [
            self.left_corner,
            self.right_corner,
            self.upper_mid,
            self.lower_mid,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FacePrior {
    pub n_vertices: usize,
    pub mean_shape: DVector<f64>,
    pub mean_albedo: DVector<f64>,
    pub basis_id: DMatrix<f64>,
    pub basis_alb: DMatrix<f64>,
    pub basis_exp: DMatrix<f64>,
    pub sigma_id: DVector<f64>,
    pub sigma_alb: DVector<f64>,
    pub sigma_exp: DVector<f64>,
    pub triangles: Vec<[usize; 3]>,
    pub landmark_vertices: Vec<usize>,
    pub mouth_landmarks: MouthLandmarks,
    /// Triangle indices forming the mouth region.
    pub mouth_region: Vec<usize>,
    pub uv_coords: Vec<[f64; 2]>,
    vertex_triangles: Vec<Vec<usize>>,
}

/// Raw fields of a prior, validated by [`FacePrior::from_parts`].
pub struct PriorParts {
    pub mean_shape: DVector<f64>,
    pub mean_albedo: DVector<f64>,
    pub basis_id: DMatrix<f64>,
    pub basis_alb: DMatrix<f64>,
    pub basis_exp: DMatrix<f64>,
    pub sigma_id: DVector<f64>,
    pub sigma_alb: DVector<f64>,
    pub sigma_exp: DVector<f64>,
    pub triangles: Vec<[usize; 3]>,
    pub landmark_vertices: Vec<usize>,
    pub mouth_landmarks: MouthLandmarks,
    pub mouth_region: Vec<usize>,
    pub uv_coords: Vec<[f64; 2]>,
}

impl FacePrior {
    pub fn from_parts(p: PriorParts) -> Result<Self> {
        let rows = p.mean_shape.len();
        if rows == 0 || rows % 3 != 0 {
            return Err(Error::InvalidConfig(format!(
                "mean shape length {rows} is not a positive multiple of 3"
            )));
        }
        let n = rows / 3;
        let check_len = |what, expected, got| {
            if expected != got {
                Err(Error::DimensionMismatch {
                    what,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check_len("mean_albedo", rows, p.mean_albedo.len())?;
        check_len("basis_id rows", rows, p.basis_id.nrows())?;
        check_len("basis_alb rows", rows, p.basis_alb.nrows())?;
        check_len("basis_exp rows", rows, p.basis_exp.nrows())?;
        check_len("sigma_id", p.basis_id.ncols(), p.sigma_id.len())?;
        check_len("sigma_alb", p.basis_alb.ncols(), p.sigma_alb.len())?;
        check_len("sigma_exp", p.basis_exp.ncols(), p.sigma_exp.len())?;
        check_len("uv_coords", n, p.uv_coords.len())?;

        let all_finite = p.mean_shape.iter().all(|v| v.is_finite())
            && p.mean_albedo.iter().all(|v| v.is_finite())
            && p.basis_id.iter().all(|v| v.is_finite())
            && p.basis_alb.iter().all(|v| v.is_finite())
            && p.basis_exp.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("face prior"));
        }
        for s in p
            .sigma_id
            .iter()
            .chain(p.sigma_alb.iter())
            .chain(p.sigma_exp.iter())
        {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::InvalidConfig(
                    "standard deviations must be strictly positive".into(),
                ));
            }
        }
        if p.triangles.is_empty() {
            return Err(Error::InvalidConfig("triangle list is empty".into()));
        }
        if p.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::InvalidConfig("triangle index out of range".into()));
        }
        if p.landmark_vertices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidConfig("landmark vertex out of range".into()));
        }
        if p
            .mouth_landmarks
            .as_array()
            .iter()
            .any(|&i| i >= p.landmark_vertices.len())
        {
            return Err(Error::InvalidConfig("mouth landmark out of range".into()));
        }
        if p.mouth_region.iter().any(|&t| t >= p.triangles.len()) {
            return Err(Error::InvalidConfig("mouth triangle out of range".into()));
        }

        let mut vertex_triangles = vec![Vec::new(); n];
        for (t, tri) in p.triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }

        Ok(Self {
            n_vertices: n,
            mean_shape: p.mean_shape,
            mean_albedo: p.mean_albedo,
            basis_id: p.basis_id,
            basis_alb: p.basis_alb,
            basis_exp: p.basis_exp,
            sigma_id: p.sigma_id,
            sigma_alb: p.sigma_alb,
            sigma_exp: p.sigma_exp,
            triangles: p.triangles,
            landmark_vertices: p.landmark_vertices,
            mouth_landmarks: p.mouth_landmarks,
            mouth_region: p.mouth_region,
            uv_coords: p.uv_coords,
            vertex_triangles,
        })
    }

    pub fn d_id(&self) -> usize {
        self.basis_id.ncols()
    }

    pub fn d_alb(&self) -> usize {
        self.basis_alb.ncols()
    }

    pub fn d_exp(&self) -> usize {
        self.basis_exp.ncols()
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> &[Vec<usize>] {
        &self.vertex_triangles
    }

    /// Vertex indices of the four mouth landmarks (left, right, upper, lower).
    pub fn mouth_landmark_vertices(&self) -> [usize; 4] {
        self.mouth_landmarks
            .as_array()
            .map(|i| self.landmark_vertices[i])
    }

    /// `mean_shape + E_id·α + E_exp·δ`.
    pub fn eval_geometry(&self, alpha: &DVector<f64>, delta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("alpha", self.d_id(), alpha.len())?;
        check_dim("delta", self.d_exp(), delta.len())?;
        let mut out = self.mean_shape.clone();
        out.gemv(1.0, &self.basis_id, alpha, 1.0);
        out.gemv(1.0, &self.basis_exp, delta, 1.0);
        Ok(out)
    }

    /// `mean_albedo + E_alb·β`.
    pub fn eval_albedo(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("beta", self.d_alb(), beta.len())?;
        let mut out = self.mean_albedo.clone();
        out.gemv(1.0, &self.basis_alb, beta, 1.0);
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut c = ContainerWriter::new(w, PRIOR_MAGIC)?;
        c.usize(self.n_vertices)?;
        c.usize(self.d_id())?;
        c.usize(self.d_alb())?;
        c.usize(self.d_exp())?;
        c.usize(self.triangles.len())?;
        c.usize(self.landmark_vertices.len())?;
        c.usize(self.mouth_region.len())?;
        c.f64s(self.mean_shape.as_slice())?;
        c.f64s(self.mean_albedo.as_slice())?;
        for m in [&self.basis_id, &self.basis_alb, &self.basis_exp] {
            for r in 0..m.nrows() {
                for col in 0..m.ncols() {
                    c.f64(m[(r, col)])?;
                }
            }
        }
        c.f64s(self.sigma_id.as_slice())?;
        c.f64s(self.sigma_alb.as_slice())?;
        c.f64s(self.sigma_exp.as_slice())?;
        for t in &self.triangles {
            c.usizes(t)?;
        }
        c.usizes(&self.landmark_vertices)?;
        c.usizes(&self.mouth_landmarks.as_array())?;
        c.usizes(&self.mouth_region)?;
        for uv in &self.uv_coords {
            c.f64s(uv)?;
        }
        c.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut c = ContainerReader::new(r, PRIOR_MAGIC)?;
        let n = c.usize()?;
        let d_id = c.usize()?;
        let d_alb = c.usize()?;
        let d_exp = c.usize()?;
        let n_tri = c.usize()?;
        let n_lmk = c.usize()?;
        let n_mouth = c.usize()?;
        let rows = 3 * n;
        let mean_shape = DVector::from_vec(c.f64s(rows)?);
        let mean_albedo = DVector::from_vec(c.f64s(rows)?);
        let mut read_matrix = |cols: usize| -> Result<DMatrix<f64>> {
            let data = c.f64s(rows * cols)?;
            Ok(DMatrix::from_row_slice(rows, cols, &data))
        };
        let basis_id = read_matrix(d_id)?;
        let basis_alb = read_matrix(d_alb)?;
        let basis_exp = read_matrix(d_exp)?;
        let sigma_id = DVector::from_vec(c.f64s(d_id)?);
        let sigma_alb = DVector::from_vec(c.f64s(d_alb)?);
        let sigma_exp = DVector::from_vec(c.f64s(d_exp)?);
        let tri_flat = c.usizes(3 * n_tri)?;
        let triangles = tri_flat.chunks(3).map(|t| [t[0], t[1], t[2]]).collect();
        let landmark_vertices = c.usizes(n_lmk)?;
        let m = c.usizes(4)?;
        let mouth_region = c.usizes(n_mouth)?;
        let uv_flat = c.f64s(2 * n)?;
        let uv_coords = uv_flat.chunks(2).map(|p| [p[0], p[1]]).collect();
        c.finish()?;
        Self::from_parts(PriorParts {
            mean_shape,
            mean_albedo,
            basis_id,
            basis_alb,
            basis_exp,
            sigma_id,
            sigma_alb,
            sigma_exp,
            triangles,
            landmark_vertices,
            mouth_landmarks: MouthLandmarks {
                left_corner: m[0],
                right_corner: m[1],
                upper_mid: m[2],
                lower_mid: m[3],
            },
            mouth_region,
            uv_coords,
        })
    }

    /// Dimensions and metadata for the JSON sidecar.
    pub fn summary(&self) -> PriorSummary {
        PriorSummary {
            magic: String::from_utf8_lossy(PRIOR_MAGIC).into_owned(),
            n_vertices: self.n_vertices,
            n_triangles: self.triangles.len(),
            d_id: self.d_id(),
            d_alb: self.d_alb(),
            d_exp: self.d_exp(),
            landmark_vertices: self.landmark_vertices.clone(),
            mouth_landmarks: self.mouth_landmarks,
            mouth_region: self.mouth_region.clone(),
            sigma_id: self.sigma_id.as_slice().to_vec(),
            sigma_alb: self.sigma_alb.as_slice().to_vec(),
            sigma_exp: self.sigma_exp.as_slice().to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorSummary {
    pub magic: String,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub d_id: usize,
    pub d_alb: usize,
    pub d_exp: usize,
    pub landmark_vertices: Vec<usize>,
    pub mouth_landmarks: MouthLandmarks,
    pub mouth_region: Vec<usize>,
    pub sigma_id: Vec<f64>,
    pub sigma_alb: Vec<f64>,
    pub sigma_exp: Vec<f64>,
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Reads vertex `i` out of a stacked `3n` vector.
pub fn vertex(v: &DVector<f64>, i: usize) -> Vec3 {
    Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Grid cells per side of the UV square.
    pub n_subdiv: usize,
    pub d_id: usize,
    pub d_alb: usize,
    pub d_exp: usize,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            n_subdiv: 24,
            d_id: 80,
            d_alb: 80,
            d_exp: 76,
            seed: 0,
        }
    }
}

impl PriorConfig {
    /// Small dimensions used by tests and the example configurations.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_subdiv: 24,
            d_id: 8,
            d_alb: 8,
            d_exp: 12,
            seed,
        }
    }
}

// Half-ellipsoid radii and angular extent of the synthetic face.
const FACE_RADII: [f64; 3] = [0.75, 1.0, 0.6];
const MAX_LONGITUDE: f64 = 65.0 * std::f64::consts::PI / 180.0;
const MAX_LATITUDE: f64 = 55.0 * std::f64::consts::PI / 180.0;
const MOUTH_CENTER: [f64; 2] = [0.5, 0.72];
const MOUTH_RADII: [f64; 2] = [0.17, 0.075];
const SIGMA_DECAY: f64 = 0.85;
// Worst-case displacement / color change at ±3σ summed over all columns.
const ID_DISPLACEMENT_BUDGET: f64 = 0.10;
const EXP_DISPLACEMENT_BUDGET: f64 = 0.08;
const ALBEDO_BUDGET: f64 = 0.25;
// Fraction of each expression column drawn from the identity span.
const EXP_ID_OVERLAP: f64 = 0.6;

fn gaussian_bump(u: f64, v: f64, cu: f64, cv: f64, su: f64, sv: f64) -> f64 {
    let du = (u - cu) / su;
    let dv = (v - cv) / sv;
    (-0.5 * (du * du + dv * dv)).exp()
}

fn base_vertex(u: f64, v: f64) -> Vec3 {
    let phi = (u - 0.5) * 2.0 * MAX_LONGITUDE;
    let theta = (v - 0.5) * 2.0 * MAX_LATITUDE;
    let [a, b, c] = FACE_RADII;
    let nose = 0.18 * gaussian_bump(u, v, 0.5, 0.5, 0.07, 0.11);
    Vec3::new(
        a * theta.cos() * phi.sin(),
        b * theta.sin(),
        -c * theta.cos() * phi.cos() - nose,
    )
}

fn base_albedo(u: f64, v: f64) -> [f64; 3] {
    let mut rgb = [0.70, 0.52, 0.42];
    let mut mix = |target: [f64; 3], w: f64| {
        for c in 0..3 {
            rgb[c] = rgb[c] * (1.0 - w) + target[c] * w;
        }
    };
    // cheeks
    mix([0.78, 0.48, 0.42], 0.5 * gaussian_bump(u, v, 0.27, 0.58, 0.08, 0.08));
    mix([0.78, 0.48, 0.42], 0.5 * gaussian_bump(u, v, 0.73, 0.58, 0.08, 0.08));
    // brows and eyes
    for cu in [0.33, 0.67] {
        mix([0.30, 0.22, 0.18], 0.8 * gaussian_bump(u, v, cu, 0.28, 0.08, 0.025));
        mix([0.35, 0.30, 0.30], 0.7 * gaussian_bump(u, v, cu, 0.38, 0.05, 0.03));
    }
    // lips
    mix(
        [0.62, 0.30, 0.30],
        0.85 * gaussian_bump(u, v, MOUTH_CENTER[0], MOUTH_CENTER[1], 0.11, 0.045),
    );
    rgb
}

/// A smooth random displacement (or color) field sampled at every vertex.
fn smooth_field(rng: &mut ChaCha8Rng, uv: &[[f64; 2]], weight: impl Fn(f64, f64) -> f64) -> DVector<f64> {
    const TERMS: usize = 5;
    let mut terms = Vec::with_capacity(TERMS);
    for _ in 0..TERMS {
        let fu = rng.random_range(0..=2) as f64;
        let fv = rng.random_range(0..=2) as f64;
        let pu = rng.random_range(0.0..std::f64::consts::TAU);
        let pv = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        terms.push((fu, fv, pu, pv, amp));
    }
    let mut out = DVector::zeros(3 * uv.len());
    for (i, &[u, v]) in uv.iter().enumerate() {
        let w = weight(u, v);
        for &(fu, fv, pu, pv, amp) in &terms {
            let s = (std::f64::consts::PI * fu * u + pu).cos() * (std::f64::consts::PI * fv * v + pv).cos();
            for c in 0..3 {
                out[3 * i + c] += w * s * amp[c];
            }
        }
    }
    out
}

/// Projects `x` onto the orthogonal complement of `basis` (two MGS passes)
/// and normalizes it. Returns `None` when `x` is numerically dependent.
fn orthonormalize_against(x: &mut DVector<f64>, basis: &[DVector<f64>]) -> Option<()> {
    let start = x.norm();
    if start == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let d = b.dot(x);
            x.axpy(-d, b, 1.0);
        }
    }
    let n = x.norm();
    if n < 1e-6 * start {
        return None;
    }
    *x /= n;
    Some(())
}

fn orthonormal_basis(
    rng: &mut ChaCha8Rng,
    dims: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(dims);
    let mut failures = 0;
    while cols.len() < dims {
        let mut x = draw(rng);
        if orthonormalize_against(&mut x, &cols).is_some() {
            cols.push(x);
        } else {
            failures += 1;
            if failures > 100 {
                return Err(Error::InvalidConfig(
                    "could not draw independent basis columns".into(),
                ));
            }
        }
    }
    Ok(cols)
}

fn max_vertex_norm(col: &DVector<f64>) -> f64 {
    col.as_slice()
        .chunks(3)
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max)
}

fn max_abs(col: &DVector<f64>) -> f64 {
    col.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Geometric sigma sequence scaled so that `Σ 3σ_i·size(col_i) = budget`.
fn decaying_sigmas(cols: &[DVector<f64>], budget: f64, size: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    let raw: Vec<f64> = (0..cols.len()).map(|i| SIGMA_DECAY.powi(i as i32)).collect();
    let worst: f64 = raw.iter().zip(cols).map(|(r, c)| 3.0 * r * size(c)).sum();
    let scale = budget / worst;
    DVector::from_iterator(raw.len(), raw.iter().map(|r| r * scale))
}

fn stack(cols: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

fn nearest_vertex(uv: &[[f64; 2]], target: [f64; 2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in uv.iter().enumerate() {
        let d = (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Builds a deterministic synthetic prior.
pub fn synth_prior(cfg: &PriorConfig) -> Result<FacePrior> {
    if cfg.d_id == 0 || cfg.d_alb == 0 || cfg.d_exp == 0 {
        return Err(Error::InvalidConfig("prior dimensions must be >= 1".into()));
    }
    if cfg.n_subdiv < 8 {
        return Err(Error::InvalidConfig(
            "n_subdiv must be at least 8 to separate the mouth landmarks".into(),
        ));
    }
    let side = cfg.n_subdiv + 1;
    let n = side * side;
    let max_dims = n / 4;
    for (name, d) in [("d_id", cfg.d_id), ("d_alb", cfg.d_alb), ("d_exp", cfg.d_exp)] {
        if d > max_dims {
            return Err(Error::InvalidConfig(format!(
                "{name}={d} exceeds the {max_dims} smooth modes supported by n_subdiv={}",
                cfg.n_subdiv
            )));
        }
    }

    let mut uv = Vec::with_capacity(n);
    for i in 0..side {
        for j in 0..side {
            uv.push([j as f64 / cfg.n_subdiv as f64, i as f64 / cfg.n_subdiv as f64]);
        }
    }

    let mut mean_shape = DVector::zeros(3 * n);
    let mut mean_albedo = DVector::zeros(3 * n);
    for (i, &[u, v]) in uv.iter().enumerate() {
        let p = base_vertex(u, v);
        let a = base_albedo(u, v);
        for c in 0..3 {
            mean_shape[3 * i + c] = p[c];
            mean_albedo[3 * i + c] = a[c];
        }
    }

    // Two front-facing triangles per grid cell (normals toward -z).
    let mut triangles = Vec::with_capacity(2 * cfg.n_subdiv * cfg.n_subdiv);
    for i in 0..cfg.n_subdiv {
        for j in 0..cfg.n_subdiv {
            let a = i * side + j;
            let b = a + 1;
            let c = a + side;
            let d = c + 1;
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }

    let mouth_region: Vec<usize> = triangles
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let cu = (uv[t[0]][0] + uv[t[1]][0] + uv[t[2]][0]) / 3.0;
            let cv = (uv[t[0]][1] + uv[t[1]][1] + uv[t[2]][1]) / 3.0;
            let du = (cu - MOUTH_CENTER[0]) / MOUTH_RADII[0];
            let dv = (cv - MOUTH_CENTER[1]) / MOUTH_RADII[1];
            du * du + dv * dv <= 1.0
        })
        .map(|(i, _)| i)
        .collect();

    let mouth_targets = [
        [MOUTH_CENTER[0] - 0.15, MOUTH_CENTER[1]],
        [MOUTH_CENTER[0] + 0.15, MOUTH_CENTER[1]],
        [MOUTH_CENTER[0], MOUTH_CENTER[1] - 0.045],
        [MOUTH_CENTER[0], MOUTH_CENTER[1] + 0.045],
    ];
    let mut landmark_vertices = Vec::new();
    for k in 0..6 {
        for l in 0..6 {
            let target = [0.1 + 0.16 * l as f64, 0.1 + 0.16 * k as f64];
            let v = nearest_vertex(&uv, target);
            if !landmark_vertices.contains(&v) {
                landmark_vertices.push(v);
            }
        }
    }
    let mut mouth_idx = [0usize; 4];
    for (slot, target) in mouth_idx.iter_mut().zip(mouth_targets) {
        let v = nearest_vertex(&uv, target);
        *slot = match landmark_vertices.iter().position(|&x| x == v) {
            Some(p) => p,
            None => {
                landmark_vertices.push(v);
                landmark_vertices.len() - 1
            }
        };
    }
    let distinct: std::collections::BTreeSet<usize> = mouth_idx.iter().copied().collect();
    if distinct.len() != 4 {
        return Err(Error::InvalidConfig(
            "mesh too coarse: mouth landmarks collapse onto shared vertices".into(),
        ));
    }
    if landmark_vertices.len() < 30 {
        return Err(Error::InvalidConfig("mesh too coarse for 30 landmarks".into()));
    }

    // Named sub-streams keep each basis independent of the others' sizes.
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(k);
        r
    };
    let uv_ref = &uv;
    let mut rng_id = stream(1);
    let id_cols = orthonormal_basis(&mut rng_id, cfg.d_id, |r| smooth_field(r, uv_ref, |_, _| 1.0))?;
    let mut rng_alb = stream(2);
    let alb_cols = orthonormal_basis(&mut rng_alb, cfg.d_alb, |r| smooth_field(r, uv_ref, |_, _| 1.0))?;
    let mut rng_exp = stream(3);
    let mouth_weight = |u: f64, v: f64| 0.35 + gaussian_bump(u, v, MOUTH_CENTER[0], MOUTH_CENTER[1], 0.15, 0.12);
    let id_ref = &id_cols;
    let exp_cols = orthonormal_basis(&mut rng_exp, cfg.d_exp, |r| {
        let own = smooth_field(r, uv_ref, mouth_weight);
        let own = &own / own.norm();
        let mut shared = DVector::zeros(3 * n);
        for c in id_ref {
            shared.axpy(r.random_range(-1.0..1.0), c, 1.0);
        }
        let sn = shared.norm();
        if sn > 0.0 {
            shared /= sn;
        }
        own * (1.0 - EXP_ID_OVERLAP * EXP_ID_OVERLAP).sqrt() + shared * EXP_ID_OVERLAP
    })?;

    let sigma_id = decaying_sigmas(&id_cols, ID_DISPLACEMENT_BUDGET, max_vertex_norm);
    let sigma_exp = decaying_sigmas(&exp_cols, EXP_DISPLACEMENT_BUDGET, max_vertex_norm);
    let sigma_alb = decaying_sigmas(&alb_cols, ALBEDO_BUDGET, max_abs);

    FacePrior::from_parts(PriorParts {
        mean_shape,
        mean_albedo,
        basis_id: stack(&id_cols, 3 * n),
        basis_alb: stack(&alb_cols, 3 * n),
        basis_exp: stack(&exp_cols, 3 * n),
        sigma_id,
        sigma_alb,
        sigma_exp,
        triangles,
        landmark_vertices,
        mouth_landmarks: MouthLandmarks {
            left_corner: mouth_idx[0],
            right_corner: mouth_idx[1],
            upper_mid: mouth_idx[2],
            lower_mid: mouth_idx[3],
        },
        mouth_region,
        uv_coords: uv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn desk() -> FacePrior {
        synth_prior(&PriorConfig::desk(7)).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Naive triple-loop product used as an independent oracle.
    fn naive_matvec(m: &DMatrix<f64>, x: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; m.nrows()];
        for (r, o) in out.iter_mut().enumerate() {
            for c in 0..m.ncols() {
                *o += m[(r, c)] * x[c];
            }
        }
        out
    }

    #[test]
    fn zero_coefficients_give_the_mean() {
        let p = desk();
        let g = p
            .eval_geometry(&DVector::zeros(p.d_id()), &DVector::zeros(p.d_exp()))
            .unwrap();
        assert_eq!(g, p.mean_shape);
        assert_eq!(p.eval_albedo(&DVector::zeros(p.d_alb())).unwrap(), p.mean_albedo);
    }

    #[test]
    fn unit_coefficient_extracts_basis_column() {
        let p = desk();
        let k = 3;
        let mut a = DVector::zeros(p.d_id());
        a[k] = 1.0;
        let g = p.eval_geometry(&a, &DVector::zeros(p.d_exp())).unwrap();
        let expected = &p.mean_shape + p.basis_id.column(k);
        assert!((g - expected).amax() < 1e-15);

        let mut b = DVector::zeros(p.d_alb());
        b[k] = 1.0;
        let alb = p.eval_albedo(&b).unwrap();
        assert!((alb - (&p.mean_albedo + p.basis_alb.column(k))).amax() < 1e-15);
    }

    #[test]
    fn evaluation_matches_naive_matmul() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_vec(&mut rng, p.d_id());
        let d = random_vec(&mut rng, p.d_exp());
        let b = random_vec(&mut rng, p.d_alb());
        let g = p.eval_geometry(&a, &d).unwrap();
        let gi = naive_matvec(&p.basis_id, &a);
        let ge = naive_matvec(&p.basis_exp, &d);
        for r in 0..g.len() {
            let want = p.mean_shape[r] + gi[r] + ge[r];
            assert!((g[r] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        let alb = p.eval_albedo(&b).unwrap();
        let ab = naive_matvec(&p.basis_alb, &b);
        for r in 0..alb.len() {
            let want = p.mean_albedo[r] + ab[r];
            assert!((alb[r] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = desk();
        let err = p.eval_geometry(&DVector::zeros(p.d_id() + 1), &DVector::zeros(p.d_exp()));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(p.eval_albedo(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synth_prior(&PriorConfig::desk(42)).unwrap();
        let b = synth_prior(&PriorConfig::desk(42)).unwrap();
        assert_eq!(a, b);
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        a.write_to(&mut bytes_a).unwrap();
        b.write_to(&mut bytes_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        let c = synth_prior(&PriorConfig::desk(43)).unwrap();
        assert_ne!(a.basis_id, c.basis_id);
    }

    #[test]
    fn bases_are_orthonormal() {
        let p = desk();
        for m in [&p.basis_id, &p.basis_alb, &p.basis_exp] {
            let gram = m.transpose() * m;
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - want).abs() < 1e-10, "gram[{i},{j}]={}", gram[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn expression_basis_has_mouth_energy() {
        let p = desk();
        let mut mouth_vertices: Vec<usize> = p
            .mouth_region
            .iter()
            .flat_map(|&t| p.triangles[t])
            .collect();
        mouth_vertices.sort_unstable();
        mouth_vertices.dedup();
        let energetic = (0..p.d_exp())
            .filter(|&k| {
                let e: f64 = mouth_vertices
                    .iter()
                    .map(|&v| (0..3).map(|c| p.basis_exp[(3 * v + c, k)].powi(2)).sum::<f64>())
                    .sum();
                e > 1e-6
            })
            .count();
        assert!(2 * energetic >= p.d_exp());
    }

    #[test]
    fn metadata_is_consistent() {
        let p = desk();
        assert!(p.landmark_vertices.len() >= 30);
        assert!(!p.mouth_region.is_empty());
        assert!(p.sigma_id.iter().all(|s| *s > 0.0));
        for w in p.sigma_exp.as_slice().windows(2) {
            assert!(w[1] < w[0]);
        }
        // edge-manifold: every undirected edge is shared by at most two triangles
        let mut edges = std::collections::HashMap::new();
        for t in &p.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c <= 2));
        for uv in &p.uv_coords {
            assert!((0.0..=1.0).contains(&uv[0]) && (0.0..=1.0).contains(&uv[1]));
        }
    }

    #[test]
    fn requested_dims_beyond_resolution_fail() {
        let cfg = PriorConfig {
            n_subdiv: 8,
            d_id: 40,
            d_alb: 4,
            d_exp: 4,
            seed: 0,
        };
        assert!(synth_prior(&cfg).is_err());
        let cfg = PriorConfig {
            d_exp: 0,
            ..PriorConfig::desk(0)
        };
        assert!(synth_prior(&cfg).is_err());
    }

    #[test]
    fn albedo_stays_in_range_at_three_sigma() {
        let p = desk();
        // worst case: every coefficient at ±3σ with the sign of each entry
        for r in 0..p.mean_albedo.len() {
            let spread: f64 = (0..p.d_alb())
                .map(|k| 3.0 * p.sigma_alb[k] * p.basis_alb[(r, k)].abs())
                .sum();
            assert!(p.mean_albedo[r] - spread >= -0.5);
            assert!(p.mean_albedo[r] + spread <= 1.5);
        }
    }

    #[test]
    fn triangles_stay_non_degenerate_within_three_sigma() {
        let p = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..40 {
            let a = DVector::from_fn(p.d_id(), |i, _| {
                let s = if trial % 2 == 0 { rng.random_range(-1.0..1.0) } else if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                3.0 * p.sigma_id[i] * s
            });
            let d = DVector::from_fn(p.d_exp(), |i, _| 3.0 * p.sigma_exp[i] * rng.random_range(-1.0..1.0));
            let g = p.eval_geometry(&a, &d).unwrap();
            for t in &p.triangles {
                let e1 = vertex(&g, t[1]) - vertex(&g, t[0]);
                let e2 = vertex(&g, t[2]) - vertex(&g, t[0]);
                assert!(e1.cross(&e2).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn binary_container_round_trips() {
        let p = desk();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..9], PRIOR_MAGIC);
        let q = FacePrior::read_from(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    proptest::proptest! {
        #[test]
        fn geometry_is_affine(seed in 0u64..1000) {
            let p = desk();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a1 = random_vec(&mut rng, p.d_id());
            let a2 = random_vec(&mut rng, p.d_id());
            let d = random_vec(&mut rng, p.d_exp());
            let lhs = p.eval_geometry(&(&a1 + &a2), &d).unwrap();
            let rhs = p.eval_geometry(&a1, &d).unwrap()
                + p.eval_geometry(&a2, &DVector::zeros(p.d_exp())).unwrap()
                - &p.mean_shape;
            proptest::prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
