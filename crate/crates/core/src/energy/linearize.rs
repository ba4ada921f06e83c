//! Residuals and analytic Jacobian against a frozen rasterization.
//!
//! Within one Gauss-Newton step every visible pixel keeps the triangle it
//! was rasterized to. Its barycentric coordinates are those of the point
//! where the pixel-center ray meets the moving triangle:
//!
//! ```text
//! w = [y0 y1 y2]⁻¹ · d,   b = w / Σw,   d = ((u − cx)/fx, (v − cy)/fy, 1)
//! ```
//!
//! with `y_k = R·x_k(α, δ) + t` the camera-space triangle vertices. The
//! residual of pixel `p` is
//!
//! ```text
//! r_p(P) = ρ(b; β) ⊙ irr(R·n(b; α, δ); γ) − C_I(p)
//! ```
//!
//! where `ρ` blends vertex albedos, `n` is the normalized blend of unit
//! area-weighted vertex normals, and `C_I(p)` is the observed pixel. At the
//! linearization point `b` equals the rasterizer's perspective-correct
//! barycentrics, so `r_p` is the plain synthesized-minus-observed color.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{
    energy_from_raster, EnergyReport, EnergyWeights, FrameTarget, IrlsState, ParamBlock, ParamLayout, SceneParams,
    DEFAULT_IRLS_EPSILON,
};
use crate::imaging::{
    rasterize_surface, sh_basis, sh_basis_gradient, CameraIntrinsics, RasterOutput, SurfaceState,
    SH_COEFFS,
};
use crate::model::FacePrior;
use crate::solver::DenseJacobian;
use crate::{Mat3, Result, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizeOptions {
    /// Coefficient blocks whose prior rows are included. Blocks not in the
    /// layout are ignored.
    pub reg_blocks: Vec<ParamBlock>,
    pub irls_epsilon: f64,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self {
            reg_blocks: vec![ParamBlock::Alpha, ParamBlock::Beta, ParamBlock::Delta],
            irls_epsilon: DEFAULT_IRLS_EPSILON,
        }
    }
}

/// Geometry column: which basis, which column, and where it lands.
#[derive(Clone, Copy)]
struct GeoCol {
    exp: bool,
    basis_col: usize,
    col: usize,
}

pub struct Linearization<'a> {
    prior: &'a FacePrior,
    params: SceneParams,
    target: FrameTarget<'a>,
    weights: EnergyWeights,
    layout: ParamLayout,
    surface: SurfaceState,
    raster: RasterOutput,
    irls: IrlsState,
    energy: EnergyReport,
    reg_slots: Vec<(ParamBlock, usize)>,
    geo_cols: Vec<GeoCol>,
    n_col_rows: usize,
    n_lan_rows: usize,
}

impl<'a> Linearization<'a> {
    pub fn new(
        prior: &'a FacePrior,
        params: &SceneParams,
        target: FrameTarget<'a>,
        weights: &EnergyWeights,
        layout: &ParamLayout,
        options: &LinearizeOptions,
    ) -> Result<Self> {
        params.check(prior)?;
        let surface = SurfaceState::new(prior, params)?;
        let mut level = params.clone();
        level.camera = target.level_camera(params);
        let raster = rasterize_surface(prior, &surface, &level, target.frame.width, target.frame.height);
        let energy = energy_from_raster(prior, params, &raster, &target, weights)?;
        let irls = IrlsState::from_raster(&raster, target.frame, options.irls_epsilon);

        let reg_slots = [ParamBlock::Alpha, ParamBlock::Beta, ParamBlock::Delta]
            .into_iter()
            .filter(|b| options.reg_blocks.contains(b))
            .filter_map(|b| layout.slot(b).map(|s| (b, s.offset)))
            .collect();

        let mut geo_cols = Vec::new();
        for (block, exp) in [(ParamBlock::Alpha, false), (ParamBlock::Delta, true)] {
            if let Some(s) = layout.slot(block) {
                geo_cols.extend((0..s.len).map(|i| GeoCol {
                    exp,
                    basis_col: i,
                    col: s.offset + i,
                }));
            }
        }
        let n_col_rows = if weights.w_col > 0.0 { 3 * raster.visible.len() } else { 0 };
        let n_lan_rows = if weights.w_lan > 0.0 { 2 * target.landmarks.len() } else { 0 };

        Ok(Self {
            prior,
            params: params.clone(),
            target,
            weights: *weights,
            layout: layout.clone(),
            surface,
            raster,
            irls,
            energy,
            reg_slots,
            geo_cols,
            n_col_rows,
            n_lan_rows,
        })
    }

    pub fn params(&self) -> &SceneParams {
        &self.params
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn raster(&self) -> &RasterOutput {
        &self.raster
    }

    pub fn irls(&self) -> &IrlsState {
        &self.irls
    }

    /// True objective at the linearization point.
    pub fn energy(&self) -> EnergyReport {
        self.energy
    }

    pub fn residual_len(&self) -> usize {
        self.n_col_rows + self.n_lan_rows + self.reg_slots.iter().map(|(b, _)| b.len(self.prior)).sum::<usize>()
    }

    /// Residual vector at the linearization point.
    pub fn residuals(&self) -> Vec<f64> {
        self.frozen_residuals(&self.params)
            .expect("linearization point has valid dimensions")
    }

    /// Residuals at `params` with visibility, barycentrics and IRLS weights
    /// held at the linearization point.
    pub fn frozen_residuals(&self, params: &SceneParams) -> Result<Vec<f64>> {
        params.check(self.prior)?;
        let surface = SurfaceState::new(self.prior, params)?;
        let cam = self.target.level_camera(params);
        let mut out = vec![0.0; self.residual_len()];
        let (col, rest) = out.split_at_mut(self.n_col_rows);
        col.par_chunks_mut(3).enumerate().for_each(|(i, rows)| {
            let px = self.pixel_state(&surface, params, &cam, i);
            let s = self.color_row_scale(i);
            let observed = self.target.frame.pixel(self.raster.visible[i]);
            for c in 0..3 {
                rows[c] = s * (px.rho[c] * px.irr[c] - observed[c]);
            }
        });
        let (lan, reg) = rest.split_at_mut(self.n_lan_rows);
        if self.n_lan_rows > 0 {
            for (j, obs) in self.target.landmarks.iter().enumerate() {
                let y = params.pose.apply(&surface.positions[self.prior.landmark_vertices[obs.landmark]]);
                if let Some(q) = params.camera.project(&y) {
                    let s = self.landmark_row_scale(j);
                    lan[2 * j] = s * (obs.position[0] - q.x);
                    lan[2 * j + 1] = s * (obs.position[1] - q.y);
                }
            }
        }
        let sw = self.weights.w_reg.sqrt();
        let mut r = 0;
        for (block, _) in &self.reg_slots {
            let (c, sigma) = self.coeffs(params, *block);
            for i in 0..c.len() {
                reg[r] = sw * c[i] / sigma[i];
                r += 1;
            }
        }
        Ok(out)
    }

    fn coeffs<'p>(&'p self, params: &'p SceneParams, block: ParamBlock) -> (&'p [f64], &'a [f64]) {
        match block {
            ParamBlock::Alpha => (params.alpha.as_slice(), self.prior.sigma_id.as_slice()),
            ParamBlock::Beta => (params.beta.as_slice(), self.prior.sigma_alb.as_slice()),
            ParamBlock::Delta => (params.delta.as_slice(), self.prior.sigma_exp.as_slice()),
            _ => unreachable!("only coefficient blocks are regularized"),
        }
    }

    fn color_row_scale(&self, i: usize) -> f64 {
        (self.weights.w_col / self.raster.visible.len() as f64 * self.irls.weight(i)).sqrt()
    }

    fn landmark_row_scale(&self, j: usize) -> f64 {
        let obs = &self.target.landmarks[j];
        (self.weights.w_lan / self.target.landmarks.len() as f64 * obs.confidence).sqrt()
    }

    fn pixel_state(&self, surface: &SurfaceState, params: &SceneParams, cam: &CameraIntrinsics, i: usize) -> PixelState {
        let idx = self.raster.visible[i];
        let tri = self.prior.triangles[self.raster.tri_id[idx] as usize];
        let (px, py) = self.raster.pixel_xy(idx);
        let ray = Vec3::new(
            (px as f64 + 0.5 - cam.cx) / cam.fx,
            (py as f64 + 0.5 - cam.cy) / cam.fy,
            1.0,
        );
        let m = Mat3::from_columns(&[
            surface.camera_positions[tri[0]],
            surface.camera_positions[tri[1]],
            surface.camera_positions[tri[2]],
        ]);
        // a triangle plane through the camera center cannot be intersected;
        // fall back to the rasterized coordinates with no sensitivity
        let (b, w, w_sum, m_inv) = match m.try_inverse() {
            Some(m_inv) => {
                let w = m_inv * ray;
                let w_sum = w.sum();
                (w / w_sum, w, w_sum, m_inv)
            }
            None => {
                let b = Vec3::from(self.raster.bary[idx]);
                (b, b, 1.0, Mat3::zeros())
            }
        };
        let mut nsum = Vec3::zeros();
        let mut rho = [0.0; 3];
        for k in 0..3 {
            nsum += b[k] * surface.normals[tri[k]];
            for c in 0..3 {
                rho[c] += b[k] * surface.albedo[tri[k]][c];
            }
        }
        let nlen = nsum.norm();
        let n_model = nsum / nlen;
        let n_cam = params.pose.rotation * n_model;
        let basis = sh_basis(&n_cam);
        let mut irr = [0.0; 3];
        for (c, o) in irr.iter_mut().enumerate() {
            *o = params.gamma.channel(c).iter().zip(&basis).map(|(g, b)| g * b).sum();
        }
        PixelState {
            tri,
            b,
            w,
            w_sum,
            m_inv,
            ray,
            n_model,
            nlen,
            n_cam,
            rho,
            irr,
            basis,
        }
    }

    fn basis(&self, exp: bool) -> &DMatrix<f64> {
        if exp {
            &self.prior.basis_exp
        } else {
            &self.prior.basis_id
        }
    }

    fn basis_vertex(&self, g: &GeoCol, v: usize) -> Vec3 {
        let m = self.basis(g.exp);
        Vec3::new(m[(3 * v, g.basis_col)], m[(3 * v + 1, g.basis_col)], m[(3 * v + 2, g.basis_col)])
    }

    /// `∂m̂_k/∂θ_g` for geometry column `g` and vertex `k`, stored `[g·n + k]`.
    fn normal_derivs(&self) -> Vec<Vec3> {
        let n = self.prior.n_vertices;
        let s = &self.surface;
        let per_col: Vec<Vec<Vec3>> = self
            .geo_cols
            .par_iter()
            .map(|g| {
                let mut dm = vec![Vec3::zeros(); n];
                for t in &self.prior.triangles {
                    let e1 = s.positions[t[1]] - s.positions[t[0]];
                    let e2 = s.positions[t[2]] - s.positions[t[0]];
                    let d0 = self.basis_vertex(g, t[0]);
                    let de1 = self.basis_vertex(g, t[1]) - d0;
                    let de2 = self.basis_vertex(g, t[2]) - d0;
                    let dc = de1.cross(&e2) + e1.cross(&de2);
                    for &v in t {
                        dm[v] += dc;
                    }
                }
                for (k, d) in dm.iter_mut().enumerate() {
                    let len = s.normals_raw[k].norm();
                    if len > 0.0 {
                        let m = s.normals[k];
                        *d = (*d - m * m.dot(d)) / len;
                    }
                }
                dm
            })
            .collect();
        per_col.concat()
    }

    /// Analytic Jacobian of [`Self::residuals`] with respect to the layout.
    pub fn jacobian(&self) -> DenseJacobian {
        let cols = self.layout.dim();
        let mut jac = DenseJacobian::zeros(self.residual_len(), cols);
        let (col_part, rest) = jac.data_mut().split_at_mut(self.n_col_rows * cols);
        if self.n_col_rows > 0 {
            let cam = self.target.level_camera(&self.params);
            let nd = self.normal_derivs();
            col_part.par_chunks_mut(3 * cols).enumerate().for_each(|(i, rows)| {
                self.pixel_jacobian(&cam, &nd, i, rows, cols);
            });
        }
        let (lan_part, reg_part) = rest.split_at_mut(self.n_lan_rows * cols);
        if self.n_lan_rows > 0 {
            for j in 0..self.target.landmarks.len() {
                self.landmark_jacobian(j, &mut lan_part[2 * j * cols..2 * (j + 1) * cols], cols);
            }
        }
        let sw = self.weights.w_reg.sqrt();
        let mut r = 0;
        for (block, offset) in &self.reg_slots {
            let (_, sigma) = self.coeffs(&self.params, *block);
            for (i, s) in sigma.iter().enumerate() {
                reg_part[r * cols + offset + i] = sw / s;
                r += 1;
            }
        }
        jac
    }

    fn pixel_jacobian(&self, cam: &CameraIntrinsics, normal_derivs: &[Vec3], i: usize, rows: &mut [f64], cols: usize) {
        let p = &self.params;
        let s = &self.surface;
        let px = self.pixel_state(s, p, cam, i);
        let scale = self.color_row_scale(i);
        let r = p.pose.rotation;
        let rt = r.transpose();
        let grads = sh_basis_gradient(&px.n_cam);
        let project_n = |v: Vec3| (v - px.n_model * px.n_model.dot(&v)) / px.nlen;

        // db = l·Δray, where Δray is the perturbation of M·w = ray
        let ones_b = Mat3::from_columns(&[px.b, px.b, px.b]);
        let l = (Mat3::identity() - ones_b) * px.m_inv / px.w_sum;
        // per channel: ∂r_c/∂n_cam and ∂r_c/∂Δray
        let mut gn = [Vec3::zeros(); 3];
        let mut ga = [Vec3::zeros(); 3];
        for c in 0..3 {
            let mut g = Vec3::zeros();
            for (j, gb) in grads.iter().enumerate() {
                g += p.gamma.0[c * SH_COEFFS + j] * Vec3::new(gb[0], gb[1], gb[2]);
            }
            gn[c] = px.rho[c] * g;
            let gn_model = rt * gn[c];
            let q = Vec3::from_fn(|k, _| {
                s.albedo[px.tri[k]][c] * px.irr[c] + gn_model.dot(&project_n(s.normals[px.tri[k]]))
            });
            ga[c] = l.transpose() * q;
        }
        let gn_model: [Vec3; 3] = std::array::from_fn(|c| rt * gn[c]);
        let ga_model: [Vec3; 3] = std::array::from_fn(|c| rt * ga[c]);

        let mut set = |c: usize, col: usize, v: f64| rows[c * cols + col] = scale * v;

        let n = self.prior.n_vertices;
        for (gi, g) in self.geo_cols.iter().enumerate() {
            // Δray = −R·Σ w_k·E_g(v_k); normal moves through Σ b_k·∂m̂_k
            let mut sw = Vec3::zeros();
            let mut dn = Vec3::zeros();
            for k in 0..3 {
                sw += px.w[k] * self.basis_vertex(g, px.tri[k]);
                dn += px.b[k] * normal_derivs[gi * n + px.tri[k]];
            }
            let dn_hat = project_n(dn);
            for c in 0..3 {
                set(c, g.col, -ga_model[c].dot(&sw) + gn_model[c].dot(&dn_hat));
            }
        }
        // R·Σ w_k x_k, the ray point before translation
        let x_bar = px.ray - p.pose.translation * px.w_sum;
        for slot in self.layout.slots() {
            match slot.block {
                ParamBlock::Alpha | ParamBlock::Delta => {}
                ParamBlock::Beta => {
                    let e = &self.prior.basis_alb;
                    for k in 0..slot.len {
                        for c in 0..3 {
                            let d: f64 = (0..3).map(|m| px.b[m] * e[(3 * px.tri[m] + c, k)]).sum();
                            set(c, slot.offset + k, px.irr[c] * d);
                        }
                    }
                }
                ParamBlock::Gamma => {
                    for c in 0..3 {
                        for j in 0..SH_COEFFS {
                            set(c, slot.offset + c * SH_COEFFS + j, px.rho[c] * px.basis[j]);
                        }
                    }
                }
                ParamBlock::Rotation => {
                    for c in 0..3 {
                        // Δray = −e_m × x̄, and the normal turns by e_m × n
                        let v = ga[c].cross(&x_bar) + px.n_cam.cross(&gn[c]);
                        for m in 0..3 {
                            set(c, slot.offset + m, v[m]);
                        }
                    }
                }
                ParamBlock::Translation => {
                    for c in 0..3 {
                        for m in 0..3 {
                            set(c, slot.offset + m, -px.w_sum * ga[c][m]);
                        }
                    }
                }
                ParamBlock::Intrinsics => {
                    // ray in full-resolution terms: ((s·u − cx)/fx, (s·v − cy)/fy, 1)
                    let k = self.params.camera;
                    for c in 0..3 {
                        set(c, slot.offset, -ga[c].x * px.ray.x / k.fx);
                        set(c, slot.offset + 1, -ga[c].y * px.ray.y / k.fy);
                        set(c, slot.offset + 2, -ga[c].x / k.fx);
                        set(c, slot.offset + 3, -ga[c].y / k.fy);
                    }
                }
            }
        }
    }

    fn landmark_jacobian(&self, j: usize, rows: &mut [f64], cols: usize) {
        let p = &self.params;
        let obs = &self.target.landmarks[j];
        let vid = self.prior.landmark_vertices[obs.landmark];
        let rx = p.pose.rotation * self.surface.positions[vid];
        let y = rx + p.pose.translation;
        if p.camera.project(&y).is_none() {
            return;
        }
        let s = self.landmark_row_scale(j);
        let jp = p.camera.project_jacobian(&y);
        let r: Mat3 = p.pose.rotation;
        let put = |rows: &mut [f64], col: usize, dy: Vec3| {
            for a in 0..2 {
                rows[a * cols + col] = -s * (jp[a][0] * dy.x + jp[a][1] * dy.y + jp[a][2] * dy.z);
            }
        };
        for g in &self.geo_cols {
            put(rows, g.col, r * self.basis_vertex(g, vid));
        }
        for slot in self.layout.slots() {
            match slot.block {
                ParamBlock::Rotation => {
                    for m in 0..3 {
                        put(rows, slot.offset + m, Vec3::ith(m, 1.0).cross(&rx));
                    }
                }
                ParamBlock::Translation => {
                    for m in 0..3 {
                        put(rows, slot.offset + m, Vec3::ith(m, 1.0));
                    }
                }
                ParamBlock::Intrinsics => {
                    rows[slot.offset] = -s * y.x / y.z;
                    rows[cols + slot.offset + 1] = -s * y.y / y.z;
                    rows[slot.offset + 2] = -s;
                    rows[cols + slot.offset + 3] = -s;
                }
                _ => {}
            }
        }
    }
}

struct PixelState {
    tri: [usize; 3],
    b: Vec3,
    w: Vec3,
    w_sum: f64,
    m_inv: Mat3,
    ray: Vec3,
    n_model: Vec3,
    nlen: f64,
    n_cam: Vec3,
    rho: [f64; 3],
    irr: [f64; 3],
    basis: [f64; SH_COEFFS],
}
