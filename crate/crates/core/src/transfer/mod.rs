//! Expression transfer in coefficient space.
//!
//! The source's per-triangle deformation gradients (neutral to current) are
//! applied to the target's neutral edges, and the target expression that best
//! reproduces those edges is found by least squares. Target edges are linear
//! in the target expression, so the system matrix `A` (two edges × three
//! coordinates per triangle, one column per expression coefficient) is fixed
//! once the target is known and its pseudo-inverse is precomputed. Only the
//! right-hand side changes per frame.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::container::{ContainerReader, ContainerWriter};
use crate::model::{vertex, FacePrior};
use crate::{Error, Mat3, Result, Vec3};

pub const TRANSFER_MAGIC: &[u8] = b"F2FXFER1";

/// Triangles with area below this keep an identity deformation gradient.
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Singular values below this fraction of the largest are dropped from the
/// pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Building fails when the smallest singular value is below this fraction of
/// the largest.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Spanning edges plus the normal scaled by `1/√‖n‖`, as columns.
pub fn triangle_frame(a: &Vec3, b: &Vec3, c: &Vec3) -> Mat3 {
    let e1 = b - a;
    let e2 = c - a;
    let n = e1.cross(&e2);
    let len = n.norm();
    let n3 = if len > 0.0 { n / len.sqrt() } else { Vec3::zeros() };
    Mat3::from_columns(&[e1, e2, n3])
}

fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationGradients {
    pub matrices: Vec<Mat3>,
    /// Triangles left at identity because their neutral area is degenerate.
    pub degenerate: usize,
}

/// Per-triangle `A_i = V̂·V⁻¹` mapping the neutral source triangle frame to
/// the deformed one.
pub fn deformation_gradients(
    prior: &FacePrior,
    alpha_s: &DVector<f64>,
    delta_n_s: &DVector<f64>,
    delta_s: &DVector<f64>,
) -> Result<DeformationGradients> {
    let neutral = prior.eval_geometry(alpha_s, delta_n_s)?;
    let deformed = prior.eval_geometry(alpha_s, delta_s)?;
    Ok(gradients_between(&prior.triangles, &neutral, &deformed))
}

/// Deformation gradients between two flattened vertex arrays on the same
/// triangulation.
pub fn gradients_between(triangles: &[[usize; 3]], neutral: &DVector<f64>, deformed: &DVector<f64>) -> DeformationGradients {
    let mut degenerate = 0;
    let matrices = triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|v| vertex(neutral, v));
            match neutral_inverse(&a, &b, &c) {
                Some(inv) => {
                    let [da, db, dc] = t.map(|v| vertex(deformed, v));
                    triangle_frame(&da, &db, &dc) * inv
                }
                None => {
                    degenerate += 1;
                    Mat3::identity()
                }
            }
        })
        .collect();
    if degenerate > 0 {
        log::warn!("{degenerate} degenerate source triangles kept at identity");
    }
    DeformationGradients { matrices, degenerate }
}

fn neutral_inverse(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Mat3> {
    if triangle_area(a, b, c) < DEGENERATE_AREA {
        return None;
    }
    triangle_frame(a, b, c).try_inverse()
}

/// Precomputed least-squares operator for one source/target pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferOperator {
    pub alpha_s: DVector<f64>,
    pub alpha_t: DVector<f64>,
    pub delta_n_s: DVector<f64>,
    pub delta_n_t: DVector<f64>,
    /// `6|F| × d_exp`; rows ordered (triangle, edge, coordinate).
    pub a: DMatrix<f64>,
    /// Thin SVD of `a`, singular values descending.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    cache: Cache,
}

/// Everything the per-frame right-hand side needs, so transfers do not touch
/// the prior.
#[derive(Clone, Debug, PartialEq)]
struct Cache {
    triangles: Vec<[usize; 3]>,
    /// Source geometry without expression, flattened.
    source_base: DVector<f64>,
    basis_exp: DMatrix<f64>,
    /// Inverse neutral source frame per triangle; `None` for degenerate ones.
    source_inv: Vec<Option<Mat3>>,
    /// Target neutral spanning edges per triangle.
    target_neutral: Vec<[Vec3; 2]>,
    /// Target spanning edges with zero expression.
    target_base: Vec<[Vec3; 2]>,
}

impl Cache {
    fn new(prior: &FacePrior, alpha_s: &DVector<f64>, alpha_t: &DVector<f64>, delta_n_s: &DVector<f64>, delta_n_t: &DVector<f64>) -> Result<Self> {
        let zero = DVector::zeros(prior.d_exp());
        let source_base = prior.eval_geometry(alpha_s, &zero)?;
        let source_neutral = prior.eval_geometry(alpha_s, delta_n_s)?;
        let target_neutral = prior.eval_geometry(alpha_t, delta_n_t)?;
        let target_base = prior.eval_geometry(alpha_t, &zero)?;
        let edges = |g: &DVector<f64>, t: &[usize; 3]| {
            let [a, b, c] = t.map(|v| vertex(g, v));
            [b - a, c - a]
        };
        let source_inv: Vec<Option<Mat3>> = prior
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| vertex(&source_neutral, v));
                neutral_inverse(&a, &b, &c)
            })
            .collect();
        let degenerate = source_inv.iter().filter(|m| m.is_none()).count();
        if degenerate > 0 {
            log::warn!("{degenerate} degenerate source triangles kept at identity");
        }
        Ok(Self {
            triangles: prior.triangles.clone(),
            source_base,
            basis_exp: prior.basis_exp.clone(),
            source_inv,
            target_neutral: prior.triangles.iter().map(|t| edges(&target_neutral, t)).collect(),
            target_base: prior.triangles.iter().map(|t| edges(&target_base, t)).collect(),
        })
    }

    fn source_vertex(&self, v: usize, delta: &DVector<f64>) -> Vec3 {
        let mut p = vertex(&self.source_base, v);
        for c in 0..3 {
            let row = self.basis_exp.row(3 * v + c);
            p[c] += row.iter().zip(delta.iter()).map(|(e, d)| e * d).sum::<f64>();
        }
        p
    }

    /// Calls `f(row, value)` for every entry of `b`, triangle by triangle.
    fn for_each_rhs(&self, delta_s: &DVector<f64>, mut f: impl FnMut(usize, f64)) {
        for (i, t) in self.triangles.iter().enumerate() {
            let grad = match &self.source_inv[i] {
                Some(inv) => {
                    let [a, b, c] = t.map(|v| self.source_vertex(v, delta_s));
                    triangle_frame(&a, &b, &c) * inv
                }
                None => Mat3::identity(),
            };
            for e in 0..2 {
                let r = grad * self.target_neutral[i][e] - self.target_base[i][e];
                for c in 0..3 {
                    f(6 * i + 3 * e + c, r[c]);
                }
            }
        }
    }
}

/// Column `k` holds the spanning-edge vectors of expression basis column `k`.
fn expression_edge_matrix(prior: &FacePrior) -> DMatrix<f64> {
    let f = prior.triangles.len();
    let mut a = DMatrix::zeros(6 * f, prior.d_exp());
    for k in 0..prior.d_exp() {
        let col = prior.basis_exp.column(k);
        let p = |v: usize| Vec3::new(col[3 * v], col[3 * v + 1], col[3 * v + 2]);
        for (i, t) in prior.triangles.iter().enumerate() {
            let [x, y, z] = t.map(p);
            for (e, edge) in [y - x, z - x].iter().enumerate() {
                for c in 0..3 {
                    a[(6 * i + 3 * e + c, k)] = edge[c];
                }
            }
        }
    }
    a
}

/// Thin SVD with singular values sorted descending.
fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let (u, s, v_t) = (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| s[i]));
    (u, s, v_t)
}

fn pseudo_inverse(u: &DMatrix<f64>, s: &DVector<f64>, v_t: &DMatrix<f64>) -> DMatrix<f64> {
    let cutoff = PINV_CUTOFF * s.max();
    let inv = s.map(|x| if x > cutoff { 1.0 / x } else { 0.0 });
    v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose()
}

fn check_rank(s: &DVector<f64>, v_t: &DMatrix<f64>) -> Result<()> {
    let max = s.max();
    let weak: Vec<String> = (0..s.len())
        .filter(|&i| !(s[i] > RANK_TOLERANCE * max))
        .map(|i| {
            let dir = v_t.row(i);
            let k = dir.iamax_full().1;
            format!("σ_{i}/σ_max = {:.3e} (mostly expression {k})", s[i] / max)
        })
        .collect();
    if weak.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(weak.join(", ")))
    }
}

impl TransferOperator {
    /// Builds the operator for a source identity with neutral expression
    /// `delta_n_s` and a target with `delta_n_t`.
    pub fn build(
        prior: &FacePrior,
        alpha_s: &DVector<f64>,
        delta_n_s: &DVector<f64>,
        alpha_t: &DVector<f64>,
        delta_n_t: &DVector<f64>,
    ) -> Result<Self> {
        let a = expression_edge_matrix(prior);
        let (u, singular_values, v_t) = sorted_svd(&a);
        check_rank(&singular_values, &v_t)?;
        let pinv = pseudo_inverse(&u, &singular_values, &v_t);
        let cache = Cache::new(prior, alpha_s, alpha_t, delta_n_s, delta_n_t)?;
        Ok(Self {
            alpha_s: alpha_s.clone(),
            alpha_t: alpha_t.clone(),
            delta_n_s: delta_n_s.clone(),
            delta_n_t: delta_n_t.clone(),
            a,
            u,
            singular_values,
            v_t,
            pinv,
            cache,
        })
    }

    pub fn d_exp(&self) -> usize {
        self.a.ncols()
    }

    /// `b(δ_S)`: deformation gradients applied to the target neutral edges,
    /// minus the target's expression-free edges.
    pub fn rhs(&self, delta_s: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_delta(delta_s)?;
        let mut b = DVector::zeros(self.a.nrows());
        self.cache.for_each_rhs(delta_s, |r, v| b[r] = v);
        Ok(b)
    }

    /// `A⁺·b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.pinv * b
    }

    /// Target expression whose edges best match the transferred source
    /// deformation. Accumulates `A⁺·b` while `b` is generated, without
    /// storing it.
    pub fn transfer_expression(&self, delta_s: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_delta(delta_s)?;
        let mut out = DVector::zeros(self.d_exp());
        self.cache.for_each_rhs(delta_s, |r, v| out.axpy(v, &self.pinv.column(r), 1.0));
        Ok(out)
    }

    /// `‖A·δ_T − b‖²`.
    pub fn residual(&self, delta_t: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (&self.a * delta_t - b).norm_squared()
    }

    fn check_delta(&self, delta_s: &DVector<f64>) -> Result<()> {
        if delta_s.len() != self.d_exp() {
            return Err(Error::DimensionMismatch {
                what: "source expression",
                expected: self.d_exp(),
                got: delta_s.len(),
            });
        }
        Ok(())
    }

    /// Writes the bound coefficients and the factorization. The per-triangle
    /// caches are rebuilt from the prior on reading.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut c = ContainerWriter::new(w, TRANSFER_MAGIC)?;
        c.usize(self.cache.triangles.len())?;
        c.usize(self.alpha_s.len())?;
        c.usize(self.d_exp())?;
        c.usize(self.singular_values.len())?;
        for v in [&self.alpha_s, &self.alpha_t, &self.delta_n_s, &self.delta_n_t] {
            c.f64s(v.as_slice())?;
        }
        for m in [&self.a, &self.u, &self.v_t, &self.pinv] {
            c.f64s(m.as_slice())?;
        }
        c.f64s(self.singular_values.as_slice())?;
        c.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R, prior: &FacePrior) -> Result<Self> {
        let mut c = ContainerReader::new(r, TRANSFER_MAGIC)?;
        let expect = |what, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Format(format!("{what}: prior has {expected}, file has {got}")))
            }
        };
        let f = c.usize()?;
        expect("triangles", prior.triangles.len(), f)?;
        let d_id = c.usize()?;
        expect("identity dimension", prior.d_id(), d_id)?;
        let d_exp = c.usize()?;
        expect("expression dimension", prior.d_exp(), d_exp)?;
        let rank = c.usize()?;
        expect("singular values", d_exp.min(6 * f), rank)?;
        let alpha_s = DVector::from_vec(c.f64s(d_id)?);
        let alpha_t = DVector::from_vec(c.f64s(d_id)?);
        let delta_n_s = DVector::from_vec(c.f64s(d_exp)?);
        let delta_n_t = DVector::from_vec(c.f64s(d_exp)?);
        let rows = 6 * f;
        let a = DMatrix::from_vec(rows, d_exp, c.f64s(rows * d_exp)?);
        let u = DMatrix::from_vec(rows, rank, c.f64s(rows * rank)?);
        let v_t = DMatrix::from_vec(rank, d_exp, c.f64s(rank * d_exp)?);
        let pinv = DMatrix::from_vec(d_exp, rows, c.f64s(d_exp * rows)?);
        let singular_values = DVector::from_vec(c.f64s(rank)?);
        c.finish()?;
        if a != expression_edge_matrix(prior) {
            return Err(Error::Format("system matrix does not match the prior".into()));
        }
        let cache = Cache::new(prior, &alpha_s, &alpha_t, &delta_n_s, &delta_n_t)?;
        Ok(Self {
            alpha_s,
            alpha_t,
            delta_n_s,
            delta_n_t,
            a,
            u,
            singular_values,
            v_t,
            pinv,
            cache,
        })
    }
}
