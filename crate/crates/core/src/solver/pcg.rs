use super::DenseJacobian;
use crate::{Error, Result};

/// Lower bound on Jacobi preconditioner entries.
pub const PRECOND_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgOptions {
    pub iterations: usize,
    /// Stop once `‖r‖ ≤ tol·‖b‖`. Off in the fixed-step regime.
    pub early_exit: Option<f64>,
}

impl PcgOptions {
    pub fn fixed(iterations: usize) -> Self {
        Self {
            iterations,
            early_exit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcgResult {
    pub x: Vec<f64>,
    /// Residual norm `‖b − A·x‖` after each iteration.
    pub residual_norms: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
///
/// Runs exactly `opts.iterations` iterations unless the search direction
/// has no curvature left (`pᵀAp ≤ 0`, e.g. an exactly solved system) or the
/// optional early exit fires.
pub fn pcg_solve<F>(apply: F, rhs: &[f64], precond: &[f64], opts: &PcgOptions) -> Result<PcgResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    if precond.len() != n {
        return Err(Error::DimensionMismatch {
            what: "preconditioner",
            expected: n,
            got: precond.len(),
        });
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCG right-hand side"));
    }
    let inv: Vec<f64> = precond.iter().map(|d| 1.0 / d.max(PRECOND_FLOOR)).collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = dot(rhs, rhs).sqrt();
    let mut history = Vec::with_capacity(opts.iterations);

    for _ in 0..opts.iterations {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite("PCG curvature"));
        }
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let r_norm = dot(&r, &r).sqrt();
        if !r_norm.is_finite() {
            return Err(Error::NonFinite("PCG residual"));
        }
        history.push(r_norm);
        if let Some(tol) = opts.early_exit {
            if r_norm <= tol * b_norm {
                break;
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_next;
    }
    Ok(PcgResult {
        x,
        residual_norms: history,
    })
}

/// Access to `JᵀJ` and `JᵀF` of a least-squares problem without forming
/// `JᵀJ`.
pub trait NormalEquations {
    fn dim(&self) -> usize;
    /// `JᵀF`.
    fn gradient(&self) -> Vec<f64>;
    /// `Jᵀ(J·x)`.
    fn apply_jtj(&self, x: &[f64]) -> Vec<f64>;
    /// `diag(JᵀJ)`.
    fn jacobi_diag(&self) -> Vec<f64>;
}

/// Solves `JᵀJ·Δ = −JᵀF` with PCG.
pub fn gauss_newton_step<S: NormalEquations + ?Sized>(system: &S, opts: &PcgOptions) -> Result<PcgResult> {
    let rhs: Vec<f64> = system.gradient().iter().map(|g| -g).collect();
    pcg_solve(|x| system.apply_jtj(x), &rhs, &system.jacobi_diag(), opts)
}

/// A single dense Jacobian with its residual vector.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub jacobian: DenseJacobian,
    pub residual: Vec<f64>,
}

impl NormalEquations for DenseSystem {
    fn dim(&self) -> usize {
        self.jacobian.cols()
    }

    fn gradient(&self) -> Vec<f64> {
        self.jacobian.tmatvec(&self.residual)
    }

    fn apply_jtj(&self, x: &[f64]) -> Vec<f64> {
        self.jacobian.tmatvec(&self.jacobian.matvec(x))
    }

    fn jacobi_diag(&self) -> Vec<f64> {
        self.jacobian.column_sq_norms()
    }
}
