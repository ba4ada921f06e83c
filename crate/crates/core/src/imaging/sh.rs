//! Real spherical harmonics, bands 0–2, in the order
//! `(l, m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2)`:
//!
//! ```text
//! B0 = 1/(2√π)
//! B1 = √(3/4π)·y        B2 = √(3/4π)·z        B3 = √(3/4π)·x
//! B4 = ½√(15/π)·xy      B5 = ½√(15/π)·yz      B6 = ¼√(5/π)·(3z² − 1)
//! B7 = ½√(15/π)·xz      B8 = ¼√(15/π)·(x² − y²)
//! ```
//!
//! Shading is Lambertian: `out_c = albedo_c · Σ_j γ_{c,j}·B_j(n)`. The
//! illumination vector stores the nine coefficients of red, then green, then
//! blue.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::Vec3;

pub const SH_COEFFS: usize = 9;

fn constants() -> [f64; 5] {
    [
        0.5 / PI.sqrt(),
        (3.0 / (4.0 * PI)).sqrt(),
        0.5 * (15.0 / PI).sqrt(),
        0.25 * (5.0 / PI).sqrt(),
        0.25 * (15.0 / PI).sqrt(),
    ]
}

pub fn sh_basis(n: &Vec3) -> [f64; SH_COEFFS] {
    let [c0, c1, c2, c3, c4] = constants();
    let (x, y, z) = (n.x, n.y, n.z);
    [
        c0,
        c1 * y,
        c1 * z,
        c1 * x,
        c2 * x * y,
        c2 * y * z,
        c3 * (3.0 * z * z - 1.0),
        c2 * x * z,
        c4 * (x * x - y * y),
    ]
}

/// Gradient of each basis polynomial with respect to `(x, y, z)`.
pub fn sh_basis_gradient(n: &Vec3) -> [[f64; 3]; SH_COEFFS] {
    let [_, c1, c2, c3, c4] = constants();
    let (x, y, z) = (n.x, n.y, n.z);
    [
        [0.0, 0.0, 0.0],
        [0.0, c1, 0.0],
        [0.0, 0.0, c1],
        [c1, 0.0, 0.0],
        [c2 * y, c2 * x, 0.0],
        [0.0, c2 * z, c2 * y],
        [0.0, 0.0, 6.0 * c3 * z],
        [c2 * z, 0.0, c2 * x],
        [2.0 * c4 * x, -2.0 * c4 * y, 0.0],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Illumination(pub [f64; 27]);

impl Default for Illumination {
    fn default() -> Self {
        Self::ambient([1.0; 3])
    }
}

impl Illumination {
    /// Constant irradiance `level_c` in every direction.
    pub fn ambient(level: [f64; 3]) -> Self {
        let b0 = constants()[0];
        let mut g = [0.0; 27];
        for c in 0..3 {
            g[c * SH_COEFFS] = level[c] / b0;
        }
        Self(g)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.0[c * SH_COEFFS..(c + 1) * SH_COEFFS]
    }

    /// Clamps each channel's band-0 coefficient at zero.
    pub fn project_nonnegative_ambient(&mut self) {
        for c in 0..3 {
            let k = c * SH_COEFFS;
            if self.0[k] < 0.0 {
                self.0[k] = 0.0;
            }
        }
    }
}

/// Per-channel irradiance `Σ_j γ_{c,j}·B_j(n)`.
pub fn sh_irradiance(n: &Vec3, gamma: &Illumination) -> [f64; 3] {
    let b = sh_basis(n);
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = gamma.channel(c).iter().zip(&b).map(|(g, b)| g * b).sum();
    }
    out
}

pub fn sh_shade(n: &Vec3, albedo: &[f64; 3], gamma: &Illumination) -> [f64; 3] {
    let irr = sh_irradiance(n, gamma);
    [albedo[0] * irr[0], albedo[1] * irr[1], albedo[2] * irr[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    fn random_gamma(rng: &mut ChaCha8Rng) -> Illumination {
        let mut g = [0.0; 27];
        for v in g.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        Illumination(g)
    }

    /// Explicit polynomial formulas with the numeric constants written out.
    fn oracle_basis(n: &Vec3) -> [f64; 9] {
        let (x, y, z) = (n.x, n.y, n.z);
        let pi = std::f64::consts::PI;
        [
            1.0 / (2.0 * pi.sqrt()),
            (3.0f64).sqrt() / (2.0 * pi.sqrt()) * y,
            (3.0f64).sqrt() / (2.0 * pi.sqrt()) * z,
            (3.0f64).sqrt() / (2.0 * pi.sqrt()) * x,
            (15.0f64).sqrt() / (2.0 * pi.sqrt()) * x * y,
            (15.0f64).sqrt() / (2.0 * pi.sqrt()) * y * z,
            (5.0f64).sqrt() / (4.0 * pi.sqrt()) * (2.0 * z * z - x * x - y * y),
            (15.0f64).sqrt() / (2.0 * pi.sqrt()) * x * z,
            (15.0f64).sqrt() / (4.0 * pi.sqrt()) * (x * x - y * y),
        ]
    }

    #[test]
    fn constant_illumination_returns_albedo() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gamma = Illumination::ambient([1.0; 3]);
        for _ in 0..20 {
            let n = random_unit(&mut rng);
            let out = sh_shade(&n, &[0.2, 0.5, 0.9], &gamma);
            for (o, a) in out.iter().zip([0.2, 0.5, 0.9]) {
                assert!((o - a).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_albedo_is_black() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = sh_shade(&random_unit(&mut rng), &[0.0; 3], &random_gamma(&mut rng));
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn matches_explicit_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = random_unit(&mut rng);
            let gamma = random_gamma(&mut rng);
            let albedo = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let b = oracle_basis(&n);
            let out = sh_shade(&n, &albedo, &gamma);
            for c in 0..3 {
                let mut want = 0.0;
                for j in 0..9 {
                    want += gamma.0[9 * c + j] * b[j];
                }
                want *= albedo[c];
                assert!((out[c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = random_unit(&mut rng);
        let g = sh_basis_gradient(&n);
        let h = 1e-6;
        for k in 0..3 {
            let mut np = n;
            let mut nm = n;
            np[k] += h;
            nm[k] -= h;
            let bp = sh_basis(&np);
            let bm = sh_basis(&nm);
            for j in 0..9 {
                assert!(((bp[j] - bm[j]) / (2.0 * h) - g[j][k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn shading_is_linear_in_gamma_and_albedo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = random_unit(&mut rng);
        let g1 = random_gamma(&mut rng);
        let g2 = random_gamma(&mut rng);
        let mut gs = [0.0; 27];
        for i in 0..27 {
            gs[i] = g1.0[i] + g2.0[i];
        }
        let a = [0.3, 0.6, 0.1];
        let s = sh_shade(&n, &a, &Illumination(gs));
        let s1 = sh_shade(&n, &a, &g1);
        let s2 = sh_shade(&n, &a, &g2);
        for c in 0..3 {
            assert!((s[c] - s1[c] - s2[c]).abs() < 1e-12);
        }
        let a2 = [0.1, 0.1, 0.5];
        let sum = sh_shade(&n, &[a[0] + a2[0], a[1] + a2[1], a[2] + a2[2]], &g1);
        let p = sh_shade(&n, &a2, &g1);
        for c in 0..3 {
            assert!((sum[c] - s1[c] - p[c]).abs() < 1e-12);
        }
    }
}
