use serde::{Deserialize, Serialize};

use crate::{Vec2, Vec3};

/// Points at or closer than this depth are culled.
pub const Z_NEAR: f64 = 1e-3;

/// Pinhole intrinsics; the camera looks down `+z` with `y` pointing down and
/// pixel centers at `(x + 0.5, y + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Focal length equal to the image width, principal point at the center.
    pub fn default_for(width: usize, height: usize) -> Self {
        Self {
            fx: width as f64,
            fy: width as f64,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        }
    }

    /// Returns `None` for points at or behind `Z_NEAR`.
    pub fn project(&self, v: &Vec3) -> Option<Vec2> {
        if v.z <= Z_NEAR {
            return None;
        }
        Some(Vec2::new(self.fx * v.x / v.z + self.cx, self.fy * v.y / v.z + self.cy))
    }

    /// ∂(u, v)/∂(x, y, z) at `v`, as two rows.
    pub fn project_jacobian(&self, v: &Vec3) -> [[f64; 3]; 2] {
        let iz = 1.0 / v.z;
        [
            [self.fx * iz, 0.0, -self.fx * v.x * iz * iz],
            [0.0, self.fy * iz, -self.fy * v.y * iz * iz],
        ]
    }

    /// Intrinsics for an image downsampled by `factor` in each direction.
    pub fn downscaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx / factor,
            fy: self.fy / factor,
            cx: self.cx / factor,
            cy: self.cy / factor,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.fx, self.fy, self.cx, self.cy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            fx: a[0],
            fy: a[1],
            cx: a[2],
            cy: a[3],
        }
    }

    pub fn is_valid_for(&self, width: usize, height: usize) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && (0.0..=width as f64).contains(&self.cx)
            && (0.0..=height as f64).contains(&self.cy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 32.0, cy: 32.0 }
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = cam().project(&Vec3::new(0.0, 0.0, 3.0)).unwrap();
        assert_eq!(p, Vec2::new(32.0, 32.0));
    }

    #[test]
    fn hand_evaluated_point() {
        let p = cam().project(&Vec3::new(0.1, 0.2, 1.0)).unwrap();
        assert!((p - Vec2::new(42.0, 52.0)).norm() < 1e-12);
    }

    #[test]
    fn focal_length_scales_offset() {
        let v = Vec3::new(0.3, -0.1, 2.0);
        let a = cam().project(&v).unwrap();
        let b = CameraIntrinsics { fx: 200.0, ..cam() }.project(&v).unwrap();
        assert!(((b.x - 32.0) - 2.0 * (a.x - 32.0)).abs() < 1e-12);
    }

    #[test]
    fn near_plane_culls() {
        assert!(cam().project(&Vec3::new(0.0, 0.0, Z_NEAR)).is_none());
        assert!(cam().project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let v = Vec3::new(0.2, -0.3, 1.7);
        let j = cam().project_jacobian(&v);
        let h = 1e-6;
        for k in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[k] += h;
            vm[k] -= h;
            let d = (cam().project(&vp).unwrap() - cam().project(&vm).unwrap()) / (2.0 * h);
            assert!((d.x - j[0][k]).abs() < 1e-6);
            assert!((d.y - j[1][k]).abs() < 1e-6);
        }
    }
}
