use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::{Mat3, Vec3};

/// Rigid model-to-camera transform `v ↦ R·v + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

/// Serialized as an axis-angle vector (radians) plus translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub axis_angle: [f64; 3],
    pub translation: [f64; 3],
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angle(axis_angle: Vec3, translation: Vec3) -> Self {
        Self {
            rotation: Rotation3::from_scaled_axis(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn axis_angle(&self) -> Vec3 {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    /// Applies a rotation increment in the camera frame: `R ← exp([ω]×)·R`.
    pub fn rotate_left(&self, omega: &Vec3) -> Self {
        let inc = Rotation3::from_scaled_axis(*omega).into_inner();
        let r = Rotation3::from_matrix_unchecked(inc * self.rotation);
        // re-orthonormalize to keep RᵀR = I as increments accumulate
        let r = Rotation3::from_matrix_eps(r.matrix(), 1e-15, 16, r);
        Self {
            rotation: r.into_inner(),
            translation: self.translation,
        }
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.rotation * v + self.translation
    }

    pub fn to_record(&self) -> PoseRecord {
        let a = self.axis_angle();
        PoseRecord {
            axis_angle: [a.x, a.y, a.z],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
    }

    pub fn from_record(r: &PoseRecord) -> Self {
        Self::from_axis_angle(Vec3::from(r.axis_angle), Vec3::from(r.translation))
    }
}

pub fn transform_point(pose: &RigidPose, v: &Vec3) -> Vec3 {
    pose.apply(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Quaternion, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_a_no_op() {
        let v = Vec3::new(0.3, -1.0, 2.0);
        assert_eq!(transform_point(&RigidPose::identity(), &v), v);
    }

    #[test]
    fn quarter_turn_about_z() {
        let pose = RigidPose::from_axis_angle(Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), Vec3::zeros());
        let out = transform_point(&pose, &Vec3::new(1.0, 0.0, 0.0));
        assert!((out - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    /// Hand-coded quaternion sandwich product q·(0,v)·q*.
    fn quaternion_rotate(axis_angle: &Vec3, v: &Vec3) -> Vec3 {
        let theta = axis_angle.norm();
        let axis = axis_angle / theta;
        let (s, c) = (0.5 * theta).sin_cos();
        let q = [c, s * axis.x, s * axis.y, s * axis.z];
        let mul = |a: [f64; 4], b: [f64; 4]| {
            [
                a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
            ]
        };
        let qc = [q[0], -q[1], -q[2], -q[3]];
        let r = mul(mul(q, [0.0, v.x, v.y, v.z]), qc);
        Vec3::new(r[1], r[2], r[3])
    }

    #[test]
    fn matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let t = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let pose = RigidPose::from_axis_angle(w, t);
            let want = quaternion_rotate(&w, &v) + t;
            assert!((transform_point(&pose, &v) - want).norm() < 1e-12);
            // nalgebra's quaternion type agrees as well
            let uq = UnitQuaternion::from_quaternion(Quaternion::new(1.0, 0.0, 0.0, 0.0)) * UnitQuaternion::from_scaled_axis(w);
            assert!((uq * v + t - want).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_stays_orthonormal_under_increments() {
        let mut pose = RigidPose::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let w = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            pose = pose.rotate_left(&w);
        }
        let r = pose.rotation;
        assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-10);
        assert!((r.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn record_round_trip() {
        let pose = RigidPose::from_axis_angle(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0, 2.0, 3.0));
        let back = RigidPose::from_record(&pose.to_record());
        assert!((back.rotation - pose.rotation).amax() < 1e-14);
        assert_eq!(back.translation, pose.translation);
    }
}
