//! SE(3) poses with frame tags, the 12-number grasp encoding, and the
//! grasp-regression training losses.
//!
//! A [`Pose`] carries a rotation, a translation, and a pair of frame tags:
//! `Pose { from_frame: F, to_frame: T }` maps points expressed in frame `F`
//! into frame `T`. Composition is only defined when the inner frames chain.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Named coordinate frames of the tabletop setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    Robot,
    Gripper,
    Camera,
    Object,
    Table,
}

impl std::fmt::Display for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Frame::Robot => "robot",
            Frame::Gripper => "gripper",
            Frame::Camera => "camera",
            Frame::Object => "object",
            Frame::Table => "table",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robot" => Ok(Frame::Robot),
            "gripper" => Ok(Frame::Gripper),
            "camera" => Ok(Frame::Camera),
            "object" => Ok(Frame::Object),
            "table" => Ok(Frame::Table),
            other => Err(Error::Parse(format!("unknown frame tag `{other}`"))),
        }
    }
}

/// Tolerance for rotation-matrix validity checks (`RᵀR = I`, `det R = +1`).
pub const ROTATION_TOL: f64 = 1e-9;

/// An oriented plane `{ p : normal · p = offset }` with a unit normal.
///
/// Signed distance is positive on the side the normal points into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("plane normal must be unit length".into()));
        }
        Ok(Self { normal, offset })
    }

    /// The `z = 0` plane with `+z` up.
    pub fn table() -> Self {
        Self {
            normal: Vector3::z(),
            offset: 0.0,
        }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Express the plane in another frame given the pose of this frame in it.
    pub fn transformed(&self, pose: &Pose) -> Plane {
        let n = pose.rotation() * self.normal;
        let anchor = pose.rotation() * (self.normal * self.offset) + pose.translation();
        Plane {
            normal: n,
            offset: n.dot(&anchor),
        }
    }
}

/// A rigid transform in SE(3) tagged with source and target frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    from_frame: Frame,
    to_frame: Frame,
}

impl Pose {
    /// Build a pose from parts, validating that `rotation` is orthonormal
    /// with determinant +1 within [`ROTATION_TOL`].
    pub fn from_parts(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        from_frame: Frame,
        to_frame: Frame,
    ) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOL) {
            return Err(Error::InvalidRotation);
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
            from_frame,
            to_frame,
        })
    }

    pub fn identity(from_frame: Frame, to_frame: Frame) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            from_frame,
            to_frame,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn from_frame(&self) -> Frame {
        self.from_frame
    }

    pub fn to_frame(&self) -> Frame {
        self.to_frame
    }

    /// Map a point from `from_frame` coordinates into `to_frame` coordinates.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotate a direction vector (no translation).
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn invert(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            from_frame: self.to_frame,
            to_frame: self.from_frame,
        }
    }

    /// Re-tag the frames without changing the transform.
    pub fn retagged(&self, from_frame: Frame, to_frame: Frame) -> Pose {
        Pose {
            from_frame,
            to_frame,
            ..*self
        }
    }

    /// The same pose with a replaced translation; the rotation block is
    /// carried over bit-for-bit.
    pub fn with_translation(&self, translation: Vector3<f64>) -> Pose {
        Pose {
            translation,
            ..*self
        }
    }

    /// Serialize as 12 numbers: rotation row-major, then translation.
    pub fn to_flat12(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
        }
        out[9] = self.translation.x;
        out[10] = self.translation.y;
        out[11] = self.translation.z;
        out
    }

    /// Inverse of [`Pose::to_flat12`].
    pub fn from_flat12(v: &[f64; 12], from_frame: Frame, to_frame: Frame) -> Result<Self> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        let translation = Vector3::new(v[9], v[10], v[11]);
        Pose::from_parts(rotation, translation, from_frame, to_frame)
    }
}

/// Compose two poses: `compose(a, b)` maps `b.from_frame` into `a.to_frame`.
///
/// Requires `a.from_frame == b.to_frame`.
pub fn compose(a: &Pose, b: &Pose) -> Result<Pose> {
    if a.from_frame != b.to_frame {
        return Err(Error::FrameMismatch {
            expected: a.from_frame,
            found: b.to_frame,
        });
    }
    Ok(Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
        from_frame: b.from_frame,
        to_frame: a.to_frame,
    })
}

fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let gram = m.transpose() * m;
    let ortho_err = (gram - Matrix3::identity()).abs().max();
    ortho_err <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Rotation by `angle` radians about a (non-zero) axis, via Rodrigues' formula.
pub fn rotation_about_axis(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let (s, c) = angle.sin_cos();
    let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    rotation_about_axis(&Vector3::x(), angle)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    rotation_about_axis(&Vector3::y(), angle)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    rotation_about_axis(&Vector3::z(), angle)
}

/// Project a matrix onto the nearest rotation (polar projection via SVD).
///
/// Returns `DegenerateRotation` when the matrix has rank < 3 within 1e-9,
/// i.e. when the nearest rotation is not uniquely determined.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateRotation);
    }
    let svd = m.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateRotation)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateRotation)?;
    if svd.singular_values.iter().any(|&s| s < 1e-9) {
        return Err(Error::DegenerateRotation);
    }
    let det = (u * v_t).determinant();
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    Ok(u * flip * v_t)
}

/// The 12-number grasp encoding: position first, then the rotation matrix
/// serialized row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspVector {
    values: [f64; 12],
}

impl GraspVector {
    pub fn new(values: [f64; 12]) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64; 12] {
        &self.values
    }

    /// The position component (first three values).
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.values[0], self.values[1], self.values[2])
    }

    /// The rotation component (last nine values, row-major).
    pub fn rotation(&self) -> Matrix3<f64> {
        let v = &self.values;
        Matrix3::new(v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11])
    }

    pub fn from_parts(position: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        let mut values = [0.0; 12];
        values[0] = position.x;
        values[1] = position.y;
        values[2] = position.z;
        for r in 0..3 {
            for c in 0..3 {
                values[3 + r * 3 + c] = rotation[(r, c)];
            }
        }
        Self { values }
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self::from_parts(*pose.translation(), *pose.rotation())
    }

    /// Decode into a pose, projecting the rotation block onto the nearest
    /// rotation matrix.
    pub fn to_pose(&self, from_frame: Frame, to_frame: Frame) -> Result<Pose> {
        let rotation = nearest_rotation(&self.rotation())?;
        Pose::from_parts(rotation, self.position(), from_frame, to_frame)
    }
}

/// Decode a grasp vector into a pose (nearest-rotation projection of the
/// 9-block, translation copied).
pub fn vector_to_pose(t: &GraspVector, from_frame: Frame, to_frame: Frame) -> Result<Pose> {
    t.to_pose(from_frame, to_frame)
}

/// Encode a pose as a grasp vector (frames dropped).
pub fn pose_to_vector(pose: &Pose) -> GraspVector {
    GraspVector::from_pose(pose)
}

/// Weights of the combined grasp-regression loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_t: f64,
    pub lambda_r: f64,
}

impl LossWeights {
    pub fn new(lambda_t: f64, lambda_r: f64) -> Result<Self> {
        let ok = lambda_t.is_finite()
            && lambda_r.is_finite()
            && lambda_t >= 0.0
            && lambda_r >= 0.0
            && (lambda_t > 0.0 || lambda_r > 0.0);
        if !ok {
            return Err(Error::InvalidInput(
                "loss weights must be finite, nonnegative, and not both zero".into(),
            ));
        }
        Ok(Self { lambda_t, lambda_r })
    }
}

impl Default for LossWeights {
    /// Translation in squared meters vs. unitless squared Frobenius norm;
    /// the rotation term is down-weighted to balance the scales.
    fn default() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_r: 0.01,
        }
    }
}

/// Squared Euclidean distance between the position components.
pub fn translation_loss(t_hat: &GraspVector, t_star: &GraspVector) -> f64 {
    (t_hat.position() - t_star.position()).norm_squared()
}

/// Squared Frobenius deviation of `Rot(t̂)·Rot(t*)ᵀ` from the identity.
///
/// Both rotation blocks must be valid rotations; use [`combined_loss`] for
/// raw (unconstrained) predictions.
pub fn rotation_loss(t_hat: &GraspVector, t_star: &GraspVector) -> Result<f64> {
    let r_hat = t_hat.rotation();
    let r_star = t_star.rotation();
    // These blocks come from stored vectors, so allow looser round-trip error
    // than the construction tolerance.
    if !is_rotation(&r_hat, 1e-6) || !is_rotation(&r_star, 1e-6) {
        return Err(Error::DegenerateRotation);
    }
    Ok(rotation_loss_raw(&r_hat, &r_star))
}

fn rotation_loss_raw(r_hat: &Matrix3<f64>, r_star: &Matrix3<f64>) -> f64 {
    let m = r_hat * r_star.transpose() - Matrix3::identity();
    m.iter().map(|v| v * v).sum()
}

/// Weighted sum of the translation and rotation losses.
///
/// The rotation term is evaluated on the raw 9-blocks without a validity
/// check so that unconstrained regressor outputs can be scored.
pub fn combined_loss(t_hat: &GraspVector, t_star: &GraspVector, w: &LossWeights) -> f64 {
    w.lambda_t * translation_loss(t_hat, t_star)
        + w.lambda_r * rotation_loss_raw(&t_hat.rotation(), &t_star.rotation())
}

/// Gradient of [`combined_loss`] with respect to the 12 entries of `t_hat`.
pub fn combined_loss_grad(t_hat: &GraspVector, t_star: &GraspVector, w: &LossWeights) -> [f64; 12] {
    let mut grad = [0.0; 12];
    let dp = t_hat.position() - t_star.position();
    for i in 0..3 {
        grad[i] = 2.0 * w.lambda_t * dp[i];
    }
    // d/dR̂ ‖R̂Sᵀ − I‖² = 2 (R̂Sᵀ − I) S
    let s = t_star.rotation();
    let m = (t_hat.rotation() * s.transpose() - Matrix3::identity()) * s;
    for r in 0..3 {
        for c in 0..3 {
            grad[3 + r * 3 + c] = 2.0 * w.lambda_r * m[(r, c)];
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-6 { Vector3::x() } else { axis };
        rotation_about_axis(&axis, rng.gen_range(0.0..std::f64::consts::PI))
    }

    fn rand_pose(rng: &mut impl Rng, from: Frame, to: Frame) -> Pose {
        let t = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        Pose::from_parts(random_rotation(rng), t, from, to).unwrap()
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = rand_pose(&mut rng, Frame::Object, Frame::Camera);
        let id = Pose::identity(Frame::Object, Frame::Object);
        let c = compose(&t, &id).unwrap();
        assert_eq!(c.rotation(), t.rotation());
        assert_eq!(c.translation(), t.translation());

        let inv = t.invert();
        let round = compose(&t, &inv).unwrap();
        assert!((round.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(round.translation().norm() < 1e-12);
        assert_eq!(round.from_frame(), Frame::Camera);
        assert_eq!(round.to_frame(), Frame::Camera);
    }

    #[test]
    fn compose_matches_matrix_product_oracle() {
        let a = Pose::from_parts(rot_z(90f64.to_radians()), Vector3::zeros(), Frame::Object, Frame::Object).unwrap();
        let c = compose(&a, &a).unwrap();
        let oracle = rot_z(90f64.to_radians()) * rot_z(90f64.to_radians());
        assert!((c.rotation() - oracle).abs().max() < 1e-15);
        assert!((c.rotation() - rot_z(180f64.to_radians())).abs().max() < 1e-12);
    }

    #[test]
    fn compose_rejects_frame_mismatch() {
        let a = Pose::identity(Frame::Camera, Frame::Robot);
        let b = Pose::identity(Frame::Gripper, Frame::Table);
        assert!(matches!(compose(&a, &b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn vector_to_pose_projects_scaled_identity() {
        let t = GraspVector::from_parts(Vector3::new(0.1, 0.2, 0.3), Matrix3::identity() * 1.1);
        let pose = t.to_pose(Frame::Gripper, Frame::Camera).unwrap();
        assert!((pose.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert_eq!(*pose.translation(), Vector3::new(0.1, 0.2, 0.3));
    }

    #[test]
    fn vector_to_pose_zero_block_is_degenerate() {
        let t = GraspVector::new([0.0; 12]);
        assert!(matches!(
            t.to_pose(Frame::Gripper, Frame::Camera),
            Err(Error::DegenerateRotation)
        ));
    }

    // Independent polar-decomposition oracle: Higham's iteration
    // R_{k+1} = (R_k + R_k^{-T}) / 2 converges to the orthogonal polar factor.
    fn polar_oracle(m: &Matrix3<f64>) -> Matrix3<f64> {
        let mut r = *m;
        for _ in 0..100 {
            let inv_t = r.try_inverse().expect("oracle input must be invertible").transpose();
            r = (r + inv_t) * 0.5;
        }
        r
    }

    #[test]
    fn nearest_rotation_matches_polar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            // Perturbed rotations stay well away from rank deficiency.
            let mut m = random_rotation(&mut rng);
            for r in 0..3 {
                for c in 0..3 {
                    m[(r, c)] += rng.gen_range(-0.2..0.2);
                }
            }
            if m.determinant() < 0.1 {
                continue;
            }
            let got = nearest_rotation(&m).unwrap();
            let want = polar_oracle(&m);
            assert!((got - want).abs().max() < 1e-9, "got {got} want {want}");
        }
    }

    #[test]
    fn grasp_vector_pose_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pose = rand_pose(&mut rng, Frame::Gripper, Frame::Camera);
            let v = pose_to_vector(&pose);
            let back = vector_to_pose(&v, Frame::Gripper, Frame::Camera).unwrap();
            assert!((back.rotation() - pose.rotation()).abs().max() < 1e-12);
            assert!((back.translation() - pose.translation()).norm() < 1e-12);
            // And vector -> pose -> vector is exact when the block is valid.
            let v2 = pose_to_vector(&back);
            for i in 0..12 {
                assert!((v2.values()[i] - v.values()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_loss_hand_cases() {
        let a = GraspVector::from_parts(Vector3::zeros(), Matrix3::identity());
        assert_eq!(translation_loss(&a, &a), 0.0);
        let b = GraspVector::from_parts(Vector3::new(1.0, 0.0, 0.0), Matrix3::identity());
        assert_eq!(translation_loss(&a, &b), 1.0);
        let c = GraspVector::from_parts(Vector3::new(1.0, 2.0, 3.0), Matrix3::identity());
        let d = GraspVector::from_parts(Vector3::new(2.0, 4.0, 6.0), Matrix3::identity());
        assert_eq!(translation_loss(&c, &d), 14.0);
        assert_eq!(translation_loss(&d, &c), 14.0);
    }

    #[test]
    fn rotation_loss_symbolic_cases() {
        let id = GraspVector::from_parts(Vector3::zeros(), Matrix3::identity());
        assert_eq!(rotation_loss(&id, &id).unwrap(), 0.0);

        // Exact quarter-turn matrices; ‖diag(−2,−2,0)‖²_F = 8, quarter turn = 4.
        let rz180 = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let rz90 = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let a = GraspVector::from_parts(Vector3::zeros(), rz180);
        let b = GraspVector::from_parts(Vector3::zeros(), rz90);
        assert_eq!(rotation_loss(&a, &id).unwrap(), 8.0);
        assert_eq!(rotation_loss(&b, &id).unwrap(), 4.0);
    }

    #[test]
    fn rotation_loss_rejects_invalid_blocks() {
        let id = GraspVector::from_parts(Vector3::zeros(), Matrix3::identity());
        let bad = GraspVector::from_parts(Vector3::zeros(), Matrix3::identity() * 2.0);
        assert!(matches!(rotation_loss(&bad, &id), Err(Error::DegenerateRotation)));
    }

    #[test]
    fn rotation_loss_invariant_under_left_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r_hat = random_rotation(&mut rng);
            let r_star = random_rotation(&mut rng);
            let q = random_rotation(&mut rng);
            let base = rotation_loss_raw(&r_hat, &r_star);
            let moved = rotation_loss_raw(&(q * r_hat), &(q * r_star));
            assert!((base - moved).abs() < 1e-10, "base {base} moved {moved}");
        }
    }

    #[test]
    fn combined_loss_weighting() {
        let a = GraspVector::from_parts(Vector3::zeros(), Matrix3::identity());
        let rz90 = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let b = GraspVector::from_parts(Vector3::new(1.0, 0.0, 0.0), rz90);

        let w_any = LossWeights::new(3.0, 7.0).unwrap();
        assert_eq!(combined_loss(&a, &a, &w_any), 0.0);

        let w_t = LossWeights::new(1.0, 0.0).unwrap();
        assert_eq!(combined_loss(&b, &a, &w_t), translation_loss(&b, &a));

        let w_tr = LossWeights::new(1.0, 1.0).unwrap();
        assert_eq!(combined_loss(&b, &a, &w_tr), 5.0);
    }

    #[test]
    fn combined_loss_linear_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = GraspVector::from_parts(Vector3::new(0.3, -0.1, 0.2), random_rotation(&mut rng));
        let b = GraspVector::from_parts(Vector3::new(-0.2, 0.4, 0.1), random_rotation(&mut rng));
        let l_t = combined_loss(&a, &b, &LossWeights::new(1.0, 0.0).unwrap());
        let l_r = combined_loss(&a, &b, &LossWeights::new(0.0, 1.0).unwrap());
        for (lt, lr) in [(2.0, 3.0), (0.5, 0.25), (1.0, 10.0)] {
            let l = combined_loss(&a, &b, &LossWeights::new(lt, lr).unwrap());
            assert!((l - (lt * l_t + lr * l_r)).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_loss_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = LossWeights::new(1.3, 0.7).unwrap();
        for _ in 0..20 {
            let mut vals = [0.0; 12];
            for v in &mut vals {
                *v = rng.gen_range(-1.0..1.0);
            }
            let t_hat = GraspVector::new(vals);
            let t_star = GraspVector::from_parts(
                Vector3::new(rng.gen_range(-1.0..1.0), 0.2, -0.4),
                random_rotation(&mut rng),
            );
            let grad = combined_loss_grad(&t_hat, &t_star, &w);
            let h = 1e-6;
            for i in 0..12 {
                let mut plus = vals;
                plus[i] += h;
                let mut minus = vals;
                minus[i] -= h;
                let fd = (combined_loss(&GraspVector::new(plus), &t_star, &w)
                    - combined_loss(&GraspVector::new(minus), &t_star, &w))
                    / (2.0 * h);
                assert!(
                    (grad[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "coord {i}: analytic {} fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn loss_weights_validation() {
        assert!(LossWeights::new(0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0).is_err());
        assert!(LossWeights::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn plane_signed_distance_and_transform() {
        let plane = Plane::table();
        assert_eq!(plane.signed_distance(&Vector3::new(1.0, 2.0, 0.5)), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pose = rand_pose(&mut rng, Frame::Table, Frame::Camera);
        let moved = plane.transformed(&pose);
        for _ in 0..20 {
            let p = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let d0 = plane.signed_distance(&p);
            let d1 = moved.signed_distance(&pose.transform_point(&p));
            assert!((d0 - d1).abs() < 1e-12);
        }
    }
}
