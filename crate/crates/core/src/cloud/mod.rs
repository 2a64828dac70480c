//! Point-cloud container, nearest-neighbor index, Chamfer distance, PCA
//! axes, and table-plane segmentation.

mod io;
mod kdtree;

pub use io::{read_cloud, read_cloud_binary, write_cloud, write_cloud_binary};
pub use kdtree::NnIndex;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Frame, Plane, Pose};
use crate::{Error, Result};

/// An ordered list of 3D points with optional unit normals and a frame tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Result<Self> {
        validate_points(&points)?;
        Ok(Self {
            points,
            normals: None,
            frame,
        })
    }

    pub fn with_normals(
        points: Vec<Vector3<f64>>,
        normals: Vec<Vector3<f64>>,
        frame: Frame,
    ) -> Result<Self> {
        validate_points(&points)?;
        if normals.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                points.len()
            )));
        }
        for n in &normals {
            if !n.iter().all(|v| v.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput("normals must be finite unit vectors".into()));
            }
        }
        Ok(Self {
            points,
            normals: Some(normals),
            frame,
        })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Result<Vector3<f64>> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Ok(sum / self.points.len() as f64)
    }

    /// Map the cloud through a pose; the pose's source frame must match.
    pub fn transformed(&self, pose: &Pose) -> Result<PointCloud> {
        if pose.from_frame() != self.frame {
            return Err(Error::FrameMismatch {
                expected: self.frame,
                found: pose.from_frame(),
            });
        }
        let points = self.points.iter().map(|p| pose.transform_point(p)).collect();
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| pose.transform_vector(n)).collect());
        Ok(PointCloud {
            points,
            normals,
            frame: pose.to_frame(),
        })
    }

    /// Re-tag the frame without moving the points.
    pub fn retagged(&self, frame: Frame) -> PointCloud {
        PointCloud {
            frame,
            ..self.clone()
        }
    }

    pub fn index(&self) -> Result<NnIndex> {
        NnIndex::build(self)
    }
}

fn validate_points(points: &[Vector3<f64>]) -> Result<()> {
    for p in points {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("point coordinates must be finite".into()));
        }
    }
    Ok(())
}

/// Globally nearest point to `q`: `(point, squared distance, ordinal)`.
///
/// Ties are broken by the lowest ordinal in the cloud's original order.
pub fn nearest_point(index: &NnIndex, q: &Vector3<f64>) -> (Vector3<f64>, f64, usize) {
    index.nearest(q)
}

/// Symmetric Chamfer distance: mean squared nearest-neighbor distance from
/// `a` into `b`, plus the same from `b` into `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ib = b.index()?;
    let ia = a.index()?;
    Ok(chamfer_directed(a.points(), &ib) + chamfer_directed(b.points(), &ia))
}

/// One-sided mean squared nearest-neighbor distance into an indexed cloud.
pub fn chamfer_directed(points: &[Vector3<f64>], target: &NnIndex) -> f64 {
    let sum: f64 = points.iter().map(|p| target.nearest(p).1).sum();
    sum / points.len() as f64
}

/// Principal axes of a cloud: `(centroid, axes, variances)` with the axes as
/// columns of a right-handed orthonormal matrix and variances sorted
/// descending.
///
/// Sign convention: the major axis has nonnegative dot product with `+x`
/// (falling back to `+y`, then `+z` on ties); the second axis follows the
/// same rule and the third completes the right-handed triad.
pub fn principal_axes(c: &PointCloud) -> Result<(Vector3<f64>, Matrix3<f64>, Vector3<f64>)> {
    if c.len() < 3 {
        return Err(Error::DegenerateCloud);
    }
    let centroid = c.centroid()?;
    let mut cov = Matrix3::zeros();
    for p in c.points() {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= c.len() as f64;

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("covariance eigenvalues are finite")
    });
    let variances = Vector3::new(
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
        eig.eigenvalues[order[2]].max(0.0),
    );
    if variances[0] < 1e-18 || variances[1] < 1e-9 * variances[0] {
        return Err(Error::DegenerateCloud);
    }

    let mut a0 = eig.eigenvectors.column(order[0]).into_owned();
    let mut a1 = eig.eigenvectors.column(order[1]).into_owned();
    fix_axis_sign(&mut a0);
    fix_axis_sign(&mut a1);
    let a2 = a0.cross(&a1);
    let axes = Matrix3::from_columns(&[a0, a1, a2]);
    Ok((centroid, axes, variances))
}

fn fix_axis_sign(axis: &mut Vector3<f64>) {
    const EPS: f64 = 1e-12;
    let flip = if axis.x.abs() > EPS {
        axis.x < 0.0
    } else if axis.y.abs() > EPS {
        axis.y < 0.0
    } else {
        axis.z < 0.0
    };
    if flip {
        *axis = -*axis;
    }
}

/// Retain points with signed distance to the plane greater than `epsilon`.
pub fn crop_below_plane(c: &PointCloud, plane: &Plane, epsilon: f64) -> PointCloud {
    let keep: Vec<usize> = (0..c.len())
        .filter(|&i| plane.signed_distance(&c.points[i]) > epsilon)
        .collect();
    select(c, &keep)
}

/// Deterministic subsample: without replacement when `n <= |c|`, with
/// replacement otherwise.
pub fn subsample(c: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("subsample count must be >= 1".into()));
    }
    if c.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = if n <= c.len() {
        // Partial Fisher-Yates over the index array.
        let mut idx: Vec<usize> = (0..c.len()).collect();
        for i in 0..n {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    } else {
        (0..n).map(|_| rng.gen_range(0..c.len())).collect()
    };
    Ok(select(c, &picks))
}

fn select(c: &PointCloud, indices: &[usize]) -> PointCloud {
    PointCloud {
        points: indices.iter().map(|&i| c.points[i]).collect(),
        normals: c
            .normals
            .as_ref()
            .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        frame: c.frame,
    }
}

/// Median distance from each point to its nearest other point.
///
/// Used to scale the ICP correspondence gate to the cloud's sampling density.
pub fn median_nn_spacing(c: &PointCloud) -> Result<f64> {
    if c.len() < 2 {
        return Err(Error::EmptyCloud);
    }
    let index = c.index()?;
    let mut dists: Vec<f64> = (0..c.len())
        .map(|i| index.nearest_excluding(&c.points[i], i).1.sqrt())
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(dists[dists.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_z;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(
            points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
            Frame::Camera,
        )
        .unwrap()
    }

    fn brute_nearest(points: &[Vector3<f64>], q: &Vector3<f64>) -> (Vector3<f64>, f64, usize) {
        let mut best = (points[0], (points[0] - q).norm_squared(), 0usize);
        for (i, p) in points.iter().enumerate().skip(1) {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (*p, d, i);
            }
        }
        best
    }

    #[test]
    fn nearest_point_singleton_and_tie_break() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        let idx = c.index().unwrap();
        let (p, d2, ord) = nearest_point(&idx, &Vector3::new(5.0, 5.0, 5.0));
        assert_eq!(p, Vector3::zeros());
        assert_eq!(d2, 75.0);
        assert_eq!(ord, 0);

        let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        let idx = c.index().unwrap();
        let (p, d2, ord) = nearest_point(&idx, &Vector3::zeros());
        assert_eq!(p, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(d2, 1.0);
        assert_eq!(ord, 0);

        // Exact ties resolve to the lowest ordinal.
        let c = cloud(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let idx = c.index().unwrap();
        let (_, _, ord) = nearest_point(&idx, &Vector3::zeros());
        assert_eq!(ord, 0);
    }

    #[test]
    fn nearest_point_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Vector3<f64>> = (0..1000)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let c = PointCloud::new(pts.clone(), Frame::Camera).unwrap();
        let idx = c.index().unwrap();
        for _ in 0..100 {
            let q = Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            let got = nearest_point(&idx, &q);
            let want = brute_nearest(&pts, &q);
            assert_eq!(got.2, want.2);
            assert_eq!(got.1, want.1);
        }
    }

    #[test]
    fn chamfer_hand_cases() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.5, -0.3, 0.2]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);

        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&x, &y).unwrap(), 2.0);
    }

    #[test]
    fn chamfer_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(1..60);
            let m = rng.gen_range(1..60);
            let mk = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vector3<f64>> {
                (0..k)
                    .map(|_| {
                        Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect()
            };
            let pa = mk(&mut rng, n);
            let pb = mk(&mut rng, m);
            let a = PointCloud::new(pa.clone(), Frame::Camera).unwrap();
            let b = PointCloud::new(pb.clone(), Frame::Camera).unwrap();

            let mut oracle = 0.0;
            for p in &pa {
                oracle += pb.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min)
                    / pa.len() as f64;
            }
            for q in &pb {
                oracle += pa.iter().map(|p| (q - p).norm_squared()).fold(f64::INFINITY, f64::min)
                    / pb.len() as f64;
            }
            let got = chamfer(&a, &b).unwrap();
            assert!((got - oracle).abs() < 1e-12);
            let sym = chamfer(&b, &a).unwrap();
            assert!((got - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn principal_axes_major_axis_and_variance_order() {
        // Segment along x with tiny y jitter.
        let mut pts = Vec::new();
        for i in 0..50 {
            let t = -1.0 + 2.0 * i as f64 / 49.0;
            pts.push([t, 1e-4 * ((i % 3) as f64 - 1.0), 0.0]);
        }
        let c = cloud(&pts);
        let (_, axes, vars) = principal_axes(&c).unwrap();
        let major = axes.column(0);
        assert!(major.dot(&Vector3::x()) > 0.999);
        assert!(vars[0] > vars[1] && vars[1] >= vars[2]);

        // Axis-aligned box sampling 2 x 1 x 0.5: variances follow edge order.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 3]> = (0..4000)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.25..0.25),
                ]
            })
            .collect();
        let c = cloud(&pts);
        let (centroid, axes, vars) = principal_axes(&c).unwrap();
        assert!(centroid.norm() < 0.05);
        assert!(vars[0] > vars[1] && vars[1] > vars[2]);
        // Covariance oracle: uniform on [-a, a] has variance a^2/3.
        assert!((vars[0] - 1.0 / 3.0).abs() < 0.02);
        assert!((vars[1] - 0.25 / 3.0).abs() < 0.01);
        assert!((vars[2] - 0.0625 / 3.0).abs() < 0.005);
        assert!(axes.column(0).dot(&Vector3::x()).abs() > 0.99);
        // Right-handed with det +1.
        assert!((axes.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn principal_axes_degenerate_cases() {
        let two = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(principal_axes(&two), Err(Error::DegenerateCloud)));
        let collinear = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(matches!(principal_axes(&collinear), Err(Error::DegenerateCloud)));
    }

    #[test]
    fn crop_below_plane_cases() {
        let plane = Plane::table();
        let above = cloud(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.5]]);
        let kept = crop_below_plane(&above, &plane, 0.002);
        assert_eq!(kept.len(), 2);

        let mixed = cloud(&[[0.0, 0.0, -0.01], [0.0, 0.0, 0.001], [0.0, 0.0, 0.05]]);
        let kept = crop_below_plane(&mixed, &plane, 0.002);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.points()[0].z, 0.05);

        let below = cloud(&[[0.0, 0.0, -1.0]]);
        let kept = crop_below_plane(&below, &plane, 0.002);
        assert!(kept.is_empty());

        // Idempotent.
        let twice = crop_below_plane(&kept, &plane, 0.002);
        assert_eq!(twice, kept);
    }

    #[test]
    fn subsample_determinism_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0])
            .collect();
        let c = cloud(&pts);

        let a = subsample(&c, 20, 77).unwrap();
        let b = subsample(&c, 20, 77).unwrap();
        assert_eq!(a, b);
        // n = |c| is a permutation.
        let mut sa: Vec<_> = a.points().iter().map(|p| format!("{:?}", p)).collect();
        let mut sc: Vec<_> = c.points().iter().map(|p| format!("{:?}", p)).collect();
        sa.sort();
        sc.sort();
        assert_eq!(sa, sc);

        let w = subsample(&c, 50, 3).unwrap();
        assert_eq!(w.len(), 50);
    }

    #[test]
    fn subsample_frequency_oracle() {
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let c = cloud(&pts);
        let mut counts = [0usize; 10];
        for seed in 0..10_000u64 {
            let s = subsample(&c, 1, seed).unwrap();
            counts[s.points()[0].x as usize] += 1;
        }
        for &count in &counts {
            assert!(
                (count as i64 - 1000).abs() <= 150,
                "selection counts {counts:?} not uniform"
            );
        }
    }

    #[test]
    fn transform_respects_frames() {
        let c = cloud(&[[1.0, 0.0, 0.0]]);
        let pose = Pose::from_parts(
            rot_z(std::f64::consts::FRAC_PI_2),
            Vector3::new(0.0, 0.0, 1.0),
            Frame::Camera,
            Frame::Table,
        )
        .unwrap();
        let moved = c.transformed(&pose).unwrap();
        assert_eq!(moved.frame(), Frame::Table);
        assert!((moved.points()[0] - Vector3::new(0.0, 1.0, 1.0)).norm() < 1e-12);

        let wrong = pose.invert();
        assert!(matches!(c.transformed(&wrong), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn normals_validated_and_carried() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let ns = vec![Vector3::z(), Vector3::x()];
        let c = PointCloud::with_normals(pts.clone(), ns, Frame::Object).unwrap();
        let s = subsample(&c, 2, 1).unwrap();
        assert!(s.normals().is_some());

        let bad = PointCloud::with_normals(pts, vec![Vector3::z() * 2.0, Vector3::x()], Frame::Object);
        assert!(bad.is_err());
    }
}
