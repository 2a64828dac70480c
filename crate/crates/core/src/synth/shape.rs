//! Procedural shape geometry: axis-aligned boxes and tapered superquadrics,
//! with exact-surface sampling, ray casting, and containment tests.
//!
//! Superquadrics use the standard superellipsoid form with `eps1` governing
//! the vertical profile and `eps2` the horizontal cross-section. When the two
//! exponents differ, the cross-section is additionally tapered along `x`
//! (slim at `-x`, wide at `+x`), which gives the family a stable left/right
//! asymmetry; with `eps1 == eps2` the taper vanishes and equal extents with
//! unit exponents degenerate to a sphere.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::geometry::Frame;
use crate::{Error, Result};

/// Shape family and its family-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeFamily {
    Box,
    Superquadric { eps1: f64, eps2: f64 },
}

/// A procedural object: family, full extents in meters, and a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub family: ShapeFamily,
    pub extents: Vector3<f64>,
    pub id: String,
}

impl ShapeSpec {
    pub fn new(family: ShapeFamily, extents: Vector3<f64>, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::InvalidInput(format!("bad shape id `{id}`")));
        }
        for e in extents.iter() {
            if !(0.02..=0.4).contains(e) {
                return Err(Error::InvalidInput(format!(
                    "extent {e} outside [0.02, 0.4] m"
                )));
            }
        }
        if let ShapeFamily::Superquadric { eps1, eps2 } = family {
            for e in [eps1, eps2] {
                if !(0.3..=2.0).contains(&e) {
                    return Err(Error::InvalidInput(format!(
                        "superquadric exponent {e} outside [0.3, 2.0]"
                    )));
                }
            }
        }
        Ok(Self { family, extents, id })
    }

    /// Cross-section taper coefficient along `x` (0 = no taper).
    pub fn taper(&self) -> f64 {
        match self.family {
            ShapeFamily::Box => 0.0,
            ShapeFamily::Superquadric { eps1, eps2 } => (0.3 * (eps1 - eps2).abs()).min(0.5),
        }
    }
}

/// Procedurally draw "shoe" analogs: elongated tapered superquadrics with a
/// slim `-x` end that fits the gripper while the mid-body does not.
pub fn shoe_family_specs(count: usize, seed: u64) -> Vec<ShapeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            ShapeSpec::new(
                ShapeFamily::Superquadric {
                    eps1: rng.gen_range(0.3..0.4),
                    eps2: rng.gen_range(1.35..1.6),
                },
                Vector3::new(
                    rng.gen_range(0.21..0.25),
                    rng.gen_range(0.088..0.098),
                    rng.gen_range(0.07..0.09),
                ),
                format!("shoe-{i:03}"),
            )
            .expect("shoe family ranges are valid")
        })
        .collect()
}

/// Procedurally draw boxed-pantry analogs: boxes with at least one
/// cross-section inside the gripper aperture.
pub fn box_family_specs(count: usize, seed: u64) -> Vec<ShapeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xb0c5));
    (0..count)
        .map(|i| {
            ShapeSpec::new(
                ShapeFamily::Box,
                Vector3::new(
                    rng.gen_range(0.06..0.12),
                    rng.gen_range(0.04..0.065),
                    rng.gen_range(0.05..0.1),
                ),
                format!("box-{i:03}"),
            )
            .expect("box family ranges are valid")
        })
        .collect()
}

const MESH_ETA_STEPS: usize = 48;
const MESH_OMEGA_STEPS: usize = 96;
const COLLISION_SAMPLES: usize = 2048;

/// A ray hit in the object frame.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone)]
struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    cumulative_area: Vec<f64>,
    total_area: f64,
}

/// Cached geometry for one shape: extents, mesh, and a fixed collision
/// sample, all in the object frame (origin at the shape center).
#[derive(Debug, Clone)]
pub struct ShapeModel {
    spec: ShapeSpec,
    half: Vector3<f64>,
    mesh: Option<TriMesh>,
    collision_points: Vec<Vector3<f64>>,
    aabb_half: Vector3<f64>,
    bounding_radius: f64,
}

impl ShapeModel {
    pub fn build(spec: &ShapeSpec) -> Result<Self> {
        let half = spec.extents / 2.0;
        let (mesh, aabb_half, bounding_radius) = match spec.family {
            ShapeFamily::Box => (None, half, half.norm()),
            ShapeFamily::Superquadric { .. } => {
                let mesh = superquadric_mesh(spec);
                let radius = mesh
                    .vertices
                    .iter()
                    .map(|v| v.norm())
                    .fold(0.0f64, f64::max)
                    * 1.01;
                let aabb = Vector3::new(half.x, half.y * (1.0 + spec.taper()), half.z);
                (Some(mesh), aabb, radius)
            }
        };
        let mut model = Self {
            spec: spec.clone(),
            half,
            mesh,
            collision_points: Vec::new(),
            aabb_half,
            bounding_radius,
        };
        model.collision_points = model
            .sample_surface(COLLISION_SAMPLES, 0x5eed_c011)?
            .points()
            .to_vec();
        Ok(model)
    }

    pub fn spec(&self) -> &ShapeSpec {
        &self.spec
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn aabb_half(&self) -> Vector3<f64> {
        self.aabb_half
    }

    pub fn min_z(&self) -> f64 {
        -self.half.z
    }

    pub fn top_z(&self) -> f64 {
        self.half.z
    }

    /// Fixed surface sample used for swept-volume collision checks.
    pub fn collision_points(&self) -> &[Vector3<f64>] {
        &self.collision_points
    }

    /// Exact boundary vertices: box corners or superquadric mesh vertices.
    pub(crate) fn boundary_vertices(&self) -> Box<dyn Iterator<Item = Vector3<f64>> + '_> {
        match &self.mesh {
            None => {
                let h = self.half;
                Box::new((0..8).map(move |i| {
                    Vector3::new(
                        if i & 1 == 0 { -h.x } else { h.x },
                        if i & 2 == 0 { -h.y } else { h.y },
                        if i & 4 == 0 { -h.z } else { h.z },
                    )
                }))
            }
            Some(mesh) => Box::new(mesh.vertices.iter().copied()),
        }
    }

    /// For boxes, the top-face center; for superquadrics, the mesh vertex
    /// with the smallest `x` in the upper region (the slim-end rim).
    pub fn upper_rim_anchor(&self) -> Vector3<f64> {
        match &self.mesh {
            None => Vector3::new(0.0, 0.0, self.half.z),
            Some(mesh) => {
                let z_cut = 0.8 * self.half.z;
                mesh.vertices
                    .iter()
                    .filter(|v| v.z >= z_cut)
                    .min_by(|a, b| a.x.partial_cmp(&b.x).expect("finite vertices"))
                    .copied()
                    .unwrap_or_else(|| Vector3::new(0.0, 0.0, self.half.z))
            }
        }
    }

    /// Area-weighted uniform surface samples with outward normals,
    /// deterministic per seed. Points lie exactly on the surface.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<PointCloud> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        match &self.mesh {
            None => {
                // Box faces sampled exactly, weighted by face area.
                let h = self.half;
                let areas = [
                    h.y * h.z, // +x, -x
                    h.y * h.z,
                    h.x * h.z, // +y, -y
                    h.x * h.z,
                    h.x * h.y, // +z, -z
                    h.x * h.y,
                ];
                let total: f64 = areas.iter().sum();
                for _ in 0..n {
                    let mut pick = rng.gen_range(0.0..total);
                    let mut face = 0;
                    for (i, a) in areas.iter().enumerate() {
                        if pick < *a {
                            face = i;
                            break;
                        }
                        pick -= a;
                    }
                    let u = rng.gen_range(-1.0..1.0);
                    let v = rng.gen_range(-1.0..1.0);
                    let (p, nrm) = match face {
                        0 => (Vector3::new(h.x, u * h.y, v * h.z), Vector3::x()),
                        1 => (Vector3::new(-h.x, u * h.y, v * h.z), -Vector3::x()),
                        2 => (Vector3::new(u * h.x, h.y, v * h.z), Vector3::y()),
                        3 => (Vector3::new(u * h.x, -h.y, v * h.z), -Vector3::y()),
                        4 => (Vector3::new(u * h.x, v * h.y, h.z), Vector3::z()),
                        _ => (Vector3::new(u * h.x, v * h.y, -h.z), -Vector3::z()),
                    };
                    points.push(p);
                    normals.push(nrm);
                }
            }
            Some(mesh) => {
                for _ in 0..n {
                    let pick = rng.gen_range(0.0..mesh.total_area);
                    let tri = mesh
                        .cumulative_area
                        .partition_point(|&c| c <= pick)
                        .min(mesh.triangles.len() - 1);
                    let [a, b, c] = mesh.triangles[tri];
                    let (va, vb, vc) = (
                        mesh.vertices[a as usize],
                        mesh.vertices[b as usize],
                        mesh.vertices[c as usize],
                    );
                    let r1: f64 = rng.gen_range(0.0..1.0f64);
                    let r2: f64 = rng.gen_range(0.0..1.0f64);
                    let s = r1.sqrt();
                    let p = va * (1.0 - s) + vb * (s * (1.0 - r2)) + vc * (s * r2);
                    let p = self.project_to_surface(&p);
                    points.push(p);
                    normals.push(self.implicit_normal(&p));
                }
            }
        }
        PointCloud::with_normals(points, normals, Frame::Object)
    }

    /// Superquadric implicit value; < 1 inside, 1 on the surface.
    fn implicit(&self, p: &Vector3<f64>) -> f64 {
        let ShapeFamily::Superquadric { eps1, eps2 } = self.spec.family else {
            unreachable!("implicit is only defined for superquadrics");
        };
        let tau = self.spec.taper();
        let t = 1.0 + tau * (p.x / self.half.x).clamp(-1.0, 1.0);
        let fx = (p.x / self.half.x).abs().powf(2.0 / eps2);
        let fy = (p.y / (self.half.y * t)).abs().powf(2.0 / eps2);
        let fz = (p.z / self.half.z).abs().powf(2.0 / eps1);
        (fx + fy).powf(eps2 / eps1) + fz
    }

    fn implicit_normal(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let h = 1e-7;
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let mut plus = *p;
            let mut minus = *p;
            plus[a] += h;
            minus[a] -= h;
            g[a] = self.implicit(&plus) - self.implicit(&minus);
        }
        g.normalize()
    }

    /// Move a near-surface point exactly onto the surface along the ray from
    /// the origin (the implicit value is monotone along such rays).
    fn project_to_surface(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let dir = p.normalize();
        let mut lo = p.norm() * 0.5;
        let mut hi = p.norm() * 1.5;
        for _ in 0..32 {
            if self.implicit(&(dir * lo)) <= 1.0 {
                break;
            }
            lo *= 0.5;
        }
        for _ in 0..32 {
            if self.implicit(&(dir * hi)) >= 1.0 {
                break;
            }
            hi *= 1.5;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.implicit(&(dir * mid)) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        dir * (0.5 * (lo + hi))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match self.spec.family {
            ShapeFamily::Box => {
                p.x.abs() < self.half.x && p.y.abs() < self.half.y && p.z.abs() < self.half.z
            }
            ShapeFamily::Superquadric { .. } => self.implicit(p) < 1.0,
        }
    }

    /// First intersection of an object-frame ray with the surface.
    ///
    /// `dir` must be unit length. Returns `None` when the ray misses or the
    /// origin is inside the shape.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        match self.spec.family {
            ShapeFamily::Box => self.raycast_box(origin, dir),
            ShapeFamily::Superquadric { .. } => self.raycast_implicit(origin, dir),
        }
    }

    fn raycast_box(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut near_axis = 0usize;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a].abs() > self.half[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let mut t0 = (-self.half[a] - origin[a]) * inv;
            let mut t1 = (self.half[a] - origin[a]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            if t0 > t_near {
                t_near = t0;
                near_axis = a;
            }
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_near <= 1e-12 {
            // The origin is inside or behind the entry face.
            return None;
        }
        let point = origin + dir * t_near;
        let mut normal = Vector3::zeros();
        normal[near_axis] = -dir[near_axis].signum();
        Some(RayHit {
            t: t_near,
            point,
            normal,
        })
    }

    fn raycast_implicit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        let (t0, t1) = slab_clip(origin, dir, &self.aabb_half)?;
        let t0 = t0.max(1e-9);
        if t0 >= t1 {
            return None;
        }
        if self.implicit(&(origin + dir * t0)) < 1.0 {
            return None;
        }
        let step = (self.half.min() / 8.0).clamp(5e-4, 2.5e-3);
        let mut prev = t0;
        let mut t = t0 + step;
        loop {
            let t_probe = t.min(t1);
            if self.implicit(&(origin + dir * t_probe)) < 1.0 {
                // Crossed the surface inside (prev, t_probe]; bisect.
                let (mut lo, mut hi) = (prev, t_probe);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.implicit(&(origin + dir * mid)) < 1.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let t_hit = 0.5 * (lo + hi);
                let point = origin + dir * t_hit;
                return Some(RayHit {
                    t: t_hit,
                    point,
                    normal: self.implicit_normal(&point),
                });
            }
            if t_probe >= t1 {
                return None;
            }
            prev = t_probe;
            t += step;
        }
    }
}

/// Clip a ray against a centered axis-aligned box; returns the parameter
/// interval inside the box.
fn slab_clip(origin: &Vector3<f64>, dir: &Vector3<f64>, half: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let mut lo = (-half[a] - origin[a]) * inv;
        let mut hi = (half[a] - origin[a]) * inv;
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    if t1 <= 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

fn signed_pow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

fn superquadric_mesh(spec: &ShapeSpec) -> TriMesh {
    let ShapeFamily::Superquadric { eps1, eps2 } = spec.family else {
        unreachable!("mesh is only built for superquadrics");
    };
    let half = spec.extents / 2.0;
    let tau = spec.taper();

    let mut vertices = Vec::with_capacity((MESH_ETA_STEPS + 1) * MESH_OMEGA_STEPS);
    for i in 0..=MESH_ETA_STEPS {
        let eta = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * i as f64 / MESH_ETA_STEPS as f64;
        let (se, ce) = eta.sin_cos();
        for j in 0..MESH_OMEGA_STEPS {
            let omega = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * j as f64 / MESH_OMEGA_STEPS as f64;
            let (so, co) = omega.sin_cos();
            let x = half.x * signed_pow(ce, eps1) * signed_pow(co, eps2);
            let y = half.y * signed_pow(ce, eps1) * signed_pow(so, eps2);
            let z = half.z * signed_pow(se, eps1);
            let t = 1.0 + tau * (x / half.x);
            vertices.push(Vector3::new(x, y * t, z));
        }
    }

    let idx = |i: usize, j: usize| -> u32 { (i * MESH_OMEGA_STEPS + j % MESH_OMEGA_STEPS) as u32 };
    let mut triangles = Vec::new();
    let mut cumulative_area = Vec::new();
    let mut total_area = 0.0;
    for i in 0..MESH_ETA_STEPS {
        for j in 0..MESH_OMEGA_STEPS {
            for tri in [
                [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)],
                [idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)],
            ] {
                let (a, b, c) = (
                    vertices[tri[0] as usize],
                    vertices[tri[1] as usize],
                    vertices[tri[2] as usize],
                );
                let area = 0.5 * (b - a).cross(&(c - a)).norm();
                if area < 1e-14 {
                    continue;
                }
                cumulative_area.push(total_area);
                total_area += area;
                triangles.push(tri);
            }
        }
    }
    TriMesh {
        vertices,
        triangles,
        cumulative_area,
        total_area,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_spec(ex: f64, ey: f64, ez: f64) -> ShapeSpec {
        ShapeSpec::new(ShapeFamily::Box, Vector3::new(ex, ey, ez), "box0").unwrap()
    }

    fn sq_spec(eps1: f64, eps2: f64, ex: f64, ey: f64, ez: f64) -> ShapeSpec {
        ShapeSpec::new(
            ShapeFamily::Superquadric { eps1, eps2 },
            Vector3::new(ex, ey, ez),
            "sq0",
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ShapeSpec::new(ShapeFamily::Box, Vector3::new(0.01, 0.1, 0.1), "a").is_err());
        assert!(ShapeSpec::new(ShapeFamily::Box, Vector3::new(0.5, 0.1, 0.1), "a").is_err());
        assert!(ShapeSpec::new(
            ShapeFamily::Superquadric { eps1: 0.1, eps2: 1.0 },
            Vector3::new(0.1, 0.1, 0.1),
            "a"
        )
        .is_err());
        assert!(ShapeSpec::new(ShapeFamily::Box, Vector3::new(0.1, 0.1, 0.1), "bad id").is_err());
    }

    #[test]
    fn box_sampling_area_weighted() {
        // Extents 0.2 x 0.1 x 0.05: face areas 2x(0.005, 0.01, 0.02).
        let model = ShapeModel::build(&box_spec(0.2, 0.1, 0.05)).unwrap();
        let cloud = model.sample_surface(6000, 3).unwrap();
        let mut counts = [0usize; 6];
        for (p, _) in cloud.points().iter().zip(cloud.normals().unwrap()) {
            let h = model.half;
            if (p.x - h.x).abs() < 1e-12 {
                counts[0] += 1;
            } else if (p.x + h.x).abs() < 1e-12 {
                counts[1] += 1;
            } else if (p.y - h.y).abs() < 1e-12 {
                counts[2] += 1;
            } else if (p.y + h.y).abs() < 1e-12 {
                counts[3] += 1;
            } else if (p.z - h.z).abs() < 1e-12 {
                counts[4] += 1;
            } else {
                counts[5] += 1;
            }
        }
        let total_area = 2.0 * (0.1 * 0.05 + 0.2 * 0.05 + 0.2 * 0.1);
        let expect = [
            0.1 * 0.05,
            0.1 * 0.05,
            0.2 * 0.05,
            0.2 * 0.05,
            0.2 * 0.1,
            0.2 * 0.1,
        ];
        for (i, &c) in counts.iter().enumerate() {
            let frac = c as f64 / 6000.0;
            let want = expect[i] / total_area;
            assert!(
                (frac - want).abs() < 0.05 * want.max(0.05),
                "face {i}: got {frac}, want {want}"
            );
        }
    }

    #[test]
    fn unit_exponent_equal_extent_superquadric_is_a_sphere() {
        let model = ShapeModel::build(&sq_spec(1.0, 1.0, 0.2, 0.2, 0.2)).unwrap();
        let cloud = model.sample_surface(2000, 1).unwrap();
        for p in cloud.points() {
            assert!((p.norm() - 0.1).abs() < 1e-6, "radius {}", p.norm());
        }
        // Normals are radial on a sphere.
        for (p, n) in cloud.points().iter().zip(cloud.normals().unwrap()) {
            assert!(n.dot(&p.normalize()) > 0.9999);
        }
    }

    #[test]
    fn normals_point_outward_along_sample_rays() {
        for spec in [
            box_spec(0.1, 0.08, 0.06),
            sq_spec(0.8, 1.4, 0.2, 0.1, 0.08),
            sq_spec(0.4, 1.2, 0.22, 0.11, 0.07),
        ] {
            let model = ShapeModel::build(&spec).unwrap();
            let cloud = model.sample_surface(1500, 9).unwrap();
            for (p, n) in cloud.points().iter().zip(cloud.normals().unwrap()) {
                assert!(n.dot(&p.normalize()) > 0.0, "inward normal at {p:?} for {spec:?}");
            }
        }
    }

    #[test]
    fn taper_makes_negative_x_end_slim() {
        let spec = sq_spec(0.4, 1.2, 0.2, 0.1, 0.06);
        assert!(spec.taper() > 0.2);
        let model = ShapeModel::build(&spec).unwrap();
        let cloud = model.sample_surface(4000, 10).unwrap();
        let width_at = |x_lo: f64, x_hi: f64| -> f64 {
            cloud
                .points()
                .iter()
                .filter(|p| p.x >= x_lo && p.x < x_hi)
                .map(|p| p.y.abs())
                .fold(0.0f64, f64::max)
        };
        let slim = width_at(-0.09, -0.06);
        let wide = width_at(0.06, 0.09);
        assert!(slim < wide * 0.8, "slim {slim} wide {wide}");
    }

    #[test]
    fn box_raycast_hand_geometry() {
        let model = ShapeModel::build(&box_spec(0.1, 0.1, 0.05)).unwrap();
        // Straight down onto the top face.
        let hit = model
            .raycast(&Vector3::new(0.01, -0.02, 1.0), &-Vector3::z())
            .unwrap();
        assert!((hit.t - 0.975).abs() < 1e-12);
        assert_eq!(hit.normal, Vector3::z());
        // Miss to the side.
        assert!(model.raycast(&Vector3::new(0.2, 0.0, 1.0), &-Vector3::z()).is_none());
        // Origin inside.
        assert!(model.raycast(&Vector3::zeros(), &Vector3::x()).is_none());
        // Behind the ray.
        assert!(model.raycast(&Vector3::new(0.0, 0.0, 1.0), &Vector3::z()).is_none());
    }

    #[test]
    fn implicit_raycast_matches_sphere_oracle() {
        let model = ShapeModel::build(&sq_spec(1.0, 1.0, 0.2, 0.2, 0.2)).unwrap();
        let origin = Vector3::new(0.0, 0.0, 0.5);
        let dir = (Vector3::new(0.02, -0.03, 0.0) - origin).normalize();
        let hit = model.raycast(&origin, &dir).unwrap();
        // Analytic ray-sphere intersection, radius 0.1.
        let b = 2.0 * origin.dot(&dir);
        let c = origin.norm_squared() - 0.01;
        let t_oracle = (-b - (b * b - 4.0 * c).sqrt()) / 2.0;
        assert!((hit.t - t_oracle).abs() < 1e-8, "t {} oracle {t_oracle}", hit.t);
        assert!((hit.point.norm() - 0.1).abs() < 1e-8);
        assert!(hit.normal.dot(&hit.point.normalize()) > 0.9999);
    }

    #[test]
    fn implicit_raycast_lands_on_surface() {
        let model = ShapeModel::build(&sq_spec(0.5, 1.3, 0.2, 0.1, 0.08)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        for _ in 0..200 {
            let origin = Vector3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.3..0.6),
            );
            let target = Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.03..0.03),
                rng.gen_range(-0.02..0.02),
            );
            let dir = (target - origin).normalize();
            if let Some(hit) = model.raycast(&origin, &dir) {
                hits += 1;
                assert!((model.implicit(&hit.point) - 1.0).abs() < 1e-7);
            }
        }
        assert!(hits > 150, "only {hits} hits");
    }

    #[test]
    fn contains_agrees_with_surface() {
        let model = ShapeModel::build(&sq_spec(0.7, 1.1, 0.15, 0.1, 0.08)).unwrap();
        assert!(model.contains(&Vector3::zeros()));
        assert!(!model.contains(&Vector3::new(0.2, 0.0, 0.0)));
        let cloud = model.sample_surface(200, 6).unwrap();
        for p in cloud.points() {
            assert!(model.contains(&(p * 0.95)));
            assert!(!model.contains(&(p * 1.05)));
        }
    }

    #[test]
    fn anchor_is_on_the_slim_end() {
        let model = ShapeModel::build(&sq_spec(0.4, 1.2, 0.2, 0.1, 0.06)).unwrap();
        let anchor = model.upper_rim_anchor();
        assert!(anchor.x < -0.04, "anchor {anchor:?}");
        assert!(anchor.z > 0.0);

        let boxm = ShapeModel::build(&box_spec(0.1, 0.1, 0.05)).unwrap();
        assert_eq!(boxm.upper_rim_anchor(), Vector3::new(0.0, 0.0, 0.025));
    }
}
