//! Multi-view labeled datasets: viewpoint rings around a resting object,
//! rendered observations, per-object example grasps, and a documented
//! on-disk layout (a `manifest.txt` plus per-example depth/mask grid files
//! and ground-truth cloud files).

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{read_cloud, write_cloud, PointCloud};
use crate::geometry::{compose, pose_to_vector, Frame, GraspVector, Pose};
use crate::grasp_eval::GripperSpec;
use crate::{Error, Result};

use super::{
    label_example_grasp, look_at, render_depth, Intrinsics, Observation, Scene, ShapeModel,
    ShapeSpec,
};

/// One ring of camera viewpoints around the object.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewRing {
    /// Cameras on a circle at `elevation` radians above the table plane,
    /// `range` meters from the object center, looking at the object center.
    Elevated { elevation: f64, range: f64, azimuths: usize },
    /// Cameras at a fixed height looking horizontally (side-on views).
    SideOn { height: f64, range: f64, azimuths: usize },
}

/// The set of rings a dataset renders per shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointPolicy {
    pub rings: Vec<ViewRing>,
}

impl ViewpointPolicy {
    /// Turntable-style single ring at 5-degree increments.
    pub fn turntable(elevation: f64, range: f64) -> Self {
        Self {
            rings: vec![ViewRing::Elevated {
                elevation,
                range,
                azimuths: 72,
            }],
        }
    }

    pub fn view_count(&self) -> usize {
        self.rings
            .iter()
            .map(|r| match r {
                ViewRing::Elevated { azimuths, .. } | ViewRing::SideOn { azimuths, .. } => *azimuths,
            })
            .sum()
    }

    /// Camera poses for an object resting at the origin with center height
    /// `center_z`.
    pub fn camera_poses(&self, center_z: f64) -> Result<Vec<Pose>> {
        let mut poses = Vec::with_capacity(self.view_count());
        for ring in &self.rings {
            match *ring {
                ViewRing::Elevated { elevation, range, azimuths } => {
                    let target = Vector3::new(0.0, 0.0, center_z);
                    for k in 0..azimuths {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / azimuths as f64;
                        let cam = target
                            + range
                                * Vector3::new(
                                    elevation.cos() * a.cos(),
                                    elevation.cos() * a.sin(),
                                    elevation.sin(),
                                );
                        poses.push(look_at(cam, target)?);
                    }
                }
                ViewRing::SideOn { height, range, azimuths } => {
                    for k in 0..azimuths {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / azimuths as f64;
                        let cam = Vector3::new(range * a.cos(), range * a.sin(), height);
                        poses.push(look_at(cam, Vector3::new(0.0, 0.0, height))?);
                    }
                }
            }
        }
        Ok(poses)
    }
}

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub policy: ViewpointPolicy,
    pub gripper: GripperSpec,
    pub gt_cloud_points: usize,
    pub resolution: (usize, usize),
    pub intrinsics: Intrinsics,
    /// Standard deviation of optional Gaussian depth noise (0 disables it).
    pub depth_noise_std: f64,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn new(policy: ViewpointPolicy, seed: u64) -> Self {
        Self {
            policy,
            gripper: GripperSpec::default(),
            gt_cloud_points: 1024,
            resolution: (64, 64),
            intrinsics: Intrinsics::default_64(),
            depth_noise_std: 0.0,
            seed,
        }
    }
}

/// One training/evaluation example: an observation, the grasp label in the
/// camera frame, and the ground-truth geometry that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub observation: Observation,
    /// The grasp label `t*`: the gripper pose in the camera frame.
    pub grasp_camera: GraspVector,
    pub object_id: String,
    /// Ground-truth surface cloud in the object frame.
    pub gt_cloud: PointCloud,
    /// Pose of the object in the camera frame (`Object -> Camera`).
    pub object_pose_camera: Pose,
    /// The object-frame example grasp (`Gripper -> Object`).
    pub grasp_object: Pose,
    pub train: bool,
}

impl LabeledExample {
    fn validate(&self, bounding_radius: f64) -> Result<()> {
        let center = self.object_pose_camera.transform_point(&Vector3::zeros());
        let dist = (self.grasp_camera.position() - center).norm();
        if dist > 1.5 * bounding_radius {
            return Err(Error::InvalidInput(format!(
                "grasp label {dist:.3} m from object center exceeds 1.5x bounding radius"
            )));
        }
        for (i, &m) in self.observation.mask.iter().enumerate() {
            if m && self.observation.depth[i] <= 0.0 {
                return Err(Error::InvalidInput("mask marks a pixel with no return".into()));
            }
        }
        Ok(())
    }
}

/// A shape that contributed to a dataset, with its split flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShape {
    pub spec: ShapeSpec,
    pub train: bool,
}

/// A labeled multi-view dataset with a train/test split by object id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    /// The generating shapes, so downstream stages can rebuild geometry.
    pub shapes: Vec<DatasetShape>,
}

impl Dataset {
    pub fn train_examples(&self) -> Vec<&LabeledExample> {
        self.examples.iter().filter(|e| e.train).collect()
    }

    pub fn test_examples(&self) -> Vec<&LabeledExample> {
        self.examples.iter().filter(|e| !e.train).collect()
    }

    pub fn object_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        for e in &self.examples {
            if seen.insert(e.object_id.clone()) {
                ids.push(e.object_id.clone());
            }
        }
        ids
    }
}

/// Render and label a dataset: every shape is placed at its canonical
/// resting pose and imaged from every policy viewpoint. Views that miss the
/// object are skipped with a warning.
pub fn make_dataset(
    shapes: &[ShapeSpec],
    test_ids: &[String],
    cfg: &DatasetConfig,
) -> Result<Dataset> {
    if shapes.is_empty() {
        return Err(Error::InvalidInput("dataset needs at least one shape".into()));
    }
    let test_set: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::new();
    let mut dataset_shapes = Vec::with_capacity(shapes.len());

    for spec in shapes {
        let label_seed: u64 = seeder.gen();
        let cloud_seed: u64 = seeder.gen();
        let noise_seed: u64 = seeder.gen();

        let model = Arc::new(ShapeModel::build(spec)?);
        let grasp_object = label_example_grasp(&model, &cfg.gripper, label_seed)?;
        let gt_cloud = model.sample_surface(cfg.gt_cloud_points, cloud_seed)?;
        let center_z = -model.min_z();
        let train = !test_set.contains(spec.id.as_str());
        dataset_shapes.push(DatasetShape {
            spec: spec.clone(),
            train,
        });
        let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);

        for (vi, camera_pose) in cfg.policy.camera_poses(center_z)?.into_iter().enumerate() {
            let scene = Scene::tabletop(model.clone(), 0.0, Vector2::zeros(), camera_pose)?;
            let mut observation = match render_depth(&scene, cfg.resolution, cfg.intrinsics) {
                Ok(obs) => obs,
                Err(Error::ObjectOutOfView) => {
                    log::warn!("shape {} view {vi} misses the object; skipped", spec.id);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if cfg.depth_noise_std > 0.0 {
                let normal = Normal::new(0.0, cfg.depth_noise_std)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                for d in observation.depth.iter_mut() {
                    if *d > 0.0 {
                        *d = (*d + normal.sample(&mut noise_rng)).max(1e-6);
                    }
                }
            }

            let object_pose_camera = compose(&camera_pose.invert(), &scene.object_pose)?;
            let grasp_camera_pose = compose(&object_pose_camera, &grasp_object)?;
            let example = LabeledExample {
                observation,
                grasp_camera: pose_to_vector(&grasp_camera_pose),
                object_id: spec.id.clone(),
                gt_cloud: gt_cloud.clone(),
                object_pose_camera,
                grasp_object,
                train,
            };
            example.validate(model.bounding_radius())?;
            examples.push(example);
        }
    }
    Ok(Dataset {
        examples,
        shapes: dataset_shapes,
    })
}

// ---------------------------------------------------------------------------
// On-disk layout
// ---------------------------------------------------------------------------

const MANIFEST_HEADER: &str = "graspkit-dataset 1";

fn write_grid(path: &Path, rows: usize, cols: usize, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "grid {rows} {cols}")?;
    let mut col = 0;
    for v in values {
        if col > 0 {
            write!(w, " ")?;
        }
        write!(w, "{v}")?;
        col += 1;
        if col == cols {
            writeln!(w)?;
            col = 0;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_grid(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("grid") {
        return Err(Error::Parse("bad grid header".into()));
    }
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("bad grid rows".into()))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("bad grid cols".into()))?;
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines {
        for tok in line.split_whitespace() {
            values.push(
                tok.parse()
                    .map_err(|_| Error::Parse(format!("bad grid value `{tok}`")))?,
            );
        }
    }
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "grid declared {rows}x{cols} but holds {} values",
            values.len()
        )));
    }
    Ok((rows, cols, values))
}

fn fmt12(v: &[f64; 12]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Write a dataset directory: `manifest.txt` plus per-example grid and
/// cloud files.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
    writeln!(manifest, "{MANIFEST_HEADER}")?;
    writeln!(manifest, "shapes {}", dataset.shapes.len())?;
    for s in &dataset.shapes {
        let (family, e1, e2) = match s.spec.family {
            crate::synth::ShapeFamily::Box => ("box", 0.0, 0.0),
            crate::synth::ShapeFamily::Superquadric { eps1, eps2 } => ("superquadric", eps1, eps2),
        };
        writeln!(
            manifest,
            "{} {} {family} {} {} {} {e1} {e2}",
            s.spec.id,
            if s.train { "train" } else { "test" },
            s.spec.extents.x,
            s.spec.extents.y,
            s.spec.extents.z,
        )?;
    }
    writeln!(manifest, "count {}", dataset.examples.len())?;
    for (i, e) in dataset.examples.iter().enumerate() {
        let depth_file = format!("ex{i:05}_depth.grid");
        let mask_file = format!("ex{i:05}_mask.grid");
        let cloud_file = format!("ex{i:05}_cloud.txt");
        let obs = &e.observation;
        write_grid(
            &dir.join(&depth_file),
            obs.height,
            obs.width,
            obs.depth.iter().copied(),
        )?;
        write_grid(
            &dir.join(&mask_file),
            obs.height,
            obs.width,
            obs.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }),
        )?;
        write_cloud(&dir.join(&cloud_file), &e.gt_cloud)?;
        writeln!(
            manifest,
            "{} {} {} {} {} {} {} {} {} {} {} {} {}",
            e.object_id,
            if e.train { "train" } else { "test" },
            depth_file,
            mask_file,
            cloud_file,
            fmt12(e.grasp_camera.values()),
            fmt12(&e.object_pose_camera.to_flat12()),
            fmt12(&e.grasp_object.to_flat12()),
            fmt12(&obs.camera_pose.to_flat12()),
            obs.intrinsics.fx,
            obs.intrinsics.fy,
            obs.intrinsics.cx,
            obs.intrinsics.cy,
        )?;
    }
    manifest.flush()?;
    Ok(())
}

fn parse12(toks: &mut std::str::SplitWhitespace<'_>) -> Result<[f64; 12]> {
    let mut out = [0.0; 12];
    for v in &mut out {
        *v = toks
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("truncated 12-number block".into()))?;
    }
    Ok(out)
}

/// Read a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Parse("bad dataset manifest header".into()));
    }
    let shape_count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("shapes "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("bad dataset shapes line".into()))?;
    let mut shapes = Vec::with_capacity(shape_count);
    for _ in 0..shape_count {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("truncated shapes section".into()))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(Error::Parse(format!("bad shape line `{line}`")));
        }
        let train = match toks[1] {
            "train" => true,
            "test" => false,
            other => return Err(Error::Parse(format!("bad shape split `{other}`"))),
        };
        let nums: Vec<f64> = toks[3..]
            .iter()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad shape number `{t}`"))))
            .collect::<Result<_>>()?;
        let family = match toks[2] {
            "box" => crate::synth::ShapeFamily::Box,
            "superquadric" => crate::synth::ShapeFamily::Superquadric {
                eps1: nums[3],
                eps2: nums[4],
            },
            other => return Err(Error::Parse(format!("bad shape family `{other}`"))),
        };
        shapes.push(DatasetShape {
            spec: ShapeSpec::new(family, Vector3::new(nums[0], nums[1], nums[2]), toks[0])?,
            train,
        });
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("count "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("bad dataset count line".into()))?;

    let mut examples = Vec::with_capacity(count);
    for line in lines.take(count) {
        let mut toks = line.split_whitespace();
        let object_id = toks
            .next()
            .ok_or_else(|| Error::Parse("missing object id".into()))?
            .to_string();
        let train = match toks.next() {
            Some("train") => true,
            Some("test") => false,
            other => return Err(Error::Parse(format!("bad split tag {other:?}"))),
        };
        let depth_file = toks.next().ok_or_else(|| Error::Parse("missing depth file".into()))?;
        let mask_file = toks.next().ok_or_else(|| Error::Parse("missing mask file".into()))?;
        let cloud_file = toks.next().ok_or_else(|| Error::Parse("missing cloud file".into()))?;

        let grasp_camera = GraspVector::new(parse12(&mut toks)?);
        let object_pose_camera =
            Pose::from_flat12(&parse12(&mut toks)?, Frame::Object, Frame::Camera)?;
        let grasp_object = Pose::from_flat12(&parse12(&mut toks)?, Frame::Gripper, Frame::Object)?;
        let camera_pose = Pose::from_flat12(&parse12(&mut toks)?, Frame::Camera, Frame::Table)?;
        let mut intr = [0.0; 4];
        for v in &mut intr {
            *v = toks
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("missing intrinsics".into()))?;
        }

        let (height, width, depth) = read_grid(&dir.join(depth_file))?;
        let (mh, mw, mask_vals) = read_grid(&dir.join(mask_file))?;
        if (mh, mw) != (height, width) {
            return Err(Error::Parse("mask/depth size mismatch".into()));
        }
        let observation = Observation {
            depth,
            mask: mask_vals.iter().map(|&v| v != 0.0).collect(),
            width,
            height,
            intrinsics: Intrinsics {
                fx: intr[0],
                fy: intr[1],
                cx: intr[2],
                cy: intr[3],
            },
            camera_pose,
        };
        examples.push(LabeledExample {
            observation,
            grasp_camera,
            object_id,
            gt_cloud: read_cloud(&dir.join(cloud_file))?,
            object_pose_camera,
            grasp_object,
            train,
        });
    }
    if examples.len() != count {
        return Err(Error::Parse(format!(
            "manifest declared {count} examples, found {}",
            examples.len()
        )));
    }
    Ok(Dataset { examples, shapes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ShapeFamily;

    fn shapes() -> Vec<ShapeSpec> {
        vec![
            ShapeSpec::new(ShapeFamily::Box, Vector3::new(0.06, 0.05, 0.05), "b0").unwrap(),
            ShapeSpec::new(
                ShapeFamily::Superquadric { eps1: 0.35, eps2: 1.45 },
                Vector3::new(0.23, 0.09, 0.08),
                "s0",
            )
            .unwrap(),
        ]
    }

    #[test]
    fn turntable_ring_yields_72_examples() {
        let spec = vec![shapes().remove(0)];
        let cfg = DatasetConfig::new(ViewpointPolicy::turntable(0.9, 0.5), 3);
        let ds = make_dataset(&spec, &[], &cfg).unwrap();
        assert_eq!(ds.examples.len(), 72);
    }

    #[test]
    fn grasp_label_is_kinematically_consistent() {
        let cfg = DatasetConfig::new(
            ViewpointPolicy {
                rings: vec![ViewRing::Elevated { elevation: 0.9, range: 0.5, azimuths: 4 }],
            },
            7,
        );
        let ds = make_dataset(&shapes(), &["s0".into()], &cfg).unwrap();
        for e in &ds.examples {
            let recomputed = compose(&e.object_pose_camera, &e.grasp_object).unwrap();
            let stored = &e.grasp_camera;
            let r = pose_to_vector(&recomputed);
            for i in 0..12 {
                assert!((r.values()[i] - stored.values()[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_is_disjoint_by_object_id() {
        let cfg = DatasetConfig::new(
            ViewpointPolicy {
                rings: vec![ViewRing::SideOn { height: 0.065, range: 0.5, azimuths: 3 }],
            },
            9,
        );
        let ds = make_dataset(&shapes(), &["s0".into()], &cfg).unwrap();
        let train_ids: HashSet<_> = ds.train_examples().iter().map(|e| e.object_id.clone()).collect();
        let test_ids: HashSet<_> = ds.test_examples().iter().map(|e| e.object_id.clone()).collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert!(!train_ids.is_empty() && !test_ids.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = DatasetConfig::new(
            ViewpointPolicy {
                rings: vec![ViewRing::Elevated { elevation: 0.7, range: 0.5, azimuths: 3 }],
            },
            11,
        );
        let a = make_dataset(&shapes(), &[], &cfg).unwrap();
        let b = make_dataset(&shapes(), &[], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig::new(
            ViewpointPolicy {
                rings: vec![ViewRing::Elevated { elevation: 0.8, range: 0.5, azimuths: 2 }],
            },
            13,
        );
        let ds = make_dataset(&shapes(), &["b0".into()], &cfg).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn observations_backproject_onto_the_object() {
        let cfg = DatasetConfig::new(
            ViewpointPolicy {
                rings: vec![ViewRing::Elevated { elevation: 0.9, range: 0.45, azimuths: 2 }],
            },
            5,
        );
        let specs = shapes();
        let ds = make_dataset(&specs, &[], &cfg).unwrap();
        for e in &ds.examples {
            let cloud = e.observation.backproject(true).unwrap();
            let in_object = cloud
                .transformed(&e.object_pose_camera.invert())
                .unwrap();
            let spec = specs.iter().find(|s| s.id == e.object_id).unwrap();
            let model = ShapeModel::build(spec).unwrap();
            // Masked pixels back-project to within a whisker of the surface.
            let mut worst: f64 = 0.0;
            for p in in_object.points() {
                let on = model
                    .raycast(&(p * 2.0), &-p.normalize())
                    .map(|h| (h.point - p).norm())
                    .unwrap_or(f64::INFINITY);
                worst = worst.max(on);
            }
            assert!(worst < 2e-3, "worst surface distance {worst}");
        }
    }
}
