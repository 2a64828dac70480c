//! Grasp proposal methods: a learned 12-number pose regressor, the naive
//! centroid heuristic, and the library oracle that registers a known cloud
//! to estimate the object pose.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::{icp_align, IcpParams};
use crate::cloud::{principal_axes, read_cloud, subsample, write_cloud, PointCloud};
use crate::geometry::{compose, rotation_about_axis, Frame, GraspVector, Plane, Pose};
use crate::grasp_eval::GripperSpec;
use crate::nn::{grasp_loss_batch, Mlp, MlpTopology, Optimizer, TrainConfig};
use crate::recon::{encode_observation, OBS_ENCODING_LEN};
use crate::synth::{LabeledExample, Observation, ShapeModel, ShapeSpec};
use crate::{Error, Result};

/// Learned grasp regressor: observation encoding in, 12-number grasp out.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalModel {
    net: Mlp,
}

impl ProposalModel {
    pub fn new(net: Mlp) -> Result<Self> {
        if net.input_dim() != OBS_ENCODING_LEN || net.output_dim() != 12 {
            return Err(Error::ShapeMismatch {
                expected: OBS_ENCODING_LEN,
                found: net.input_dim(),
            });
        }
        Ok(Self { net })
    }

    /// Fresh regressor with the given hidden sizes.
    pub fn init(hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![OBS_ENCODING_LEN];
        sizes.extend_from_slice(hidden);
        sizes.push(12);
        Ok(Self {
            net: Mlp::init_he(MlpTopology::new(sizes)?, seed),
        })
    }

    /// Default desk-scale head (hidden `[256, 128]`).
    pub fn default_sizes(seed: u64) -> Result<Self> {
        Self::init(&[256, 128], seed)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// Raw 12-number prediction.
    pub fn predict_vector(&self, o: &Observation) -> Result<GraspVector> {
        let encoding = encode_observation(o)?;
        let out = self.net.forward(&encoding)?;
        let mut values = [0.0; 12];
        values.copy_from_slice(&out);
        Ok(GraspVector::new(values))
    }

    /// Predicted grasp pose in the camera frame, with the rotation block
    /// projected onto the nearest rotation.
    pub fn propose(&self, o: &Observation) -> Result<Pose> {
        self.predict_vector(o)?.to_pose(Frame::Gripper, Frame::Camera)
    }
}

/// Train the regressor on the combined translation/rotation loss. Returns
/// the trained model and the mean loss per epoch.
pub fn train_proposal(
    m: &ProposalModel,
    data: &[&LabeledExample],
    cfg: &TrainConfig,
) -> Result<(ProposalModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let mut encodings = Vec::with_capacity(data.len());
    let mut targets = Vec::with_capacity(data.len());
    for e in data {
        encodings.push(encode_observation(&e.observation)?);
        targets.push(*e.grasp_camera.values());
    }

    let mut model = m.clone();
    let mut optimizer = Optimizer::new(cfg.optimizer, model.net.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = crate::nn::scheduled_learning_rate(cfg.learning_rate, epoch, cfg.epochs);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut predictions = Vec::with_capacity(batch.len());
            let mut traces = Vec::with_capacity(batch.len());
            let mut batch_targets = Vec::with_capacity(batch.len());
            for &idx in batch {
                let trace = model.net.forward_trace(&encodings[idx])?;
                let mut p = [0.0; 12];
                p.copy_from_slice(trace.output());
                predictions.push(p);
                traces.push(trace);
                batch_targets.push(targets[idx]);
            }
            let (loss, grads) =
                grasp_loss_batch(&predictions, &batch_targets, &cfg.loss_weights);
            epoch_loss += loss * batch.len() as f64;

            let mut param_grad = vec![0.0; model.net.params().len()];
            for (trace, g) in traces.iter().zip(&grads) {
                model.net.backward_with_trace(trace, g, &mut param_grad)?;
            }
            optimizer.step(model.net.params_mut(), &param_grad, lr)?;
        }
        curve.push(epoch_loss / data.len() as f64);
    }
    Ok((model, curve))
}

/// Naive baseline: the visible centroid jittered in the table plane, 20 cm
/// above the table, gripper pointing down with the grip axis along the
/// cloud's major axis. Operates in the table frame.
pub fn naive_propose(visible: &PointCloud, table: &Plane, seed: u64) -> Result<Pose> {
    if visible.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if visible.frame() != Frame::Table {
        return Err(Error::FrameMismatch {
            expected: Frame::Table,
            found: visible.frame(),
        });
    }
    let (centroid, axes, _) = principal_axes(visible)?;

    // In-plane basis for the jitter.
    let n = table.normal;
    let mut e1 = n.cross(&Vector3::x());
    if e1.norm() < 1e-9 {
        e1 = n.cross(&Vector3::y());
    }
    let e1 = e1.normalize();
    let e2 = n.cross(&e1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (du, dv) = (rng.gen_range(-0.02..=0.02), rng.gen_range(-0.02..=0.02));

    let on_plane = centroid - n * table.signed_distance(&centroid);
    let position = on_plane + e1 * du + e2 * dv + n * 0.20;

    // Grip axis: major axis projected into the table plane.
    let major = axes.column(0).into_owned();
    let mut grip = major - n * major.dot(&n);
    if grip.norm() < 1e-9 {
        grip = e1;
    }
    let grip = grip.normalize();
    let approach = -n;
    let y = approach.cross(&grip);
    let rotation = nalgebra::Matrix3::from_columns(&[grip, y, approach]);
    Pose::from_parts(rotation, position, Frame::Gripper, Frame::Table)
}

/// One library entry: the canonical object cloud and its example grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    /// Canonical surface cloud in the object frame.
    pub cloud: PointCloud,
    /// Example grasp (`Gripper -> Object`).
    pub grasp: Pose,
}

/// Per-object canonical clouds with their example grasps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraspLibrary {
    entries: BTreeMap<String, LibraryEntry>,
}

impl GraspLibrary {
    /// Build from shape specs: every entry's grasp comes straight from the
    /// labeler, which only returns grasps that pass evaluation on the
    /// entry's own geometry.
    pub fn build(
        shapes: &[ShapeSpec],
        gripper: &GripperSpec,
        cloud_points: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = BTreeMap::new();
        for spec in shapes {
            let label_seed = seeder.gen();
            let cloud_seed = seeder.gen();
            let model = ShapeModel::build(spec)?;
            let grasp = crate::synth::label_example_grasp(&model, gripper, label_seed)?;
            let cloud = model.sample_surface(cloud_points, cloud_seed)?;
            entries.insert(spec.id.clone(), LibraryEntry { cloud, grasp });
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, id: String, entry: LibraryEntry) {
        self.entries.insert(id, entry);
    }

    pub fn get(&self, id: &str) -> Option<&LibraryEntry> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Write `library.txt` (one `id cloud-file 12-number-grasp` line per
    /// entry, rotation row-major then translation) plus the cloud files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = BufWriter::new(fs::File::create(dir.join("library.txt"))?);
        writeln!(manifest, "graspkit-library 1")?;
        for (id, entry) in &self.entries {
            let cloud_file = format!("{id}_cloud.txt");
            write_cloud(&dir.join(&cloud_file), &entry.cloud)?;
            let flat = entry.grasp.to_flat12();
            let nums: Vec<String> = flat.iter().map(|v| v.to_string()).collect();
            writeln!(manifest, "{id} {cloud_file} {}", nums.join(" "))?;
        }
        manifest.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("library.txt"))?;
        let mut lines = text.lines();
        if lines.next() != Some("graspkit-library 1") {
            return Err(Error::Parse("bad library manifest header".into()));
        }
        let mut entries = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let id = toks
                .next()
                .ok_or_else(|| Error::Parse("missing library id".into()))?
                .to_string();
            let cloud_file = toks
                .next()
                .ok_or_else(|| Error::Parse("missing library cloud file".into()))?;
            let mut flat = [0.0; 12];
            for v in &mut flat {
                *v = toks
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse("bad library grasp numbers".into()))?;
            }
            let grasp = Pose::from_flat12(&flat, Frame::Gripper, Frame::Object)?;
            let cloud = read_cloud(&dir.join(cloud_file))?;
            entries.insert(id, LibraryEntry { cloud, grasp });
        }
        Ok(Self { entries })
    }
}

/// Estimate the pose of a library object in the camera frame (`Object ->
/// Camera`) by registering the partial visible cloud onto the complete
/// canonical cloud.
///
/// The search exploits the tabletop prior (known camera-to-table transform,
/// object resting on the plane): a dense coarse sweep over resting yaws with
/// centroid-aligned planar translation and the height pinned by the resting
/// constraint, followed by a full ICP polish from the best coarse starts.
/// `p` supplies the iteration cap, convergence delta, and gate; its `init`
/// is superseded by the resting-pose search.
pub fn estimate_object_pose(
    entry: &LibraryEntry,
    visible: &PointCloud,
    camera_pose: &Pose,
    p: &IcpParams,
) -> Result<Pose> {
    if visible.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let visible_table = visible.transformed(camera_pose)?;
    let source = subsample(&visible_table, visible_table.len().min(1024), 0x11b)?;
    // Strip normals; the rigid fit only uses positions.
    let source = PointCloud::new(source.points().to_vec(), source.frame())?;
    let source_index = source.index()?;
    let target = PointCloud::new(entry.cloud.points().to_vec(), entry.cloud.frame())?;
    let target_index = target.index()?;
    let source_centroid = source.centroid()?;
    let target_centroid = target.centroid()?;
    // A resting object sits with its lowest surface point on the plane.
    let rest_height = -target.points().iter().map(|q| q.z).fold(f64::INFINITY, f64::min);
    let gate2 = p.max_correspondence_dist * p.max_correspondence_dist;
    let camera_position = *camera_pose.translation();

    // Two-sided pose score: forward capped MSE (visible onto model) plus a
    // visibility-consistency term. Model points whose outward normals face
    // the camera should have been observed, so a candidate pose that turns
    // unobserved geometry toward the camera pays for it; this separates
    // near-symmetric yaw flips that the forward term alone cannot.
    let pose_score = |object_in_table: &Pose| -> f64 {
        let to_object = object_in_table.invert();
        let forward: f64 = source
            .points()
            .iter()
            .map(|q| target_index.nearest(&to_object.transform_point(q)).1.min(gate2))
            .sum::<f64>()
            / source.len() as f64;
        let backward = match entry.cloud.normals() {
            None => 0.0,
            Some(normals) => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (q, n) in entry.cloud.points().iter().zip(normals) {
                    let q_table = object_in_table.transform_point(q);
                    let n_table = object_in_table.transform_vector(n);
                    let to_camera = camera_position - q_table;
                    // Margin against grazing-angle points the renderer can miss.
                    if n_table.dot(&to_camera) > 0.2 * to_camera.norm() {
                        sum += source_index.nearest(&q_table).1.min(gate2);
                        count += 1;
                    }
                }
                if count == 0 {
                    gate2
                } else {
                    sum / count as f64
                }
            }
        };
        forward + backward
    };

    // Registration stays on the resting manifold: planar ICP over yaw and
    // xy translation with the height pinned by the resting constraint.
    // Unconstrained SE(3) polish can tilt a partial view into a wrong yaw
    // basin, so tilt is never fitted here.
    let se2_polish = |start_yaw: f64, start_translation: Vector3<f64>, rounds: usize| -> Result<Pose> {
        let mut yaw = start_yaw;
        let mut translation = start_translation;
        for _ in 0..rounds {
            let rotation = rotation_about_axis(&Vector3::z(), yaw);
            let object_in_table =
                Pose::from_parts(rotation, translation, Frame::Object, Frame::Table)?;
            let to_object = object_in_table.invert();
            // Gated pairs: table-frame source point, table-frame model match.
            let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
            for q in source.points() {
                let p_obj = to_object.transform_point(q);
                let (nn, d2, _) = target_index.nearest(&p_obj);
                if d2 <= gate2 {
                    pairs.push((*q, object_in_table.transform_point(&nn)));
                }
            }
            if pairs.len() < 3 {
                break;
            }
            // Closed-form planar fit rotating the matched model points onto
            // the source about the vertical axis.
            let n = pairs.len() as f64;
            let q_mean: Vector3<f64> = pairs.iter().map(|(q, _)| *q).sum::<Vector3<f64>>() / n;
            let m_mean: Vector3<f64> = pairs.iter().map(|(_, m)| *m).sum::<Vector3<f64>>() / n;
            let mut dot = 0.0;
            let mut cross = 0.0;
            for (q, m) in &pairs {
                let qc = q - q_mean;
                let mc = m - m_mean;
                dot += mc.x * qc.x + mc.y * qc.y;
                cross += mc.x * qc.y - mc.y * qc.x;
            }
            let delta_yaw = cross.atan2(dot);
            let spin = rotation_about_axis(&Vector3::z(), delta_yaw);
            yaw += delta_yaw;
            let mut new_translation = q_mean - spin * (m_mean - translation) - translation;
            new_translation += translation;
            new_translation.z = rest_height;
            if delta_yaw.abs() < 1e-7 && (new_translation - translation).norm() < 1e-8 {
                translation = new_translation;
                break;
            }
            translation = new_translation;
        }
        Pose::from_parts(
            rotation_about_axis(&Vector3::z(), yaw),
            translation,
            Frame::Object,
            Frame::Table,
        )
    };

    // Translation init per yaw: a partial view's centroid sits on the near
    // face, not the body center, so align the model's near support along
    // the horizontal viewing axis with the observed near support, and align
    // centroids only laterally.
    let view = camera_pose.transform_vector(&Vector3::z());
    let mut view_xy = Vector3::new(view.x, view.y, 0.0);
    if view_xy.norm() < 1e-6 {
        view_xy = Vector3::x();
    }
    let u = view_xy.normalize();
    let v = Vector3::z().cross(&u);
    let source_support = source
        .points()
        .iter()
        .map(|q| q.dot(&u))
        .fold(f64::INFINITY, f64::min);
    let source_lateral = source_centroid.dot(&v);

    // Coarse sweep: every 5-degree resting yaw with a short planar polish.
    const COARSE_STEPS: usize = 72;
    let mut scored: Vec<(f64, usize, Pose)> = Vec::with_capacity(COARSE_STEPS);
    for k in 0..COARSE_STEPS {
        let yaw = 2.0 * std::f64::consts::PI * k as f64 / COARSE_STEPS as f64;
        let rotation = rotation_about_axis(&Vector3::z(), yaw);
        let model_support = target
            .points()
            .iter()
            .map(|q| (rotation * q).dot(&u))
            .fold(f64::INFINITY, f64::min);
        let model_lateral = (rotation * target_centroid).dot(&v);
        let translation = u * (source_support - model_support)
            + v * (source_lateral - model_lateral)
            + Vector3::new(0.0, 0.0, rest_height);
        let object_in_table = se2_polish(yaw, translation, 3)?;
        scored.push((pose_score(&object_in_table), k, object_in_table));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores").then(a.1.cmp(&b.1)));

    // Fully polish the best coarse candidates from distinct yaw basins
    // (30-degree non-maximum suppression keeps one pick per basin) and keep
    // the best-scoring polished pose.
    let mut picked_yaws: Vec<usize> = Vec::with_capacity(6);
    let mut best: Option<(f64, Pose)> = None;
    for (_, k, start) in &scored {
        let distinct = picked_yaws.iter().all(|&j| {
            let d = k.abs_diff(j);
            d.min(COARSE_STEPS - d) >= COARSE_STEPS / 12
        });
        if !distinct {
            continue;
        }
        picked_yaws.push(*k);
        let start_yaw = start.rotation().column(0).y.atan2(start.rotation().column(0).x);
        let object_in_table = se2_polish(start_yaw, *start.translation(), p.max_iterations)?;
        let score = pose_score(&object_in_table);
        if best.as_ref().map(|(s, _)| score < *s).unwrap_or(true) {
            best = Some((score, object_in_table));
        }
        if picked_yaws.len() == 6 {
            break;
        }
    }
    let (_, object_in_table) = best.ok_or(Error::NoCorrespondences)?;
    compose(&camera_pose.invert(), &object_in_table)
}

/// Library proposal: estimate the object pose from the visible cloud and
/// return the stored example grasp in the camera frame.
pub fn library_propose(
    lib: &GraspLibrary,
    object_id: &str,
    visible: &PointCloud,
    camera_pose: &Pose,
    p: &IcpParams,
) -> Result<Pose> {
    let entry = lib
        .get(object_id)
        .ok_or_else(|| Error::UnknownObject(object_id.to_string()))?;
    let object_in_camera = estimate_object_pose(entry, visible, camera_pose, p)?;
    compose(&object_in_camera, &entry.grasp)
}
