//! Hypernetwork shape reconstruction: an observation encoding drives a
//! hypernetwork that emits the weights of a sphere-to-surface network, whose
//! samples form the reconstructed cloud. Training minimizes the Chamfer
//! distance to the ground-truth cloud in the camera frame; at inference the
//! reconstruction can be ICP-aligned onto the visible cloud.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::align::{icp_align_multistart, yaw_starts, IcpParams, IcpResult};
use crate::cloud::{NnIndex, PointCloud};
use crate::geometry::Frame;
use crate::nn::{HyperNet, Mlp, MlpTopology, Optimizer, TrainConfig};
use crate::synth::{LabeledExample, Observation};
use crate::{Error, Result};

/// Side length of the downsampled depth/mask channels.
const ENCODE_SIDE: usize = 16;

/// Length of the observation encoding: two 16x16 channels, the mask
/// centroid, and the mask bounding box, all in normalized units.
pub const OBS_ENCODING_LEN: usize = 2 * ENCODE_SIDE * ENCODE_SIDE + 2 + 4;

/// The fixed source domain of the mapping network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalDomain {
    UnitSphere,
}

/// Hypernetwork reconstructor: `hypernet` maps an observation encoding to
/// the parameters of the template network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconModel {
    hypernet: HyperNet,
    canonical_domain: CanonicalDomain,
    /// Domain samples drawn at inference time.
    pub domain_samples: usize,
}

impl ReconModel {
    pub fn new(hypernet: HyperNet, domain_samples: usize) -> Result<Self> {
        if domain_samples == 0 {
            return Err(Error::InvalidInput("domain_samples must be >= 1".into()));
        }
        Ok(Self {
            hypernet,
            canonical_domain: CanonicalDomain::UnitSphere,
            domain_samples,
        })
    }

    /// Fresh model with the given hidden sizes (template maps R^3 to R^3).
    pub fn init(
        hyper_hidden: &[usize],
        template_hidden: &[usize],
        domain_samples: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut template_sizes = vec![3];
        template_sizes.extend_from_slice(template_hidden);
        template_sizes.push(3);
        let template = MlpTopology::new(template_sizes)?;
        let mut hyper_sizes = vec![OBS_ENCODING_LEN];
        hyper_sizes.extend_from_slice(hyper_hidden);
        hyper_sizes.push(template.param_count());
        let hypernet = HyperNet::init(MlpTopology::new(hyper_sizes)?, template, seed)?;
        ReconModel::new(hypernet, domain_samples)
    }

    /// Default desk-scale sizes: template `[3, 64, 64, 3]`, hypernetwork
    /// hidden layers `[256, 256]`, 4096 inference samples.
    pub fn default_sizes(seed: u64) -> Result<Self> {
        Self::init(&[256, 256], &[64, 64], 4096, seed)
    }

    pub fn hypernet(&self) -> &HyperNet {
        &self.hypernet
    }

    pub fn hypernet_mut(&mut self) -> &mut HyperNet {
        &mut self.hypernet
    }

    pub fn canonical_domain(&self) -> CanonicalDomain {
        self.canonical_domain
    }
}

/// Encode an observation for the networks: block-averaged masked depth and
/// mask channels (16x16 each), then the mask centroid and bounding box in
/// normalized pixel units.
pub fn encode_observation(o: &Observation) -> Result<Vec<f64>> {
    if o.width % ENCODE_SIDE != 0 || o.height % ENCODE_SIDE != 0 {
        return Err(Error::InvalidInput(format!(
            "observation size {}x{} not divisible by {ENCODE_SIDE}",
            o.width, o.height
        )));
    }
    let (bw, bh) = (o.width / ENCODE_SIDE, o.height / ENCODE_SIDE);
    let mut encoding = Vec::with_capacity(OBS_ENCODING_LEN);

    let mut mask_count = 0usize;
    let (mut cu, mut cv) = (0.0f64, 0.0f64);
    let (mut min_u, mut min_v) = (f64::INFINITY, f64::INFINITY);
    let (mut max_u, mut max_v) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in 0..o.height {
        for u in 0..o.width {
            if o.mask_at(u, v) {
                mask_count += 1;
                cu += u as f64;
                cv += v as f64;
                min_u = min_u.min(u as f64);
                max_u = max_u.max(u as f64);
                min_v = min_v.min(v as f64);
                max_v = max_v.max(v as f64);
            }
        }
    }
    if mask_count == 0 {
        return Err(Error::EmptyMask);
    }

    // Masked depth channel (meters; background zero), block means.
    for bv in 0..ENCODE_SIDE {
        for bu in 0..ENCODE_SIDE {
            let mut sum = 0.0;
            for dv in 0..bh {
                for du in 0..bw {
                    let (u, v) = (bu * bw + du, bv * bh + dv);
                    if o.mask_at(u, v) {
                        sum += o.depth_at(u, v);
                    }
                }
            }
            encoding.push(sum / (bw * bh) as f64);
        }
    }
    // Mask coverage channel.
    for bv in 0..ENCODE_SIDE {
        for bu in 0..ENCODE_SIDE {
            let mut sum = 0.0;
            for dv in 0..bh {
                for du in 0..bw {
                    if o.mask_at(bu * bw + du, bv * bh + dv) {
                        sum += 1.0;
                    }
                }
            }
            encoding.push(sum / (bw * bh) as f64);
        }
    }
    let n = mask_count as f64;
    encoding.push(cu / n / o.width as f64);
    encoding.push(cv / n / o.height as f64);
    encoding.push(min_u / o.width as f64);
    encoding.push(min_v / o.height as f64);
    encoding.push(max_u / o.width as f64);
    encoding.push(max_v / o.height as f64);
    debug_assert_eq!(encoding.len(), OBS_ENCODING_LEN);
    Ok(encoding)
}

/// Uniform unit-sphere samples via normalized Gaussian triples.
pub fn sample_unit_sphere(n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-9 {
            out.push(v / norm);
        }
    }
    out
}

/// Reconstruct `n` surface points in the camera frame, deterministic per
/// seed.
pub fn reconstruct(m: &ReconModel, o: &Observation, n: usize, seed: u64) -> Result<PointCloud> {
    let encoding = encode_observation(o)?;
    let target = m.hypernet().emit(&encoding)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_unit_sphere(n, &mut rng)
        .into_iter()
        .map(|x| {
            let y = target.forward(x.as_slice()).expect("template input is 3-d");
            Vector3::new(y[0], y[1], y[2])
        })
        .collect();
    PointCloud::new(points, Frame::Camera)
}

/// Symmetric Chamfer loss between a predicted point set and an indexed
/// ground-truth cloud, with the gradient for each predicted point.
///
/// The gradient treats the nearest-neighbor assignments as fixed:
/// `2 (p - nn_gt(p)) / |Y|` plus `2 (p - q) / |G|` for every ground-truth
/// point `q` matched to `p`.
pub fn chamfer_loss_and_grad(
    predicted: &[Vector3<f64>],
    gt_points: &[Vector3<f64>],
    gt_index: &NnIndex,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if predicted.is_empty() || gt_points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let pred_cloud = PointCloud::new(predicted.to_vec(), Frame::Camera)?;
    let pred_index = pred_cloud.index()?;

    let inv_n = 1.0 / predicted.len() as f64;
    let inv_m = 1.0 / gt_points.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![Vector3::zeros(); predicted.len()];
    for (i, p) in predicted.iter().enumerate() {
        let (q, d2, _) = gt_index.nearest(p);
        loss += d2 * inv_n;
        grads[i] += 2.0 * inv_n * (p - q);
    }
    for q in gt_points {
        let (p, d2, i) = pred_index.nearest(q);
        loss += d2 * inv_m;
        grads[i] += 2.0 * inv_m * (p - q);
    }
    Ok((loss, grads))
}

/// Train the reconstructor with per-example Chamfer loss against the
/// ground-truth cloud posed in the camera frame. Returns the trained model
/// and the mean loss per epoch.
pub fn train_recon(
    m: &ReconModel,
    data: &[&LabeledExample],
    cfg: &TrainConfig,
) -> Result<(ReconModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }

    struct Prepared {
        encoding: Vec<f64>,
        gt_points: Vec<Vector3<f64>>,
        gt_index: NnIndex,
    }
    let mut prepared = Vec::with_capacity(data.len());
    for e in data {
        let gt_camera = e.gt_cloud.transformed(&e.object_pose_camera)?;
        prepared.push(Prepared {
            encoding: encode_observation(&e.observation)?,
            gt_index: gt_camera.index()?,
            gt_points: gt_camera.points().to_vec(),
        });
    }

    let mut model = m.clone();
    let param_count = model.hypernet().mlp().params().len();
    let mut optimizer = Optimizer::new(cfg.optimizer, param_count);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);

    let template = model.hypernet().template().clone();
    let theta_len = template.param_count();
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = crate::nn::scheduled_learning_rate(cfg.learning_rate, epoch, cfg.epochs);
        // Deterministic per-epoch shuffle.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        let mut batch_grad = vec![0.0; param_count];
        let mut in_batch = 0usize;
        for (step, &idx) in order.iter().enumerate() {
            let ex = &prepared[idx];
            let g_trace = model.hypernet().mlp().forward_trace(&ex.encoding)?;
            let target = Mlp::from_params(template.clone(), g_trace.output().to_vec())?;

            // Fresh domain sample each visit.
            let xs = sample_unit_sphere(cfg.domain_samples, &mut rng);
            let mut predicted = Vec::with_capacity(xs.len());
            let mut traces = Vec::with_capacity(xs.len());
            for x in &xs {
                let t = target.forward_trace(x.as_slice())?;
                let y = t.output();
                predicted.push(Vector3::new(y[0], y[1], y[2]));
                traces.push(t);
            }

            let (loss, point_grads) =
                chamfer_loss_and_grad(&predicted, &ex.gt_points, &ex.gt_index)?;
            epoch_loss += loss;

            let mut d_theta = vec![0.0; theta_len];
            for (t, g) in traces.iter().zip(&point_grads) {
                target.backward_with_trace(t, g.as_slice(), &mut d_theta)?;
            }
            model
                .hypernet()
                .mlp()
                .backward_with_trace(&g_trace, &d_theta, &mut batch_grad)?;
            in_batch += 1;

            if in_batch == cfg.batch_size || step + 1 == order.len() {
                for g in &mut batch_grad {
                    *g /= in_batch as f64;
                }
                optimizer.step(
                    model.hypernet_mut().mlp_mut().params_mut(),
                    &batch_grad,
                    lr,
                )?;
                batch_grad.iter_mut().for_each(|g| *g = 0.0);
                in_batch = 0;
            }
        }
        curve.push(epoch_loss / prepared.len() as f64);
    }
    Ok((model, curve))
}

/// A reconstruction after ICP alignment onto the visible cloud. `icp` is
/// `None` when alignment found no correspondences and the unaligned
/// reconstruction was kept.
#[derive(Debug, Clone)]
pub struct AlignedReconstruction {
    pub cloud: PointCloud,
    pub icp: Option<IcpResult>,
}

/// Reconstruct and register onto the visible cloud with multi-start ICP
/// (four starts yawed about the table's up axis). Falls back to the
/// unaligned reconstruction when no correspondences survive the gate.
pub fn aligned_reconstruction(
    m: &ReconModel,
    o: &Observation,
    visible: &PointCloud,
    p: &IcpParams,
    seed: u64,
) -> Result<AlignedReconstruction> {
    if visible.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let recon = reconstruct(m, o, m.domain_samples, seed)?;
    let up_in_camera = o.camera_pose.invert().transform_vector(&Vector3::z());
    let angles = [0.0, 90f64.to_radians(), 180f64.to_radians(), 270f64.to_radians()];
    let starts = yaw_starts(&recon, visible.frame(), &up_in_camera, &angles)?;
    match icp_align_multistart(&recon, visible, p, &starts) {
        Ok(result) => {
            let cloud = recon.transformed(&result.transform)?;
            Ok(AlignedReconstruction {
                cloud,
                icp: Some(result),
            })
        }
        Err(Error::NoCorrespondences) => {
            log::warn!("reconstruction alignment found no correspondences; using unaligned cloud");
            Ok(AlignedReconstruction {
                cloud: recon,
                icp: None,
            })
        }
        Err(e) => Err(e),
    }
}
