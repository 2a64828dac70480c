//! Benchmark harness: scenario viewpoint geometries, the proposal by
//! refinement combination matrix over jittered tabletop scenes, trial
//! records with a results-file format, and success-rate reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{compose, pose_to_vector, rot_z, Frame, Pose};
use crate::grasp_eval::{evaluate_grasp, GripperSpec, DEFAULT_FRICTION};
use crate::propose::{GraspLibrary, ProposalModel};
use crate::recon::ReconModel;
use crate::refine::{plan_grasp, PlanInputs, ProposalMethod, RefinementMethod};
use crate::synth::{
    look_at, render_depth, visible_cloud_table, Intrinsics, ShapeModel, ShapeSpec,
};
use crate::{Error, Result};

/// Benchmark scenario: which viewpoint geometry the matrix runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    VisibleGrasp,
    HiddenGrasp,
    SimBoxes,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Scenario::VisibleGrasp => "visible-grasp",
            Scenario::HiddenGrasp => "hidden-grasp",
            Scenario::SimBoxes => "sim-boxes",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "visible-grasp" => Scenario::VisibleGrasp,
            "hidden-grasp" => Scenario::HiddenGrasp,
            "sim-boxes" => Scenario::SimBoxes,
            other => return Err(Error::Parse(format!("unknown scenario `{other}`"))),
        })
    }
}

/// One matrix row: a proposal method paired with a refinement method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Combination {
    pub proposal: ProposalMethod,
    pub refinement: RefinementMethod,
}

impl Combination {
    pub fn new(proposal: ProposalMethod, refinement: RefinementMethod) -> Self {
        Self { proposal, refinement }
    }

    pub fn needs_proposal_model(&self) -> bool {
        self.proposal == ProposalMethod::Learned
    }

    pub fn needs_recon_model(&self) -> bool {
        self.refinement == RefinementMethod::Reconstruction
    }

    pub fn needs_library(&self) -> bool {
        self.proposal == ProposalMethod::Library || self.refinement == RefinementMethod::Library
    }
}

impl std::fmt::Display for Combination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}+{}", self.proposal, self.refinement)
    }
}

impl std::str::FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, r) = s
            .split_once('+')
            .ok_or_else(|| Error::Parse(format!("combination `{s}` is not `proposal+refinement`")))?;
        Ok(Self {
            proposal: p.parse()?,
            refinement: r.parse()?,
        })
    }
}

/// The standard eight-row matrix: two baselines, three ablations, the full
/// system, and two oracle rows.
pub fn standard_combinations() -> Vec<Combination> {
    use ProposalMethod as P;
    use RefinementMethod as R;
    vec![
        Combination::new(P::Naive, R::Visible),
        Combination::new(P::Library, R::Visible),
        Combination::new(P::Naive, R::Reconstruction),
        Combination::new(P::Learned, R::None),
        Combination::new(P::Learned, R::Visible),
        Combination::new(P::Learned, R::Reconstruction),
        Combination::new(P::Learned, R::Library),
        Combination::new(P::Library, R::Reconstruction),
    ]
}

/// A shape entered into the benchmark with its train/test flag.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchShape {
    pub spec: ShapeSpec,
    pub train: bool,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub shapes: Vec<BenchShape>,
    pub combinations: Vec<Combination>,
    pub trials_per_cell: usize,
    pub seed: u64,
    /// Trial-level parallelism; results are identical for any value.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() || self.combinations.is_empty() || self.trials_per_cell == 0 {
            return Err(Error::InvalidInput(
                "experiment needs shapes, combinations, and trials".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for s in &self.shapes {
            if !ids.insert(&s.spec.id) {
                return Err(Error::InvalidInput(format!("duplicate shape id `{}`", s.spec.id)));
            }
        }
        Ok(())
    }
}

/// Pose of the table in the robot frame; fixed for the whole benchmark.
pub fn robot_base_pose() -> Pose {
    Pose::from_parts(
        rot_z(std::f64::consts::PI),
        Vector3::new(0.6, 0.0, -0.02),
        Frame::Table,
        Frame::Robot,
    )
    .expect("fixed base pose is valid")
}

/// Camera poses for a scenario.
///
/// Visible-grasp: four views at 0.5 m range and 50 degrees elevation, every
/// 90 degrees of azimuth. Hidden-grasp: four side-on views at 65 mm height
/// and 0.5 m range, at 45-degree steps on the `+x` side so the slim-end
/// grasp faces away from the camera. Sim-boxes: an eight-view azimuth ring
/// at 40 degrees elevation.
pub fn build_viewpoints(scenario: Scenario) -> Vec<Pose> {
    let target = Vector3::new(0.0, 0.0, 0.05);
    match scenario {
        Scenario::VisibleGrasp => [0.0f64, 90.0, 180.0, 270.0]
            .iter()
            .map(|az| {
                let a = az.to_radians();
                let e = 50f64.to_radians();
                let cam = target + 0.5 * Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin());
                look_at(cam, target).expect("viewpoint geometry is valid")
            })
            .collect(),
        Scenario::HiddenGrasp => [-67.5f64, -22.5, 22.5, 67.5]
            .iter()
            .map(|az| {
                let a = az.to_radians();
                let cam = Vector3::new(0.5 * a.cos(), 0.5 * a.sin(), 0.065);
                look_at(cam, Vector3::new(0.0, 0.0, 0.065))
                    .expect("viewpoint geometry is valid")
            })
            .collect(),
        Scenario::SimBoxes => (0..8)
            .map(|k| {
                let a = (k as f64) * 45f64.to_radians();
                let e = 40f64.to_radians();
                let cam = target + 0.5 * Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin());
                look_at(cam, target).expect("viewpoint geometry is valid")
            })
            .collect(),
    }
}

/// Wall-clock stage timings for one trial, in milliseconds. Excluded from
/// the deterministic results file.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub render_ms: f64,
    pub plan_ms: f64,
    pub evaluate_ms: f64,
}

/// One completed benchmark trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub object_id: String,
    pub train_object: bool,
    pub viewpoint: usize,
    pub trial: usize,
    pub combination: Combination,
    /// Camera-frame proposal encoding, when the stage produced one.
    pub proposed: Option<[f64; 12]>,
    /// Camera-frame refined grasp encoding.
    pub refined: Option<[f64; 12]>,
    pub success: bool,
    /// Failure mode or pipeline error, when the trial failed.
    pub failure: Option<String>,
    pub quality: f64,
    pub timings: StageTimings,
}

/// Model handles for the learned matrix rows.
#[derive(Clone, Copy, Default)]
pub struct BenchModels<'a> {
    pub proposal: Option<&'a ProposalModel>,
    pub recon: Option<&'a ReconModel>,
}

fn mix_seed(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the packed indices.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(c.wrapping_mul(0x94d0_49bb_1331_11eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run the full matrix: every shape, viewpoint, and trial, with every
/// combination planned on the same jittered scene. Component failures are
/// recorded, never fatal. Deterministic per seed for any `jobs` value.
pub fn run_matrix(
    cfg: &ExperimentConfig,
    models: BenchModels<'_>,
    library: Option<&GraspLibrary>,
) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let mut missing = Vec::new();
    for combo in &cfg.combinations {
        if combo.needs_proposal_model() && models.proposal.is_none() {
            missing.push("proposal checkpoint");
        }
        if combo.needs_recon_model() && models.recon.is_none() {
            missing.push("reconstruction checkpoint");
        }
        if combo.needs_library() && library.is_none() {
            missing.push("grasp library");
        }
    }
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "matrix rows need missing inputs: {}",
            missing.join(", ")
        )));
    }

    let viewpoints = build_viewpoints(cfg.scenario);
    let mut shape_models = Vec::with_capacity(cfg.shapes.len());
    for s in &cfg.shapes {
        shape_models.push(Arc::new(ShapeModel::build(&s.spec)?));
    }

    struct Task {
        shape_idx: usize,
        view_idx: usize,
        trial: usize,
    }
    let mut tasks = Vec::new();
    for shape_idx in 0..cfg.shapes.len() {
        for view_idx in 0..viewpoints.len() {
            for trial in 0..cfg.trials_per_cell {
                tasks.push(Task {
                    shape_idx,
                    view_idx,
                    trial,
                });
            }
        }
    }

    let run_task = |task: &Task| -> Vec<TrialRecord> {
        run_scene_trials(
            cfg,
            &cfg.shapes[task.shape_idx],
            &shape_models[task.shape_idx],
            &viewpoints[task.view_idx],
            task.view_idx,
            task.trial,
            models,
            library,
        )
    };

    let nested: Vec<Vec<TrialRecord>> = if cfg.jobs <= 1 {
        tasks.iter().map(run_task).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        pool.install(|| tasks.par_iter().map(run_task).collect())
    };
    Ok(nested.into_iter().flatten().collect())
}

#[allow(clippy::too_many_arguments)]
fn run_scene_trials(
    cfg: &ExperimentConfig,
    shape: &BenchShape,
    model: &Arc<ShapeModel>,
    viewpoint: &Pose,
    view_idx: usize,
    trial: usize,
    models: BenchModels<'_>,
    library: Option<&GraspLibrary>,
) -> Vec<TrialRecord> {
    let scene_seed = mix_seed(cfg.seed, view_idx as u64, trial as u64, 0x5ce4e)
        ^ fxhash(&shape.spec.id);
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    // Small pose jitter: +/- 1 cm planar, +/- 5 degrees yaw.
    let yaw = rng.gen_range(-5f64.to_radians()..=5f64.to_radians());
    let xy = Vector2::new(rng.gen_range(-0.01..=0.01), rng.gen_range(-0.01..=0.01));
    let plan_seed: u64 = rng.gen();

    let record_stub = |combination: Combination| TrialRecord {
        scenario: cfg.scenario,
        object_id: shape.spec.id.clone(),
        train_object: shape.train,
        viewpoint: view_idx,
        trial,
        combination,
        proposed: None,
        refined: None,
        success: false,
        failure: None,
        quality: 0.0,
        timings: StageTimings::default(),
    };

    let render_start = Instant::now();
    let prepared = (|| -> Result<_> {
        let scene = crate::synth::Scene::tabletop(model.clone(), yaw, xy, *viewpoint)?;
        let obs = render_depth(&scene, (64, 64), Intrinsics::default_64())?;
        let visible_table = visible_cloud_table(&obs, &scene.table, 0.002)?;
        let visible_camera = visible_table.transformed(&obs.camera_pose.invert())?;
        Ok((scene, obs, visible_camera))
    })();
    let render_ms = render_start.elapsed().as_secs_f64() * 1e3;

    let (scene, obs, visible_camera) = match prepared {
        Ok(p) => p,
        Err(Error::ObjectOutOfView) => {
            log::warn!(
                "{} view {view_idx} trial {trial}: object out of view; skipped",
                shape.spec.id
            );
            return Vec::new();
        }
        Err(e) => {
            // Scene setup failed outright; every combination records it.
            return cfg
                .combinations
                .iter()
                .map(|&combination| TrialRecord {
                    failure: Some(format!("scene: {e}")),
                    ..record_stub(combination)
                })
                .collect();
        }
    };

    let robot_from_table = robot_base_pose();
    let gripper = GripperSpec::default();
    let mut records = Vec::with_capacity(cfg.combinations.len());
    for &combination in &cfg.combinations {
        let mut record = record_stub(combination);
        record.timings.render_ms = render_ms;

        if visible_camera.is_empty() {
            record.failure = Some("segmentation-empty".into());
            records.push(record);
            continue;
        }

        let inputs = PlanInputs {
            observation: &obs,
            visible_camera: &visible_camera,
            table: &scene.table,
            robot_from_table: &robot_from_table,
            object_id: &shape.spec.id,
            proposal_model: models.proposal,
            recon_model: models.recon,
            library,
            seed: plan_seed,
        };
        let plan_start = Instant::now();
        let outcome = plan_grasp(combination.proposal, combination.refinement, &inputs);
        record.timings.plan_ms = plan_start.elapsed().as_secs_f64() * 1e3;

        match outcome {
            Ok(outcome) => {
                record.proposed = Some(*pose_to_vector(&outcome.proposal_camera).values());
                record.refined = Some(*pose_to_vector(&outcome.refined_camera).values());
                let eval_start = Instant::now();
                let grasp_table = compose(&robot_from_table.invert(), &outcome.robot_grasp)
                    .expect("frames chain by construction");
                let verdict = evaluate_grasp(
                    &grasp_table,
                    model,
                    &scene.object_pose,
                    &gripper,
                    &scene.table,
                    DEFAULT_FRICTION,
                );
                record.timings.evaluate_ms = eval_start.elapsed().as_secs_f64() * 1e3;
                match verdict {
                    Ok(v) => {
                        record.success = v.success;
                        record.quality = v.quality;
                        record.failure = v.failure_mode.map(|m| m.to_string());
                    }
                    Err(e) => record.failure = Some(format!("evaluation: {e}")),
                }
            }
            Err(e) => record.failure = Some(e.to_string().replace(',', ";")),
        }
        records.push(record);
    }
    records
}

fn fxhash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// Results file
// ---------------------------------------------------------------------------

const RESULTS_HEADER: &str = "scenario,object,split,viewpoint,trial,proposal,refinement,success,failure,quality,\
p0,p1,p2,p3,p4,p5,p6,p7,p8,p9,p10,p11,\
r0,r1,r2,r3,r4,r5,r6,r7,r8,r9,r10,r11";

fn pose_fields(p: &Option<[f64; 12]>) -> String {
    match p {
        None => ",".repeat(11),
        Some(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
    }
}

/// Write the deterministic results file (one record per line; wall-clock
/// timings are intentionally excluded so reruns are byte-identical).
pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.object_id,
            if r.train_object { "train" } else { "test" },
            r.viewpoint,
            r.trial,
            r.combination.proposal,
            r.combination.refinement,
            r.success,
            r.failure.as_deref().unwrap_or(""),
            r.quality,
            pose_fields(&r.proposed),
            pose_fields(&r.refined),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Companion timings file (non-deterministic diagnostics).
pub fn write_timings(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "scenario,object,viewpoint,trial,proposal,refinement,render_ms,plan_ms,evaluate_ms")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.3},{:.3},{:.3}",
            r.scenario,
            r.object_id,
            r.viewpoint,
            r.trial,
            r.combination.proposal,
            r.combination.refinement,
            r.timings.render_ms,
            r.timings.plan_ms,
            r.timings.evaluate_ms,
        )?;
    }
    w.flush()?;
    Ok(())
}

fn parse_pose_fields(fields: &[&str]) -> Result<Option<[f64; 12]>> {
    if fields.iter().all(|f| f.is_empty()) {
        return Ok(None);
    }
    let mut out = [0.0; 12];
    for (v, f) in out.iter_mut().zip(fields) {
        *v = f
            .parse()
            .map_err(|_| Error::Parse(format!("bad pose number `{f}`")))?;
    }
    Ok(Some(out))
}

/// Read a results file written by [`write_records`].
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        _ => return Err(Error::Parse("bad results header".into())),
    }
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 34 {
            return Err(Error::Parse(format!(
                "expected 34 result fields, found {}",
                fields.len()
            )));
        }
        records.push(TrialRecord {
            scenario: fields[0].parse()?,
            object_id: fields[1].to_string(),
            train_object: match fields[2] {
                "train" => true,
                "test" => false,
                other => return Err(Error::Parse(format!("bad split `{other}`"))),
            },
            viewpoint: fields[3]
                .parse()
                .map_err(|_| Error::Parse("bad viewpoint index".into()))?,
            trial: fields[4]
                .parse()
                .map_err(|_| Error::Parse("bad trial index".into()))?,
            combination: Combination {
                proposal: fields[5].parse()?,
                refinement: fields[6].parse()?,
            },
            success: fields[7]
                .parse()
                .map_err(|_| Error::Parse("bad success flag".into()))?,
            failure: if fields[8].is_empty() {
                None
            } else {
                Some(fields[8].to_string())
            },
            quality: fields[9]
                .parse()
                .map_err(|_| Error::Parse("bad quality".into()))?,
            proposed: parse_pose_fields(&fields[10..22])?,
            refined: parse_pose_fields(&fields[22..34])?,
            timings: StageTimings::default(),
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Success counts for one report cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellStats {
    pub successes: usize,
    pub trials: usize,
}

impl CellStats {
    pub fn fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    fn add(&mut self, success: bool) {
        self.trials += 1;
        if success {
            self.successes += 1;
        }
    }
}

/// Aggregated success rates per combination, scenario, object, and split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub overall: BTreeMap<Combination, CellStats>,
    pub by_scenario: BTreeMap<(Combination, Scenario), CellStats>,
    pub by_object: BTreeMap<(Combination, String), CellStats>,
    pub by_split: BTreeMap<(Combination, bool), CellStats>,
    /// Object ids with their train flags, sorted by id.
    pub objects: Vec<(String, bool)>,
}

/// Pure fold over records; the report is independent of record order.
pub fn summarize(records: &[TrialRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to summarize".into()));
    }
    let mut report = Report::default();
    let mut objects = BTreeMap::new();
    for r in records {
        report.overall.entry(r.combination).or_default().add(r.success);
        report
            .by_scenario
            .entry((r.combination, r.scenario))
            .or_default()
            .add(r.success);
        report
            .by_object
            .entry((r.combination, r.object_id.clone()))
            .or_default()
            .add(r.success);
        report
            .by_split
            .entry((r.combination, r.train_object))
            .or_default()
            .add(r.success);
        objects.insert(r.object_id.clone(), r.train_object);
    }
    report.objects = objects.into_iter().collect();
    Ok(report)
}

impl Report {
    pub fn overall_fraction(&self, combo: &Combination) -> f64 {
        self.overall.get(combo).map(CellStats::fraction).unwrap_or(0.0)
    }

    pub fn scenario_fraction(&self, combo: &Combination, scenario: Scenario) -> f64 {
        self.by_scenario
            .get(&(*combo, scenario))
            .map(CellStats::fraction)
            .unwrap_or(0.0)
    }

    pub fn split_fraction(&self, combo: &Combination, train: bool) -> f64 {
        self.by_split
            .get(&(*combo, train))
            .map(CellStats::fraction)
            .unwrap_or(0.0)
    }

    /// Machine-readable summary: `scope,key,proposal,refinement,successes,trials,fraction`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,key,proposal,refinement,successes,trials,fraction\n");
        let mut push = |scope: &str, key: &str, combo: &Combination, s: &CellStats| {
            out.push_str(&format!(
                "{scope},{key},{},{},{},{},{}\n",
                combo.proposal,
                combo.refinement,
                s.successes,
                s.trials,
                s.fraction()
            ));
        };
        for (combo, s) in &self.overall {
            push("overall", "all", combo, s);
        }
        for ((combo, scenario), s) in &self.by_scenario {
            push("scenario", &scenario.to_string(), combo, s);
        }
        for ((combo, object), s) in &self.by_object {
            push("object", object, combo, s);
        }
        for ((combo, train), s) in &self.by_split {
            push("split", if *train { "train" } else { "test" }, combo, s);
        }
        out
    }

    /// Human-readable table: one row per combination, one column per object
    /// (test objects marked with `*`), then the total.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let combos: Vec<Combination> = self.overall.keys().copied().collect();
        let header: Vec<String> = self
            .objects
            .iter()
            .map(|(id, train)| if *train { id.clone() } else { format!("{id}*") })
            .collect();
        out.push_str(&format!("{:<22}", "proposal+refinement"));
        for h in &header {
            out.push_str(&format!(" {h:>12}"));
        }
        out.push_str(&format!(" {:>12} {:>6}\n", "total", "%"));
        for combo in combos {
            out.push_str(&format!("{:<22}", combo.to_string()));
            for (id, _) in &self.objects {
                let cell = self
                    .by_object
                    .get(&(combo, id.clone()))
                    .copied()
                    .unwrap_or_default();
                out.push_str(&format!(" {:>12}", format!("{}/{}", cell.successes, cell.trials)));
            }
            let total = self.overall.get(&combo).copied().unwrap_or_default();
            out.push_str(&format!(
                " {:>12} {:>6.1}\n",
                format!("{}/{}", total.successes, total.trials),
                100.0 * total.fraction()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ShapeFamily;

    fn mini_shapes() -> Vec<BenchShape> {
        vec![
            BenchShape {
                spec: ShapeSpec::new(
                    ShapeFamily::Superquadric { eps1: 0.35, eps2: 1.45 },
                    Vector3::new(0.23, 0.09, 0.08),
                    "shoe-a",
                )
                .unwrap(),
                train: true,
            },
            BenchShape {
                spec: ShapeSpec::new(
                    ShapeFamily::Superquadric { eps1: 0.4, eps2: 1.4 },
                    Vector3::new(0.21, 0.095, 0.075),
                    "shoe-b",
                )
                .unwrap(),
                train: false,
            },
        ]
    }

    #[test]
    fn viewpoints_match_the_stated_geometry() {
        let vg = build_viewpoints(Scenario::VisibleGrasp);
        assert_eq!(vg.len(), 4);
        let target = Vector3::new(0.0, 0.0, 0.05);
        for p in &vg {
            assert!(((p.translation() - target).norm() - 0.5).abs() < 1e-9);
        }

        let hg = build_viewpoints(Scenario::HiddenGrasp);
        assert_eq!(hg.len(), 4);
        for p in &hg {
            assert!((p.translation().z - 0.065).abs() < 1e-12);
            // All hidden-grasp cameras sit on the +x side so the slim end
            // (always at object -x) faces away.
            assert!(p.translation().x > 0.0);
        }

        assert_eq!(build_viewpoints(Scenario::SimBoxes).len(), 8);

        // Every viewpoint projects the object centroid inside the image.
        let intr = Intrinsics::default_64();
        for scenario in [Scenario::VisibleGrasp, Scenario::HiddenGrasp, Scenario::SimBoxes] {
            for p in build_viewpoints(scenario) {
                let centroid = Vector3::new(0.0, 0.0, 0.04);
                let in_cam = p.invert().transform_point(&centroid);
                assert!(in_cam.z > 0.0);
                let u = intr.fx * in_cam.x / in_cam.z + intr.cx;
                let v = intr.fy * in_cam.y / in_cam.z + intr.cy;
                assert!((0.0..64.0).contains(&u) && (0.0..64.0).contains(&v), "{scenario}");
            }
        }
    }

    #[test]
    fn matrix_counting_and_determinism() {
        let combos = vec![
            Combination::new(ProposalMethod::Naive, RefinementMethod::Visible),
            Combination::new(ProposalMethod::Library, RefinementMethod::Visible),
        ];
        let cfg = ExperimentConfig {
            scenario: Scenario::VisibleGrasp,
            shapes: mini_shapes(),
            combinations: combos,
            trials_per_cell: 1,
            seed: 71,
            jobs: 1,
        };
        let lib = GraspLibrary::build(
            &cfg.shapes.iter().map(|s| s.spec.clone()).collect::<Vec<_>>(),
            &GripperSpec::default(),
            512,
            5,
        )
        .unwrap();
        let strip = |rs: Vec<TrialRecord>| -> Vec<TrialRecord> {
            rs.into_iter()
                .map(|mut r| {
                    r.timings = StageTimings::default();
                    r
                })
                .collect()
        };
        let records = strip(run_matrix(&cfg, BenchModels::default(), Some(&lib)).unwrap());
        assert_eq!(records.len(), 2 * 4 * 1 * 2);

        let again = strip(run_matrix(&cfg, BenchModels::default(), Some(&lib)).unwrap());
        assert_eq!(records, again);

        // Parallel execution yields identical records.
        let par_cfg = ExperimentConfig { jobs: 4, ..cfg };
        let par = strip(run_matrix(&par_cfg, BenchModels::default(), Some(&lib)).unwrap());
        assert_eq!(records, par);
    }

    #[test]
    fn missing_inputs_are_reported_by_name() {
        let cfg = ExperimentConfig {
            scenario: Scenario::VisibleGrasp,
            shapes: mini_shapes(),
            combinations: vec![Combination::new(
                ProposalMethod::Learned,
                RefinementMethod::Reconstruction,
            )],
            trials_per_cell: 1,
            seed: 1,
            jobs: 1,
        };
        match run_matrix(&cfg, BenchModels::default(), None) {
            Err(Error::InvalidInput(msg)) => {
                assert!(msg.contains("proposal checkpoint"));
                assert!(msg.contains("reconstruction checkpoint"));
            }
            other => panic!("expected missing-input error, got {other:?}"),
        }
    }

    #[test]
    fn summarize_hand_cases_and_cross_footing() {
        let mk = |combo: Combination, object: &str, train: bool, success: bool| TrialRecord {
            scenario: Scenario::HiddenGrasp,
            object_id: object.to_string(),
            train_object: train,
            viewpoint: 0,
            trial: 0,
            combination: combo,
            proposed: None,
            refined: None,
            success,
            failure: None,
            quality: 0.0,
            timings: StageTimings::default(),
        };
        let combo = Combination::new(ProposalMethod::Naive, RefinementMethod::Visible);

        let all = vec![mk(combo, "a", true, true), mk(combo, "b", false, true)];
        let report = summarize(&all).unwrap();
        assert_eq!(report.overall_fraction(&combo), 1.0);

        let mut records = vec![
            mk(combo, "a", true, true),
            mk(combo, "a", true, true),
            mk(combo, "b", false, true),
            mk(combo, "b", false, false),
        ];
        let report = summarize(&records).unwrap();
        assert_eq!(report.overall_fraction(&combo), 0.75);

        // Per-object counts cross-foot to the aggregate.
        let total: usize = report
            .by_object
            .iter()
            .filter(|((c, _), _)| *c == combo)
            .map(|(_, s)| s.trials)
            .sum();
        let wins: usize = report
            .by_object
            .iter()
            .filter(|((c, _), _)| *c == combo)
            .map(|(_, s)| s.successes)
            .sum();
        let overall = report.overall[&combo];
        assert_eq!(total, overall.trials);
        assert_eq!(wins, overall.successes);

        // Order-insensitive fold.
        records.reverse();
        assert_eq!(summarize(&records).unwrap(), report);

        // Render paths stay in sync with the data.
        let text = report.render_text();
        assert!(text.contains("naive+visible"));
        assert!(text.contains("b*"));
        let csv = report.to_csv();
        assert!(csv.contains("overall,all,naive,visible,3,4,0.75"));
    }

    #[test]
    fn records_file_round_trips() {
        let combos = vec![Combination::new(ProposalMethod::Library, RefinementMethod::Library)];
        let cfg = ExperimentConfig {
            scenario: Scenario::HiddenGrasp,
            shapes: mini_shapes(),
            combinations: combos,
            trials_per_cell: 1,
            seed: 3,
            jobs: 1,
        };
        let lib = GraspLibrary::build(
            &cfg.shapes.iter().map(|s| s.spec.clone()).collect::<Vec<_>>(),
            &GripperSpec::default(),
            512,
            5,
        )
        .unwrap();
        let records = run_matrix(&cfg, BenchModels::default(), Some(&lib)).unwrap();
        assert!(!records.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        // Timings are not persisted; compare everything else.
        for (a, b) in records.iter().zip(&back) {
            let mut a = a.clone();
            a.timings = StageTimings::default();
            assert_eq!(&a, b);
        }
        // Summaries agree after the round trip.
        assert_eq!(summarize(&records).unwrap(), summarize(&back).unwrap());
    }

    #[test]
    fn combination_parsing() {
        let c: Combination = "learned+recon".parse().unwrap();
        assert_eq!(c.proposal, ProposalMethod::Learned);
        assert_eq!(c.refinement, RefinementMethod::Reconstruction);
        assert_eq!(c.to_string(), "learned+recon");
        assert!("learned-recon".parse::<Combination>().is_err());
        assert_eq!(standard_combinations().len(), 8);
    }
}
