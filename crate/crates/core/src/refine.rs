//! Nearest-point grasp refinement and the end-to-end planner that chains
//! proposal, refinement-source construction, refinement, and the transform
//! into the robot frame.


use crate::align::IcpParams;
use crate::cloud::{nearest_point, PointCloud};
use crate::geometry::{compose, Frame, Plane, Pose};
use crate::propose::{
    estimate_object_pose, library_propose, naive_propose, GraspLibrary, ProposalModel,
};
use crate::recon::{aligned_reconstruction, ReconModel};
use crate::synth::Observation;
use crate::{Error, PipelineStage, Result};

/// Which surface estimate the refinement projects onto.
#[derive(Debug, Clone, PartialEq)]
pub enum RefinementSource {
    None,
    Visible(PointCloud),
    Reconstruction(PointCloud),
    Library(PointCloud),
}

impl RefinementSource {
    pub fn cloud(&self) -> Option<&PointCloud> {
        match self {
            RefinementSource::None => None,
            RefinementSource::Visible(c)
            | RefinementSource::Reconstruction(c)
            | RefinementSource::Library(c) => Some(c),
        }
    }
}

/// Project the grasp position onto the nearest point of the source cloud,
/// leaving the orientation bit-for-bit unchanged. `RefinementSource::None`
/// returns the grasp as-is.
pub fn refine_grasp(g: &Pose, src: &RefinementSource) -> Result<Pose> {
    let Some(cloud) = src.cloud() else {
        return Ok(*g);
    };
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if cloud.frame() != g.to_frame() {
        return Err(Error::FrameMismatch {
            expected: g.to_frame(),
            found: cloud.frame(),
        });
    }
    let index = cloud.index()?;
    let (point, _, _) = nearest_point(&index, g.translation());
    Ok(g.with_translation(point))
}

/// Grasp proposal method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProposalMethod {
    Learned,
    Naive,
    Library,
}

impl std::fmt::Display for ProposalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ProposalMethod::Learned => "learned",
            ProposalMethod::Naive => "naive",
            ProposalMethod::Library => "library",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for ProposalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "learned" => ProposalMethod::Learned,
            "naive" => ProposalMethod::Naive,
            "library" => ProposalMethod::Library,
            other => return Err(Error::Parse(format!("unknown proposal method `{other}`"))),
        })
    }
}

/// Grasp refinement method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RefinementMethod {
    None,
    Visible,
    Reconstruction,
    Library,
}

impl std::fmt::Display for RefinementMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RefinementMethod::None => "none",
            RefinementMethod::Visible => "visible",
            RefinementMethod::Reconstruction => "recon",
            RefinementMethod::Library => "library",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for RefinementMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => RefinementMethod::None,
            "visible" => RefinementMethod::Visible,
            "recon" => RefinementMethod::Reconstruction,
            "library" => RefinementMethod::Library,
            other => return Err(Error::Parse(format!("unknown refinement method `{other}`"))),
        })
    }
}

/// Everything the planner may need for one scene. Model and library slots
/// are only required by the methods that use them.
#[derive(Clone)]
pub struct PlanInputs<'a> {
    pub observation: &'a Observation,
    /// Segmented visible cloud in the camera frame.
    pub visible_camera: &'a PointCloud,
    /// Table plane in the table frame.
    pub table: &'a Plane,
    /// Pose of the table in the robot frame (`Table -> Robot`).
    pub robot_from_table: &'a Pose,
    pub object_id: &'a str,
    pub proposal_model: Option<&'a ProposalModel>,
    pub recon_model: Option<&'a ReconModel>,
    pub library: Option<&'a GraspLibrary>,
    pub seed: u64,
}

/// Planner output: the executable robot-frame grasp plus the intermediate
/// camera-frame poses and the alignment residual when reconstruction was
/// aligned.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    /// Final grasp in the robot frame (`Gripper -> Robot`).
    pub robot_grasp: Pose,
    /// Proposal before refinement (camera frame).
    pub proposal_camera: Pose,
    /// Refined grasp (camera frame).
    pub refined_camera: Pose,
    /// ICP residual of the reconstruction alignment, when it ran.
    pub alignment_residual: Option<f64>,
}

fn icp_params_for(visible: &PointCloud, init: Pose) -> Result<IcpParams> {
    IcpParams::defaults_for(visible, init)
}

/// ICP controls for library pose estimation; the init is superseded by the
/// resting-pose search inside `estimate_object_pose`.
fn library_icp_params(entry_cloud: &PointCloud) -> Result<IcpParams> {
    IcpParams::defaults_for(entry_cloud, Pose::identity(Frame::Table, Frame::Object))
}

/// Plan a grasp end to end: propose, build the refinement source, refine,
/// and express the result in the robot frame. Component errors are tagged
/// with the pipeline stage they occurred in.
pub fn plan_grasp(
    proposal_method: ProposalMethod,
    refinement_method: RefinementMethod,
    inputs: &PlanInputs<'_>,
) -> Result<PlanOutcome> {
    let camera_pose = inputs.observation.camera_pose;

    let proposal_camera = propose_stage(proposal_method, inputs, &camera_pose)
        .map_err(|e| e.at_stage(PipelineStage::Proposal))?;

    let (source, alignment_residual) = source_stage(refinement_method, inputs)
        .map_err(|e| e.at_stage(PipelineStage::RefinementSource))?;

    let refined_camera = refine_grasp(&proposal_camera, &source)
        .map_err(|e| e.at_stage(PipelineStage::Refinement))?;

    let robot_grasp = (|| {
        let robot_from_camera = compose(inputs.robot_from_table, &camera_pose)?;
        compose(&robot_from_camera, &refined_camera)
    })()
    .map_err(|e| e.at_stage(PipelineStage::RobotTransform))?;

    Ok(PlanOutcome {
        robot_grasp,
        proposal_camera,
        refined_camera,
        alignment_residual,
    })
}

fn propose_stage(
    method: ProposalMethod,
    inputs: &PlanInputs<'_>,
    camera_pose: &Pose,
) -> Result<Pose> {
    match method {
        ProposalMethod::Learned => {
            let model = inputs
                .proposal_model
                .ok_or_else(|| Error::InvalidInput("proposal checkpoint required".into()))?;
            model.propose(inputs.observation)
        }
        ProposalMethod::Naive => {
            let visible_table = inputs.visible_camera.transformed(camera_pose)?;
            let table_grasp = naive_propose(&visible_table, inputs.table, inputs.seed)?;
            compose(&camera_pose.invert(), &table_grasp)
        }
        ProposalMethod::Library => {
            let lib = inputs
                .library
                .ok_or_else(|| Error::InvalidInput("grasp library required".into()))?;
            let entry = lib
                .get(inputs.object_id)
                .ok_or_else(|| Error::UnknownObject(inputs.object_id.to_string()))?;
            let p = library_icp_params(&entry.cloud)?;
            library_propose(lib, inputs.object_id, inputs.visible_camera, camera_pose, &p)
        }
    }
}

fn source_stage(
    method: RefinementMethod,
    inputs: &PlanInputs<'_>,
) -> Result<(RefinementSource, Option<f64>)> {
    match method {
        RefinementMethod::None => Ok((RefinementSource::None, None)),
        RefinementMethod::Visible => {
            if inputs.visible_camera.is_empty() {
                return Err(Error::EmptyCloud);
            }
            Ok((RefinementSource::Visible(inputs.visible_camera.clone()), None))
        }
        RefinementMethod::Reconstruction => {
            let model = inputs
                .recon_model
                .ok_or_else(|| Error::InvalidInput("reconstruction checkpoint required".into()))?;
            let init = Pose::identity(Frame::Camera, Frame::Camera);
            let p = icp_params_for(inputs.visible_camera, init)?;
            let aligned = aligned_reconstruction(
                model,
                inputs.observation,
                inputs.visible_camera,
                &p,
                inputs.seed,
            )?;
            let residual = aligned.icp.as_ref().map(|r| r.residual_mse);
            Ok((RefinementSource::Reconstruction(aligned.cloud), residual))
        }
        RefinementMethod::Library => {
            let lib = inputs
                .library
                .ok_or_else(|| Error::InvalidInput("grasp library required".into()))?;
            let entry = lib
                .get(inputs.object_id)
                .ok_or_else(|| Error::UnknownObject(inputs.object_id.to_string()))?;
            let p = library_icp_params(&entry.cloud)?;
            let object_in_camera = estimate_object_pose(
                entry,
                inputs.visible_camera,
                &inputs.observation.camera_pose,
                &p,
            )?;
            let posed = entry.cloud.transformed(&object_in_camera)?;
            Ok((RefinementSource::Library(posed), None))
        }
    }
}
