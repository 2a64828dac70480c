//! Grasp planning from single depth views.
//!
//! The pipeline regresses a 6-DOF grasp pose from one masked depth image,
//! reconstructs the full object surface with a hypernetwork decoder, and
//! refines the grasp by projecting its position onto the nearest point of a
//! surface estimate. A benchmark harness runs proposal/refinement method
//! combinations over synthetic tabletop scenes and scores them with a
//! quasi-static antipodal grasp evaluator.
//!
//! Module map:
//! - [`geometry`]: SE(3) poses with frame tags, the 12-number grasp encoding,
//!   and the training losses.
//! - [`cloud`]: point clouds, k-d tree nearest neighbor, Chamfer distance,
//!   PCA axes, plane cropping, file formats.
//! - [`align`]: point-to-point ICP with multi-start initialization.
//! - [`nn`]: dense networks, a hypernetwork, backprop, optimizers,
//!   checkpoints.
//! - [`synth`]: procedural shapes, virtual depth camera, grasp labeling,
//!   dataset generation.
//! - [`recon`]: hypernetwork shape reconstruction and ICP alignment.
//! - [`propose`]: learned, naive, and library grasp proposers.
//! - [`refine`]: nearest-point grasp refinement and the end-to-end planner.
//! - [`grasp_eval`]: approach/closure/antipodal grasp evaluation.
//! - [`bench`]: experiment matrix, trial records, reports.

pub mod align;
pub mod bench;
pub mod cloud;
mod error;
pub mod geometry;
pub mod grasp_eval;
pub mod nn;
pub mod propose;
pub mod recon;
pub mod refine;
pub mod synth;

pub use error::{Error, PipelineStage, Result};
pub use geometry::{Frame, GraspVector, LossWeights, Plane, Pose};
pub use cloud::{NnIndex, PointCloud};
