//! Quasi-static geometric grasp evaluation: aperture feasibility, approach
//! sweep collision, symmetric finger closure via ray casting, and an
//! antipodal contact check against a friction cone.
//!
//! Gripper frame convention: the origin is the tool center point, `+z` is
//! the approach direction (the tool advances along `+z`), and `+x` is the
//! grip axis (fingers close along `x`). Finger pads have their inner faces
//! at `x = +/- aperture/2` when fully open and span `z in [0, finger_depth]`
//! (the fingers reach one pad length past the grasp point); the finger
//! struts mirror that span behind the origin and the palm block sits behind
//! the struts.

use nalgebra::Vector3;

use crate::geometry::{Plane, Pose};
use crate::synth::ShapeModel;
use crate::{Error, Result};

/// Default friction coefficient for the antipodal cone test.
pub const DEFAULT_FRICTION: f64 = 0.5;

/// Parallel-jaw gripper dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperSpec {
    pub max_aperture: f64,
    pub finger_width: f64,
    pub finger_depth: f64,
    pub palm_offset: f64,
    pub approach_offset: f64,
}

impl GripperSpec {
    pub fn new(
        max_aperture: f64,
        finger_width: f64,
        finger_depth: f64,
        palm_offset: f64,
        approach_offset: f64,
    ) -> Result<Self> {
        let all_positive = max_aperture > 0.0
            && finger_width > 0.0
            && finger_depth > 0.0
            && palm_offset > 0.0
            && approach_offset > 0.0;
        if !all_positive {
            return Err(Error::InvalidInput("gripper dimensions must be positive".into()));
        }
        if approach_offset <= finger_depth {
            return Err(Error::InvalidInput(
                "approach offset must exceed finger depth".into(),
            ));
        }
        Ok(Self {
            max_aperture,
            finger_width,
            finger_depth,
            palm_offset,
            approach_offset,
        })
    }
}

impl Default for GripperSpec {
    /// An 85 mm parallel-jaw gripper approached from 20 cm back.
    fn default() -> Self {
        Self {
            max_aperture: 0.085,
            finger_width: 0.02,
            finger_depth: 0.03,
            palm_offset: 0.04,
            approach_offset: 0.20,
        }
    }
}

/// Why a grasp was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    ApproachCollision,
    NoContact,
    NonAntipodal,
    ApertureExceeded,
    SlipPredicted,
}

impl std::fmt::Display for FailureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            FailureMode::ApproachCollision => "approach-collision",
            FailureMode::NoContact => "no-contact",
            FailureMode::NonAntipodal => "non-antipodal",
            FailureMode::ApertureExceeded => "aperture-exceeded",
            FailureMode::SlipPredicted => "slip-predicted",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for FailureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "approach-collision" => FailureMode::ApproachCollision,
            "no-contact" => FailureMode::NoContact,
            "non-antipodal" => FailureMode::NonAntipodal,
            "aperture-exceeded" => FailureMode::ApertureExceeded,
            "slip-predicted" => FailureMode::SlipPredicted,
            other => return Err(Error::Parse(format!("unknown failure mode `{other}`"))),
        })
    }
}

/// Evaluation outcome. On success there are exactly two contacts with a
/// positive quality.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspVerdict {
    pub success: bool,
    pub failure_mode: Option<FailureMode>,
    /// Contact points and outward surface normals in the table frame.
    pub contacts: Vec<(Vector3<f64>, Vector3<f64>)>,
    pub quality: f64,
}

impl GraspVerdict {
    fn failure(mode: FailureMode) -> Self {
        Self {
            success: false,
            failure_mode: Some(mode),
            contacts: Vec::new(),
            quality: 0.0,
        }
    }
}

/// Antipodality margin of a two-contact grasp, from the angle between the
/// opposed normals: 1 at perfect antipodality, 0 at twice the friction-cone
/// half-angle `arctan(mu)`.
pub fn grasp_quality(n1: &Vector3<f64>, n2: &Vector3<f64>, mu: f64) -> f64 {
    let beta = antipodal_angle(n1, n2);
    (1.0 - beta / (2.0 * mu.atan())).clamp(0.0, 1.0)
}

fn antipodal_angle(n1: &Vector3<f64>, n2: &Vector3<f64>) -> f64 {
    (-n1.dot(n2)).clamp(-1.0, 1.0).acos()
}

/// An axis-aligned box in the gripper frame.
#[derive(Debug, Clone, Copy)]
struct GripperBox {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl GripperBox {
    /// Strict interior test: surface points exactly on a face are touching,
    /// not colliding.
    fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] > self.lo[a] && p[a] < self.hi[a])
    }

    fn corners(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..8).map(move |i| {
            Vector3::new(
                if i & 1 == 0 { self.lo.x } else { self.hi.x },
                if i & 2 == 0 { self.lo.y } else { self.hi.y },
                if i & 4 == 0 { self.lo.z } else { self.hi.z },
            )
        })
    }
}

/// The gripper body at full opening, swept backwards along the approach by
/// `sweep` meters (z extents extended by `-sweep`): two finger boxes (pad
/// plus strut) and the palm block behind them.
fn swept_body(g: &GripperSpec, sweep: f64) -> [GripperBox; 3] {
    let half_w = g.finger_width / 2.0;
    let inner = g.max_aperture / 2.0;
    let outer = inner + g.finger_width;
    [
        GripperBox {
            lo: Vector3::new(inner, -half_w, -g.finger_depth - sweep),
            hi: Vector3::new(outer, half_w, g.finger_depth),
        },
        GripperBox {
            lo: Vector3::new(-outer, -half_w, -g.finger_depth - sweep),
            hi: Vector3::new(-inner, half_w, g.finger_depth),
        },
        GripperBox {
            lo: Vector3::new(-outer, -half_w, -g.finger_depth - g.palm_offset - sweep),
            hi: Vector3::new(outer, half_w, -g.finger_depth),
        },
    ]
}

/// Evaluate a grasp pose (`Gripper -> Table`) against a posed shape and the
/// table plane. All failure cases come back as verdicts, not errors.
pub fn evaluate_grasp(
    grasp: &Pose,
    model: &ShapeModel,
    object_pose: &Pose,
    gripper: &GripperSpec,
    table: &Plane,
    mu: f64,
) -> Result<GraspVerdict> {
    if !(mu > 0.0) {
        return Err(Error::InvalidInput("friction coefficient must be positive".into()));
    }
    let to_gripper = grasp.invert();
    let to_object = object_pose.invert();
    let grasp_in_object = crate::geometry::compose(&to_object, grasp)?;

    // 1. Aperture feasibility: pad centers must start outside the object.
    let pad_centers_g = [
        Vector3::new(gripper.max_aperture / 2.0, 0.0, gripper.finger_depth / 2.0),
        Vector3::new(-gripper.max_aperture / 2.0, 0.0, gripper.finger_depth / 2.0),
    ];
    for pad in &pad_centers_g {
        let p_obj = grasp_in_object.transform_point(pad);
        if model.contains(&p_obj) {
            return Ok(GraspVerdict::failure(FailureMode::ApertureExceeded));
        }
    }

    // 2. Approach sweep: object sample points and the table plane against
    // the swept open-gripper volume.
    let swept = swept_body(gripper, gripper.approach_offset);
    for p_obj in model.collision_points() {
        let p_table = object_pose.transform_point(p_obj);
        let p_grip = to_gripper.transform_point(&p_table);
        if swept.iter().any(|b| b.contains(&p_grip)) {
            return Ok(GraspVerdict::failure(FailureMode::ApproachCollision));
        }
    }
    for body in &swept {
        for corner in body.corners() {
            let c_table = grasp.transform_point(&corner);
            if table.signed_distance(&c_table) < -1e-9 {
                return Ok(GraspVerdict::failure(FailureMode::ApproachCollision));
            }
        }
    }

    // 3. Close the fingers: one inward ray per pad, full travel capped at
    // the aperture.
    let mut contacts = Vec::with_capacity(2);
    for (pad, sign) in pad_centers_g.iter().zip([-1.0, 1.0]) {
        let origin_obj = grasp_in_object.transform_point(pad);
        let dir_obj = grasp_in_object.transform_vector(&Vector3::new(sign, 0.0, 0.0));
        match model.raycast(&origin_obj, &dir_obj) {
            Some(hit) if hit.t <= gripper.max_aperture => {
                let point = object_pose.transform_point(&hit.point);
                let normal = object_pose.transform_vector(&hit.normal);
                contacts.push((point, normal));
            }
            _ => return Ok(GraspVerdict::failure(FailureMode::NoContact)),
        }
    }

    // 4. Antipodal check: with symmetric contact-normal tilt, the grip line
    // lies inside both friction cones iff the opposed normals deviate by
    // less than twice the cone half-angle. Opposed-but-outside-cone contacts
    // would slip; normals past a right angle are not antipodal at all.
    let beta = antipodal_angle(&contacts[0].1, &contacts[1].1);
    let cone = mu.atan();
    let quality = grasp_quality(&contacts[0].1, &contacts[1].1, mu);
    if beta >= std::f64::consts::FRAC_PI_2 {
        return Ok(GraspVerdict::failure(FailureMode::NonAntipodal));
    }
    if beta >= 2.0 * cone {
        return Ok(GraspVerdict {
            success: false,
            failure_mode: Some(FailureMode::SlipPredicted),
            contacts,
            quality,
        });
    }
    Ok(GraspVerdict {
        success: true,
        failure_mode: None,
        contacts,
        quality,
    })
}

/// A top-down grasp pose in the table frame: approach straight down, grip
/// axis yawed by `grip_yaw` in the table plane.
pub fn top_down_grasp(tcp: Vector3<f64>, grip_yaw: f64) -> Pose {
    let x = Vector3::new(grip_yaw.cos(), grip_yaw.sin(), 0.0);
    let z = -Vector3::z();
    let y = z.cross(&x);
    let rotation = nalgebra::Matrix3::from_columns(&[x, y, z]);
    Pose::from_parts(rotation, tcp, crate::geometry::Frame::Gripper, crate::geometry::Frame::Table)
        .expect("top-down rotation is orthonormal")
}
