//! Synthetic stand-in for a physical capture rig: procedural objects, a
//! virtual depth camera, ground-truth grasp labeling, and multi-view
//! dataset generation.

mod camera;
mod dataset;
mod label;
mod shape;

pub use camera::{look_at, render_depth, visible_cloud_table, Intrinsics, Observation};
pub use dataset::{
    load_dataset, make_dataset, save_dataset, Dataset, DatasetConfig, DatasetShape,
    LabeledExample, ViewRing, ViewpointPolicy,
};
pub use label::label_example_grasp;
pub use shape::{box_family_specs, shoe_family_specs, RayHit, ShapeFamily, ShapeModel, ShapeSpec};

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};

use crate::geometry::{rot_z, Frame, Plane, Pose};
use crate::{Error, Result};

/// One tabletop scene: a shape at a resting pose, a camera, and the table.
#[derive(Debug, Clone)]
pub struct Scene {
    pub model: Arc<ShapeModel>,
    /// Pose of the object in the table frame (`Object -> Table`).
    pub object_pose: Pose,
    /// Pose of the camera in the table frame (`Camera -> Table`).
    pub camera_pose: Pose,
    pub table: Plane,
}

impl Scene {
    /// Validates that the object rests on the table (lowest surface point
    /// within 1 mm of the plane) and the camera sits outside the object's
    /// bounding sphere.
    pub fn new(
        model: Arc<ShapeModel>,
        object_pose: Pose,
        camera_pose: Pose,
        table: Plane,
    ) -> Result<Self> {
        if object_pose.from_frame() != Frame::Object || object_pose.to_frame() != Frame::Table {
            return Err(Error::FrameMismatch {
                expected: Frame::Object,
                found: object_pose.from_frame(),
            });
        }
        if camera_pose.from_frame() != Frame::Camera || camera_pose.to_frame() != Frame::Table {
            return Err(Error::FrameMismatch {
                expected: Frame::Camera,
                found: camera_pose.from_frame(),
            });
        }
        let lowest = model.lowest_plane_distance(&object_pose, &table);
        if lowest.abs() > 1e-3 {
            return Err(Error::InvalidInput(format!(
                "object is not resting on the table (lowest point at {lowest:.4} m)"
            )));
        }
        let center = object_pose.transform_point(&Vector3::zeros());
        if (camera_pose.translation() - center).norm() <= model.bounding_radius() {
            return Err(Error::InvalidInput(
                "camera is inside the object bounding sphere".into(),
            ));
        }
        Ok(Self {
            model,
            object_pose,
            camera_pose,
            table,
        })
    }

    /// A scene with the object resting on the `z = 0` table at the given yaw
    /// and planar offset.
    pub fn tabletop(
        model: Arc<ShapeModel>,
        yaw: f64,
        xy: Vector2<f64>,
        camera_pose: Pose,
    ) -> Result<Self> {
        let object_pose = resting_pose(&model, yaw, xy)?;
        Scene::new(model, object_pose, camera_pose, Plane::table())
    }

    /// Pose of the object in the camera frame (`Object -> Camera`).
    pub fn object_in_camera(&self) -> Pose {
        crate::geometry::compose(&self.camera_pose.invert(), &self.object_pose)
            .expect("scene frames chain by construction")
    }
}

/// Object pose resting on the `z = 0` table at a yaw and planar offset.
pub fn resting_pose(model: &ShapeModel, yaw: f64, xy: Vector2<f64>) -> Result<Pose> {
    Pose::from_parts(
        rot_z(yaw),
        Vector3::new(xy.x, xy.y, -model.min_z()),
        Frame::Object,
        Frame::Table,
    )
}

impl ShapeModel {
    /// Signed distance from the lowest surface point to the plane under a
    /// pose (negative = below the plane).
    pub fn lowest_plane_distance(&self, object_pose: &Pose, plane: &Plane) -> f64 {
        self.boundary_vertices()
            .map(|v| plane.signed_distance(&object_pose.transform_point(&v)))
            .fold(f64::INFINITY, f64::min)
    }
}
