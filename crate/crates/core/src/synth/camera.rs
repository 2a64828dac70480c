//! Virtual pinhole depth camera: ray-cast rendering against a shape and the
//! table plane, plus back-projection into point clouds.

use nalgebra::Vector3;

use crate::cloud::{crop_below_plane, PointCloud};
use crate::geometry::{Frame, Plane, Pose};
use crate::{Error, Result};

use super::Scene;

/// Pinhole intrinsics in pixels; projection `u = fx * x/z + cx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Defaults for the 64x64 observation.
    pub fn default_64() -> Self {
        Self {
            fx: 60.0,
            fy: 60.0,
            cx: 31.5,
            cy: 31.5,
        }
    }

    /// Centered intrinsics for an arbitrary resolution.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }
}

/// A rendered depth/mask pair with the camera geometry that produced it.
///
/// Depth is the z-coordinate in the camera frame (0 = no return); the mask
/// marks pixels whose nearest hit is the object. The camera looks along
/// `+z` with `+x` right and `+y` down in image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// Pose of the camera in the table frame (`Camera -> Table`).
    pub camera_pose: Pose,
}

impl Observation {
    pub fn depth_at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    pub fn mask_at(&self, u: usize, v: usize) -> bool {
        self.mask[v * self.width + u]
    }

    pub fn mask_pixel_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Back-project pixels into a camera-frame cloud. With `masked_only` the
    /// cloud holds object pixels only, otherwise every pixel with a return.
    pub fn backproject(&self, masked_only: bool) -> Result<PointCloud> {
        let mut points = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                let d = self.depth_at(u, v);
                if d <= 0.0 {
                    continue;
                }
                if masked_only && !self.mask_at(u, v) {
                    continue;
                }
                points.push(Vector3::new(
                    d * (u as f64 - self.intrinsics.cx) / self.intrinsics.fx,
                    d * (v as f64 - self.intrinsics.cy) / self.intrinsics.fy,
                    d,
                ));
            }
        }
        PointCloud::new(points, Frame::Camera)
    }
}

/// Camera pose looking from `position` toward `target` with the world `+z`
/// as the up reference: `+z` forward, `+x` right, `+y` down.
pub fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> Result<Pose> {
    let forward = (target - position).normalize();
    let mut right = forward.cross(&-Vector3::z());
    if right.norm() < 1e-9 {
        // Looking straight up or down; fall back to +x as the right axis.
        right = Vector3::x();
    }
    let right = right.normalize();
    let down = forward.cross(&right);
    let rotation = nalgebra::Matrix3::from_columns(&[right, down, forward]);
    Pose::from_parts(rotation, position, Frame::Camera, Frame::Table)
}

/// Render the scene's depth and object mask by ray casting.
pub fn render_depth(
    scene: &Scene,
    resolution: (usize, usize),
    intrinsics: Intrinsics,
) -> Result<Observation> {
    let (height, width) = resolution;
    if height == 0 || width == 0 {
        return Err(Error::InvalidInput("resolution must be nonzero".into()));
    }
    let cam = scene.camera_pose;
    let cam_pos = *cam.translation();
    let to_object = scene.object_pose.invert();

    let mut depth = vec![0.0; width * height];
    let mut mask = vec![false; width * height];
    for v in 0..height {
        for u in 0..width {
            let dir_cam = Vector3::new(
                (u as f64 - intrinsics.cx) / intrinsics.fx,
                (v as f64 - intrinsics.cy) / intrinsics.fy,
                1.0,
            );
            let ray_scale = dir_cam.norm();
            let dir_table = cam.transform_vector(&dir_cam) / ray_scale;

            // Object hit, cast in the object frame.
            let o_obj = to_object.transform_point(&cam_pos);
            let d_obj = to_object.transform_vector(&dir_table);
            let obj_t = scene.model.raycast(&o_obj, &d_obj).map(|h| h.t);

            // Table hit.
            let denom = scene.table.normal.dot(&dir_table);
            let table_t = if denom.abs() > 1e-12 {
                let t = -scene.table.signed_distance(&cam_pos) / denom;
                (t > 1e-9).then_some(t)
            } else {
                None
            };

            let idx = v * width + u;
            match (obj_t, table_t) {
                (Some(to), Some(tt)) if to <= tt => {
                    depth[idx] = to / ray_scale;
                    mask[idx] = true;
                }
                (Some(to), None) => {
                    depth[idx] = to / ray_scale;
                    mask[idx] = true;
                }
                (_, Some(tt)) => depth[idx] = tt / ray_scale,
                (None, None) => {}
            }
        }
    }

    let obs = Observation {
        depth,
        mask,
        width,
        height,
        intrinsics,
        camera_pose: cam,
    };
    if obs.mask_pixel_count() == 0 {
        return Err(Error::ObjectOutOfView);
    }
    Ok(obs)
}

/// Segment the visible object cloud the way the planner does: back-project
/// every depth return into the table frame and crop the table plane away.
pub fn visible_cloud_table(obs: &Observation, table: &Plane, epsilon: f64) -> Result<PointCloud> {
    let all = obs.backproject(false)?;
    let in_table = all.transformed(&obs.camera_pose)?;
    Ok(crop_below_plane(&in_table, table, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ShapeFamily, ShapeModel, ShapeSpec};
    use std::sync::Arc;

    fn box_scene(camera_pose: Pose) -> Scene {
        let spec =
            ShapeSpec::new(ShapeFamily::Box, Vector3::new(0.1, 0.08, 0.05), "box0").unwrap();
        let model = Arc::new(ShapeModel::build(&spec).unwrap());
        Scene::tabletop(model, 0.0, nalgebra::Vector2::zeros(), camera_pose).unwrap()
    }

    #[test]
    fn straight_down_view_depth_oracle() {
        let cam = look_at(Vector3::new(0.0, 0.0, 0.6), Vector3::new(0.0, 0.0, 0.05)).unwrap();
        let scene = box_scene(cam);
        // 65x65 with centered intrinsics puts a pixel exactly on the axis.
        let obs = render_depth(&scene, (65, 65), Intrinsics::centered(65, 65, 60.0)).unwrap();
        let center = obs.depth_at(32, 32);
        // Camera at 0.6 m, box top at 0.05 m.
        assert!((center - 0.55).abs() < 1e-9, "center depth {center}");
        assert!(obs.mask_at(32, 32));
        // A corner pixel sees the table.
        assert!(!obs.mask_at(0, 0));
        assert!(obs.depth_at(0, 0) > 0.55);
    }

    #[test]
    fn object_behind_camera_is_out_of_view() {
        let cam = look_at(Vector3::new(0.5, 0.0, 0.2), Vector3::new(1.0, 0.0, 0.2)).unwrap();
        let scene = box_scene(cam);
        assert!(matches!(
            render_depth(&scene, (64, 64), Intrinsics::default_64()),
            Err(Error::ObjectOutOfView)
        ));
    }

    #[test]
    fn backprojection_reproduces_visible_surface() {
        let cam = look_at(Vector3::new(0.35, -0.25, 0.4), Vector3::new(0.0, 0.0, 0.03)).unwrap();
        let scene = box_scene(cam);
        let obs = render_depth(&scene, (64, 64), Intrinsics::default_64()).unwrap();
        let cloud = obs.backproject(true).unwrap();
        assert_eq!(cloud.len(), obs.mask_pixel_count());
        // Every masked point lies on the posed box surface.
        let to_object = scene.object_pose.invert();
        let table_cloud = cloud.transformed(&obs.camera_pose).unwrap();
        let h = scene.model.aabb_half();
        for p in table_cloud.points() {
            let q = to_object.transform_point(p);
            let on_face = (0..3).any(|a| {
                (q[a].abs() - h[a]).abs() < 1e-6
                    && (0..3).all(|b| q[b].abs() <= h[b] + 1e-6)
            });
            assert!(on_face, "backprojected point {q:?} not on surface");
        }
    }

    #[test]
    fn identical_scenes_render_identically() {
        let cam = look_at(Vector3::new(0.3, 0.2, 0.3), Vector3::new(0.0, 0.0, 0.02)).unwrap();
        let scene = box_scene(cam);
        let a = render_depth(&scene, (64, 64), Intrinsics::default_64()).unwrap();
        let b = render_depth(&scene, (64, 64), Intrinsics::default_64()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn visible_cloud_excludes_table_points() {
        let cam = look_at(Vector3::new(0.4, 0.0, 0.35), Vector3::new(0.0, 0.0, 0.02)).unwrap();
        let scene = box_scene(cam);
        let obs = render_depth(&scene, (64, 64), Intrinsics::default_64()).unwrap();
        let visible = visible_cloud_table(&obs, &scene.table, 0.002).unwrap();
        assert!(!visible.is_empty());
        for p in visible.points() {
            assert!(p.z > 0.002);
        }
        // Roughly the masked pixel count (mask pixels at the very bottom of
        // the object fall inside the crop epsilon).
        assert!(visible.len() <= obs.mask_pixel_count());
        assert!(visible.len() > obs.mask_pixel_count() / 2);
    }
}
