use graspkit::grasp_eval::GripperSpec;
use graspkit::synth::{box_family_specs, label_example_grasp, shoe_family_specs, ShapeModel};

#[test]
fn every_family_shape_is_labelable() {
    let gripper = GripperSpec::default();
    for (i, spec) in shoe_family_specs(30, 7)
        .into_iter()
        .chain(box_family_specs(30, 7))
        .enumerate()
    {
        let model = ShapeModel::build(&spec).unwrap();
        let grasp = label_example_grasp(&model, &gripper, 1000 + i as u64);
        assert!(grasp.is_ok(), "shape {} has no feasible grasp: {spec:?}", spec.id);
        if let graspkit::synth::ShapeFamily::Superquadric { .. } = spec.family {
            let grasp = grasp.unwrap();
            let p = grasp.translation();
            assert!(p.x < -0.02, "shoe {} grasp not on the slim end: {p:?}", spec.id);
        }
    }
}
