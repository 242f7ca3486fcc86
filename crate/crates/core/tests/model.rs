use labgatr_core::mesh::{load_mesh, save_mesh};
use labgatr_core::model::{
    make_toy_dataset, train, LabGatr, ModelConfig, Prediction, TaskPreset, ToyKind, TrainOptions,
};
use labgatr_core::pga::RigidMotion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(preset: TaskPreset) -> ModelConfig {
    ModelConfig { channels: 4, heads: 2, blocks: 2, epochs: 3, ..ModelConfig::preset(preset) }
}

/// Closed-form parameter count: an equivariant linear map has 9 weights per
/// channel pair and the MLPs widen to two hidden branches plus their product.
fn expected_params(c_in: usize, c: usize, blocks: usize, c_out: usize) -> usize {
    let lin = |a: usize, b: usize| 9 * a * b;
    let mlp = |a: usize, h: usize, b: usize| lin(a, 2 * h) + lin(3 * h, b);
    mlp(c_in + 1, c, c) + blocks * (4 * lin(c, c) + mlp(c, c, c)) + mlp(c + c_in, c, c) + lin(c, c_out)
}

#[test]
fn parameter_counts() {
    let large = LabGatr::new(ModelConfig::preset(TaskPreset::VolumeVelocity).large()).unwrap();
    assert_eq!(large.num_params(), expected_params(5, 16, 14, 1));
    assert_eq!(large.num_params(), 312_048);
    assert_eq!(large.init_params(0).unwrap().num_params(), large.num_params());

    let surface = LabGatr::new(ModelConfig::preset(TaskPreset::SurfaceWss)).unwrap();
    assert_eq!(surface.num_params(), expected_params(3, 8, 4, 1));
}

#[test]
fn meshes_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, ext) in [(ToyKind::Surface, "off"), (ToyKind::Volume, "vtk"), (ToyKind::MeshLevel, "off")] {
        let sample = make_toy_dataset(kind, 1, 5).remove(0);
        let path = dir.path().join(format!("m.{ext}"));
        save_mesh(&sample, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.positions, sample.positions, "{kind:?}");
        assert_eq!(back.cells, sample.cells, "{kind:?}");
        assert_eq!(back.target, sample.target, "{kind:?}");
    }
}

#[test]
fn serial_training_is_bit_reproducible() {
    let model = LabGatr::new(small(TaskPreset::SurfaceWss)).unwrap();
    let data: Vec<_> = make_toy_dataset(ToyKind::Surface, 5, 1).iter().map(|s| model.prepare(s).unwrap()).collect();
    let run = || {
        let opts = TrainOptions { serial: true, ..Default::default() };
        train(&model, model.init_params(3).unwrap(), &data[..4], &data[4..], &opts).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    let bits =
        |o: &labgatr_core::model::TrainOutcome| o.last.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert!(a.log.iter().all(|r| r.wall_seconds == 0.0));
}

#[test]
fn predictions_follow_proper_motions() {
    let model = LabGatr::new(small(TaskPreset::SurfaceWss)).unwrap();
    let store = model.init_params_dense(2).unwrap();
    let sample = make_toy_dataset(ToyKind::Surface, 1, 4).remove(0);
    let prepared = model.prepare(&sample).unwrap();
    let Prediction::VertexVectors(reference) = model.predict(&store, &prepared).unwrap() else { panic!() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let g = RigidMotion::random(&mut rng, false);
        let moved = sample.transformed(&g);
        let moved = model.prepare_with_plan(&moved, prepared.plan.clone()).unwrap();
        let Prediction::VertexVectors(out) = model.predict(&store, &moved).unwrap() else { panic!() };
        let scale = reference.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for (r, o) in reference.iter().zip(&out) {
            let expected = g.apply_direction(*r);
            for i in 0..3 {
                assert!((expected[i] - o[i]).abs() <= 1e-8 * scale, "{expected:?} vs {o:?}");
            }
        }
    }
}
