//! The JSON files shipped in `configs/` parse and build.

use std::fs;
use std::path::Path;

use meanfield::models::{exact_flow, Model, ModelFile};

fn load(name: &str) -> Model {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let text = fs::read_to_string(&path).unwrap();
    ModelFile::from_json(&text).unwrap().build().unwrap()
}

#[test]
fn feynman_kac_file() {
    let model = load("fk_two_state.json");
    assert_eq!(model.horizon(), 3);
    let flow = exact_flow(model.as_finite().unwrap(), 3).unwrap();
    let expected = [0.8, 0.6, 0.5285714285714286, 0.5077669902912622];
    for (eta, e) in flow.iter().zip(expected) {
        assert!((eta.get(0) - e).abs() < 1e-15);
    }
}

#[test]
fn two_velocities_file() {
    let model = load("two_velocities.json");
    let flow = exact_flow(model.as_finite().unwrap(), 5).unwrap();
    assert!((flow[2].get(1) - 0.5128).abs() < 1e-15);
}

#[test]
fn gaussian_file() {
    let Model::Gaussian(g) = load("gaussian.json") else {
        panic!("expected a Gaussian model")
    };
    assert_eq!(g.horizon, 10);
    assert!(!g.is_decoupled());
}

#[test]
fn horizon_override_stretches_lists() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fk_two_state.json");
    let file = ModelFile::from_json(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(file.with_horizon(7).build().unwrap().horizon(), 7);
}

#[test]
fn general_gas_file() {
    let text = r#"{"type": "mckean_gas", "states": 2, "horizon": 5,
        "nu": [0.5, 0.5],
        "collision_weights": [[1.0, 1.0], [1.0, 1.0]],
        "post_collision": [[1, 0], [0, 1], [0, 1], [1, 0]],
        "initial": [0.7, 0.3]}"#;
    let model = ModelFile::from_json(text).unwrap().build().unwrap();
    let flow = exact_flow(model.as_finite().unwrap(), 5).unwrap();
    for eta in &flow {
        assert!((eta.get(0) + eta.get(1) - 1.0).abs() < 1e-14);
    }
}
