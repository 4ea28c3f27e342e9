//! Committed model file and inputs with outputs produced by a plain-loop
//! reference forward pass.

use std::path::PathBuf;

use bvr_core::{FeatureVector, MlpModel};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn reference_forward(model: &MlpModel, x: &FeatureVector) -> f64 {
    let n = &model.normalization;
    let mut a: Vec<f64> = (0..10).map(|i| (x.0[i] - n.feature_mean[i]) / n.feature_std[i]).collect();
    for (k, layer) in model.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.outputs];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut sum = layer.biases[o];
            for (i, ai) in a.iter().enumerate() {
                sum += layer.weights[o * layer.inputs + i] * ai;
            }
            *zo = if k + 1 < model.layers.len() { sum.tanh() } else { sum };
        }
        a = z;
    }
    (a[0] * n.label_std + n.label_mean).max(0.0)
}

fn parse_cases(text: &str) -> Vec<(FeatureVector, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|line| {
            let values: Vec<f64> = line.split_whitespace().map(|v| v.parse().unwrap()).collect();
            assert_eq!(values.len(), 11, "{line}");
            (FeatureVector(values[..10].try_into().unwrap()), values[10])
        })
        .collect()
}

#[test]
fn forward_matches_the_golden_outputs() {
    let model = MlpModel::load(&fixture("golden.bvrm")).unwrap();
    let cases = parse_cases(&std::fs::read_to_string(fixture("golden_cases.txt")).unwrap());
    assert_eq!(cases.len(), 16);
    let inputs: Vec<FeatureVector> = cases.iter().map(|c| c.0).collect();
    let batch = model.forward_batch(&inputs).unwrap();
    for ((x, expected), batched) in cases.iter().zip(batch) {
        let single = model.forward(x).unwrap();
        assert!((single - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{single} vs {expected}");
        assert_eq!(single, batched);
        assert!((reference_forward(&model, x) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn golden_outputs_are_not_degenerate() {
    let cases = parse_cases(&std::fs::read_to_string(fixture("golden_cases.txt")).unwrap());
    assert!(cases.iter().all(|c| c.1 > 0.0));
    let first = cases[0].1;
    assert!(cases.iter().any(|c| c.1 != first));
}
