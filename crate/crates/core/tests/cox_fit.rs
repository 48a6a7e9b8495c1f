mod common;

use mtsurv::cox::{fit_cox, CoxOptions};
use mtsurv::survival::SurvivalDataset;
use serde_json::Value;

use common::{fixture_dir, linear_predictor, naive_efron, nelder_mead, read_fixture};

const FIXTURES: [&str; 5] = [
    "cox_small_0.csv",
    "cox_small_1.csv",
    "cox_small_2.csv",
    "cox_small_3.csv",
    "cox_small_4.csv",
];

fn reference() -> Value {
    let text = std::fs::read_to_string(fixture_dir().join("cox_reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Best of several Nelder-Mead runs on the literal Efron objective.
fn derivative_free_fit(name: &str) -> Vec<f64> {
    let (times, events, x) = read_fixture(name);
    let f = |theta: &[f64]| naive_efron(&linear_predictor(&x, theta), &times, &events);
    let starts: [[f64; 3]; 4] = [
        [0.0, 0.0, 0.0],
        [1.0, 1.0, 1.0],
        [-1.0, 0.5, -0.5],
        [2.0, -2.0, 0.0],
    ];
    starts
        .iter()
        .map(|s| nelder_mead(&f, s, 0.5))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn newton_fit_matches_oracles() {
    let reference = reference();
    for name in FIXTURES {
        let (times, events, x) = read_fixture(name);
        let names = vec!["x1".into(), "x2".into(), "x3".into()];
        let ds = SurvivalDataset::new(x, times, events, names, 1.0).unwrap();
        let model = fit_cox(&ds, &CoxOptions::default()).unwrap();
        assert!(model.converged, "{name}: {}", model.status);

        let oracle = derivative_free_fit(name);
        let published: Vec<f64> = reference[name]["coefficients"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        for k in 0..3 {
            assert!(
                (model.theta[k] - oracle[k]).abs() < 1e-4,
                "{name} θ{k}: {} vs simplex {}",
                model.theta[k],
                oracle[k]
            );
            assert!(
                (model.theta[k] - published[k]).abs() < 1e-4,
                "{name} θ{k}: {} vs reference {}",
                model.theta[k],
                published[k]
            );
        }
    }
}
