//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture_dir() -> PathBuf {
    // Resolves from either crate that includes this module.
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Pair-by-pair concordance counts `(concordant, tied, discordant)`.
pub fn brute_force_counts(times: &[f64], events: &[bool], scores: &[f64]) -> (u64, u64, u64) {
    let n = times.len();
    let (mut c, mut t, mut d) = (0, 0, 0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // i must be the earlier event; at equal times only vs. a censored j.
            let earlier = events[i] && (times[i] < times[j] || (times[i] == times[j] && !events[j]));
            if !earlier {
                continue;
            }
            if scores[i] > scores[j] {
                c += 1;
            } else if scores[i] == scores[j] {
                t += 1;
            } else {
                d += 1;
            }
        }
    }
    (c, t, d)
}

pub fn brute_force_cindex(times: &[f64], events: &[bool], scores: &[f64]) -> Option<f64> {
    let (c, t, d) = brute_force_counts(times, events, scores);
    let total = c + t + d;
    (total > 0).then(|| (c as f64 + 0.5 * t as f64) / total as f64)
}

/// Efron partial NLL evaluated literally, one distinct event time at a time.
pub fn naive_efron(eta: &[f64], times: &[f64], events: &[bool]) -> f64 {
    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut nll = 0.0;
    for &tj in &event_times {
        let tied: Vec<usize> = (0..times.len())
            .filter(|&i| events[i] && times[i] == tj)
            .collect();
        let risk: f64 = (0..times.len())
            .filter(|&i| times[i] >= tj)
            .map(|i| eta[i].exp())
            .sum();
        let tied_sum: f64 = tied.iter().map(|&i| eta[i].exp()).sum();
        let m = tied.len() as f64;
        for &i in &tied {
            nll -= eta[i];
        }
        for l in 0..tied.len() {
            nll += (risk - l as f64 / m * tied_sum).ln();
        }
    }
    nll
}

/// Partial NLL without any tie handling.
pub fn untied_partial_nll(eta: &[f64], times: &[f64], events: &[bool]) -> f64 {
    let mut nll = 0.0;
    for i in 0..times.len() {
        if events[i] {
            let risk: f64 = (0..times.len())
                .filter(|&j| times[j] >= times[i])
                .map(|j| eta[j].exp())
                .sum();
            nll += risk.ln() - eta[i];
        }
    }
    nll
}

pub fn linear_predictor(x: &Array2<f64>, theta: &[f64]) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| r.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect()
}

/// Central finite differences with step `h`.
pub fn finite_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Nelder-Mead simplex search from `start`, restarted until the minimum
/// stops improving.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let mut best = start.to_vec();
    let mut best_f = f(&best);
    let mut step = scale;
    for _ in 0..30 {
        let (x, fx) = nelder_mead_once(f, &best, step);
        let improved = best_f - fx;
        if fx <= best_f {
            best = x;
            best_f = fx;
        }
        if improved.abs() <= 1e-15 * (1.0 + best_f.abs()) {
            break;
        }
        step = (step * 0.5).max(1e-3);
    }
    (best, best_f)
}

fn nelder_mead_once(f: &dyn Fn(&[f64]) -> f64, start: &[f64], scale: f64) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..20_000 {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= 1e-16 * (1.0 + values[0].abs()) && diameter < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(0.5);
                let fx = f(&x);
                (x, fx)
            } else {
                let x = along(-0.5);
                let fx = f(&x);
                (x, fx)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[i].clone(), values[i])
}

/// Random survival outcomes on a coarse time grid so ties are common.
pub fn random_outcomes<R: Rng>(rng: &mut R, n: usize, grid: u32, censor_p: f64) -> (Vec<f64>, Vec<bool>) {
    let times = (0..n).map(|_| rng.random_range(0..grid) as f64 * 0.5).collect();
    let events = (0..n).map(|_| !rng.random_bool(censor_p)).collect();
    (times, events)
}

/// Reads a `time,event,x1,..` fixture.
pub fn read_fixture(name: &str) -> (Vec<f64>, Vec<bool>, Array2<f64>) {
    let mut rdr = csv::Reader::from_path(fixture_dir().join(name)).unwrap();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    let mut p = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
        times.push(v[0]);
        events.push(v[1] != 0.0);
        p = v.len() - 2;
        values.extend_from_slice(&v[2..]);
    }
    let n = times.len();
    (times, events, Array2::from_shape_vec((n, p), values).unwrap())
}
