//! Kaplan-Meier, AUROC and median-survival curves as CSV and SVG.

use std::fmt::Write;
use std::path::Path;

use mtsurv::analysis::median_survival;
use mtsurv::survival::{auroc_series, kaplan_meier, survival_labels_for, KmCurve, SurvivalDataset};
use ndarray::Axis;

use crate::error::CliError;
use crate::model::ModelArtifact;
use crate::svg::{line_plot, Series};

pub const KM_FILE: &str = "km.csv";
pub const AUROC_FILE: &str = "auroc.csv";
pub const MEDIAN_FILE: &str = "median.csv";
pub const MEAN_SURVIVAL_FILE: &str = "survival_mean.csv";

#[derive(Debug, Clone)]
pub struct CurveSet {
    pub km: KmCurve,
    pub n_records: usize,
    pub unit_length: f64,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// One entry per time unit; `None` where the metric is undefined.
    pub auroc: Vec<Option<f64>>,
    pub mean_survival: Vec<f64>,
    pub population_median: Option<usize>,
    pub individual_medians: Vec<Option<usize>>,
}

pub fn compute_curves(model: &ModelArtifact, ds: &SurvivalDataset) -> Result<CurveSet, CliError> {
    model.check_compatible(ds)?;
    let km = kaplan_meier(ds.times(), ds.events())?;
    let s2 = model.survival(ds.features().view())?;
    let labels = survival_labels_for(ds.times(), ds.events(), ds.unit_length(), model.horizon)?;
    let auroc = auroc_series(&labels, s2.view())?;
    let mean_survival = s2
        .mean_axis(Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_else(|| vec![f64::NAN; model.horizon]);
    let individual_medians = s2
        .rows()
        .into_iter()
        .map(|r| median_survival(r.as_slice().expect("standard layout")))
        .collect();
    Ok(CurveSet {
        km,
        n_records: ds.len(),
        unit_length: ds.unit_length(),
        times: ds.times().to_vec(),
        events: ds.events().to_vec(),
        auroc,
        population_median: median_survival(&mean_survival),
        mean_survival,
        individual_medians,
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `time,survival,at_risk,events`, starting from the origin `(0, 1, n, 0)`.
pub fn km_csv(km: &KmCurve, n_records: usize) -> String {
    let mut s = String::from("time,survival,at_risk,events\n");
    let _ = writeln!(s, "0,1,{n_records},0");
    for i in 0..km.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            km.times[i], km.survival[i], km.at_risk[i], km.events[i]
        );
    }
    s
}

/// One column per time unit; undefined values are empty cells.
pub fn auroc_csv(auroc: &[Option<f64>]) -> String {
    let header: Vec<String> = (0..auroc.len()).map(|t| format!("t{t}")).collect();
    let row: Vec<String> = auroc.iter().map(|v| opt(*v)).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

pub fn median_csv(c: &CurveSet) -> String {
    let mut s = String::from("record,time,event,median_unit\n");
    let _ = writeln!(s, "population,,,{}", opt(c.population_median));
    for (i, m) in c.individual_medians.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", c.times[i], u8::from(c.events[i]), opt(*m));
    }
    s
}

pub fn mean_survival_csv(mean: &[f64]) -> String {
    let mut s = String::from("unit,mean_survival\n");
    for (t, v) in mean.iter().enumerate() {
        let _ = writeln!(s, "{t},{v}");
    }
    s
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Writes every curve CSV, plus SVG renderings when `svg` is set.
pub fn write_curves(dir: &Path, c: &CurveSet, svg: bool) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write(dir, KM_FILE, &km_csv(&c.km, c.n_records))?;
    write(dir, AUROC_FILE, &auroc_csv(&c.auroc))?;
    write(dir, MEDIAN_FILE, &median_csv(c))?;
    write(dir, MEAN_SURVIVAL_FILE, &mean_survival_csv(&c.mean_survival))?;
    if !svg {
        return Ok(());
    }

    // KM in time units so it shares an axis with the model curves.
    let mut km_points = vec![(0.0, Some(1.0))];
    km_points.extend(
        c.km.times
            .iter()
            .zip(&c.km.survival)
            .map(|(t, s)| (t / c.unit_length, Some(*s))),
    );
    if let Some(&last) = c.times.iter().max_by(|a, b| a.total_cmp(b)) {
        let s = c.km.survival.last().copied().unwrap_or(1.0);
        km_points.push((last / c.unit_length, Some(s)));
    }
    let model_points: Vec<(f64, Option<f64>)> = c
        .mean_survival
        .iter()
        .enumerate()
        .map(|(t, s)| ((t + 1) as f64, Some(*s)))
        .collect();
    let survival_svg = line_plot(
        "Survival",
        "time unit",
        "S(t)",
        &[
            Series {
                label: "Kaplan-Meier",
                points: km_points,
                step: true,
                dashed: false,
            },
            Series {
                label: "model mean",
                points: model_points,
                step: false,
                dashed: true,
            },
        ],
    );
    write(dir, "survival.svg", &survival_svg)?;

    let auroc_points = c
        .auroc
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64, *v))
        .collect();
    let auroc_svg = line_plot(
        "AUROC per time unit",
        "time unit",
        "AUROC",
        &[Series {
            label: "AUROC",
            points: auroc_points,
            step: false,
            dashed: false,
        }],
    );
    write(dir, "auroc.svg", &auroc_svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_censored_km_is_the_origin_row() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[false; 3]).unwrap();
        assert_eq!(km_csv(&km, 3), "time,survival,at_risk,events\n0,1,3,0\n");
    }

    #[test]
    fn auroc_gaps_are_empty_cells() {
        assert_eq!(auroc_csv(&[Some(0.5), None, Some(0.75)]), "t0,t1,t2\n0.5,,0.75\n");
    }

    #[test]
    fn km_csv_satisfies_recurrence() {
        let km = kaplan_meier(&[1.0, 1.0, 2.0, 3.0, 3.0, 4.0], &[true, false, true, true, true, false])
            .unwrap();
        let text = km_csv(&km, 6);
        let mut prev = 1.0_f64;
        for line in text.lines().skip(1) {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            let expected = prev * (1.0 - f[3] / f[2]);
            assert_eq!(expected.to_bits(), f[1].to_bits());
            prev = f[1];
        }
    }
}
