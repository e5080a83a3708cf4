//! CSV and JSON artifacts, and convergence-slope fitting.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptiveRun, StepRecord, Termination};
use crate::estimator::effectivity;
use crate::{Error, Result};

pub const STEPS_HEADER: [&str; 12] = [
    "k",
    "N_dof",
    "eta",
    "energy_sq",
    "refinement_type",
    "card_JP",
    "M",
    "n_marked",
    "pcg_iters",
    "t_solve_s",
    "t_estimate_s",
    "effectivity",
];

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Appends one row per step and flushes, so a partial run leaves a valid file.
pub struct StepsWriter {
    out: csv::Writer<File>,
    reference_energy: Option<f64>,
}

impl StepsWriter {
    pub fn create(path: &Path, reference_energy: Option<f64>) -> Result<Self> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(STEPS_HEADER)?;
        out.flush()?;
        Ok(Self { out, reference_energy })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        let theta = self
            .reference_energy
            .and_then(|e| effectivity(r.eta, r.energy_sq, e).ok())
            .map_or_else(String::new, fmt_float);
        let kind = r.decision.as_ref().map_or("none", |d| d.refinement_type.as_str());
        self.out.write_record([
            r.k.to_string(),
            r.n_dof.to_string(),
            fmt_float(r.eta),
            fmt_float(r.energy_sq),
            kind.to_string(),
            r.card_jp.to_string(),
            r.active_params.to_string(),
            r.n_marked().to_string(),
            r.pcg_iters.to_string(),
            fmt_float(r.t_solve_s),
            fmt_float(r.t_estimate_s),
            theta,
        ])?;
        self.out.flush()?;
        Ok(())
    }
}

/// One row per mode of the final space: sparse pairs, dense form, level, element width.
pub fn write_modes(path: &Path, record: &StepRecord, side: f64) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["mu", "dense", "level", "h"])?;
    for (mu, level) in &record.levels {
        out.write_record([
            serde_json::to_string(mu)?,
            mu.to_string(),
            level.to_string(),
            fmt_float(side / f64::from(1u32 << level)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: u32,
    pub h: f64,
    pub count: usize,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub version: u32,
    pub tolerance: f64,
    pub termination: Termination,
    pub converged: bool,
    /// Number of solve steps taken.
    pub steps: usize,
    pub final_eta: f64,
    pub n_dof: usize,
    pub energy: f64,
    pub energy_sq: f64,
    pub card_jp: usize,
    pub active_params: u32,
    pub level_counts: Vec<LevelCount>,
    pub distinct_matrices: usize,
    pub naive_matrix_bound: usize,
    pub assembled_total: usize,
    pub reference_energy: Option<f64>,
    pub final_effectivity: Option<f64>,
    pub t_solve_total_s: f64,
    pub t_estimate_total_s: f64,
}

impl Summary {
    pub fn new(problem: &str, version: u32, tolerance: f64, run: &AdaptiveRun, side: f64, reference: Option<f64>) -> Self {
        let last = run.last();
        let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
        for (_, l) in &last.levels {
            *hist.entry(*l).or_default() += 1;
        }
        Self {
            problem: problem.to_string(),
            version,
            tolerance,
            termination: run.termination,
            converged: run.converged(),
            steps: run.records.len(),
            final_eta: last.eta,
            n_dof: last.n_dof,
            energy: last.energy_sq.sqrt(),
            energy_sq: last.energy_sq,
            card_jp: last.card_jp,
            active_params: last.active_params,
            level_counts: hist
                .into_iter()
                .map(|(level, count)| LevelCount { level, h: side / f64::from(1u32 << level), count })
                .collect(),
            distinct_matrices: last.distinct_matrices,
            naive_matrix_bound: last.naive_matrix_bound,
            assembled_total: run.assembled_total,
            reference_energy: reference,
            final_effectivity: reference.and_then(|e| effectivity(last.eta, last.energy_sq, e).ok()),
            t_solve_total_s: run.records.iter().map(|r| r.t_solve_s).sum(),
            t_estimate_total_s: run.records.iter().map(|r| r.t_estimate_s).sum(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// `(N_dof, eta)` columns of a steps file.
pub fn read_steps(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("steps file has no '{name}' column")))
    };
    let (n_col, eta_col) = (col("N_dof")?, col("eta")?);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let parse = |c: usize| {
            row[c].parse::<f64>().map_err(|e| Error::Config(format!("bad number '{}': {e}", &row[c])))
        };
        out.push((parse(n_col)?, parse(eta_col)?));
    }
    Ok(out)
}

/// Least-squares slope of `log eta` against `log N` over the last `tail_fraction` of the points.
pub fn fit_slope_points(points: &[(f64, f64)], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Config("tail fraction must lie in (0, 1]".into()));
    }
    let count = ((points.len() as f64) * tail_fraction).ceil() as usize;
    if count < 4 {
        return Err(Error::InsufficientPoints { needed: 4, got: count });
    }
    let tail = &points[points.len() - count..];
    let xs: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let n = count as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("all tail points share one N_dof".into()));
    }
    Ok(sxy / sxx)
}

pub fn fit_slope(steps_csv: &Path, tail_fraction: f64) -> Result<f64> {
    fit_slope_points(&read_steps(steps_csv)?, tail_fraction)
}
