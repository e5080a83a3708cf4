//! Enrichment decisions and the adaptive solve loop.
//!
//! Each step solves on the current multilevel space, estimates the error
//! and then either refines the meshes of some modes (spatial) or adds some
//! neighbouring modes (parametric). The choice compares error reduction per
//! added degree of freedom, `R = sum e^2 / sum N`, on both sides.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chaos::{IndexSet, MultiIndex};
use crate::coeffs::Problem;
use crate::estimator::{estimate, ComponentEstimate, ComponentEstimates};
use crate::fem::AssemblyOptions;
use crate::system::{
    assemble_rhs, build_operator, energy_norm_sq, mean_preconditioner, pcg_solve, transfer, BlockVector,
    MultilevelSpace, StiffnessCache,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementType {
    Spatial,
    Parametric,
}

impl RefinementType {
    pub fn as_str(self) -> &'static str {
        match self {
            RefinementType::Spatial => "spatial",
            RefinementType::Parametric => "parametric",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Version {
    /// Threshold marking on the dominant side.
    V1,
    /// Greedy prefix marking on the dominant side.
    V2,
}

impl TryFrom<u32> for Version {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        match v {
            1 => Ok(Version::V1),
            2 => Ok(Version::V2),
            _ => Err(Error::Config(format!("version must be 1 or 2, got {v}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionDiagnostics {
    pub delta_y1: f64,
    pub delta_y2: f64,
    pub r_w1: f64,
    pub r_w2: f64,
    pub zeta_w1: f64,
    pub zeta_w2: f64,
    pub n_w1: usize,
    pub n_w2: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentDecision {
    pub refinement_type: RefinementType,
    pub marked: IndexSet,
    pub diagnostics: DecisionDiagnostics,
}

const TIE_TOLERANCE: f64 = 1e-12;

fn max_ratio(c: &[ComponentEstimate]) -> f64 {
    c.iter().map(ComponentEstimate::ratio).fold(0.0, f64::max)
}

/// Positions within `1e-12` relative of the largest ratio.
fn argmax_set(c: &[ComponentEstimate]) -> Vec<usize> {
    let top = max_ratio(c);
    (0..c.len()).filter(|&i| c[i].ratio() >= top * (1.0 - TIE_TOLERANCE)).collect()
}

fn threshold_set(c: &[ComponentEstimate], other_delta: f64) -> Vec<usize> {
    let set: Vec<usize> = (0..c.len()).filter(|&i| c[i].ratio() > other_delta).collect();
    if set.is_empty() {
        argmax_set(c)
    } else {
        set
    }
}

/// Longest ratio-sorted prefix whose aggregate ratio exceeds `other_delta`.
fn mark_prefix(c: &[ComponentEstimate], other_delta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[b].ratio().total_cmp(&c[a].ratio()));
    let (mut zeta, mut n) = (0.0, 0usize);
    let mut best = 0;
    for (k, &i) in order.iter().enumerate() {
        zeta += c[i].estimate * c[i].estimate;
        n += c[i].dof_count;
        if zeta / n as f64 > other_delta {
            best = k + 1;
        }
    }
    if best == 0 {
        return argmax_set(c);
    }
    let mut set = order[..best].to_vec();
    set.sort_unstable();
    set
}

fn aggregate(c: &[ComponentEstimate], set: &[usize]) -> (f64, usize) {
    set.iter().fold((0.0, 0), |(z, n), &i| (z + c[i].estimate * c[i].estimate, n + c[i].dof_count))
}

/// Chooses the refinement type and the marked indices.
pub fn enrichment_indices(
    version: Version,
    spatial: &[ComponentEstimate],
    parametric: &[ComponentEstimate],
) -> EnrichmentDecision {
    let (delta_y1, delta_y2) = (max_ratio(spatial), max_ratio(parametric));
    let dominant = |c: &[ComponentEstimate], other: f64| match version {
        Version::V1 => threshold_set(c, other),
        Version::V2 => mark_prefix(c, other),
    };
    let (w1, w2) = if delta_y1 > delta_y2 {
        (dominant(spatial, delta_y2), argmax_set(parametric))
    } else {
        (argmax_set(spatial), dominant(parametric, delta_y1))
    };
    let (zeta_w1, n_w1) = aggregate(spatial, &w1);
    let (zeta_w2, n_w2) = aggregate(parametric, &w2);
    let ratio = |z: f64, n: usize| if n == 0 { 0.0 } else { z / n as f64 };
    let (r_w1, r_w2) = (ratio(zeta_w1, n_w1), ratio(zeta_w2, n_w2));
    let diagnostics = DecisionDiagnostics { delta_y1, delta_y2, r_w1, r_w2, zeta_w1, zeta_w2, n_w1, n_w2 };
    let (refinement_type, chosen, source) = if r_w1 > r_w2 {
        (RefinementType::Spatial, w1, spatial)
    } else {
        (RefinementType::Parametric, w2, parametric)
    };
    let marked = IndexSet::new(chosen.iter().map(|&i| source[i].index.clone()).collect())
        .expect("component indices are distinct");
    EnrichmentDecision { refinement_type, marked, diagnostics }
}

pub fn enrichment_indices_v1(spatial: &[ComponentEstimate], parametric: &[ComponentEstimate]) -> EnrichmentDecision {
    enrichment_indices(Version::V1, spatial, parametric)
}

pub fn enrichment_indices_v2(spatial: &[ComponentEstimate], parametric: &[ComponentEstimate]) -> EnrichmentDecision {
    enrichment_indices(Version::V2, spatial, parametric)
}

/// The next space: finer meshes for marked modes, or marked modes added on level `bar_mu_level`.
pub fn apply_refinement(
    space: &MultilevelSpace,
    decision: &EnrichmentDecision,
    bar_mu_level: u32,
) -> Result<MultilevelSpace> {
    if decision.marked.is_empty() {
        return Err(Error::Empty("marked set"));
    }
    match decision.refinement_type {
        RefinementType::Spatial => {
            let mut levels = space.levels().to_vec();
            for mu in &decision.marked {
                let i = space
                    .index_set()
                    .position(mu)
                    .ok_or_else(|| Error::Config(format!("marked index {mu} is not in the index set")))?;
                levels[i] += 1;
                if levels[i] > space.max_level() {
                    return Err(Error::LevelCap { level: levels[i], max: space.max_level() });
                }
            }
            MultilevelSpace::new(space.index_set().clone(), levels, space.domain(), space.max_level())
        }
        RefinementType::Parametric => {
            let mut pairs: Vec<(MultiIndex, u32)> =
                space.index_set().iter().cloned().zip(space.levels().iter().copied()).collect();
            for nu in &decision.marked {
                if space.index_set().contains(nu) {
                    return Err(Error::Config(format!("marked index {nu} is already active")));
                }
                pairs.push((nu.clone(), bar_mu_level));
            }
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let (items, levels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            MultilevelSpace::new(IndexSet::new(items)?, levels, space.domain(), space.max_level())
        }
    }
}

/// Settings of one adaptive run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub version: Version,
    pub tolerance: f64,
    pub delta_m: u32,
    pub initial_indices: IndexSet,
    pub initial_levels: Vec<u32>,
    pub quad_points: usize,
    pub pcg_tolerance: f64,
    pub pcg_max_iter: usize,
    pub max_steps: usize,
    pub max_dof: usize,
    pub max_level: u32,
    /// Wall-clock timings are recorded; off gives reproducible records.
    pub timings: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            version: Version::V1,
            tolerance: 2e-3,
            delta_m: 5,
            initial_indices: IndexSet::new(vec![MultiIndex::zero(), MultiIndex::from_dense(&[1])])
                .expect("distinct"),
            initial_levels: vec![4, 4],
            quad_points: 4,
            pcg_tolerance: 1e-10,
            pcg_max_iter: 500,
            max_steps: 200,
            max_dof: 2_000_000,
            max_level: crate::fem::DEFAULT_MAX_LEVEL,
            timings: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.delta_m < 1 {
            return Err(Error::Config("delta_m must be at least 1".into()));
        }
        if !(self.pcg_tolerance > 0.0 && self.pcg_tolerance < 1.0) {
            return Err(Error::Config("PCG tolerance must lie in (0, 1)".into()));
        }
        if self.quad_points == 0 {
            return Err(Error::Config("quadrature needs at least one point".into()));
        }
        if self.initial_indices.len() != self.initial_levels.len() {
            return Err(Error::Config("initial indices and levels differ in length".into()));
        }
        Ok(())
    }
}

/// Everything recorded about one pass of the loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub n_dof: usize,
    pub eta: f64,
    pub energy_sq: f64,
    pub card_jp: usize,
    pub active_params: u32,
    pub pcg_iters: usize,
    pub t_solve_s: f64,
    pub t_estimate_s: f64,
    pub t_total_s: f64,
    pub distinct_matrices: usize,
    pub naive_matrix_bound: usize,
    pub levels: Vec<(MultiIndex, u32)>,
    pub estimates: ComponentEstimates,
    /// Absent on the final step.
    pub decision: Option<EnrichmentDecision>,
}

impl StepRecord {
    pub fn n_marked(&self) -> usize {
        self.decision.as_ref().map_or(0, |d| d.marked.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    StepCap,
    DofCap,
    LevelCap,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::StepCap => "step_cap",
            Termination::DofCap => "dof_cap",
            Termination::LevelCap => "level_cap",
        }
    }
}

pub struct AdaptiveRun {
    pub records: Vec<StepRecord>,
    pub space: MultilevelSpace,
    pub solution: BlockVector,
    pub termination: Termination,
    /// Stiffness assemblies performed over the whole run.
    pub assembled_total: usize,
}

impl AdaptiveRun {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("at least one step")
    }
}

/// Runs the loop until `eta < tolerance` or a cap is hit.
pub fn adaptive_solve(config: &AdaptiveConfig, problem: &Problem) -> Result<AdaptiveRun> {
    adaptive_solve_with(config, problem, |_| {})
}

/// As [`adaptive_solve`], calling `on_step` after each recorded step.
pub fn adaptive_solve_with(
    config: &AdaptiveConfig,
    problem: &Problem,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<AdaptiveRun> {
    config.validate()?;
    let opts = AssemblyOptions { quad_points: config.quad_points };
    let mut cache = StiffnessCache::new(problem.coefficient.clone(), opts);
    let mut space = MultilevelSpace::new(
        config.initial_indices.clone(),
        config.initial_levels.clone(),
        problem.domain,
        config.max_level,
    )?;
    let mut previous: Option<(MultilevelSpace, BlockVector)> = None;
    let mut records: Vec<StepRecord> = Vec::new();
    let clock = |t: Instant| if config.timings { t.elapsed().as_secs_f64() } else { 0.0 };

    for k in 0.. {
        if k >= config.max_steps {
            return finish(records, previous, Termination::StepCap, &cache);
        }
        if space.n_dof() > config.max_dof {
            return finish(records, previous, Termination::DofCap, &cache);
        }
        let t_step = Instant::now();
        let op = build_operator(&space, &mut cache)?;
        let pre = mean_preconditioner(&space, &mut cache)?;
        let b = assemble_rhs(&space, problem.load.as_ref(), &opts);
        let start = match &previous {
            Some((old, u_old)) => Some(transfer(old, u_old, &space)?),
            None => None,
        };
        let (u, pcg_iters) = pcg_solve(&op, &b, &pre, config.pcg_tolerance, config.pcg_max_iter, start.as_ref())?;
        let energy_sq = energy_norm_sq(&u, &b);
        let (distinct_matrices, naive_matrix_bound) = (op.distinct_matrices(), op.naive_matrix_bound());
        drop(op);
        drop(pre);
        let t_solve_s = clock(t_step);

        let t_est = Instant::now();
        let estimates = estimate(&u, &space, &mut cache, problem.load.as_ref(), config.delta_m)?;
        let eta = estimates.total();
        let t_estimate_s = clock(t_est);
        cache.evict_untouched();

        let converged = eta < config.tolerance;
        let decision = if converged {
            None
        } else {
            Some(enrichment_indices(config.version, &estimates.spatial, &estimates.parametric))
        };
        let record = StepRecord {
            k,
            n_dof: space.n_dof(),
            eta,
            energy_sq,
            card_jp: space.len(),
            active_params: space.active_dimension(),
            pcg_iters,
            t_solve_s,
            t_estimate_s,
            t_total_s: clock(t_step),
            distinct_matrices,
            naive_matrix_bound,
            levels: space.index_set().iter().cloned().zip(space.levels().iter().copied()).collect(),
            estimates,
            decision,
        };
        on_step(&record);
        let bar_mu_level = record.estimates.bar_mu_level;
        let next = record.decision.as_ref().map(|d| apply_refinement(&space, d, bar_mu_level));
        records.push(record);
        previous = Some((space.clone(), u));
        match next {
            None => return finish(records, previous, Termination::Converged, &cache),
            Some(Err(Error::LevelCap { .. })) => {
                return finish(records, previous, Termination::LevelCap, &cache)
            }
            Some(Err(e)) => return Err(e),
            Some(Ok(s)) => space = s,
        }
    }
    unreachable!("the step loop only exits by returning")
}

fn finish(
    records: Vec<StepRecord>,
    previous: Option<(MultilevelSpace, BlockVector)>,
    termination: Termination,
    cache: &StiffnessCache,
) -> Result<AdaptiveRun> {
    let (space, solution) = previous.ok_or(Error::Empty("no step completed before the cap"))?;
    Ok(AdaptiveRun { records, space, solution, termination, assembled_total: cache.assembled_count() })
}
