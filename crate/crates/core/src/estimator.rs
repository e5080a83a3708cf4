//! Implicit a posteriori estimation of the energy error.
//!
//! The detail space has two parts. The spatial part enriches each mode `mu`
//! with the broken-Q2 functions on its own mesh. The parametric part adds
//! the neighbouring modes `nu` in `J_Q`, each carrying the Q1 space on one
//! shared level `l^{bar mu}`. Because the mean form `B_0` does not couple
//! distinct modes, the residual problem splits into one small SPD solve per
//! component.

use serde::{Deserialize, Serialize};

use crate::chaos::{active_dimension, build_coupling, neighbor_set, IndexSet, MultiIndex};
use crate::fem::{assemble_load, ScalarField, SpaceKind};
use crate::system::{BlockVector, MultilevelSpace, StiffnessCache};
use crate::{Error, Result};

/// `||e^mu||_{B_0}` for one component with the dimension of its detail space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub index: MultiIndex,
    pub level: u32,
    pub estimate: f64,
    pub dof_count: usize,
}

impl ComponentEstimate {
    /// `estimate^2 / dof_count`
    pub fn ratio(&self) -> f64 {
        self.estimate * self.estimate / self.dof_count as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimates {
    pub spatial: Vec<ComponentEstimate>,
    pub parametric: Vec<ComponentEstimate>,
    pub bar_mu_level: u32,
}

impl ComponentEstimates {
    pub fn total(&self) -> f64 {
        total_estimate(self)
    }
}

/// Smallest level `l` such that at least `ceil(card / 2)` entries are `<= l`.
pub fn argavg_level(levels: &[u32]) -> u32 {
    assert!(!levels.is_empty(), "argavg of an empty level set");
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    sorted[levels.len().div_ceil(2) - 1]
}

/// One broken-Q2 residual solve per `mu` in `J_P`.
pub fn spatial_components(
    u: &BlockVector,
    space: &MultilevelSpace,
    cache: &mut StiffnessCache,
    f: &dyn ScalarField,
) -> Result<Vec<ComponentEstimate>> {
    check_conforming(u, space)?;
    let jp = space.index_set();
    let big_m = active_dimension(jp);
    let couplings: Vec<_> = (0..=big_m).map(|m| build_coupling(m, jp, jp)).collect();
    let mut out = Vec::with_capacity(jp.len());
    for (i, mu) in jp.iter().enumerate() {
        let detail = space.space_on(space.levels()[i], SpaceKind::BrokenQ2);
        let mut rhs = if mu.is_zero() {
            assemble_load(&detail, f, cache.options())
        } else {
            vec![0.0; detail.dof_count()]
        };
        for g in &couplings {
            for &(_, j, w) in g.entries.iter().filter(|e| e.0 == i) {
                let k = cache.block(g.m, &detail, &space.space(j))?;
                k.apply_add(-w, u.block(j), &mut rhs);
            }
        }
        let e = cache.mean_solver(&detail)?.solve(&rhs)?;
        let sq: f64 = e.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        out.push(ComponentEstimate {
            index: mu.clone(),
            level: detail.level(),
            estimate: sq.max(0.0).sqrt(),
            dof_count: detail.dof_count(),
        });
    }
    Ok(out)
}

/// One Q1 solve on level `h_level` per `nu` in `J_Q`, sharing a single factorisation.
pub fn parametric_components(
    u: &BlockVector,
    space: &MultilevelSpace,
    cache: &mut StiffnessCache,
    jq: &IndexSet,
    h_level: u32,
) -> Result<Vec<ComponentEstimate>> {
    check_conforming(u, space)?;
    let jp = space.index_set();
    if jq.iter().any(|nu| jp.contains(nu)) {
        return Err(Error::Config("neighbour set overlaps the index set".into()));
    }
    let h = space.space_on(h_level, SpaceKind::Q1);
    let n = h.dof_count();
    let mut rhs = vec![vec![0.0; n]; jq.len()];
    let top = active_dimension(jp).max(jq.iter().map(MultiIndex::max_position).max().unwrap_or(0));
    let mut work = vec![0.0; n];
    for m in 1..=top {
        let g = build_coupling(m, jq, jp);
        if g.entries.is_empty() {
            continue;
        }
        // columns in order so each K u_mu is computed once
        let mut by_col: Vec<(usize, usize, f64)> = g.entries.clone();
        by_col.sort_by_key(|&(r, c, _)| (c, r));
        let mut k = 0;
        while k < by_col.len() {
            let j = by_col[k].1;
            let block = cache.block(m, &h, &space.space(j))?;
            work.iter_mut().for_each(|v| *v = 0.0);
            block.apply_add(1.0, u.block(j), &mut work);
            while k < by_col.len() && by_col[k].1 == j {
                let (r, _, w) = by_col[k];
                rhs[r].iter_mut().zip(&work).for_each(|(a, b)| *a -= w * b);
                k += 1;
            }
        }
    }
    let factor = cache.mean_factor(&h)?;
    Ok(jq
        .iter()
        .zip(rhs)
        .map(|(nu, b)| {
            let e = factor.solve(&b);
            let sq: f64 = e.iter().zip(&b).map(|(x, y)| x * y).sum();
            ComponentEstimate { index: nu.clone(), level: h_level, estimate: sq.max(0.0).sqrt(), dof_count: n }
        })
        .collect())
}

/// Builds `J_Q` and `bar mu`, then evaluates both component sets.
pub fn estimate(
    u: &BlockVector,
    space: &MultilevelSpace,
    cache: &mut StiffnessCache,
    f: &dyn ScalarField,
    delta_m: u32,
) -> Result<ComponentEstimates> {
    let jq = neighbor_set(space.index_set(), delta_m);
    let bar_mu_level = argavg_level(space.levels());
    let spatial = spatial_components(u, space, cache, f)?;
    let parametric = parametric_components(u, space, cache, &jq, bar_mu_level)?;
    Ok(ComponentEstimates { spatial, parametric, bar_mu_level })
}

/// `eta = sqrt(sum spatial^2 + sum parametric^2)`.
pub fn total_estimate(c: &ComponentEstimates) -> f64 {
    c.spatial
        .iter()
        .chain(&c.parametric)
        .map(|e| e.estimate * e.estimate)
        .sum::<f64>()
        .sqrt()
}

/// `eta / sqrt(reference^2 - energy_sq)`.
pub fn effectivity(eta: f64, energy_sq: f64, reference_energy: f64) -> Result<f64> {
    let reference_sq = reference_energy * reference_energy;
    if reference_sq <= energy_sq {
        return Err(Error::StaleReference { reference_sq, energy_sq });
    }
    Ok(eta / (reference_sq - energy_sq).sqrt())
}

fn check_conforming(u: &BlockVector, space: &MultilevelSpace) -> Result<()> {
    if !u.conforms_to(space) {
        return Err(Error::ShapeMismatch { expected: space.n_dof(), got: u.len() });
    }
    Ok(())
}
