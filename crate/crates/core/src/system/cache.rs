//! Keyed storage of assembled stiffness blocks and mean-coefficient factors.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::coeffs::AffineCoefficient;
use crate::fem::{assemble_stiffness, AssemblyOptions, CsrMatrix, FeSpace, SpaceKind, SparseCholesky};
use crate::system::pcg::pcg;
use crate::Result;

/// Broken-Q2 spaces above this size are solved iteratively in the estimator.
pub const DIRECT_DETAIL_LIMIT: usize = 250_000;

/// Bytes of blocks with a test space above `DIRECT_DETAIL_LIMIT` kept between
/// steps; larger ones are rebuilt on demand.
pub const LARGE_BLOCK_BUDGET: usize = 1 << 30;

const DETAIL_TOLERANCE: f64 = 1e-12;
const DETAIL_MAX_ITER: usize = 2000;

/// Solver for `K^0(space <- space)` used by the estimator.
///
/// The broken-Q2 mean stiffness is spectrally equivalent to its diagonal,
/// so diagonally scaled CG needs a level-independent number of iterations
/// and no factor storage.
pub enum MeanSolver {
    Direct(Arc<SparseCholesky>),
    Jacobi { matrix: Arc<CsrMatrix>, inv_diag: Vec<f64> },
}

impl MeanSolver {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            MeanSolver::Direct(f) => Ok(f.solve(b)),
            MeanSolver::Jacobi { matrix, inv_diag } => {
                let apply = |x: &[f64], y: &mut [f64]| {
                    y.iter_mut().for_each(|v| *v = 0.0);
                    matrix.mul_vec_add(1.0, x, y);
                };
                let scale = |r: &[f64], z: &mut [f64]| {
                    z.iter_mut().zip(r).zip(inv_diag).for_each(|((z, r), d)| *z = r * d);
                };
                Ok(pcg(&apply, &scale, b, None, DETAIL_TOLERANCE, DETAIL_MAX_ITER, None)?.solution)
            }
        }
    }
}

/// `(m, test space, trial space)` with the test level at least the trial level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StiffnessKey {
    pub m: u32,
    pub test: (SpaceKind, u32),
    pub trial: (SpaceKind, u32),
}

/// A block `K^m(test <- trial)`, possibly served as the transpose of the
/// stored orientation.
#[derive(Clone, Debug)]
pub struct BlockRef {
    pub matrix: Arc<CsrMatrix>,
    pub transposed: bool,
}

impl BlockRef {
    /// `y += alpha * K x`
    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        if self.transposed {
            self.matrix.tr_mul_vec_add(alpha, x, y);
        } else {
            self.matrix.mul_vec_add(alpha, x, y);
        }
    }
}

/// Persists across adaptive steps; entries not touched during a step can be
/// dropped with [`StiffnessCache::evict_untouched`].
pub struct StiffnessCache {
    coefficient: Arc<AffineCoefficient>,
    opts: AssemblyOptions,
    matrices: HashMap<StiffnessKey, Arc<CsrMatrix>>,
    factors: HashMap<(SpaceKind, u32), Arc<SparseCholesky>>,
    touched: HashSet<StiffnessKey>,
    touched_factors: HashSet<(SpaceKind, u32)>,
    assembled: usize,
}

impl StiffnessCache {
    pub fn new(coefficient: Arc<AffineCoefficient>, opts: AssemblyOptions) -> Self {
        Self {
            coefficient,
            opts,
            matrices: HashMap::new(),
            factors: HashMap::new(),
            touched: HashSet::new(),
            touched_factors: HashSet::new(),
            assembled: 0,
        }
    }

    pub fn coefficient(&self) -> &Arc<AffineCoefficient> {
        &self.coefficient
    }

    pub fn options(&self) -> &AssemblyOptions {
        &self.opts
    }

    /// `K^m(test <- trial)`, assembling the stored orientation on first use.
    pub fn block(&mut self, m: u32, test: &FeSpace, trial: &FeSpace) -> Result<BlockRef> {
        let (hi, lo, transposed) =
            if test.level() >= trial.level() { (test, trial, false) } else { (trial, test, true) };
        let key = StiffnessKey { m, test: (hi.kind, hi.level()), trial: (lo.kind, lo.level()) };
        self.touched.insert(key);
        if let Some(k) = self.matrices.get(&key) {
            return Ok(BlockRef { matrix: k.clone(), transposed });
        }
        let field = self.coefficient.field(m)?;
        let k = Arc::new(assemble_stiffness(hi, lo, field.as_ref(), &self.opts)?);
        self.assembled += 1;
        if !Self::is_large(&key) || self.large_bytes() + k.memory_bytes() <= LARGE_BLOCK_BUDGET {
            self.matrices.insert(key, k.clone());
        }
        Ok(BlockRef { matrix: k, transposed })
    }

    fn is_large(key: &StiffnessKey) -> bool {
        let (kind, level) = key.test;
        let n = 1usize << level;
        kind == SpaceKind::BrokenQ2 && (2 * n - 1) * (2 * n - 1) - (n - 1) * (n - 1) > DIRECT_DETAIL_LIMIT
    }

    fn large_bytes(&self) -> usize {
        self.matrices.iter().filter(|(k, _)| Self::is_large(k)).map(|(_, m)| m.memory_bytes()).sum()
    }

    /// Cholesky factor of `K^0(space <- space)`.
    pub fn mean_factor(&mut self, space: &FeSpace) -> Result<Arc<SparseCholesky>> {
        let key = (space.kind, space.level());
        self.touched_factors.insert(key);
        if let Some(f) = self.factors.get(&key) {
            return Ok(f.clone());
        }
        let k = self.block(0, space, space)?;
        let f = Arc::new(SparseCholesky::factor(&k.matrix, space.dissection_order())?);
        self.factors.insert(key, f.clone());
        Ok(f)
    }

    /// Direct factor for Q1 and small detail spaces, diagonal-scaled CG otherwise.
    pub fn mean_solver(&mut self, space: &FeSpace) -> Result<MeanSolver> {
        if space.kind == SpaceKind::Q1 || space.dof_count() <= DIRECT_DETAIL_LIMIT {
            return Ok(MeanSolver::Direct(self.mean_factor(space)?));
        }
        let k = self.block(0, space, space)?;
        let inv_diag = k.matrix.diagonal().iter().map(|d| 1.0 / d).collect();
        Ok(MeanSolver::Jacobi { matrix: k.matrix, inv_diag })
    }

    /// Drops everything not used since the previous call.
    pub fn evict_untouched(&mut self) {
        let touched = std::mem::take(&mut self.touched);
        self.matrices.retain(|k, _| touched.contains(k));
        let touched = std::mem::take(&mut self.touched_factors);
        self.factors.retain(|k, _| touched.contains(k));
    }

    /// Stored matrices.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Total assemblies performed since creation.
    pub fn assembled_count(&self) -> usize {
        self.assembled
    }

    pub fn keys(&self) -> Vec<StiffnessKey> {
        let mut k: Vec<_> = self.matrices.keys().copied().collect();
        k.sort();
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_tp_coefficient, ProblemId};
    use crate::fem::{make_space, Domain};

    #[test]
    fn jacobi_detail_solve_matches_direct_and_stays_bounded() {
        let coefficient = Arc::new(make_tp_coefficient(ProblemId::Tp2, 2).unwrap());
        let mut cache = StiffnessCache::new(coefficient, AssemblyOptions::default());
        let mut iterations = Vec::new();
        for level in 3..=7 {
            let space = make_space(level, SpaceKind::BrokenQ2, Domain::unit_square(), 10).unwrap();
            let k = cache.block(0, &space, &space).unwrap().matrix;
            let b: Vec<f64> = (0..space.dof_count()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let direct = MeanSolver::Direct(cache.mean_factor(&space).unwrap()).solve(&b).unwrap();
            let inv_diag: Vec<f64> = k.diagonal().iter().map(|d| 1.0 / d).collect();
            let jacobi = MeanSolver::Jacobi { matrix: k.clone(), inv_diag: inv_diag.clone() }.solve(&b).unwrap();
            let num: f64 = direct.iter().zip(&jacobi).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = direct.iter().map(|a| a * a).sum();
            assert!((num / den).sqrt() < 1e-10, "level {level}");
            let apply = |x: &[f64], y: &mut [f64]| {
                y.iter_mut().for_each(|v| *v = 0.0);
                k.mul_vec_add(1.0, x, y);
            };
            let scale = |r: &[f64], z: &mut [f64]| z.iter_mut().zip(r).zip(&inv_diag).for_each(|((z, r), d)| *z = r * d);
            iterations.push(pcg(&apply, &scale, &b, None, 1e-12, 2000, None).unwrap().iterations);
        }
        let (lo, hi) = (*iterations.iter().min().unwrap(), *iterations.iter().max().unwrap());
        assert!(hi <= lo + 15, "{iterations:?}");
    }

    #[test]
    fn large_detail_blocks_respect_the_budget() {
        let coefficient = Arc::new(make_tp_coefficient(ProblemId::Tp3, 4).unwrap());
        let mut cache = StiffnessCache::new(coefficient, AssemblyOptions::default());
        let d = Domain::unit_square();
        let big = make_space(9, SpaceKind::BrokenQ2, d, 10).unwrap();
        assert!(big.dof_count() > DIRECT_DETAIL_LIMIT);
        let fine = make_space(9, SpaceKind::Q1, d, 10).unwrap();
        let one = cache.block(1, &big, &fine).unwrap().matrix.memory_bytes();
        let fits = LARGE_BLOCK_BUDGET / one;
        for m in 1..=(fits as u32 + 1) {
            cache.block(m, &big, &fine).unwrap();
        }
        assert_eq!(cache.len(), fits);
        assert!(cache.large_bytes() <= LARGE_BLOCK_BUDGET);
        let before = cache.assembled_count();
        cache.block(1, &big, &fine).unwrap();
        assert_eq!(cache.assembled_count(), before);
    }
}
