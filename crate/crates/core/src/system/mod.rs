//! The block Galerkin system on a multilevel space and its solver.
//!
//! Block `(nu, mu)` of the operator is `sum_m [G_m]_{nu mu} K^m_{nu mu}`,
//! where `K^m_{nu mu}` is the `a_m`-weighted stiffness matrix between the Q1
//! spaces on levels `l^nu` and `l^mu`.

pub mod cache;
pub mod pcg;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chaos::{active_dimension, build_coupling, IndexSet, MultiIndex};
use crate::fem::{assemble_load, make_space, prolongation, AssemblyOptions, Domain, FeSpace, ScalarField, SpaceKind, SparseCholesky};
use crate::{Error, Result};

pub use cache::{BlockRef, MeanSolver, StiffnessCache, StiffnessKey, DIRECT_DETAIL_LIMIT, LARGE_BLOCK_BUDGET};
pub use pcg::{pcg, PcgOutcome};

/// `X = sum_mu H_1^mu (x) span(psi_mu)`, one Q1 level per index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilevelSpace {
    jp: IndexSet,
    levels: Vec<u32>,
    domain: Domain,
    max_level: u32,
}

impl MultilevelSpace {
    pub fn new(jp: IndexSet, levels: Vec<u32>, domain: Domain, max_level: u32) -> Result<Self> {
        if jp.len() != levels.len() {
            return Err(Error::ShapeMismatch { expected: jp.len(), got: levels.len() });
        }
        if !jp.contains(&MultiIndex::zero()) {
            return Err(Error::Config("the index set must contain the zero index".into()));
        }
        for &l in &levels {
            make_space(l, SpaceKind::Q1, domain, max_level)?;
        }
        Ok(Self { jp, levels, domain, max_level })
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.jp
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn level_of(&self, mu: &MultiIndex) -> Option<u32> {
        self.jp.position(mu).map(|i| self.levels[i])
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn len(&self) -> usize {
        self.jp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jp.is_empty()
    }

    /// Q1 space of block `i`.
    pub fn space(&self, i: usize) -> FeSpace {
        self.space_on(self.levels[i], SpaceKind::Q1)
    }

    pub fn space_on(&self, level: u32, kind: SpaceKind) -> FeSpace {
        make_space(level, kind, self.domain, u32::MAX).expect("level validated at construction")
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.space(i).dof_count()).collect()
    }

    pub fn n_dof(&self) -> usize {
        self.block_sizes().iter().sum()
    }

    pub fn active_dimension(&self) -> u32 {
        active_dimension(&self.jp)
    }

    pub fn zero_position(&self) -> usize {
        self.jp.position(&MultiIndex::zero()).expect("zero index present")
    }
}

/// Block-structured vector stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let n = *offsets.last().unwrap();
        Self { offsets, data: vec![0.0; n] }
    }

    pub fn for_space(space: &MultilevelSpace) -> Self {
        Self::zeros(&space.block_sizes())
    }

    pub fn from_blocks(blocks: &[Vec<f64>]) -> Self {
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let mut v = Self::zeros(&sizes);
        for (i, b) in blocks.iter().enumerate() {
            v.block_mut(i).copy_from_slice(b);
        }
        v
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn conforms_to(&self, space: &MultilevelSpace) -> bool {
        let sizes = space.block_sizes();
        sizes.len() == self.num_blocks() && sizes.iter().enumerate().all(|(i, &s)| self.block(i).len() == s)
    }
}

/// One nonzero `[G_m]_{nu mu} K^m_{nu mu}` term.
#[derive(Clone, Debug)]
pub struct BlockTerm {
    pub row: usize,
    pub col: usize,
    pub m: u32,
    pub weight: f64,
    pub block: BlockRef,
}

/// The assembled block operator of one multilevel space.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    offsets: Vec<usize>,
    terms: Vec<BlockTerm>,
    active_terms: u32,
    card: usize,
}

/// Collects every nonzero block of `A` from the cache; `M` is the active
/// dimension of the index set.
pub fn build_operator(space: &MultilevelSpace, cache: &mut StiffnessCache) -> Result<BlockOperator> {
    let jp = space.index_set();
    let big_m = space.active_dimension();
    let mut terms = Vec::new();
    let couplings: Vec<_> = (0..=big_m).map(|m| build_coupling(m, jp, jp)).collect();
    // row-major over blocks, then by m, for a fixed summation order
    let mut entries: Vec<(usize, u32, usize, f64)> = couplings
        .iter()
        .flat_map(|g| g.entries.iter().map(move |&(r, c, v)| (r, g.m, c, v)))
        .collect();
    entries.sort_by_key(|&(r, m, c, _)| (r, m, c));
    for (row, m, col, weight) in entries {
        let block = cache.block(m, &space.space(row), &space.space(col))?;
        terms.push(BlockTerm { row, col, m, weight, block });
    }
    let offsets = BlockVector::for_space(space).offsets().to_vec();
    Ok(BlockOperator { offsets, terms, active_terms: big_m, card: jp.len() })
}

impl BlockOperator {
    /// `y = A x` on flat storage.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let (xs, xe) = (self.offsets[t.col], self.offsets[t.col + 1]);
            let (ys, ye) = (self.offsets[t.row], self.offsets[t.row + 1]);
            t.block.apply_add(t.weight, &x[xs..xe], &mut y[ys..ye]);
        }
    }

    pub fn matvec(&self, x: &BlockVector) -> Result<BlockVector> {
        if x.offsets() != self.offsets.as_slice() {
            return Err(Error::ShapeMismatch { expected: *self.offsets.last().unwrap(), got: x.len() });
        }
        let mut y = x.clone();
        self.apply(x.as_slice(), y.as_mut_slice());
        Ok(y)
    }

    pub fn terms(&self) -> &[BlockTerm] {
        &self.terms
    }

    pub fn active_terms(&self) -> u32 {
        self.active_terms
    }

    /// Distinct `(m, level pair)` stiffness matrices behind the operator.
    pub fn distinct_matrices(&self) -> usize {
        let set: BTreeSet<(u32, usize)> =
            self.terms.iter().map(|t| (t.m, Arc::as_ptr(&t.block.matrix) as usize)).collect();
        set.len()
    }

    /// `(1 + 2M) card(J_P)`.
    pub fn naive_matrix_bound(&self) -> usize {
        (1 + 2 * self.active_terms as usize) * self.card
    }
}

/// Block-diagonal preconditioner built from exact `a0` solves on each level.
pub struct MeanPreconditioner {
    offsets: Vec<usize>,
    factors: Vec<Arc<SparseCholesky>>,
}

pub fn mean_preconditioner(space: &MultilevelSpace, cache: &mut StiffnessCache) -> Result<MeanPreconditioner> {
    let factors = (0..space.len()).map(|i| cache.mean_factor(&space.space(i))).collect::<Result<Vec<_>>>()?;
    Ok(MeanPreconditioner { offsets: BlockVector::for_space(space).offsets().to_vec(), factors })
}

impl MeanPreconditioner {
    /// `z = M^-1 r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        for (i, f) in self.factors.iter().enumerate() {
            f.solve_in_place(&mut z[self.offsets[i]..self.offsets[i + 1]]);
        }
    }
}

/// PCG on the block system.
pub fn pcg_solve(
    op: &BlockOperator,
    rhs: &BlockVector,
    precond: &MeanPreconditioner,
    rel_tol: f64,
    max_iter: usize,
    start: Option<&BlockVector>,
) -> Result<(BlockVector, usize)> {
    let out = pcg(
        &|x, y| op.apply(x, y),
        &|r, z| precond.apply(r, z),
        rhs.as_slice(),
        start.map(|s| s.as_slice().to_vec()),
        rel_tol,
        max_iter,
        None,
    )?;
    let mut u = rhs.clone();
    u.as_mut_slice().copy_from_slice(&out.solution);
    Ok((u, out.iterations))
}

/// Only the zero-mode block is nonzero: `F(psi_nu phi) = 0` for `nu != 0`.
pub fn assemble_rhs(space: &MultilevelSpace, f: &dyn ScalarField, opts: &AssemblyOptions) -> BlockVector {
    let mut b = BlockVector::for_space(space);
    let z = space.zero_position();
    let load = assemble_load(&space.space(z), f, opts);
    b.block_mut(z).copy_from_slice(&load);
    b
}

/// `||u_X||_B^2 = u . b` for the Galerkin solution.
pub fn energy_norm_sq(u: &BlockVector, rhs: &BlockVector) -> f64 {
    u.dot(rhs)
}

/// Carries a solution onto a richer space: blocks of retained indices are
/// prolonged to their new level, new indices start at zero.
pub fn transfer(old: &MultilevelSpace, u: &BlockVector, new: &MultilevelSpace) -> Result<BlockVector> {
    let mut out = BlockVector::for_space(new);
    for (i, mu) in new.index_set().iter().enumerate() {
        let Some(j) = old.index_set().position(mu) else { continue };
        let (from, to) = (old.space(j), new.space(i));
        if from.level() == to.level() {
            out.block_mut(i).copy_from_slice(u.block(j));
        } else {
            let p = prolongation(&from, &to)?;
            p.mul_vec_add(1.0, u.block(j), out.block_mut(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{make_tp_coefficient, ProblemId};
    use crate::fem::assemble_stiffness;

    fn mi(d: &[u32]) -> MultiIndex {
        MultiIndex::from_dense(d)
    }

    fn space(items: &[&[u32]], levels: &[u32]) -> MultilevelSpace {
        let jp = IndexSet::new(items.iter().map(|d| mi(d)).collect()).unwrap();
        MultilevelSpace::new(jp, levels.to_vec(), Domain::unit_square(), 10).unwrap()
    }

    fn cache(p: ProblemId) -> StiffnessCache {
        StiffnessCache::new(Arc::new(make_tp_coefficient(p, 4).unwrap()), AssemblyOptions::default())
    }

    #[test]
    fn validation() {
        let jp = IndexSet::new(vec![mi(&[0]), mi(&[1])]).unwrap();
        assert!(MultilevelSpace::new(jp.clone(), vec![4], Domain::unit_square(), 10).is_err());
        assert!(MultilevelSpace::new(jp.clone(), vec![4, 11], Domain::unit_square(), 10).is_err());
        let no_zero = IndexSet::new(vec![mi(&[1])]).unwrap();
        assert!(MultilevelSpace::new(no_zero, vec![4], Domain::unit_square(), 10).is_err());
        let s = MultilevelSpace::new(jp, vec![4, 3], Domain::unit_square(), 10).unwrap();
        assert_eq!(s.n_dof(), 225 + 49);
    }

    #[test]
    fn single_mode_is_the_mean_stiffness() {
        let s = space(&[&[0]], &[3]);
        let mut c = cache(ProblemId::Tp3);
        let op = build_operator(&s, &mut c).unwrap();
        let k = assemble_stiffness(&s.space(0), &s.space(0), &|_: f64, _: f64| 1.0, &AssemblyOptions::default()).unwrap();
        let x = BlockVector::from_blocks(&[(0..49).map(|i| (i as f64).sin()).collect()]);
        let y = op.matvec(&x).unwrap();
        assert_eq!(y.as_slice(), k.mul_vec(x.as_slice()).as_slice());
        let zero = BlockVector::for_space(&s);
        assert!(op.matvec(&zero).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_is_symmetric() {
        let s = space(&[&[0], &[1], &[0, 1], &[2]], &[4, 3, 2, 3]);
        let mut c = cache(ProblemId::Tp2);
        let op = build_operator(&s, &mut c).unwrap();
        let sizes = s.block_sizes();
        let v = BlockVector::from_blocks(&sizes.iter().map(|&n| (0..n).map(|i| ((i * 31 % 17) as f64) - 8.0).collect()).collect::<Vec<_>>());
        let w = BlockVector::from_blocks(&sizes.iter().map(|&n| (0..n).map(|i| ((i * 7 % 13) as f64).cos()).collect()).collect::<Vec<_>>());
        let (av, aw) = (op.matvec(&v).unwrap(), op.matvec(&w).unwrap());
        let (a, b) = (av.dot(&w), aw.dot(&v));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        assert!(av.dot(&v) > 0.0);
        assert!(op.distinct_matrices() <= op.naive_matrix_bound());
    }

    #[test]
    fn mean_coefficient_solves_in_one_iteration() {
        // with a_m = 0 for every m the preconditioner is exact
        let s = space(&[&[0], &[1]], &[3, 3]);
        let coeff = crate::coeffs::CustomProblem { a0: 1.5, load: 1.0, centered_domain: false, terms: vec![] }
            .build()
            .unwrap()
            .coefficient;
        let mut c = StiffnessCache::new(coeff, AssemblyOptions::default());
        let op = build_operator(&s, &mut c).unwrap();
        let pre = mean_preconditioner(&s, &mut c).unwrap();
        let b = assemble_rhs(&s, &|_: f64, _: f64| 1.0, &AssemblyOptions::default());
        let (_, it) = pcg_solve(&op, &b, &pre, 1e-10, 50, None).unwrap();
        assert_eq!(it, 1);
    }

    #[test]
    fn rhs_lives_on_the_zero_mode() {
        let s = space(&[&[0], &[1]], &[3, 2]);
        let b = assemble_rhs(&s, &|_: f64, _: f64| 1.0, &AssemblyOptions::default());
        assert!(b.block(1).iter().all(|&v| v == 0.0));
        assert!(b.block(0).iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
    }

    #[test]
    fn transfer_prolongs_and_pads() {
        let old = space(&[&[0], &[1]], &[2, 2]);
        let new = space(&[&[0], &[1], &[0, 1]], &[3, 2, 2]);
        let u = BlockVector::from_blocks(&[vec![1.0; 9], vec![2.0; 9]]);
        let v = transfer(&old, &u, &new).unwrap();
        assert_eq!(v.block(1), u.block(1));
        assert!(v.block(2).iter().all(|&x| x == 0.0));
        let centre = new.space(0).node_dof(4, 4);
        assert_eq!(v.block(0)[centre], 1.0);
    }
}
