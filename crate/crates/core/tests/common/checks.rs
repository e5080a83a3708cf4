//! Library-versus-oracle comparisons, each reduced to a worst-case error.

use mlsgfem::chaos::{build_coupling, neighbor_set, IndexSet, MultiIndex};
use mlsgfem::coeffs::{kl_eigenpairs_1d, kl_eigenpairs_2d, make_problem, Problem, ProblemId};
use mlsgfem::estimator::{argavg_level, estimate};
use mlsgfem::fem::{assemble_stiffness, make_space, prolongation, AssemblyOptions, Domain, FeSpace, SpaceKind};
use mlsgfem::system::{
    assemble_rhs, build_operator, mean_preconditioner, pcg_solve, BlockOperator, MultilevelSpace, StiffnessCache,
};
use nalgebra::{DMatrix, DVector};

use super::*;

pub fn set(v: &[&[u32]]) -> IndexSet {
    IndexSet::new(v.iter().map(|d| MultiIndex::from_dense(d)).collect()).unwrap()
}

/// Columns `A e_j` of the block operator.
pub fn operator_matrix(op: &BlockOperator, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        a.column_mut(j).copy_from_slice(&col);
    }
    a
}

/// Spaces with `M <= 2`, levels `<= 3` and at most six modes.
pub fn tiny_spaces(problem: &Problem) -> Vec<MultilevelSpace> {
    let d = problem.domain;
    vec![
        MultilevelSpace::new(set(&[&[0]]), vec![2], d, 10).unwrap(),
        MultilevelSpace::new(set(&[&[0], &[1]]), vec![2, 2], d, 10).unwrap(),
        MultilevelSpace::new(set(&[&[0], &[1], &[0, 1]]), vec![3, 2, 1], d, 10).unwrap(),
        MultilevelSpace::new(set(&[&[0], &[1], &[2], &[1, 1], &[0, 1]]), vec![3, 3, 2, 1, 2], d, 10).unwrap(),
    ]
}

/// Largest relative Frobenius gap between the block operator and dense assembly.
pub fn block_operator_error() -> f64 {
    let mut worst: f64 = 0.0;
    for id in ProblemId::ALL {
        let problem = make_problem(id).unwrap();
        let mut cache = StiffnessCache::new(problem.coefficient.clone(), AssemblyOptions::default());
        for space in tiny_spaces(&problem) {
            let op = build_operator(&space, &mut cache).unwrap();
            let got = operator_matrix(&op, space.n_dof());
            let want = dense_operator(&space, &problem.coefficient, 4);
            worst = worst.max(relative_frobenius(&got, &want));
        }
    }
    worst
}

/// Largest gap between `K(fine <- coarse)` and `K(fine <- fine) P`, over
/// `m <= 3`, coarse levels 1 to 3 and level jumps of one and two.
pub fn prolongation_identity_error() -> f64 {
    let opts = AssemblyOptions::default();
    let mut worst: f64 = 0.0;
    for id in ProblemId::ALL {
        let problem = make_problem(id).unwrap();
        for m in 0..=3 {
            let a = problem.coefficient.field(m).unwrap();
            for coarse_level in 1..=3 {
                for delta in 1..=2 {
                    let coarse = make_space(coarse_level, SpaceKind::Q1, problem.domain, 10).unwrap();
                    let fine = make_space(coarse_level + delta, SpaceKind::Q1, problem.domain, 10).unwrap();
                    let mixed = assemble_stiffness(&fine, &coarse, a.as_ref(), &opts).unwrap();
                    let same = assemble_stiffness(&fine, &fine, a.as_ref(), &opts).unwrap();
                    let composed = same.matmul(&prolongation(&coarse, &fine).unwrap());
                    worst = worst.max(mixed.frobenius_distance(&composed).unwrap() / composed.frobenius_norm());
                }
            }
        }
    }
    worst
}

/// Estimates from one dense solve of the whole detail system.
pub fn monolithic_estimates(problem: &Problem, space: &MultilevelSpace, u: &[f64], delta_m: u32) -> Vec<f64> {
    let jp = space.index_set();
    let jq = neighbor_set(jp, delta_m);
    let h_level = argavg_level(space.levels());
    let mut modes: Vec<MultiIndex> = jp.iter().cloned().collect();
    let mut spaces: Vec<FeSpace> = space.levels().iter().map(|&l| space.space_on(l, SpaceKind::BrokenQ2)).collect();
    for nu in jq.iter() {
        modes.push(nu.clone());
        spaces.push(space.space_on(h_level, SpaceKind::Q1));
    }
    let x_spaces: Vec<FeSpace> = (0..space.len()).map(|i| space.space(i)).collect();
    let top = jq.iter().chain(jp.iter()).map(MultiIndex::max_position).max().unwrap();
    let b0 = dense_galerkin((&modes, &spaces), (&modes, &spaces), &problem.coefficient, 0, 4);
    let b = dense_galerkin((&modes, &spaces), (jp.as_slice(), &x_spaces), &problem.coefficient, top, 4);
    let offs = offsets(&spaces);
    let mut r = -(&b * DVector::from_column_slice(u));
    let load = problem.load.clone();
    for (i, mu) in modes.iter().enumerate() {
        let g = coupling_oracle(0, mu, &MultiIndex::zero());
        if g.abs() > 1e-14 {
            let f = dense_load(&spaces[i], &|x, y| load.eval(x, y), 4);
            for (k, v) in f.iter().enumerate() {
                r[offs[i] + k] += g * v;
            }
        }
    }
    let e = b0.clone().lu().solve(&r).unwrap();
    (0..modes.len())
        .map(|i| {
            let n = offs[i + 1] - offs[i];
            let ei = e.rows(offs[i], n);
            let bi = b0.view((offs[i], offs[i]), (n, n));
            (ei.transpose() * bi * ei)[(0, 0)].max(0.0).sqrt()
        })
        .collect()
}

/// Largest deviation of the component estimates from the monolithic solve,
/// relative to each component (floored at `1e-3` of the largest).
pub fn estimator_error() -> f64 {
    let mut worst: f64 = 0.0;
    for id in ProblemId::ALL {
        let problem = make_problem(id).unwrap();
        let space = MultilevelSpace::new(set(&[&[0], &[1], &[2]]), vec![3, 2, 2], problem.domain, 10).unwrap();
        let mut cache = StiffnessCache::new(problem.coefficient.clone(), AssemblyOptions::default());
        let op = build_operator(&space, &mut cache).unwrap();
        let pre = mean_preconditioner(&space, &mut cache).unwrap();
        let b = assemble_rhs(&space, problem.load.as_ref(), cache.options());
        let (u, _) = pcg_solve(&op, &b, &pre, 1e-12, 200, None).unwrap();
        let got = estimate(&u, &space, &mut cache, problem.load.as_ref(), 5).unwrap();
        let want = monolithic_estimates(&problem, &space, u.as_slice(), 5);
        let all: Vec<f64> = got.spatial.iter().chain(&got.parametric).map(|c| c.estimate).collect();
        assert_eq!(all.len(), want.len());
        let scale = want.iter().cloned().fold(0.0, f64::max);
        for (g, w) in all.iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.max(1e-3 * scale));
        }
    }
    worst
}

/// All multi-indices in `dims` parameters with total degree at most `degree`.
pub fn total_degree_set(dims: usize, degree: u32) -> IndexSet {
    let mut items = vec![Vec::new()];
    for _ in 0..dims {
        items = items
            .into_iter()
            .flat_map(|prefix: Vec<u32>| {
                let used: u32 = prefix.iter().sum();
                (0..=degree - used).map(move |d| {
                    let mut p = prefix.clone();
                    p.push(d);
                    p
                })
            })
            .collect();
    }
    IndexSet::sorted(items.iter().map(|d| MultiIndex::from_dense(d)).collect())
}

/// Worst entry error of `G_m` against quadrature and the most nonzeros in a row of `G_m`, `m >= 1`.
pub fn coupling_error() -> (f64, usize) {
    let rows = total_degree_set(3, 4);
    let cols = total_degree_set(4, 3);
    let (mut worst, mut nnz): (f64, usize) = (0.0, 0);
    for m in 0..=4 {
        let g = build_coupling(m, &rows, &cols);
        for (i, nu) in rows.iter().enumerate() {
            if m >= 1 {
                nnz = nnz.max(g.row_nnz(i));
            }
            for (j, mu) in cols.iter().enumerate() {
                let want = coupling_oracle(m, nu, mu);
                worst = worst.max((g.get(i, j) - want).abs() / want.abs().max(1.0));
            }
        }
    }
    (worst, nnz)
}

/// Largest strengthened Cauchy-Schwarz constant between Q1 and broken Q2 for `a = 1`.
pub fn cbs_max() -> f64 {
    let one = |_: f64, _: f64| 1.0;
    let mut worst: f64 = 0.0;
    for domain in [Domain::unit_square(), Domain::centered()] {
        for level in 1..=3 {
            let q1 = make_space(level, SpaceKind::Q1, domain, 10).unwrap();
            let q2 = make_space(level, SpaceKind::BrokenQ2, domain, 10).unwrap();
            let k11 = dense_stiffness(&q1, &q1, &one, 4);
            let k12 = dense_stiffness(&q1, &q2, &one, 4);
            let k22 = dense_stiffness(&q2, &q2, &one, 4);
            worst = worst.max(cbs_constant(&k11, &k12, &k22));
        }
    }
    worst
}

/// `int_{-a}^{a} exp(-|x - s| / l) phi(s) ds` with 256 Gauss points on each side of the kink.
pub fn nystrom_apply(phi: &dyn Fn(f64) -> f64, x: f64, l: f64, a: f64) -> f64 {
    let (gx, gw) = gauss_legendre(256);
    let mut total = 0.0;
    for (lo, hi) in [(-a, x), (x, a)] {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (t, w) in gx.iter().zip(&gw) {
            let s = mid + half * t;
            total += half * w * (-(x - s).abs() / l).exp() * phi(s);
        }
    }
    total
}

fn samples(a: f64) -> Vec<f64> {
    (0..21).map(|k| -a + 2.0 * a * k as f64 / 20.0).collect()
}

/// Worst relative residual of the first `count` 1-D eigenpairs in the integral equation.
pub fn kl_error_1d(l: f64, a: f64, count: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for p in kl_eigenpairs_1d(l, a, count).unwrap() {
        let phi = |s: f64| p.eval(s);
        let scale = samples(a).iter().map(|&x| phi(x).abs()).fold(0.0, f64::max);
        for x in samples(a) {
            worst = worst.max((nystrom_apply(&phi, x, l, a) - p.eigenvalue * phi(x)).abs() / (p.eigenvalue * scale));
        }
    }
    worst
}

/// As `kl_error_1d` for the tensorised 2-D pairs.
pub fn kl_error_2d(l: f64, a: f64, count: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for p in kl_eigenpairs_2d(l, a, count).unwrap() {
        let grid = samples(a);
        let scale = grid.iter().flat_map(|&x| grid.iter().map(move |&y| (x, y))).map(|(x, y)| p.eval(x, y).abs()).fold(0.0, f64::max);
        for &x in &grid {
            // the separable kernel makes the tensor quadrature a product of line sums
            let kx = nystrom_apply(&|s| p.first.eval(s), x, l, a);
            for &y in &grid {
                let ky = nystrom_apply(&|s| p.second.eval(s), y, l, a);
                worst = worst.max((kx * ky - p.eigenvalue * p.eval(x, y)).abs() / (p.eigenvalue * scale));
            }
        }
    }
    worst
}
