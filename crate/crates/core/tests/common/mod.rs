//! Independent oracles shared by the integration tests and the acceptance suite.
//!
//! Nothing here calls the library's assembly, quadrature or chaos code. Basis
//! functions are evaluated pointwise from their nodal definitions and integrated
//! by brute force on the finer of the two meshes. `checks` holds the comparisons
//! against the library.
#![allow(dead_code)]

pub mod checks;

use mlsgfem::chaos::MultiIndex;
use mlsgfem::coeffs::AffineCoefficient;
use mlsgfem::fem::{FeSpace, SpaceKind};
use mlsgfem::system::MultilevelSpace;
use nalgebra::DMatrix;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Legendre polynomial orthonormal for the density 1/2 on [-1, 1].
pub fn legendre(n: u32, y: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, y);
    if n == 0 {
        return 1.0;
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * y * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (2.0 * n as f64 + 1.0).sqrt() * p1
}

/// `int y^power psi_a psi_b dy/2` by 64-point quadrature.
pub fn legendre_moment(power: u32, a: u32, b: u32) -> f64 {
    let (xs, ws) = gauss_legendre(64);
    xs.iter()
        .zip(&ws)
        .map(|(&y, &w)| 0.5 * w * y.powi(power as i32) * legendre(a, y) * legendre(b, y))
        .sum()
}

/// `[G_m]_{nu mu}` as a product of one-dimensional quadratures.
pub fn coupling_oracle(m: u32, nu: &MultiIndex, mu: &MultiIndex) -> f64 {
    let dims = nu.max_position().max(mu.max_position()).max(m);
    (1..=dims).map(|k| legendre_moment(u32::from(k == m), nu.degree(k), mu.degree(k))).product()
}

#[derive(Clone, Copy)]
enum Shape1d {
    Hat,
    QuadVertex,
    Bubble,
}

/// Value and derivative of a one-dimensional nodal function centred at `c` with mesh width `h`.
fn shape_1d(shape: Shape1d, c: f64, h: f64, x: f64) -> (f64, f64) {
    match shape {
        Shape1d::Hat => {
            let t = (x - c) / h;
            if t.abs() >= 1.0 {
                (0.0, 0.0)
            } else {
                (1.0 - t.abs(), -t.signum() / h)
            }
        }
        Shape1d::QuadVertex => {
            let d = x - c;
            if d.abs() >= h {
                return (0.0, 0.0);
            }
            let t = d.abs() / h;
            ((1.0 - t) * (1.0 - 2.0 * t), d.signum() * (4.0 * t - 3.0) / h)
        }
        Shape1d::Bubble => {
            let s = (x - (c - 0.5 * h)) / h;
            if !(0.0..=1.0).contains(&s) {
                (0.0, 0.0)
            } else {
                (4.0 * s * (1.0 - s), (4.0 - 8.0 * s) / h)
            }
        }
    }
}

/// Nodal basis of an interior-dof space, located by coordinates.
pub struct OracleBasis {
    nodes: Vec<(f64, f64, Shape1d, Shape1d)>,
    h: f64,
}

impl OracleBasis {
    pub fn new(space: &FeSpace) -> Self {
        let d = space.domain();
        let h = d.side / f64::from(1u32 << space.level());
        let classify = |v: f64, origin: f64| -> Shape1d {
            let r = (v - origin) / h;
            let on_vertex = (r - r.round()).abs() < 1e-9;
            match (space.kind, on_vertex) {
                (SpaceKind::Q1, _) => Shape1d::Hat,
                (SpaceKind::BrokenQ2, true) => Shape1d::QuadVertex,
                (SpaceKind::BrokenQ2, false) => Shape1d::Bubble,
            }
        };
        let nodes = space
            .dof_coordinates()
            .into_iter()
            .map(|(x, y)| (x, y, classify(x, d.x0), classify(y, d.y0)))
            .collect();
        Self { nodes, h }
    }

    /// Every Q1 vertex of the level-`level` mesh, boundary included, row by row.
    pub fn q1_with_boundary(space: &FeSpace) -> Self {
        let d = space.domain();
        let n = 1usize << space.level();
        let h = d.side / n as f64;
        let mut nodes = Vec::new();
        for q in 0..=n {
            for p in 0..=n {
                nodes.push((d.x0 + p as f64 * h, d.y0 + q as f64 * h, Shape1d::Hat, Shape1d::Hat));
            }
        }
        Self { nodes, h }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// `(value, d/dx, d/dy)` of basis function `i` at `(x, y)`.
    pub fn eval(&self, i: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let (cx, cy, sx, sy) = self.nodes[i];
        let (fx, dfx) = shape_1d(sx, cx, self.h, x);
        if fx == 0.0 && dfx == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (fy, dfy) = shape_1d(sy, cy, self.h, y);
        (fx * fy, dfx * fy, fx * dfy)
    }
}

/// Quadrature points and weights of `q` points per direction on every cell of the level-`level` mesh.
fn cell_points(space: &FeSpace, level: u32, q: usize) -> Vec<(f64, f64, f64)> {
    let d = space.domain();
    let n = 1usize << level;
    let h = d.side / n as f64;
    let (gx, gw) = gauss_legendre(q);
    let mut pts = Vec::with_capacity(n * n * q * q);
    for cy in 0..n {
        for cx in 0..n {
            for (a, wa) in gx.iter().zip(&gw) {
                for (b, wb) in gx.iter().zip(&gw) {
                    let x = d.x0 + h * (cx as f64 + 0.5 * (a + 1.0));
                    let y = d.y0 + h * (cy as f64 + 0.5 * (b + 1.0));
                    pts.push((x, y, 0.25 * h * h * wa * wb));
                }
            }
        }
    }
    pts
}

/// `int a grad phi_j^test . grad phi_i^trial` by brute force on the finer mesh.
pub fn dense_stiffness(test: &FeSpace, trial: &FeSpace, a: &dyn Fn(f64, f64) -> f64, q: usize) -> DMatrix<f64> {
    let (bt, bs) = (OracleBasis::new(test), OracleBasis::new(trial));
    dense_stiffness_with(test, &bt, trial, &bs, a, q)
}

pub fn dense_stiffness_with(
    test: &FeSpace,
    bt: &OracleBasis,
    trial: &FeSpace,
    bs: &OracleBasis,
    a: &dyn Fn(f64, f64) -> f64,
    q: usize,
) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(bt.len(), bs.len());
    let level = test.level().max(trial.level());
    let mut gt: Vec<(usize, f64, f64)> = Vec::new();
    let mut gs: Vec<(usize, f64, f64)> = Vec::new();
    for (x, y, w) in cell_points(test, level, q) {
        let aw = a(x, y) * w;
        gt.clear();
        gs.clear();
        gt.extend((0..bt.len()).filter_map(|j| {
            let (_, dx, dy) = bt.eval(j, x, y);
            (dx != 0.0 || dy != 0.0).then_some((j, dx, dy))
        }));
        gs.extend((0..bs.len()).filter_map(|i| {
            let (_, dx, dy) = bs.eval(i, x, y);
            (dx != 0.0 || dy != 0.0).then_some((i, dx, dy))
        }));
        for &(j, tx, ty) in &gt {
            for &(i, sx, sy) in &gs {
                k[(j, i)] += aw * (tx * sx + ty * sy);
            }
        }
    }
    k
}

/// `int f phi_j` on the space's own mesh.
pub fn dense_load(space: &FeSpace, f: &dyn Fn(f64, f64) -> f64, q: usize) -> Vec<f64> {
    let b = OracleBasis::new(space);
    let mut out = vec![0.0; b.len()];
    for (x, y, w) in cell_points(space, space.level(), q) {
        let fw = f(x, y) * w;
        for (j, o) in out.iter_mut().enumerate() {
            let (v, _, _) = b.eval(j, x, y);
            *o += fw * v;
        }
    }
    out
}

pub fn field(c: &AffineCoefficient, m: u32) -> impl Fn(f64, f64) -> f64 {
    let f = c.field(m).unwrap();
    move |x, y| f.eval(x, y)
}

/// Block offsets of a list of spaces.
pub fn offsets(spaces: &[FeSpace]) -> Vec<usize> {
    let mut o = vec![0];
    for s in spaces {
        o.push(o.last().unwrap() + s.dof_count());
    }
    o
}

/// `sum_m G_m[rows, cols] (x) K^m` assembled entry by entry, for `m = 0..=max_m`.
pub fn dense_galerkin(
    rows: (&[MultiIndex], &[FeSpace]),
    cols: (&[MultiIndex], &[FeSpace]),
    coeff: &AffineCoefficient,
    max_m: u32,
    q: usize,
) -> DMatrix<f64> {
    let (ro, co) = (offsets(rows.1), offsets(cols.1));
    let mut a = DMatrix::zeros(*ro.last().unwrap(), *co.last().unwrap());
    for m in 0..=max_m {
        let am = field(coeff, m);
        for (i, nu) in rows.0.iter().enumerate() {
            for (j, mu) in cols.0.iter().enumerate() {
                let g = coupling_oracle(m, nu, mu);
                if g.abs() < 1e-14 {
                    continue;
                }
                let k = dense_stiffness(&rows.1[i], &cols.1[j], &am, q);
                let mut view = a.view_mut((ro[i], co[j]), (k.nrows(), k.ncols()));
                view += k * g;
            }
        }
    }
    a
}

/// The full SGFEM matrix of a multilevel space.
pub fn dense_operator(space: &MultilevelSpace, coeff: &AffineCoefficient, q: usize) -> DMatrix<f64> {
    let spaces: Vec<FeSpace> = (0..space.len()).map(|i| space.space(i)).collect();
    let jp = space.index_set();
    dense_galerkin((jp.as_slice(), &spaces), (jp.as_slice(), &spaces), coeff, space.active_dimension(), q)
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Small deterministic generator for test vectors.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_f64()).collect()
    }
}

/// Largest principal cosine between the Q1 and broken-Q2 spaces on one mesh, in the `a0` energy.
pub fn cbs_constant(k11: &DMatrix<f64>, k12: &DMatrix<f64>, k22: &DMatrix<f64>) -> f64 {
    let l1 = k11.clone().cholesky().expect("spd").l();
    let l2 = k22.clone().cholesky().expect("spd").l();
    let l1i = l1.try_inverse().unwrap();
    let l2i = l2.try_inverse().unwrap();
    let c = &l1i * k12 * l2i.transpose();
    c.singular_values().max()
}
