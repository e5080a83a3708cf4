//! Load vectors, weighted stiffness matrices and Q1 prolongation.
//!
//! Mixed-level blocks are assembled coarse element by coarse element: the
//! trial basis lives on the coarse cell, and each of the `4^d` fine cells
//! inside it contributes the products of coarse trial gradients against
//! fine test gradients. Rows are numbered by node row, so once a coarse row
//! of cells is finished every test row strictly below its upper edge is
//! final and is moved into the CSR arrays.

use super::quadrature::GaussRule;
use super::sparse::{CsrBuilder, CsrMatrix};
use super::{FeSpace, ScalarField, SpaceKind, NO_DOF};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssemblyOptions {
    /// Gauss points per direction on each fine cell.
    pub quad_points: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { quad_points: 4 }
    }
}

/// Value and derivative of the `a`-th 1-D Lagrange function at `t` in [0, 1].
#[inline]
fn basis_1d(kind: SpaceKind, a: usize, t: f64) -> (f64, f64) {
    match (kind, a) {
        (SpaceKind::Q1, 0) => (1.0 - t, -1.0),
        (SpaceKind::Q1, _) => (t, 1.0),
        (SpaceKind::BrokenQ2, 0) => (2.0 * (t - 0.5) * (t - 1.0), 4.0 * t - 3.0),
        (SpaceKind::BrokenQ2, 1) => (4.0 * t * (1.0 - t), 4.0 - 8.0 * t),
        (SpaceKind::BrokenQ2, _) => (2.0 * t * (t - 0.5), 4.0 * t - 1.0),
    }
}

/// 1-D tables of a space's local basis at the Gauss points of every fine
/// sub-interval: `val[(s * q + g) * k + a]`, derivatives already scaled by
/// the cell width of that space.
struct Table1d {
    k: usize,
    q: usize,
    val: Vec<f64>,
    der: Vec<f64>,
}

impl Table1d {
    fn new(kind: SpaceKind, width: f64, subdivisions: usize, rule: &GaussRule) -> Self {
        let k = match kind {
            SpaceKind::Q1 => 2,
            SpaceKind::BrokenQ2 => 3,
        };
        let q = rule.len();
        let mut val = Vec::with_capacity(subdivisions * q * k);
        let mut der = Vec::with_capacity(subdivisions * q * k);
        for s in 0..subdivisions {
            for &t in rule.points() {
                let x = (s as f64 + t) / subdivisions as f64;
                for a in 0..k {
                    let (v, d) = basis_1d(kind, a, x);
                    val.push(v);
                    der.push(d / width);
                }
            }
        }
        Self { k, q, val, der }
    }

    #[inline]
    fn at(&self, s: usize, g: usize) -> (&[f64], &[f64]) {
        let o = (s * self.q + g) * self.k;
        (&self.val[o..o + self.k], &self.der[o..o + self.k])
    }
}

/// `[K]_{ji} = int_D a grad(phi_i^trial) . grad(phi_j^test) dx`.
///
/// The test space must sit on the same or a finer mesh than the trial space.
pub fn assemble_stiffness(
    test: &FeSpace,
    trial: &FeSpace,
    coeff: &dyn ScalarField,
    opts: &AssemblyOptions,
) -> Result<CsrMatrix> {
    if test.domain() != trial.domain() {
        return Err(Error::DomainMismatch);
    }
    if test.level() < trial.level() {
        return Err(Error::LevelOrder { test: test.level(), trial: trial.level() });
    }
    let rule = GaussRule::new(opts.quad_points);
    let q = rule.len();
    let dom = test.domain();
    let r = 1usize << (test.level() - trial.level());
    let nc = trial.mesh.cells_per_side();
    let hf = test.mesh.element_width();
    let hc = trial.mesh.element_width();

    let tt = Table1d::new(trial.kind, hc, r, &rule);
    let te = Table1d::new(test.kind, hf, 1, &rule);
    let (kt, ke) = (tt.k, te.k);
    let (nt, ne) = (kt * kt, ke * ke);

    // physical Gauss coordinates within a fine cell, relative to its corner
    let offsets: Vec<f64> = rule.points().iter().map(|&t| t * hf).collect();
    let area = hf * hf;

    let mut builder = CsrBuilder::new(test.dof_count(), trial.dof_count());
    let mut pending: Vec<(usize, usize, f64)> = Vec::new();
    let mut local = vec![0.0; ne * nt];
    let mut grad_e = vec![(0.0, 0.0); ne];
    let mut grad_t = vec![(0.0, 0.0); nt];

    for cy in 0..nc {
        for cx in 0..nc {
            let trial_dofs = trial.cell_dofs(cx, cy);
            if trial_dofs[..nt].iter().all(|&d| d == NO_DOF) {
                continue;
            }
            for sy in 0..r {
                for sx in 0..r {
                    let (fx, fy) = (cx * r + sx, cy * r + sy);
                    let test_dofs = test.cell_dofs(fx, fy);
                    if test_dofs[..ne].iter().all(|&d| d == NO_DOF) {
                        continue;
                    }
                    local.iter_mut().for_each(|v| *v = 0.0);
                    let x_corner = dom.x0 + fx as f64 * hf;
                    let y_corner = dom.y0 + fy as f64 * hf;
                    for gy in 0..q {
                        let y = y_corner + offsets[gy];
                        let (ev_y, ed_y) = te.at(0, gy);
                        let (tv_y, td_y) = tt.at(sy, gy);
                        for gx in 0..q {
                            let x = x_corner + offsets[gx];
                            let w = coeff.eval(x, y) * rule.weights()[gx] * rule.weights()[gy] * area;
                            let (ev_x, ed_x) = te.at(0, gx);
                            let (tv_x, td_x) = tt.at(sx, gx);
                            for b in 0..ke {
                                for a in 0..ke {
                                    grad_e[b * ke + a] = (ed_x[a] * ev_y[b], ev_x[a] * ed_y[b]);
                                }
                            }
                            for b in 0..kt {
                                for a in 0..kt {
                                    grad_t[b * kt + a] =
                                        (w * td_x[a] * tv_y[b], w * tv_x[a] * td_y[b]);
                                }
                            }
                            for (j, ge) in grad_e.iter().enumerate() {
                                let row = &mut local[j * nt..(j + 1) * nt];
                                for (l, gt) in row.iter_mut().zip(&grad_t) {
                                    *l += ge.0 * gt.0 + ge.1 * gt.1;
                                }
                            }
                        }
                    }
                    for (j, &dj) in test_dofs[..ne].iter().enumerate() {
                        if dj == NO_DOF {
                            continue;
                        }
                        for (i, &di) in trial_dofs[..nt].iter().enumerate() {
                            if di != NO_DOF {
                                pending.push((dj, di, local[j * nt + i]));
                            }
                        }
                    }
                }
            }
        }
        let upper_row = (cy + 1) * r * (ke - 1);
        flush(&mut builder, &mut pending, test.dofs_below_row(upper_row));
    }
    flush(&mut builder, &mut pending, test.dof_count());
    Ok(builder.finish())
}

fn flush(builder: &mut CsrBuilder, pending: &mut Vec<(usize, usize, f64)>, upto: usize) {
    // stable: contributions to one entry are summed in traversal order
    pending.sort_by_key(|&(r, c, _)| (r, c));
    let split = pending.partition_point(|&(r, _, _)| r < upto);
    builder.append_sorted(&pending[..split], upto);
    pending.drain(..split);
}

/// `[b]_j = int_D f phi_j dx`.
pub fn assemble_load(space: &FeSpace, f: &dyn ScalarField, opts: &AssemblyOptions) -> Vec<f64> {
    let rule = GaussRule::new(opts.quad_points);
    let q = rule.len();
    let h = space.mesh.element_width();
    let dom = space.domain();
    let n = space.mesh.cells_per_side();
    let table = Table1d::new(space.kind, h, 1, &rule);
    let k = table.k;
    let mut out = vec![0.0; space.dof_count()];
    let mut local = vec![0.0; k * k];
    for cy in 0..n {
        for cx in 0..n {
            let dofs = space.cell_dofs(cx, cy);
            if dofs[..k * k].iter().all(|&d| d == NO_DOF) {
                continue;
            }
            local.iter_mut().for_each(|v| *v = 0.0);
            for gy in 0..q {
                let y = dom.y0 + (cy as f64 + rule.points()[gy]) * h;
                let (vy, _) = table.at(0, gy);
                for gx in 0..q {
                    let x = dom.x0 + (cx as f64 + rule.points()[gx]) * h;
                    let w = f.eval(x, y) * rule.weights()[gx] * rule.weights()[gy] * h * h;
                    let (vx, _) = table.at(0, gx);
                    for b in 0..k {
                        for a in 0..k {
                            local[b * k + a] += w * vx[a] * vy[b];
                        }
                    }
                }
            }
            for (l, &d) in dofs[..k * k].iter().enumerate() {
                if d != NO_DOF {
                    out[d] += local[l];
                }
            }
        }
    }
    out
}

/// Nodal interpolation of coarse Q1 hats on the fine mesh:
/// `phi_i^coarse = sum_j P_ji phi_j^fine`.
pub fn prolongation(coarse: &FeSpace, fine: &FeSpace) -> Result<CsrMatrix> {
    if coarse.kind != SpaceKind::Q1 || fine.kind != SpaceKind::Q1 {
        return Err(Error::Config("prolongation is defined between Q1 spaces".into()));
    }
    if coarse.domain() != fine.domain() {
        return Err(Error::DomainMismatch);
    }
    if fine.level() < coarse.level() {
        return Err(Error::LevelOrder { test: fine.level(), trial: coarse.level() });
    }
    let r = 1usize << (fine.level() - coarse.level());
    let nf = fine.mesh.cells_per_side();
    let weights = |p: usize| -> Vec<(usize, f64)> {
        let (c, s) = (p / r, p % r);
        if s == 0 {
            vec![(c, 1.0)]
        } else {
            let t = s as f64 / r as f64;
            vec![(c, 1.0 - t), (c + 1, t)]
        }
    };
    let mut builder = CsrBuilder::new(fine.dof_count(), coarse.dof_count());
    let mut row = Vec::new();
    for q in 1..nf {
        let wy = weights(q);
        for p in 1..nf {
            let wx = weights(p);
            let j = fine.node_dof(p, q);
            row.clear();
            for &(cq, vy) in &wy {
                for &(cp, vx) in &wx {
                    let i = coarse.node_dof(cp, cq);
                    if i != NO_DOF {
                        row.push((j, i, vx * vy));
                    }
                }
            }
            builder.append_sorted(&row, j + 1);
        }
    }
    Ok(builder.finish())
}
