//! Uniform square meshes, Q1 and broken-Q2 spaces, and their matrices.
//!
//! Only interior degrees of freedom are numbered. Q1 dofs are vertices of
//! the `2^i x 2^i` grid. Broken-Q2 dofs are the remaining nodes of the Q2
//! element on the same grid (edge midpoints and cell centres), so the two
//! spaces on one mesh intersect trivially.

pub mod assembly;
pub mod cholesky;
pub mod quadrature;
pub mod sparse;

pub use assembly::{assemble_load, assemble_stiffness, prolongation, AssemblyOptions};
pub use cholesky::SparseCholesky;
pub use quadrature::GaussRule;
pub use sparse::CsrMatrix;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_MAX_LEVEL: u32 = 10;

/// A real-valued function on the physical domain.
pub trait ScalarField: Send + Sync {
    fn eval(&self, x: f64, y: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Send + Sync> ScalarField for F {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self(x, y)
    }
}

/// An axis-aligned square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
}

impl Domain {
    pub fn unit_square() -> Self {
        Self { x0: 0.0, y0: 0.0, side: 1.0 }
    }

    /// `[-1, 1]^2`
    pub fn centered() -> Self {
        Self { x0: -1.0, y0: -1.0, side: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpaceKind {
    Q1,
    BrokenQ2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshLevel {
    pub level: u32,
    pub domain: Domain,
}

impl MeshLevel {
    pub fn new(level: u32, domain: Domain) -> Self {
        Self { level, domain }
    }

    pub fn cells_per_side(&self) -> usize {
        1 << self.level
    }

    pub fn element_width(&self) -> f64 {
        self.domain.side / self.cells_per_side() as f64
    }
}

/// Sentinel for local nodes that carry no dof (boundary or Q1 vertex in a Q2 element).
pub const NO_DOF: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeSpace {
    pub mesh: MeshLevel,
    pub kind: SpaceKind,
}

impl FeSpace {
    pub fn level(&self) -> u32 {
        self.mesh.level
    }

    pub fn domain(&self) -> Domain {
        self.mesh.domain
    }

    pub fn dof_count(&self) -> usize {
        let n = self.mesh.cells_per_side();
        match self.kind {
            SpaceKind::Q1 => (n - 1) * (n - 1),
            SpaceKind::BrokenQ2 => (2 * n - 1) * (2 * n - 1) - (n - 1) * (n - 1),
        }
    }

    /// Local nodes per element along one axis.
    pub fn nodes_per_axis(&self) -> usize {
        match self.kind {
            SpaceKind::Q1 => 2,
            SpaceKind::BrokenQ2 => 3,
        }
    }

    /// Dof index of the node at integer coordinates `(p, q)`, counted in
    /// vertices for Q1 and in half-cells for broken Q2.
    pub fn node_dof(&self, p: usize, q: usize) -> usize {
        let n = self.mesh.cells_per_side();
        match self.kind {
            SpaceKind::Q1 => {
                if p == 0 || q == 0 || p >= n || q >= n {
                    return NO_DOF;
                }
                (q - 1) * (n - 1) + (p - 1)
            }
            SpaceKind::BrokenQ2 => {
                let m = 2 * n;
                if p == 0 || q == 0 || p >= m || q >= m || (p.is_multiple_of(2) && q.is_multiple_of(2)) {
                    return NO_DOF;
                }
                let start = (q / 2) * (2 * n - 1) + ((q - 1) / 2) * n;
                start + if q % 2 == 1 { p - 1 } else { (p - 1) / 2 }
            }
        }
    }

    /// Number of node rows `q` strictly below `q_end`, expressed as a dof
    /// count; dofs are numbered row by row so this is a prefix length.
    pub(crate) fn dofs_below_row(&self, q_end: usize) -> usize {
        let n = self.mesh.cells_per_side();
        match self.kind {
            SpaceKind::Q1 => q_end.saturating_sub(1).min(n - 1) * (n - 1),
            SpaceKind::BrokenQ2 => {
                let q = q_end.clamp(1, 2 * n);
                (q / 2) * (2 * n - 1) + ((q - 1) / 2) * n
            }
        }
    }

    /// Dofs of cell `(cx, cy)` in local order `b * k + a`, `k` nodes per axis.
    pub fn cell_dofs(&self, cx: usize, cy: usize) -> [usize; 9] {
        let k = self.nodes_per_axis();
        let s = k - 1;
        let mut out = [NO_DOF; 9];
        for b in 0..k {
            for a in 0..k {
                out[b * k + a] = self.node_dof(s * cx + a, s * cy + b);
            }
        }
        out
    }

    /// Integer lattice coordinates of every dof (vertex units for Q1,
    /// half-cell units for broken Q2), in dof order.
    pub fn lattice_coordinates(&self) -> Vec<(u32, u32)> {
        let n = self.mesh.cells_per_side();
        let m = match self.kind {
            SpaceKind::Q1 => n,
            SpaceKind::BrokenQ2 => 2 * n,
        };
        let mut out = Vec::with_capacity(self.dof_count());
        for q in 1..m {
            for p in 1..m {
                if self.node_dof(p, q) != NO_DOF {
                    out.push((p as u32, q as u32));
                }
            }
        }
        out
    }

    /// A fill-reducing elimination order for matrices on this space.
    pub fn dissection_order(&self) -> Vec<usize> {
        let stride = match self.kind {
            SpaceKind::Q1 => 1,
            SpaceKind::BrokenQ2 => 2,
        };
        cholesky::nested_dissection(&self.lattice_coordinates(), stride)
    }

    /// Physical coordinates of every dof, in dof order.
    pub fn dof_coordinates(&self) -> Vec<(f64, f64)> {
        let d = self.mesh.domain;
        let n = self.mesh.cells_per_side();
        let (m, step) = match self.kind {
            SpaceKind::Q1 => (n, self.mesh.element_width()),
            SpaceKind::BrokenQ2 => (2 * n, 0.5 * self.mesh.element_width()),
        };
        let mut out = Vec::with_capacity(self.dof_count());
        for q in 1..m {
            for p in 1..m {
                if self.node_dof(p, q) != NO_DOF {
                    out.push((d.x0 + p as f64 * step, d.y0 + q as f64 * step));
                }
            }
        }
        out
    }
}

/// Builds the space on `level`, failing above `max_level`.
pub fn make_space(level: u32, kind: SpaceKind, domain: Domain, max_level: u32) -> Result<FeSpace> {
    if level > max_level {
        return Err(Error::LevelCap { level, max: max_level });
    }
    if level == 0 {
        return Err(Error::EmptyLevel);
    }
    Ok(FeSpace { mesh: MeshLevel::new(level, domain), kind })
}
