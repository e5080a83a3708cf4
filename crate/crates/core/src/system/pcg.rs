//! Preconditioned conjugate gradients on flat vectors.

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `sqrt(r . M^-1 r) / sqrt(b . M^-1 b)` at exit.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for SPD `A` with SPD preconditioner `M^-1`.
///
/// Stops once `sqrt(r . z) <= rel_tol * sqrt(b . M^-1 b)`. `apply_a` and
/// `apply_m` overwrite their output. `monitor` sees every iterate.
pub fn pcg(
    apply_a: &dyn Fn(&[f64], &mut [f64]),
    apply_m: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<Vec<f64>>,
    rel_tol: f64,
    max_iter: usize,
    monitor: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<PcgOutcome> {
    let n = b.len();
    let mut z = vec![0.0; n];
    apply_m(b, &mut z);
    let reference = dot(b, &z).max(0.0).sqrt();
    if reference == 0.0 {
        return Ok(PcgOutcome { solution: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    assert_eq!(x.len(), n);
    let mut r = b.to_vec();
    let mut q = vec![0.0; n];
    if x.iter().any(|&v| v != 0.0) {
        apply_a(&x, &mut q);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= qi);
    }
    apply_m(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut monitor = monitor;
    let mut it = 0;
    loop {
        let rel = rz.max(0.0).sqrt() / reference;
        if rel <= rel_tol {
            return Ok(PcgOutcome { solution: x, iterations: it, relative_residual: rel });
        }
        if it >= max_iter {
            return Err(Error::MaxIterations { iterations: it, residual: rel });
        }
        apply_a(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        apply_m(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        it += 1;
        if let Some(m) = monitor.as_mut() {
            m(it, &x);
        }
    }
}
