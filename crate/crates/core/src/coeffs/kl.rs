//! Karhunen–Loève eigenpairs of the exponential kernel `exp(-|x - x'| / l)`.
//!
//! On `[-a, a]` the eigenvalues are `2c / (w^2 + c^2)` with `c = 1/l`, where
//! `w` solves `c cos(wa) - w sin(wa) = 0` (even eigenfunctions `cos(wx)`) or
//! `w cos(wa) + c sin(wa) = 0` (odd eigenfunctions `sin(wx)`). The roots of
//! the two families interlace, one per half-period.

use std::f64::consts::PI;

use crate::{Error, Result};

/// One eigenpair of the 1-D operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlPair1d {
    pub eigenvalue: f64,
    pub omega: f64,
    pub even: bool,
    /// Normalisation including the sign convention `phi(-a) > 0`.
    pub scale: f64,
}

impl KlPair1d {
    pub fn eval(&self, x: f64) -> f64 {
        if self.even {
            self.scale * (self.omega * x).cos()
        } else {
            self.scale * (self.omega * x).sin()
        }
    }
}

/// An eigenpair of the separable 2-D kernel on a square: `phi(x) = phi_i(x1) phi_j(x2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlEigenpair {
    pub eigenvalue: f64,
    pub i: usize,
    pub j: usize,
    pub first: KlPair1d,
    pub second: KlPair1d,
}

impl KlEigenpair {
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.first.eval(x1) * self.second.eval(x2)
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::RootBracketing(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The first `count` eigenpairs on `[-half_width, half_width]`, eigenvalues descending.
pub fn kl_eigenpairs_1d(correlation_length: f64, half_width: f64, count: usize) -> Result<Vec<KlPair1d>> {
    if !(correlation_length > 0.0 && half_width > 0.0) {
        return Err(Error::Config("correlation length and half width must be positive".into()));
    }
    let c = 1.0 / correlation_length;
    let a = half_width;
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let k = (idx / 2) as f64;
        let even = idx % 2 == 0;
        let omega = if even {
            let lo = k * PI / a;
            let hi = (k + 0.5) * PI / a;
            bisect(|w| c * (w * a).cos() - w * (w * a).sin(), lo, hi)?
        } else {
            let lo = (k + 0.5) * PI / a;
            let hi = (k + 1.0) * PI / a;
            bisect(|w| w * (w * a).cos() + c * (w * a).sin(), lo, hi)?
        };
        let s = (2.0 * omega * a).sin() / (2.0 * omega);
        let norm = if even { a + s } else { a - s };
        let left = if even { (omega * a).cos() } else { -(omega * a).sin() };
        let scale = left.signum() / norm.sqrt();
        out.push(KlPair1d { eigenvalue: 2.0 * c / (omega * omega + c * c), omega, even, scale });
    }
    Ok(out)
}

/// The first `count` tensor-product eigenpairs on `[-a, a]^2` with equal
/// correlation lengths, sorted by eigenvalue descending with ties broken by
/// `(i + j, i)`.
pub fn kl_eigenpairs_2d(correlation_length: f64, half_width: f64, count: usize) -> Result<Vec<KlEigenpair>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut k = 8usize;
    loop {
        let pairs = kl_eigenpairs_1d(correlation_length, half_width, k + 1)?;
        let mut products: Vec<KlEigenpair> = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| KlEigenpair {
                eigenvalue: pairs[i].eigenvalue * pairs[j].eigenvalue,
                i,
                j,
                first: pairs[i],
                second: pairs[j],
            })
            .collect();
        products.sort_by(|p, q| {
            q.eigenvalue
                .total_cmp(&p.eigenvalue)
                .then((p.i + p.j).cmp(&(q.i + q.j)))
                .then(p.i.cmp(&q.i))
        });
        // every product involving index >= k is at most lambda_0 * lambda_k
        let bound = pairs[0].eigenvalue * pairs[k].eigenvalue;
        if products.len() >= count && products[count - 1].eigenvalue > bound {
            products.truncate(count);
            return Ok(products);
        }
        k *= 2;
    }
}
