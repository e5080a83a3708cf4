//! Affine parametric coefficients `a(x, y) = a0(x) + sum_m a_m(x) y_m` and
//! the benchmark problems built on them.

pub mod kl;

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::fem::{Domain, ScalarField};
use crate::{Error, Result};

pub use kl::{kl_eigenpairs_1d, kl_eigenpairs_2d, KlEigenpair, KlPair1d};

/// One expansion term `a_m` with its sup norm on the domain.
#[derive(Clone)]
pub struct Term {
    pub field: Arc<dyn ScalarField>,
    pub sup_norm: f64,
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Term").field("sup_norm", &self.sup_norm).finish()
    }
}

/// Produces the leading terms of an expansion. Asking for more terms must
/// not change the ones already produced.
pub trait TermSource: Send + Sync {
    fn terms(&self, count: usize) -> Result<Vec<Term>>;
}

/// `a0` plus a lazily realised sequence of terms.
pub struct AffineCoefficient {
    a0: Arc<dyn ScalarField>,
    a0_min: f64,
    a0_max: f64,
    source: Box<dyn TermSource>,
    terms: RwLock<Vec<Term>>,
}

impl fmt::Debug for AffineCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineCoefficient")
            .field("a0_min", &self.a0_min)
            .field("a0_max", &self.a0_max)
            .field("realized", &self.realized())
            .finish()
    }
}

impl AffineCoefficient {
    pub fn new(a0: Arc<dyn ScalarField>, a0_min: f64, a0_max: f64, source: Box<dyn TermSource>) -> Self {
        Self { a0, a0_min, a0_max, source, terms: RwLock::new(Vec::new()) }
    }

    /// A spatially constant mean.
    pub fn with_constant_mean(a0: f64, source: Box<dyn TermSource>) -> Self {
        Self::new(Arc::new(move |_: f64, _: f64| a0), a0, a0, source)
    }

    pub fn a0(&self) -> Arc<dyn ScalarField> {
        self.a0.clone()
    }

    pub fn a0_range(&self) -> (f64, f64) {
        (self.a0_min, self.a0_max)
    }

    /// Number of terms realised so far.
    pub fn realized(&self) -> usize {
        self.terms.read().expect("term lock").len()
    }

    /// Makes sure terms `1..=count` exist.
    pub fn ensure(&self, count: usize) -> Result<()> {
        if self.realized() >= count {
            return Ok(());
        }
        let mut terms = self.terms.write().expect("term lock");
        if terms.len() < count {
            let want = count.max(2 * terms.len());
            let fresh = self.source.terms(want)?;
            debug_assert!(fresh.len() >= count);
            *terms = fresh;
        }
        Ok(())
    }

    /// The field `a_m`; `m = 0` gives `a0`.
    pub fn field(&self, m: u32) -> Result<Arc<dyn ScalarField>> {
        if m == 0 {
            return Ok(self.a0.clone());
        }
        Ok(self.term(m)?.field)
    }

    /// Term `m >= 1`.
    pub fn term(&self, m: u32) -> Result<Term> {
        assert!(m >= 1, "terms are numbered from 1");
        self.ensure(m as usize)?;
        Ok(self.terms.read().expect("term lock")[m as usize - 1].clone())
    }

    /// Sup norms of terms `1..=count`.
    pub fn sup_norms(&self, count: usize) -> Result<Vec<f64>> {
        self.ensure(count)?;
        Ok(self.terms.read().expect("term lock")[..count].iter().map(|t| t.sup_norm).collect())
    }

    /// `a(x, y)` using as many terms as `params` has entries.
    pub fn eval(&self, x1: f64, x2: f64, params: &[f64]) -> Result<f64> {
        self.ensure(params.len())?;
        let terms = self.terms.read().expect("term lock");
        Ok(self.a0.eval(x1, x2)
            + params.iter().zip(terms.iter()).map(|(y, t)| y * t.field.eval(x1, x2)).sum::<f64>())
    }
}

/// Analytic bounds on the coefficient over `D x Gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub a0_min: f64,
    pub a0_max: f64,
    /// `a0_min / a_max`
    pub lambda: f64,
    /// `a0_max / a_min`
    pub big_lambda: f64,
}

pub fn coefficient_bounds(c: &AffineCoefficient, terms_used: usize) -> Result<CoefficientBounds> {
    let (a0_min, a0_max) = c.a0_range();
    let total: f64 = c.sup_norms(terms_used)?.iter().sum();
    let a_min = a0_min - total;
    let a_max = a0_max + total;
    if a_min <= 0.0 {
        return Err(Error::NonPositiveCoefficient { a_min });
    }
    Ok(CoefficientBounds { a_min, a_max, a0_min, a0_max, lambda: a0_min / a_max, big_lambda: a0_max / a_min })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Tp1,
    Tp2,
    Tp3,
    Tp4,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [ProblemId::Tp1, ProblemId::Tp2, ProblemId::Tp3, ProblemId::Tp4];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Tp1 => "tp1",
            ProblemId::Tp2 => "tp2",
            ProblemId::Tp3 => "tp3",
            ProblemId::Tp4 => "tp4",
        }
    }
}

impl std::str::FromStr for ProblemId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('.', "").as_str() {
            "tp1" => Ok(ProblemId::Tp1),
            "tp2" => Ok(ProblemId::Tp2),
            "tp3" => Ok(ProblemId::Tp3),
            "tp4" => Ok(ProblemId::Tp4),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coefficient, load and domain of one boundary value problem.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    pub coefficient: Arc<AffineCoefficient>,
    pub load: Arc<dyn ScalarField>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem").field("name", &self.name).field("domain", &self.domain).finish()
    }
}

const TP1_SIGMA: f64 = 0.15;
const TP1_CORRELATION: f64 = 2.0;
const TP4_CORRELATION: f64 = 0.65;

/// `k(k+1)/2 <= m < (k+1)(k+2)/2`, then `(beta1, beta2) = (m - k(k+1)/2, k - beta1)`.
pub fn cosine_frequencies(m: u64) -> (u64, u64) {
    let mut k = (((0.25 + 2.0 * m as f64).sqrt() - 0.5).floor()) as u64;
    while k * (k + 1) / 2 > m {
        k -= 1;
    }
    while (k + 1) * (k + 2) / 2 <= m {
        k += 1;
    }
    let b1 = m - k * (k + 1) / 2;
    (b1, k - b1)
}

struct CosineSource {
    amplitude: fn(f64) -> f64,
}

impl TermSource for CosineSource {
    fn terms(&self, count: usize) -> Result<Vec<Term>> {
        Ok((1..=count as u64)
            .map(|m| {
                let alpha = (self.amplitude)(m as f64);
                let (b1, b2) = cosine_frequencies(m);
                let (w1, w2) = (2.0 * std::f64::consts::PI * b1 as f64, 2.0 * std::f64::consts::PI * b2 as f64);
                let field: Arc<dyn ScalarField> =
                    Arc::new(move |x: f64, y: f64| alpha * (w1 * x).cos() * (w2 * y).cos());
                Term { field, sup_norm: alpha.abs() }
            })
            .collect())
    }
}

struct Tp4Source;

impl Tp4Source {
    fn nu(i: u64, j: u64) -> f64 {
        0.25 * (-std::f64::consts::PI * (i * i + j * j) as f64 / (TP4_CORRELATION * TP4_CORRELATION)).exp()
    }
}

impl TermSource for Tp4Source {
    fn terms(&self, count: usize) -> Result<Vec<Term>> {
        // nu decreases in i^2 + j^2, so all indices with i^2 + j^2 <= r^2 precede the rest
        let mut r = 4u64;
        let order = loop {
            let mut idx: Vec<(u64, u64)> =
                (0..=r).flat_map(|i| (0..=r).map(move |j| (i, j))).filter(|&(i, j)| i * i + j * j <= r * r).collect();
            idx.sort_by(|&(a, b), &(c, d)| {
                Self::nu(c, d).total_cmp(&Self::nu(a, b)).then((a + b).cmp(&(c + d))).then(a.cmp(&c))
            });
            if idx.len() >= count {
                idx.truncate(count);
                break idx;
            }
            r *= 2;
        };
        let s3 = 3f64.sqrt();
        Ok(order
            .into_iter()
            .map(|(i, j)| {
                let amp = s3 * Self::nu(i, j).sqrt() * if (i, j) == (0, 0) { 1.0 } else { 2.0 };
                let (w1, w2) = (std::f64::consts::PI * i as f64, std::f64::consts::PI * j as f64);
                let field: Arc<dyn ScalarField> = Arc::new(move |x: f64, y: f64| amp * (w1 * x).cos() * (w2 * y).cos());
                Term { field, sup_norm: amp }
            })
            .collect())
    }
}

struct KlSource {
    sigma: f64,
    correlation_length: f64,
    half_width: f64,
}

/// Sup norm of a 1-D eigenfunction sampled on 512 equispaced points.
fn sampled_sup(p: &KlPair1d, half_width: f64) -> f64 {
    (0..512)
        .map(|k| p.eval(-half_width + 2.0 * half_width * k as f64 / 511.0).abs())
        .fold(0.0, f64::max)
}

impl TermSource for KlSource {
    fn terms(&self, count: usize) -> Result<Vec<Term>> {
        let pairs = kl_eigenpairs_2d(self.correlation_length, self.half_width, count)?;
        let s = self.sigma * 3f64.sqrt();
        Ok(pairs
            .into_iter()
            .map(|p| {
                let amp = s * p.eigenvalue.sqrt();
                let sup = amp * sampled_sup(&p.first, self.half_width) * sampled_sup(&p.second, self.half_width);
                let field: Arc<dyn ScalarField> = Arc::new(move |x: f64, y: f64| amp * p.eval(x, y));
                Term { field, sup_norm: sup }
            })
            .collect())
    }
}

/// A user-defined term `amplitude * cos(2 pi fx x1) * cos(2 pi fy x2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub freq_x: f64,
    pub freq_y: f64,
}

/// A problem with constant mean and load and finitely many cosine terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomProblem {
    pub a0: f64,
    #[serde(default = "one")]
    pub load: f64,
    #[serde(default)]
    pub centered_domain: bool,
    pub terms: Vec<CosineTerm>,
}

fn one() -> f64 {
    1.0
}

struct FiniteSource {
    terms: Vec<CosineTerm>,
}

impl TermSource for FiniteSource {
    fn terms(&self, count: usize) -> Result<Vec<Term>> {
        Ok((0..count)
            .map(|m| match self.terms.get(m) {
                Some(&CosineTerm { amplitude, freq_x, freq_y }) => {
                    let (w1, w2) = (2.0 * std::f64::consts::PI * freq_x, 2.0 * std::f64::consts::PI * freq_y);
                    let field: Arc<dyn ScalarField> =
                        Arc::new(move |x: f64, y: f64| amplitude * (w1 * x).cos() * (w2 * y).cos());
                    Term { field, sup_norm: amplitude.abs() }
                }
                None => Term { field: Arc::new(|_: f64, _: f64| 0.0), sup_norm: 0.0 },
            })
            .collect())
    }
}

impl CustomProblem {
    pub fn build(&self) -> Result<Problem> {
        if self.a0 <= 0.0 {
            return Err(Error::Config("a0 must be positive".into()));
        }
        if self.terms.windows(2).any(|w| w[1].amplitude.abs() > w[0].amplitude.abs()) {
            return Err(Error::Config("custom terms must be sorted by decreasing amplitude".into()));
        }
        let coefficient =
            AffineCoefficient::with_constant_mean(self.a0, Box::new(FiniteSource { terms: self.terms.clone() }));
        coefficient_bounds(&coefficient, self.terms.len())?;
        let load = self.load;
        Ok(Problem {
            name: "custom".into(),
            domain: if self.centered_domain { Domain::centered() } else { Domain::unit_square() },
            coefficient: Arc::new(coefficient),
            load: Arc::new(move |_: f64, _: f64| load),
        })
    }
}

/// The coefficient of a benchmark problem with the first `max_terms` terms realised.
pub fn make_tp_coefficient(problem: ProblemId, max_terms: usize) -> Result<AffineCoefficient> {
    let c = match problem {
        ProblemId::Tp1 => AffineCoefficient::with_constant_mean(
            1.0,
            Box::new(KlSource { sigma: TP1_SIGMA, correlation_length: TP1_CORRELATION, half_width: 1.0 }),
        ),
        ProblemId::Tp2 => {
            AffineCoefficient::with_constant_mean(1.0, Box::new(CosineSource { amplitude: |m| 0.547 * m.powi(-2) }))
        }
        ProblemId::Tp3 => {
            AffineCoefficient::with_constant_mean(1.0, Box::new(CosineSource { amplitude: |m| 0.832 * m.powi(-4) }))
        }
        ProblemId::Tp4 => AffineCoefficient::with_constant_mean(2.0, Box::new(Tp4Source)),
    };
    c.ensure(max_terms)?;
    Ok(c)
}

pub fn make_problem(problem: ProblemId) -> Result<Problem> {
    let coefficient = Arc::new(make_tp_coefficient(problem, 16)?);
    let (domain, load): (Domain, Arc<dyn ScalarField>) = match problem {
        ProblemId::Tp1 => (Domain::centered(), Arc::new(|x: f64, y: f64| (2.0 - x * x - y * y) / 8.0)),
        _ => (Domain::unit_square(), Arc::new(|_: f64, _: f64| 1.0)),
    };
    Ok(Problem { name: problem.name().into(), domain, coefficient, load })
}
