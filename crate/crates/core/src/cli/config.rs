//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptiveConfig, Version};
use crate::chaos::{IndexSet, MultiIndex};
use crate::coeffs::{make_problem, CustomProblem, Problem, ProblemId};
use crate::{Error, Result};

/// Everything needed to reproduce one run.
///
/// Multi-indices are written as lists of `[position, degree]` pairs, so the
/// default initial set reads `initial_indices = [[], [[1, 1]]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemId>,
    pub custom: Option<CustomProblem>,
    pub version: u32,
    pub tolerance: f64,
    pub delta_m: u32,
    pub initial_indices: IndexSet,
    pub initial_levels: Vec<u32>,
    pub quad_points: usize,
    pub pcg_tolerance: f64,
    pub pcg_max_iter: usize,
    pub max_steps: usize,
    pub max_dof: usize,
    pub max_level: u32,
    pub output_dir: PathBuf,
    pub reference_energy: Option<f64>,
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AdaptiveConfig::default();
        Self {
            problem: None,
            custom: None,
            version: 1,
            tolerance: a.tolerance,
            delta_m: a.delta_m,
            initial_indices: a.initial_indices,
            initial_levels: a.initial_levels,
            quad_points: a.quad_points,
            pcg_tolerance: a.pcg_tolerance,
            pcg_max_iter: a.pcg_max_iter,
            max_steps: a.max_steps,
            max_dof: a.max_dof,
            max_level: a.max_level,
            output_dir: PathBuf::from("out"),
            reference_energy: None,
            timings: a.timings,
        }
    }
}

/// Flag values that replace the corresponding file entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub problem: Option<ProblemId>,
    pub version: Option<u32>,
    pub tolerance: Option<f64>,
    pub delta_m: Option<u32>,
    pub max_dof: Option<usize>,
    pub max_steps: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub reference_energy: Option<f64>,
    pub no_timings: bool,
}

impl RunConfig {
    pub fn for_problem(problem: ProblemId) -> Self {
        Self { problem: Some(problem), ..Self::default() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.problem {
            self.problem = Some(p);
            self.custom = None;
        }
        if let Some(v) = o.version {
            self.version = v;
        }
        if let Some(t) = o.tolerance {
            self.tolerance = t;
        }
        if let Some(d) = o.delta_m {
            self.delta_m = d;
        }
        if let Some(n) = o.max_dof {
            self.max_dof = n;
        }
        if let Some(n) = o.max_steps {
            self.max_steps = n;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(r) = o.reference_energy {
            self.reference_energy = Some(r);
        }
        if o.no_timings {
            self.timings = false;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.problem, &self.custom) {
            (None, None) => return Err(Error::Config("no problem given; set `problem` or a [custom] table".into())),
            (Some(_), Some(_)) => return Err(Error::Config("`problem` and [custom] are mutually exclusive".into())),
            _ => {}
        }
        if let Some(r) = self.reference_energy {
            if !(r > 0.0) {
                return Err(Error::Config("reference energy must be positive".into()));
            }
        }
        self.adaptive()?.validate()
    }

    pub fn adaptive(&self) -> Result<AdaptiveConfig> {
        Ok(AdaptiveConfig {
            version: Version::try_from(self.version)?,
            tolerance: self.tolerance,
            delta_m: self.delta_m,
            initial_indices: self.initial_indices.clone(),
            initial_levels: self.initial_levels.clone(),
            quad_points: self.quad_points,
            pcg_tolerance: self.pcg_tolerance,
            pcg_max_iter: self.pcg_max_iter,
            max_steps: self.max_steps,
            max_dof: self.max_dof,
            max_level: self.max_level,
            timings: self.timings,
        })
    }

    pub fn build_problem(&self) -> Result<Problem> {
        match (&self.problem, &self.custom) {
            (Some(p), None) => make_problem(*p),
            (None, Some(c)) => c.build(),
            _ => {
                self.validate()?;
                unreachable!("validate rejects this combination")
            }
        }
    }

    pub fn problem_name(&self) -> String {
        self.problem.map_or_else(|| "custom".to_string(), |p| p.name().to_string())
    }
}

/// Parses `"(0 2 1)"` or `"0,2,1"` into a multi-index.
pub fn parse_dense_index(s: &str) -> Result<MultiIndex> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let dense = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().map_err(|e| Error::Config(format!("bad multi-index entry '{t}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiIndex::from_dense(&dense))
}
