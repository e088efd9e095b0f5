//! The JSON model-file format.
//!
//! ```json
//! {"kind": "pomdp", "n": 2, "m": 1, "k_controls": 2,
//!  "theta": [20, -20], "rewards": [0, 1],
//!  "trans": [[[0.333, 0.667], [0.333, 0.667]], [[0.667, 0.333], [0.667, 0.333]]],
//!  "obs": [[1], [1]]}
//! ```
//!
//! `chain_softmax_table` needs `n`, `theta` (`n * n`, row-major) and
//! `rewards`. `chain_explicit` takes a single matrix in `trans`; its `theta`
//! only fixes the gradient dimension. `pomdp` adds `m` observations and
//! `k_controls` controls, `obs` (`n x m`) and one `n x n` matrix per control;
//! `rewards` is either per state or an `n x k_controls` matrix. Probability
//! rows must sum to 1 within 1e-9.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use pg_lab_core::{PomdpModel, Problem, Rewards, SoftmaxChainFamily, StochasticMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const LOAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ChainSoftmaxTable,
    ChainExplicit,
    Pomdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RewardSpec {
    PerState(Vec<f64>),
    PerControl(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_controls: Option<usize>,
    pub theta: Vec<f64>,
    pub rewards: RewardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    #[serde(default, rename = "bound_R", skip_serializing_if = "Option::is_none")]
    pub bound_r: Option<f64>,
    #[serde(default, rename = "bound_B", skip_serializing_if = "Option::is_none")]
    pub bound_b: Option<f64>,
}

/// A parsed and validated model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub file: ModelFile,
    pub problem: Problem,
}

impl ModelSpec {
    pub fn initial_state(&self) -> Option<usize> {
        self.file.initial_state
    }
}

pub fn parse_model(path: &Path) -> CliResult<ModelSpec> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    parse_model_str(&text, path)
}

/// Parses `text`; `path` only labels errors.
pub fn parse_model_str(text: &str, path: &Path) -> CliResult<ModelSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: path.to_owned(),
        key: match e.path().to_string() {
            p if p == "." => "top level".into(),
            p => p,
        },
        message: e.inner().to_string(),
    })?;
    validate(file, path)
}

pub fn validate(file: ModelFile, path: &Path) -> CliResult<ModelSpec> {
    let v = Validator { path: path.to_owned() };
    let problem = v.build(&file)?;
    Ok(ModelSpec { file, problem })
}

/// Serializes with every float written as `d.dddddddddddddddde±x`
/// (17 significant digits), which reads back to the same bits.
pub fn to_canonical_string(file: &ModelFile) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFloats);
    file.serialize(&mut ser).expect("model files serialize");
    let mut s = String::from_utf8(out).expect("JSON is UTF-8");
    s.push('\n');
    s
}

pub fn write_model(file: &ModelFile, path: &Path) -> CliResult<()> {
    fs::write(path, to_canonical_string(file)).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

struct CanonicalFloats;

impl serde_json::ser::Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

struct Validator {
    path: PathBuf,
}

impl Validator {
    fn fail<T>(&self, message: impl Into<String>) -> CliResult<T> {
        Err(CliError::Validation { path: self.path.clone(), message: message.into() })
    }

    fn core<T>(&self, key: &str, r: pg_lab_core::Result<T>) -> CliResult<T> {
        r.or_else(|e| self.fail(format!("{key}: {e}")))
    }

    fn matrix(&self, key: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> CliResult<DMatrix<f64>> {
        if rows.len() != nrows {
            return self.fail(format!("{key} has {} rows, expected {nrows}", rows.len()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return self.fail(format!("{key}[{i}] has {} entries, expected {ncols}", row.len()));
            }
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    fn stochastic(&self, key: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> CliResult<DMatrix<f64>> {
        let m = self.matrix(key, rows, nrows, ncols)?;
        self.core(key, pg_lab_core::chain::check_rows_stochastic(&m, LOAD_TOL))?;
        Ok(m)
    }

    fn unused(&self, file: &ModelFile, keys: &[&str]) -> CliResult<()> {
        for &key in keys {
            let present = match key {
                "m" => file.m.is_some(),
                "k_controls" => file.k_controls.is_some(),
                "trans" => file.trans.is_some(),
                "obs" => file.obs.is_some(),
                _ => unreachable!("known key"),
            };
            if present {
                return self.fail(format!("{key} does not apply to kind {:?}", file.kind));
            }
        }
        Ok(())
    }

    fn state_rewards(&self, file: &ModelFile) -> CliResult<DVector<f64>> {
        match &file.rewards {
            RewardSpec::PerState(r) if r.len() == file.n => Ok(DVector::from_column_slice(r)),
            RewardSpec::PerState(r) => self.fail(format!("rewards has {} entries, expected n = {}", r.len(), file.n)),
            RewardSpec::PerControl(_) => self.fail("rewards must be a vector for chain models"),
        }
    }

    fn build(&self, file: &ModelFile) -> CliResult<Problem> {
        let n = file.n;
        if n == 0 {
            return self.fail("n must be at least 1");
        }
        if let Some(s) = file.initial_state {
            if s >= n {
                return self.fail(format!("initial_state {s} is not below n = {n}"));
            }
        }
        let problem = match file.kind {
            ModelKind::ChainSoftmaxTable => {
                self.unused(file, &["m", "k_controls", "trans", "obs"])?;
                if file.theta.len() != n * n {
                    return self.fail(format!("theta has {} entries, expected n * n = {}", file.theta.len(), n * n));
                }
                let family = self.core("rewards", SoftmaxChainFamily::table(n, self.state_rewards(file)?))?;
                Problem::SoftmaxChain { family, theta: DVector::from_column_slice(&file.theta) }
            }
            ModelKind::ChainExplicit => {
                self.unused(file, &["m", "k_controls", "obs"])?;
                let Some(trans) = &file.trans else { return self.fail("trans is required") };
                if trans.len() != 1 {
                    return self.fail(format!("trans must hold exactly one matrix, found {}", trans.len()));
                }
                let p = self.stochastic("trans[0]", &trans[0], n, n)?;
                Problem::ExplicitChain {
                    transition: self.core("trans[0]", StochasticMatrix::with_tolerance(p, LOAD_TOL))?,
                    rewards: self.state_rewards(file)?,
                    theta: DVector::from_column_slice(&file.theta),
                }
            }
            ModelKind::Pomdp => {
                let (Some(m), Some(k_controls)) = (file.m, file.k_controls) else {
                    return self.fail("pomdp models need m and k_controls");
                };
                if m == 0 || k_controls == 0 {
                    return self.fail("m and k_controls must be at least 1");
                }
                let (Some(trans), Some(obs)) = (&file.trans, &file.obs) else {
                    return self.fail("pomdp models need trans and obs");
                };
                if trans.len() != k_controls {
                    return self
                        .fail(format!("trans holds {} matrices, expected k_controls = {k_controls}", trans.len()));
                }
                if file.theta.len() != m * k_controls {
                    return self.fail(format!(
                        "theta has {} entries, expected m * k_controls = {}",
                        file.theta.len(),
                        m * k_controls
                    ));
                }
                let trans = trans
                    .iter()
                    .enumerate()
                    .map(|(u, t)| self.stochastic(&format!("trans[{u}]"), t, n, n))
                    .collect::<CliResult<Vec<_>>>()?;
                let obs = self.stochastic("obs", obs, n, m)?;
                let rewards = match &file.rewards {
                    RewardSpec::PerState(_) => Rewards::State(self.state_rewards(file)?),
                    RewardSpec::PerControl(rows) => Rewards::Control(self.matrix("rewards", rows, n, k_controls)?),
                };
                let model = self.core("model", PomdpModel::with_tolerance(trans, obs, rewards, LOAD_TOL))?;
                Problem::Pomdp { model, theta: DVector::from_column_slice(&file.theta) }
            }
        };
        if file.theta.iter().any(|t| !t.is_finite()) {
            return self.fail("theta must be finite");
        }
        self.check_bounds(file, &problem)?;
        Ok(problem)
    }

    fn check_bounds(&self, file: &ModelFile, problem: &Problem) -> CliResult<()> {
        if file.bound_r.is_none() && file.bound_b.is_none() {
            return Ok(());
        }
        let (reward_bound, ratio_bound) = match problem {
            Problem::Pomdp { model, .. } => {
                let policy = self.core("theta", problem.policy())?.expect("pomdp policy");
                (model.rewards().bound(), policy.ratio_bound())
            }
            _ => {
                let chain = self.core("model", problem.chain())?;
                (chain.reward_bound(), chain.ratio_bound())
            }
        };
        if let Some(r) = file.bound_r {
            if !(reward_bound <= r) {
                return self.fail(format!("bound_R = {r} is below the largest reward magnitude {reward_bound}"));
            }
        }
        if let Some(b) = file.bound_b {
            if !(ratio_bound <= b * (1.0 + 1e-12)) {
                return self.fail(format!("bound_B = {b} is below the largest likelihood ratio {ratio_bound}"));
            }
        }
        Ok(())
    }
}
