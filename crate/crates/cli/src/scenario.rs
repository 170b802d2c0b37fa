//! Scenario documents: model, obstacle shape, query and oracle settings.

use crate::CliError;
use keepout::dynamics::{
    biased_turning, unicycle_dmsp, uniform_turning, DPVModel, GaussianSpec, ParameterTrajectory, UnicycleParams,
};
use keepout::geometry::ConvexShape;
use keepout::occupancy::ObstacleInstance;
use keepout::occupyset::{DEFAULT_K, DEFAULT_NDES, DEFAULT_TOL};
use keepout::oracle::{DEFAULT_GRID, DEFAULT_NS};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Environment variable holding the default oracle seed.
pub const SEED_ENV: &str = "KEEPOUT_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub model: ModelSpec,
    pub shape: ConvexShape,
    pub query: QuerySpec,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// The reach law itself: a one-step model `x_1 = mean + w`.
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Parameter-free `x_{t+1} = A x_t + B u_t + F w_t`.
    Constant {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<Vec<f64>>>,
        f: Vec<Vec<f64>>,
        disturbance: DisturbanceSpec,
        horizon: usize,
        x0: Vec<f64>,
        #[serde(default)]
        inputs: Vec<Vec<f64>>,
    },
    Unicycle(UnicycleSpec),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UnicycleSpec {
    pub x0: Vec<f64>,
    #[serde(default = "default_transition")]
    pub transition: TransitionSpec,
    /// Known turning rates `q_1, q_2, …`; turns the switched model into a
    /// parameter-varying one.
    #[serde(default)]
    pub turning_sequence: Option<Vec<f64>>,
    #[serde(default)]
    pub sample_time: Option<f64>,
    #[serde(default)]
    pub speed_mean: Option<f64>,
    #[serde(default)]
    pub speed_var: Option<f64>,
    #[serde(default)]
    pub heading0: Option<f64>,
    #[serde(default)]
    pub switch_period: Option<usize>,
    #[serde(default)]
    pub horizon: Option<usize>,
}

impl UnicycleSpec {
    pub fn with_x0(x0: Vec<f64>) -> Self {
        UnicycleSpec {
            x0,
            transition: default_transition(),
            turning_sequence: None,
            sample_time: None,
            speed_mean: None,
            speed_var: None,
            heading0: None,
            switch_period: None,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TransitionSpec {
    /// `"M1"` (uniform) or `"M2"` (biased).
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

fn default_transition() -> TransitionSpec {
    TransitionSpec::Named("M1".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Projection,
    Minkowski,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "projection" => Ok(Algorithm::Projection),
            "minkowski" => Ok(Algorithm::Minkowski),
            other => Err(format!("unknown algorithm {other:?} (expected projection or minkowski)")),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub tau: usize,
    pub alpha: f64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Sampling radius; `None` derives it from the Minkowski bound.
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default = "default_ndes")]
    pub ndes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Extra times at which the reach law is reported.
    #[serde(default)]
    pub fsr_times: Vec<usize>,
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Projection, Algorithm::Minkowski]
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_ndes() -> usize {
    DEFAULT_NDES
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_ns")]
    pub ns: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            ns: DEFAULT_NS,
            seed: None,
            grid: DEFAULT_GRID,
        }
    }
}

fn default_ns() -> usize {
    DEFAULT_NS
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "yes")]
    pub plot: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, plot: true }
    }
}

fn yes() -> bool {
    true
}

/// A parsed scenario with the digest of its source text.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sha256: String,
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Parse(format!("{field}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl LoadedScenario {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        LoadedScenario::from_text(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        scenario.validate()?;
        let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(LoadedScenario { scenario, sha256 })
    }
}

impl Scenario {
    /// Field-level checks that do not need the numerical back-end.
    pub fn validate(&self) -> Result<(), CliError> {
        let q = &self.query;
        if !(0.0..=1.0).contains(&q.alpha) {
            return Err(CliError::Parse(format!("query.alpha: alpha out of range: {}", q.alpha)));
        }
        if !(q.tol > 0.0 && q.tol < 1.0) {
            return Err(CliError::Parse(format!("query.tol: must lie in (0, 1), got {}", q.tol)));
        }
        if q.tau == 0 {
            return Err(CliError::Parse("query.tau: must be at least 1".into()));
        }
        let horizon = self.horizon();
        for &t in std::iter::once(&q.tau).chain(q.fsr_times.iter()) {
            if t > horizon {
                return Err(CliError::Parse(format!("query.tau: {t} exceeds the model horizon {horizon}")));
            }
        }
        if let Some(o) = &self.oracle {
            if o.ns == 0 {
                return Err(CliError::Parse("oracle.ns: must be at least 1".into()));
            }
            if o.grid < 2 {
                return Err(CliError::Parse("oracle.grid: must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        match &self.model {
            ModelSpec::Gaussian { .. } => 1,
            ModelSpec::Constant { horizon, .. } => *horizon,
            ModelSpec::Unicycle(u) => match &u.turning_sequence {
                Some(seq) => seq.len(),
                None => u.horizon.unwrap_or(50),
            },
        }
    }

    /// Whether the obstacle has random switching.
    pub fn is_switched(&self) -> bool {
        matches!(&self.model, ModelSpec::Unicycle(u) if u.turning_sequence.is_none())
    }

    /// Oracle seed: scenario value, then the environment, then a default.
    pub fn seed(&self) -> Result<u64, CliError> {
        if let Some(s) = self.oracle.as_ref().and_then(|o| o.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("{SEED_ENV}: not an unsigned integer: {v:?}"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }

    pub fn obstacle(&self) -> Result<ObstacleInstance, CliError> {
        let obs = match &self.model {
            ModelSpec::Gaussian { mean, cov } => {
                let n = mean.len();
                let model = DPVModel::constant(
                    DMatrix::identity(n, n),
                    None,
                    DMatrix::identity(n, n),
                    GaussianSpec::new(DVector::zeros(n), matrix(cov, "model.cov")?)?,
                    1,
                )?;
                ObstacleInstance::dpv(
                    self.shape.clone(),
                    model,
                    ParameterTrajectory::constant(DVector::zeros(1), 1),
                    DVector::from_column_slice(mean),
                    vec![],
                )?
            }
            ModelSpec::Constant {
                a,
                b,
                f,
                disturbance,
                horizon,
                x0,
                inputs,
            } => {
                let b = b.as_ref().map(|b| matrix(b, "model.b")).transpose()?;
                let model = DPVModel::constant(
                    matrix(a, "model.a")?,
                    b,
                    matrix(f, "model.f")?,
                    GaussianSpec::new(DVector::from_column_slice(&disturbance.mean), matrix(&disturbance.cov, "model.disturbance.cov")?)?,
                    *horizon,
                )?;
                let inputs = inputs.iter().map(|u| DVector::from_column_slice(u)).collect();
                ObstacleInstance::dpv(
                    self.shape.clone(),
                    model,
                    ParameterTrajectory::constant(DVector::zeros(1), *horizon),
                    DVector::from_column_slice(x0),
                    inputs,
                )?
            }
            ModelSpec::Unicycle(u) => {
                let transition = match &u.transition {
                    TransitionSpec::Named(n) if n.eq_ignore_ascii_case("m1") => uniform_turning(),
                    TransitionSpec::Named(n) if n.eq_ignore_ascii_case("m2") => biased_turning(),
                    TransitionSpec::Named(n) => {
                        return Err(CliError::Parse(format!("model.transition: unknown matrix {n:?} (expected M1, M2 or a matrix)")))
                    }
                    TransitionSpec::Matrix(m) => matrix(m, "model.transition")?,
                };
                let mut p = UnicycleParams::with_transition(transition);
                if let Some(v) = u.sample_time {
                    p.sample_time = v;
                }
                if let Some(v) = u.speed_mean {
                    p.speed_mean = v;
                }
                if let Some(v) = u.speed_var {
                    p.speed_var = v;
                }
                if let Some(v) = u.heading0 {
                    p.heading0 = v;
                }
                if let Some(v) = u.switch_period {
                    p.switch_period = v;
                }
                p.horizon = self.horizon();
                let dmsp = unicycle_dmsp(&p)?;
                let x0 = DVector::from_column_slice(&u.x0);
                match &u.turning_sequence {
                    Some(seq) => {
                        let traj = dmsp.trajectory_for_states(seq);
                        ObstacleInstance::dpv(self.shape.clone(), dmsp.subsystem().clone(), traj, x0, vec![])?
                    }
                    None => ObstacleInstance::dmsp(self.shape.clone(), dmsp, x0, vec![])?,
                }
            }
        };
        Ok(obs)
    }
}
