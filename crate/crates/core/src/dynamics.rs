//! Affine parameter-varying stochastic dynamics (DPV) and their Markov
//! switched extension (DMSP), plus the block matrices that unroll them.
//!
//! ```text
//! σ_{t+1} = 𝒫_σ(t, σ_t)
//! λ_{t+1} = l_λ(σ_{t+1}, t, λ_t)
//! x_{t+1} = A(λ_t) x_t + B(λ_t) u_t + F(λ_t) w_t,   w_t ~ N(μ_w, Σ_w) i.i.d.
//! ```

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Tolerance on row sums of a transition matrix.
const ROW_SUM_TOL: f64 = 1e-12;

pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type UpdateFn = Arc<dyn Fn(f64, usize, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A parameter-indexed matrix `λ ↦ M(λ)`.
#[derive(Clone)]
pub enum MatrixMap {
    Constant(DMatrix<f64>),
    /// `T_s [cos λ₀, sin λ₀]ᵀ`, the heading map of a unicycle.
    Heading { sample_time: f64 },
    Function { rows: usize, cols: usize, f: MatrixFn },
}

impl fmt::Debug for MatrixMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixMap::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            MatrixMap::Heading { sample_time } => f.debug_struct("Heading").field("sample_time", sample_time).finish(),
            MatrixMap::Function { rows, cols, .. } => {
                f.debug_struct("Function").field("rows", rows).field("cols", cols).finish_non_exhaustive()
            }
        }
    }
}

impl MatrixMap {
    pub fn function(rows: usize, cols: usize, f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        MatrixMap::Function {
            rows,
            cols,
            f: Arc::new(f),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatrixMap::Constant(m) => (m.nrows(), m.ncols()),
            MatrixMap::Heading { .. } => (2, 1),
            MatrixMap::Function { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn eval(&self, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let out = match self {
            MatrixMap::Constant(m) => return Ok(m.clone()),
            MatrixMap::Heading { sample_time } => {
                let Some(&h) = lambda.as_slice().first() else {
                    return Err(Error::invalid("heading map needs a parameter value"));
                };
                DMatrix::from_column_slice(2, 1, &[sample_time * h.cos(), sample_time * h.sin()])
            }
            MatrixMap::Function { f, .. } => f(lambda),
        };
        let (r, c) = self.shape();
        if out.nrows() != r || out.ncols() != c {
            return Err(Error::dim(r * c, out.nrows() * out.ncols(), "parameter-indexed matrix"));
        }
        Ok(out)
    }

    fn is_constant(&self) -> bool {
        matches!(self, MatrixMap::Constant(_))
    }
}

/// `N(mean, cov)` disturbance law.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::dim(p, cov.nrows(), "disturbance covariance"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("disturbance parameters must be finite"));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("disturbance covariance must be symmetric"));
        }
        if p > 0 && cov.clone().symmetric_eigenvalues().min() < -1e-10 * scale {
            return Err(Error::invalid("disturbance covariance must be positive semidefinite"));
        }
        Ok(GaussianSpec { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        GaussianSpec::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// The known parameter values `λ_0, λ_1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTrajectory {
    values: Vec<DVector<f64>>,
}

impl ParameterTrajectory {
    pub fn new(values: Vec<DVector<f64>>) -> Self {
        ParameterTrajectory { values }
    }

    pub fn constant(lambda: DVector<f64>, len: usize) -> Self {
        ParameterTrajectory {
            values: vec![lambda; len],
        }
    }

    /// Scalar parameters.
    pub fn from_scalars(values: &[f64]) -> Self {
        ParameterTrajectory {
            values: values.iter().map(|&v| DVector::from_element(1, v)).collect(),
        }
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn at(&self, t: usize) -> Result<&DVector<f64>> {
        self.values
            .get(t)
            .ok_or_else(|| Error::OutOfRange(format!("parameter trajectory has no value at t={t}")))
    }
}

/// Affine parameter-varying system with Gaussian disturbance.
#[derive(Debug, Clone)]
pub struct DPVModel {
    a: MatrixMap,
    b: Option<MatrixMap>,
    f: MatrixMap,
    disturbance: GaussianSpec,
    horizon: usize,
}

impl DPVModel {
    /// `b = None` means no input channel (`m = 0`).
    pub fn new(a: MatrixMap, b: Option<MatrixMap>, f: MatrixMap, disturbance: GaussianSpec, horizon: usize) -> Result<Self> {
        let (n, nc) = a.shape();
        if n == 0 || n != nc {
            return Err(Error::invalid(format!("A must be square and non-empty, got {n}x{nc}")));
        }
        if let Some(b) = &b {
            if b.shape().0 != n {
                return Err(Error::dim(n, b.shape().0, "rows of B"));
            }
        }
        let (fr, p) = f.shape();
        if fr != n {
            return Err(Error::dim(n, fr, "rows of F"));
        }
        if disturbance.dim() != p {
            return Err(Error::dim(p, disturbance.dim(), "disturbance dimension"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(DPVModel {
            a,
            b,
            f,
            disturbance,
            horizon,
        })
    }

    /// Time-invariant `x_{t+1} = A x_t + B u_t + F w_t`.
    pub fn constant(
        a: DMatrix<f64>,
        b: Option<DMatrix<f64>>,
        f: DMatrix<f64>,
        disturbance: GaussianSpec,
        horizon: usize,
    ) -> Result<Self> {
        DPVModel::new(
            MatrixMap::Constant(a),
            b.map(MatrixMap::Constant),
            MatrixMap::Constant(f),
            disturbance,
            horizon,
        )
    }

    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    pub fn m(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.shape().1)
    }

    pub fn p(&self) -> usize {
        self.f.shape().1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn disturbance(&self) -> &GaussianSpec {
        &self.disturbance
    }

    pub fn a_at(&self, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.a.eval(lambda)
    }

    pub fn b_at(&self, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.b {
            Some(b) => b.eval(lambda),
            None => Ok(DMatrix::zeros(self.n(), 0)),
        }
    }

    pub fn f_at(&self, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.f.eval(lambda)
    }

    /// True when none of `A`, `B`, `F` depends on the parameter.
    pub fn is_parameter_free(&self) -> bool {
        self.a.is_constant() && self.f.is_constant() && self.b.as_ref().is_none_or(MatrixMap::is_constant)
    }

    fn check_tau(&self, tau: usize, traj: &ParameterTrajectory) -> Result<()> {
        if tau > self.horizon {
            return Err(Error::OutOfRange(format!("tau={tau} exceeds horizon {}", self.horizon)));
        }
        if traj.len() < tau {
            return Err(Error::OutOfRange(format!(
                "parameter trajectory has {} values, tau={tau} needs {tau}",
                traj.len()
            )));
        }
        Ok(())
    }

    /// One step of the dynamics with explicit input and disturbance.
    pub fn step(&self, x: &DVector<f64>, lambda: &DVector<f64>, u: Option<&DVector<f64>>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let mut next = self.a_at(lambda)? * x + self.f_at(lambda)? * w;
        if self.m() > 0 {
            let u = u.ok_or_else(|| Error::invalid("input required"))?;
            next += self.b_at(lambda)? * u;
        }
        Ok(next)
    }

    /// `𝒜(i, j) = A(λ_{j−1}) ⋯ A(λ_i)`, identity when `i = j`.
    pub fn concat_a(&self, i: usize, j: usize, traj: &ParameterTrajectory) -> Result<DMatrix<f64>> {
        if i > j || j > self.horizon {
            return Err(Error::OutOfRange(format!("need 0 <= i <= j <= N, got i={i}, j={j}")));
        }
        let mut prod = DMatrix::identity(self.n(), self.n());
        for t in i..j {
            prod = self.a_at(traj.at(t)?)? * prod;
        }
        Ok(prod)
    }

    /// Blocks `[𝒜(τ,τ)M(λ_{τ−1}) … 𝒜(1,τ)M(λ₀)]`: the newest step is leftmost.
    fn concat_generic(&self, tau: usize, traj: &ParameterTrajectory, map: impl Fn(&DVector<f64>) -> Result<DMatrix<f64>>, cols: usize) -> Result<DMatrix<f64>> {
        self.check_tau(tau, traj)?;
        let n = self.n();
        let mut out = DMatrix::<f64>::zeros(n, cols * tau);
        let mut acc = DMatrix::<f64>::identity(n, n);
        for k in 0..tau {
            let t = tau - 1 - k;
            let lam = traj.at(t)?;
            let block = &acc * map(lam)?;
            out.view_mut((0, k * cols), (n, cols)).copy_from(&block);
            acc *= self.a_at(lam)?;
        }
        Ok(out)
    }

    /// `𝒞_W(τ)`, mapping the stacked disturbances `[w_{τ−1}; …; w_0]` to `x_τ`.
    pub fn concat_cw(&self, tau: usize, traj: &ParameterTrajectory) -> Result<DMatrix<f64>> {
        if tau == 0 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        self.concat_generic(tau, traj, |l| self.f_at(l), self.p())
    }

    /// `𝒞_U(τ)`, same layout as [`DPVModel::concat_cw`] with `B`.
    pub fn concat_cu(&self, tau: usize, traj: &ParameterTrajectory) -> Result<DMatrix<f64>> {
        if tau == 0 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        self.concat_generic(tau, traj, |l| self.b_at(l), self.m())
    }

    /// Disturbance-free state `𝒜(0,τ)x₀ + 𝒞_U(τ)Ū`. `inputs` are in time
    /// order `u_0, …, u_{τ−1}` and ignored when the model has no input.
    pub fn unperturbed_state(&self, tau: usize, x0: &DVector<f64>, traj: &ParameterTrajectory, inputs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if x0.len() != self.n() {
            return Err(Error::dim(self.n(), x0.len(), "initial state"));
        }
        self.check_tau(tau, traj)?;
        let mut x = self.concat_a(0, tau, traj)? * x0;
        let m = self.m();
        if m > 0 {
            if inputs.len() < tau {
                return Err(Error::OutOfRange(format!("{} inputs given, tau={tau} needs {tau}", inputs.len())));
            }
            if let Some(bad) = inputs.iter().find(|u| u.len() != m) {
                return Err(Error::dim(m, bad.len(), "input"));
            }
            let cu = self.concat_cu(tau, traj)?;
            // stacked newest-first to match the column layout
            let mut ubar = DVector::zeros(m * tau);
            for k in 0..tau {
                ubar.rows_mut(k * m, m).copy_from(&inputs[tau - 1 - k]);
            }
            x += cu * ubar;
        }
        Ok(x)
    }
}

/// Row-stochastic transition matrix on the discrete states `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    states: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl MarkovChain {
    pub fn new(states: Vec<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        let q = states.len();
        if q == 0 {
            return Err(Error::invalid("discrete state set is empty"));
        }
        if matrix.nrows() != q || matrix.ncols() != q {
            return Err(Error::dim(q, matrix.nrows(), "transition matrix"));
        }
        if matrix.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("transition probabilities must be finite and non-negative"));
        }
        for (i, row) in matrix.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!("row {i} of the transition matrix sums to {s}")));
            }
        }
        Ok(MarkovChain { states, matrix })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, q: f64) -> Option<usize> {
        self.states.iter().position(|&s| s == q)
    }
}

/// The parameter update `λ_{t+1} = l_λ(σ_{t+1}, t, λ_t)`.
#[derive(Clone)]
pub enum ParamUpdate {
    /// `λ_{t+1} = λ_t + T_s σ_{t+1}` on a scalar heading.
    Heading { sample_time: f64 },
    /// `λ_{t+1} = σ_{t+1}` (Markov jump systems).
    Mode,
    Function(UpdateFn),
}

impl fmt::Debug for ParamUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamUpdate::Heading { sample_time } => f.debug_struct("Heading").field("sample_time", sample_time).finish(),
            ParamUpdate::Mode => write!(f, "Mode"),
            ParamUpdate::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl ParamUpdate {
    pub fn apply(&self, q_next: f64, t: usize, lambda: &DVector<f64>) -> DVector<f64> {
        match self {
            ParamUpdate::Heading { sample_time } => lambda.map(|l| l + sample_time * q_next),
            ParamUpdate::Mode => DVector::from_element(1, q_next),
            ParamUpdate::Function(f) => f(q_next, t, lambda),
        }
    }
}

/// A discrete-state sequence `q̄_τ = [q_1 … q_τ]` with its probability.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DiscreteSequence {
    /// Indices into the chain's state list.
    pub indices: Vec<usize>,
    pub states: Vec<f64>,
    pub probability: f64,
}

/// Markov-switched system whose modes drive the parameter of a DPV.
#[derive(Debug, Clone)]
pub struct DMSPModel {
    subsystem: DPVModel,
    chain: MarkovChain,
    switch_period: usize,
    switch_offset: usize,
    update: ParamUpdate,
    q0: usize,
    lambda0: DVector<f64>,
}

impl DMSPModel {
    /// `q0` is the index of the initial discrete state. The state switches
    /// at `t = k τ_s + offset`, `k >= 1`.
    pub fn new(
        subsystem: DPVModel,
        chain: MarkovChain,
        switch_period: usize,
        switch_offset: usize,
        update: ParamUpdate,
        q0: usize,
        lambda0: DVector<f64>,
    ) -> Result<Self> {
        if switch_period == 0 {
            return Err(Error::invalid("switch period must be at least 1"));
        }
        if switch_offset > 1 {
            return Err(Error::invalid("switch offset must be 0 or 1"));
        }
        if q0 >= chain.len() {
            return Err(Error::OutOfRange(format!("initial discrete state index {q0}")));
        }
        Ok(DMSPModel {
            subsystem,
            chain,
            switch_period,
            switch_offset,
            update,
            q0,
            lambda0,
        })
    }

    pub fn subsystem(&self) -> &DPVModel {
        &self.subsystem
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn switch_period(&self) -> usize {
        self.switch_period
    }

    pub fn switch_offset(&self) -> usize {
        self.switch_offset
    }

    pub fn q0(&self) -> usize {
        self.q0
    }

    pub fn lambda0(&self) -> &DVector<f64> {
        &self.lambda0
    }

    pub fn update(&self) -> &ParamUpdate {
        &self.update
    }

    /// Whether `σ_{t+1}` is drawn from the chain (otherwise it holds).
    pub fn switches_at(&self, t: usize) -> bool {
        t >= self.switch_period + self.switch_offset && (t - self.switch_offset) % self.switch_period == 0
    }

    /// `P{σ_{t+1} = j | σ_t = i}`.
    pub fn kernel(&self, t: usize, i: usize, j: usize) -> f64 {
        if self.switches_at(t) {
            self.chain.matrix[(i, j)]
        } else if i == j {
            1.0
        } else {
            0.0
        }
    }

    /// Probability of the index sequence `[q_1 … q_τ]` from `q_0`.
    pub fn sequence_probability(&self, indices: &[usize]) -> f64 {
        let mut prev = self.q0;
        let mut p = 1.0;
        for (t, &q) in indices.iter().enumerate() {
            p *= self.kernel(t, prev, q);
            prev = q;
        }
        p
    }

    /// All sequences `[q_1 … q_τ]` with positive probability. Only switch
    /// instants branch, so the count is at most `|Q|^{#switches}`.
    pub fn enumerate_sequences(&self, tau: usize) -> Result<Vec<DiscreteSequence>> {
        if tau > self.subsystem.horizon() {
            return Err(Error::OutOfRange(format!("tau={tau} exceeds horizon {}", self.subsystem.horizon())));
        }
        let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::with_capacity(tau), 1.0)];
        for t in 0..tau {
            if self.switches_at(t) {
                let mut next = Vec::with_capacity(partial.len() * self.chain.len());
                for (seq, p) in &partial {
                    let cur = seq.last().copied().unwrap_or(self.q0);
                    for j in 0..self.chain.len() {
                        let w = self.chain.matrix[(cur, j)];
                        if w > 0.0 {
                            let mut s = seq.clone();
                            s.push(j);
                            next.push((s, p * w));
                        }
                    }
                }
                partial = next;
            } else {
                for (seq, _) in &mut partial {
                    let cur = seq.last().copied().unwrap_or(self.q0);
                    seq.push(cur);
                }
            }
        }
        Ok(partial
            .into_iter()
            .map(|(indices, probability)| DiscreteSequence {
                states: indices.iter().map(|&i| self.chain.states[i]).collect(),
                indices,
                probability,
            })
            .collect())
    }

    /// `λ_0, …, λ_τ` for discrete values `[q_1 … q_τ]`.
    pub fn trajectory_for_states(&self, states: &[f64]) -> ParameterTrajectory {
        let mut values = Vec::with_capacity(states.len() + 1);
        values.push(self.lambda0.clone());
        for (t, &q) in states.iter().enumerate() {
            let next = self.update.apply(q, t, &values[t]);
            values.push(next);
        }
        ParameterTrajectory { values }
    }

    /// The map `L_λ` applied to a discrete sequence.
    pub fn parameter_trajectory(&self, seq: &DiscreteSequence) -> ParameterTrajectory {
        self.trajectory_for_states(&seq.states)
    }
}

/// Settings for [`unicycle_dmsp`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleParams {
    pub sample_time: f64,
    pub turning_rates: Vec<f64>,
    pub transition: DMatrix<f64>,
    pub speed_mean: f64,
    pub speed_var: f64,
    pub heading0: f64,
    pub turning_rate0: f64,
    pub switch_period: usize,
    pub horizon: usize,
}

impl UnicycleParams {
    /// `T_s = 0.05`, rates `{−5, −2.5, 0, 2.5, 5}`, speed `N(5, 1)`,
    /// heading `π/4`, initial rate 0, switching every 5 steps.
    pub fn with_transition(transition: DMatrix<f64>) -> Self {
        UnicycleParams {
            sample_time: 0.05,
            turning_rates: vec![-5.0, -2.5, 0.0, 2.5, 5.0],
            transition,
            speed_mean: 5.0,
            speed_var: 1.0,
            heading0: std::f64::consts::FRAC_PI_4,
            turning_rate0: 0.0,
            switch_period: 5,
            horizon: 50,
        }
    }
}

/// Every turning rate equally likely.
pub fn uniform_turning() -> DMatrix<f64> {
    DMatrix::from_element(5, 5, 0.2)
}

/// Rates drawn with probabilities `[0.5, 0.47, 0.03, 0, 0]` (column order
/// follows the rate list) regardless of the current rate.
pub fn biased_turning() -> DMatrix<f64> {
    DMatrix::from_fn(5, 5, |_, j| [0.5, 0.47, 0.03, 0.0, 0.0][j])
}

/// Unicycle with heading as parameter and previous turning rate as mode:
/// `x_{t+1} = x_t + T_s [cos λ_t, sin λ_t]ᵀ v_t`, `λ_{t+1} = λ_t + T_s σ_{t+1}`.
pub fn unicycle_dmsp(params: &UnicycleParams) -> Result<DMSPModel> {
    if !(params.sample_time > 0.0) {
        return Err(Error::invalid("sample time must be positive"));
    }
    if !(params.speed_var >= 0.0) {
        return Err(Error::invalid("speed variance must be non-negative"));
    }
    let sub = DPVModel::new(
        MatrixMap::Constant(DMatrix::identity(2, 2)),
        None,
        MatrixMap::Heading {
            sample_time: params.sample_time,
        },
        GaussianSpec::scalar(params.speed_mean, params.speed_var)?,
        params.horizon,
    )?;
    let chain = MarkovChain::new(params.turning_rates.clone(), params.transition.clone())?;
    let q0 = chain
        .index_of(params.turning_rate0)
        .ok_or_else(|| Error::invalid("initial turning rate is not an admissible rate"))?;
    DMSPModel::new(
        sub,
        chain,
        params.switch_period,
        1,
        ParamUpdate::Heading {
            sample_time: params.sample_time,
        },
        q0,
        DVector::from_element(1, params.heading0),
    )
}
