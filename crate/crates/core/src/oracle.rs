//! Monte-Carlo ground truth: rollouts of the obstacle dynamics with sampled
//! disturbances, gridded occupancy counts and containment verdicts.
//!
//! Nothing here uses the closed-form reach law; disturbances are drawn
//! step by step in trajectory space so the checks are independent.

use crate::dynamics::{DMSPModel, DPVModel, GaussianSpec, ParameterTrajectory};
use crate::fsr::GaussianState;
use crate::geometry::ConvexShape;
use crate::occupancy::{ObstacleDynamics, ObstacleInstance};
use crate::occupyset::{DMSPCover, OccupySetApprox, Region};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub const DEFAULT_NS: usize = 100_000;
pub const DEFAULT_GRID: usize = 200;
/// Slack, in estimated standard errors, of the containment verdicts.
pub const SIGMA_SLACK: f64 = 3.0;

/// `L` with `L Lᵀ = Σ`; falls back to a symmetric square root for
/// singular `Σ`.
fn sqrt_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = cov.clone().cholesky() {
        return ch.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

struct Noise {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Noise {
    fn new(spec: &GaussianSpec) -> Self {
        Noise {
            mean: spec.mean.clone(),
            factor: sqrt_factor(&spec.cov),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z: DVector<f64> = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.factor * z
    }
}

fn rollout(
    model: &DPVModel,
    traj: &ParameterTrajectory,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    tau: usize,
    noise: &Noise,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let mut x = x0.clone();
    for t in 0..tau {
        let w = noise.draw(rng);
        x = model.step(&x, &traj.values()[t], inputs.get(t), &w)?;
    }
    Ok(x)
}

fn check_run(tau: usize, horizon: usize, traj_len: Option<usize>, ns: usize) -> Result<()> {
    if ns == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if tau > horizon {
        return Err(Error::OutOfRange(format!("tau={tau} exceeds horizon {horizon}")));
    }
    if let Some(len) = traj_len {
        if len < tau {
            return Err(Error::invalid(format!("parameter trajectory has {len} values, need {tau}")));
        }
    }
    Ok(())
}

/// `ns` independent draws of `x_τ` for a DPV.
pub fn sample_dpv(
    model: &DPVModel,
    traj: &ParameterTrajectory,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    tau: usize,
    ns: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    check_run(tau, model.horizon(), Some(traj.len()), ns)?;
    if model.m() > 0 && inputs.len() < tau {
        return Err(Error::invalid(format!("need {tau} inputs, got {}", inputs.len())));
    }
    let noise = Noise::new(model.disturbance());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ns).map(|_| rollout(model, traj, x0, inputs, tau, &noise, &mut rng)).collect()
}

/// `ns` independent draws of `x_τ` for a DMSP: each draw first samples the
/// mode sequence from the switching law, then rolls the DPV.
pub fn sample_dmsp(model: &DMSPModel, x0: &DVector<f64>, inputs: &[DVector<f64>], tau: usize, ns: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let sub = model.subsystem();
    check_run(tau, sub.horizon(), None, ns)?;
    let noise = Noise::new(sub.disturbance());
    let chain = model.chain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ns);
    let mut states = Vec::with_capacity(tau);
    for _ in 0..ns {
        states.clear();
        let mut cur = model.q0();
        for t in 0..tau {
            if model.switches_at(t) {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = chain.len() - 1;
                for j in 0..chain.len() {
                    acc += model.kernel(t, cur, j);
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                cur = next;
            }
            states.push(chain.states()[cur]);
        }
        let traj = model.trajectory_for_states(&states);
        out.push(rollout(sub, &traj, x0, inputs, tau, &noise, &mut rng)?);
    }
    Ok(out)
}

/// Draws of the obstacle state at time `tau`.
pub fn sample_trajectories(obs: &ObstacleInstance, tau: usize, ns: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    match obs.dynamics() {
        ObstacleDynamics::Dpv { model, trajectory } => sample_dpv(model, trajectory, obs.x0(), obs.inputs(), tau, ns, seed),
        ObstacleDynamics::Dmsp(model) => sample_dmsp(model, obs.x0(), obs.inputs(), tau, ns, seed),
    }
}

/// Sample mean and (unbiased) sample covariance.
pub fn sample_moments(samples: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("no samples"));
    };
    let n = first.len();
    let ns = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |a, s| a + s) / ns;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    let denom = (ns - 1.0).max(1.0);
    Ok((mean, cov / denom))
}

/// Planar membership test for `y − x ∈ 𝒪(0)` without allocation.
#[derive(Debug, Clone)]
enum Planar {
    Box { c: [f64; 2], a: f64 },
    Ball { c: [f64; 2], r2: f64 },
    Half { rows: Vec<[f64; 3]> },
}

impl Planar {
    fn new(shape: &ConvexShape) -> Result<Self> {
        if shape.dim() != 2 {
            return Err(Error::Unsupported("occupancy grids are planar".into()));
        }
        Ok(match shape {
            ConvexShape::Box { center, half_width } => Planar::Box {
                c: [center[0], center[1]],
                a: *half_width,
            },
            ConvexShape::Ball { center, radius } => Planar::Ball {
                c: [center[0], center[1]],
                r2: radius * radius,
            },
            other => {
                let h = other.to_hpolytope()?;
                let (a, b) = (h.a(), h.b());
                let rows = (0..a.nrows())
                    .map(|i| {
                        let scale = (a[(i, 0)].abs() + a[(i, 1)].abs() + b[i].abs()).max(1.0);
                        [a[(i, 0)], a[(i, 1)], b[i] + 1e-9 * scale]
                    })
                    .collect();
                Planar::Half { rows }
            }
        })
    }

    #[inline]
    fn contains(&self, dx: f64, dy: f64) -> bool {
        match self {
            Planar::Box { c, a } => (dx - c[0]).abs() <= *a && (dy - c[1]).abs() <= *a,
            Planar::Ball { c, r2 } => {
                let (u, v) = (dx - c[0], dy - c[1]);
                u * u + v * v <= *r2
            }
            Planar::Half { rows } => rows.iter().all(|r| r[0] * dx + r[1] * dy <= r[2]),
        }
    }
}

/// An axis-aligned window sampled at `nx × ny` nodes (ends included).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid("grid needs at least 2 nodes per axis"));
        }
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid window must be finite and non-degenerate"));
        }
        Ok(GridSpec { lo, hi, nx, ny })
    }

    /// Window `mean ± 4σ` widened by the shape's extent.
    pub fn around_gaussian(state: &GaussianState, shape: &ConvexShape, nx: usize, ny: usize) -> Result<Self> {
        let (slo, shi) = shape.bounding_box()?;
        let m = state.mean();
        let cov = state.cov();
        let sd = [cov[(0, 0)].max(0.0).sqrt(), cov[(1, 1)].max(0.0).sqrt()];
        let pad = |i: usize| 4.0 * sd[i];
        GridSpec::new(
            [m[0] - pad(0) + slo[0], m[1] - pad(1) + slo[1]],
            [m[0] + pad(0) + shi[0], m[1] + pad(1) + shi[1]],
            nx,
            ny,
        )
    }

    /// Window covering every sample widened by the shape's extent.
    pub fn around_samples(samples: &[DVector<f64>], shape: &ConvexShape, nx: usize, ny: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        let (slo, shi) = shape.bounding_box()?;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in samples {
            for i in 0..2 {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        GridSpec::new([lo[0] + slo[0], lo[1] + slo[1]], [hi[0] + shi[0], hi[1] + shi[1]], nx, ny)
    }

    pub fn dx(&self) -> f64 {
        (self.hi[0] - self.lo[0]) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.hi[1] - self.lo[1]) / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.lo[0] + i as f64 * self.dx(), self.lo[1] + j as f64 * self.dy()]
    }
}

/// Gridded estimate `φ̂` with standard errors `σ̂ = √(φ̂(1 − φ̂)/Ns)`.
/// Values are stored row by row (`j * nx + i`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub phi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub ns: usize,
    pub seed: Option<u64>,
}

impl OccupancyGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = j * self.spec.nx + i;
        (self.phi[k], self.stderr[k])
    }

    /// Index of the largest estimate.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .phi
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0;
        (k % self.spec.nx, k / self.spec.nx)
    }

    /// Rows `x,y,phi_hat,stderr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,phi_hat,stderr\n");
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let [x, y] = self.spec.node(i, j);
                let (p, s) = self.at(i, j);
                out.push_str(&format!("{x},{y},{p},{s}\n"));
            }
        }
        out
    }
}

fn stderr_of(phi: f64, ns: usize) -> f64 {
    (phi * (1.0 - phi) / ns as f64).sqrt()
}

/// Samples of `x_τ` paired with the body they carry.
#[derive(Debug, Clone)]
pub struct MonteCarloOccupancy {
    samples: Vec<DVector<f64>>,
    shape: ConvexShape,
    planar: Option<Planar>,
    seed: Option<u64>,
}

impl MonteCarloOccupancy {
    pub fn new(samples: Vec<DVector<f64>>, shape: ConvexShape, seed: Option<u64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != shape.dim()) {
            return Err(Error::dim(shape.dim(), bad.len(), "sample"));
        }
        let planar = if shape.dim() == 2 { Some(Planar::new(&shape)?) } else { None };
        Ok(MonteCarloOccupancy {
            samples,
            shape,
            planar,
            seed,
        })
    }

    /// Sample the obstacle at `tau`.
    pub fn simulate(obs: &ObstacleInstance, tau: usize, ns: usize, seed: u64) -> Result<Self> {
        MonteCarloOccupancy::new(sample_trajectories(obs, tau, ns, seed)?, obs.shape().clone(), Some(seed))
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn shape(&self) -> &ConvexShape {
        &self.shape
    }

    pub fn ns(&self) -> usize {
        self.samples.len()
    }

    /// `(φ̂(y), σ̂(y))`: the fraction of samples `x` with `y − x ∈ 𝒪(0)`.
    pub fn phi_hat(&self, y: &DVector<f64>) -> (f64, f64) {
        let hits = match &self.planar {
            Some(body) => self.samples.iter().filter(|x| body.contains(y[0] - x[0], y[1] - x[1])).count(),
            None => self.samples.iter().filter(|x| self.shape.contains(&(y - *x))).count(),
        };
        let p = hits as f64 / self.ns() as f64;
        (p, stderr_of(p, self.ns()))
    }

    pub fn grid(&self, spec: &GridSpec) -> Result<OccupancyGrid> {
        let mut grid = estimate_phi_grid(&self.samples, &self.shape, spec)?;
        grid.seed = self.seed;
        Ok(grid)
    }
}

/// Count, at every grid node `y`, the samples `x` with `y − x ∈ 𝒪(0)`.
/// Each sample only visits nodes inside the bounding box of `x + 𝒪(0)`;
/// membership is then tested exactly.
pub fn estimate_phi_grid(samples: &[DVector<f64>], shape: &ConvexShape, spec: &GridSpec) -> Result<OccupancyGrid> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let body = Planar::new(shape)?;
    let (slo, shi) = shape.bounding_box()?;
    let (dx, dy) = (spec.dx(), spec.dy());
    let mut counts = vec![0u32; spec.nx * spec.ny];
    let index_range = |lo: f64, hi: f64, origin: f64, step: f64, count: usize| -> Option<(usize, usize)> {
        let a = ((lo - origin) / step).ceil().max(0.0);
        let b = ((hi - origin) / step).floor().min((count - 1) as f64);
        (a <= b).then_some((a as usize, b as usize))
    };
    for s in samples {
        if s.len() != 2 {
            return Err(Error::dim(2, s.len(), "sample"));
        }
        let (x, y) = (s[0], s[1]);
        // one node of slack on each side guards against rounding at the edges
        let Some((i0, i1)) = index_range(x + slo[0] - dx, x + shi[0] + dx, spec.lo[0], dx, spec.nx) else { continue };
        let Some((j0, j1)) = index_range(y + slo[1] - dy, y + shi[1] + dy, spec.lo[1], dy, spec.ny) else { continue };
        for j in j0..=j1 {
            let gy = spec.lo[1] + j as f64 * dy - y;
            let row = &mut counts[j * spec.nx..(j + 1) * spec.nx];
            for (i, c) in row.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let gx = spec.lo[0] + i as f64 * dx - x;
                if body.contains(gx, gy) {
                    *c += 1;
                }
            }
        }
    }
    let ns = samples.len();
    let phi: Vec<f64> = counts.iter().map(|&c| c as f64 / ns as f64).collect();
    let stderr = phi.iter().map(|&p| stderr_of(p, ns)).collect();
    Ok(OccupancyGrid {
        spec: spec.clone(),
        phi,
        stderr,
        ns,
        seed: None,
    })
}

/// What a containment check is run against.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Single(&'a OccupySetApprox),
    Cover(&'a DMSPCover),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerViolation {
    pub vertex: Vec<f64>,
    pub phi_hat: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterViolation {
    pub node: [f64; 2],
    pub phi_hat: f64,
    pub stderr: f64,
}

/// Containment verdict of an approximation against the sampled occupancy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub alpha: f64,
    pub ns: usize,
    /// Nodes with `φ̂ ≥ α + 3σ̂`.
    pub nodes_above: usize,
    /// Inner vertices checked.
    pub vertices_checked: usize,
    pub inner_violations: Vec<InnerViolation>,
    pub outer_violations: Vec<OuterViolation>,
    pub pass: bool,
}

/// (a) inner vertices with `φ̂ < α − 3σ̂` (φ̂ evaluated at the vertex
/// itself); (b) grid nodes with `φ̂ ≥ α + 3σ̂` outside the outer set (or
/// outside every piece of a cover). A cover has no inner check.
pub fn contour_and_containment(mc: &MonteCarloOccupancy, grid: &OccupancyGrid, alpha: f64, target: Target<'_>) -> ContainmentReport {
    let mut inner_violations = Vec::new();
    let mut vertices_checked = 0;
    if let Target::Single(approx) = target {
        if let Some(Region::Set(inner)) = &approx.inner {
            for v in inner.vertices() {
                vertices_checked += 1;
                let (p, s) = mc.phi_hat(v);
                if p < alpha - SIGMA_SLACK * s {
                    inner_violations.push(InnerViolation {
                        vertex: v.iter().copied().collect(),
                        phi_hat: p,
                        stderr: s,
                    });
                }
            }
        }
    }
    let inside = |y: &DVector<f64>| -> bool {
        match target {
            Target::Single(a) => match &a.outer {
                Region::Set(h) => h.contains_with_tol(y, 1e-9),
                other => other.contains(y),
            },
            Target::Cover(c) => c.pieces.iter().any(|p| match &p.approx.outer {
                Region::Set(h) => h.contains_with_tol(y, 1e-9),
                other => other.contains(y),
            }),
        }
    };
    let mut outer_violations = Vec::new();
    let mut nodes_above = 0;
    for j in 0..grid.spec.ny {
        for i in 0..grid.spec.nx {
            let (p, s) = grid.at(i, j);
            if p > 0.0 && p >= alpha + SIGMA_SLACK * s {
                nodes_above += 1;
                let node = grid.spec.node(i, j);
                if !inside(&DVector::from_column_slice(&node)) {
                    outer_violations.push(OuterViolation { node, phi_hat: p, stderr: s });
                }
            }
        }
    }
    let pass = inner_violations.is_empty() && outer_violations.is_empty();
    ContainmentReport {
        alpha,
        ns: grid.ns,
        nodes_above,
        vertices_checked,
        inner_violations,
        outer_violations,
        pass,
    }
}
