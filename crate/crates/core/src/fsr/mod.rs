//! Forward stochastic reachability: the Gaussian law of `x_τ` for a DPV,
//! its support (an affine subspace), and the per-sequence mixture for a
//! DMSP.

mod mvn;

pub use mvn::{mvn_rect_prob, mvn_shape_prob};

use crate::dynamics::{DMSPModel, DPVModel, DiscreteSequence, ParameterTrajectory};
use crate::geometry::Ellipsoid;
use crate::numeric::norm_quantile;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};
use std::f64::consts::PI;

/// Relative eigenvalue threshold below which a covariance direction is null.
pub const RANK_TOL: f64 = 1e-10;

/// Rank of `m` by singular values, relative to `max(1, σ_max)`.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let tol = RANK_TOL * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

/// `N(mean, cov)` with its range decomposition `cov = V diag(λ) Vᵀ`,
/// `V` orthonormal `n × rank`, `λ > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    basis: DMatrix<f64>,
    variances: DVector<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::invalid("empty mean"));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::dim(n, cov.nrows(), "covariance"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("Gaussian parameters must be finite"));
        }
        let cov = (&cov + cov.transpose()) / 2.0;
        let tol = RANK_TOL * cov.trace().max(1.0);
        let eig = cov.clone().symmetric_eigen();
        if eig.eigenvalues.min() < -1e-8 * cov.trace().max(1.0) {
            return Err(Error::invalid("covariance is not positive semidefinite"));
        }
        let mut keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > tol).collect();
        // deterministic order: largest variance first
        keep.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let basis = DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
        let variances = DVector::from_iterator(keep.len(), keep.iter().map(|&i| eig.eigenvalues[i]));
        Ok(GaussianState {
            mean,
            cov,
            basis,
            variances,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim()
    }

    /// Orthonormal basis of the covariance range (`n × rank`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Variances along the basis columns, in decreasing order.
    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn translate(&self, v: &DVector<f64>) -> GaussianState {
        GaussianState {
            mean: &self.mean + v,
            ..self.clone()
        }
    }

    /// Same law with null directions inflated to variance `eps`.
    pub fn regularized(&self, eps: f64) -> Result<GaussianState> {
        if self.is_full_rank() {
            return Ok(self.clone());
        }
        let n = self.dim();
        let proj = &self.basis * self.basis.transpose();
        let null = DMatrix::<f64>::identity(n, n) - proj;
        GaussianState::new(self.mean.clone(), &self.cov + null * eps)
    }

    /// `log |2π Σ|` for a full-rank state.
    pub fn log_det_2pi(&self) -> Result<f64> {
        self.require_full_rank()?;
        Ok(self.variances.iter().map(|l| (2.0 * PI * l).ln()).sum())
    }

    fn require_full_rank(&self) -> Result<()> {
        if self.is_full_rank() {
            Ok(())
        } else {
            Err(Error::SingularCovariance {
                rank: self.rank(),
                dim: self.dim(),
            })
        }
    }

    /// Density at `y` (full-rank states only).
    pub fn density(&self, y: &DVector<f64>) -> Result<f64> {
        self.require_full_rank()?;
        if y.len() != self.dim() {
            return Err(Error::dim(self.dim(), y.len(), "density query"));
        }
        let z = self.basis.transpose() * (y - &self.mean);
        let q: f64 = z.iter().zip(self.variances.iter()).map(|(zi, li)| zi * zi / li).sum();
        Ok((-0.5 * q - 0.5 * self.log_det_2pi()?).exp())
    }

    /// `sup ψ = 1/√|2πΣ|`.
    pub fn peak_density(&self) -> Result<f64> {
        Ok((-0.5 * self.log_det_2pi()?).exp())
    }

    /// Boundary of the planar region holding probability `prob`: an ellipse
    /// for rank 2, a segment for rank 1, the mean for rank 0.
    pub fn confidence_polyline(&self, prob: f64, count: usize) -> Result<Vec<DVector<f64>>> {
        if self.dim() != 2 {
            return Err(Error::Unsupported("confidence regions are planar only".into()));
        }
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::invalid("confidence level must lie in (0, 1)"));
        }
        match self.rank() {
            0 => Ok(vec![self.mean.clone()]),
            1 => {
                let half = norm_quantile(0.5 + prob / 2.0) * self.variances[0].sqrt();
                let dir = self.basis.column(0).into_owned();
                Ok(vec![&self.mean - &dir * half, &self.mean + &dir * half])
            }
            _ => {
                // chi-square quantile with two degrees of freedom
                let r2 = -2.0 * (1.0 - prob).ln();
                Ellipsoid::new(self.mean.clone(), &self.cov * r2)?.boundary_polyline(count)
            }
        }
    }
}

impl Serialize for GaussianState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Record<'a> {
            mean: &'a [f64],
            cov: Vec<Vec<f64>>,
            rank: usize,
        }
        Record {
            mean: self.mean.as_slice(),
            cov: self.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            rank: self.rank(),
        }
        .serialize(s)
    }
}

/// `{anchor} ⊕ range(generator)`: the support of `x_τ` under a disturbance
/// with full support.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineReachSet {
    anchor: DVector<f64>,
    generator: DMatrix<f64>,
    basis: DMatrix<f64>,
}

impl AffineReachSet {
    pub fn new(anchor: DVector<f64>, generator: DMatrix<f64>) -> Result<Self> {
        if generator.nrows() != anchor.len() {
            return Err(Error::dim(anchor.len(), generator.nrows(), "generator rows"));
        }
        let basis = if generator.ncols() == 0 {
            DMatrix::zeros(anchor.len(), 0)
        } else {
            let svd = generator.clone().svd(true, false);
            let tol = RANK_TOL * svd.singular_values.max().max(1.0);
            let u = svd.u.expect("requested U");
            let cols: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
            DMatrix::from_fn(anchor.len(), cols.len(), |r, c| u[(r, cols[c])])
        };
        Ok(AffineReachSet { anchor, generator, basis })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Orthonormal basis of the direction space.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Euclidean distance from `y` to the subspace.
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        let d = y - &self.anchor;
        (&d - &self.basis * (self.basis.transpose() * &d)).norm()
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.distance(y) <= tol
    }
}

/// `N(x̄_nodist + 𝒞_W(1⊗μ_w), 𝒞_W(I⊗Σ_w)𝒞_Wᵀ)`.
pub fn fsr_gaussian_dpv(
    model: &DPVModel,
    tau: usize,
    x0: &DVector<f64>,
    traj: &ParameterTrajectory,
    inputs: &[DVector<f64>],
) -> Result<GaussianState> {
    if tau == 0 {
        return Err(Error::invalid("tau must be at least 1"));
    }
    let nodist = model.unperturbed_state(tau, x0, traj, inputs)?;
    let cw = model.concat_cw(tau, traj)?;
    let dist = model.disturbance();
    let p = model.p();
    let n = model.n();
    let mut mean = nodist;
    let mut cov = DMatrix::zeros(n, n);
    for k in 0..tau {
        let block = cw.columns(k * p, p);
        mean += &block * &dist.mean;
        cov += &block * &dist.cov * block.transpose();
    }
    GaussianState::new(mean, cov)
}

/// Support of `x_τ`: `{x̄_nodist} ⊕ range(𝒞_W)`.
pub fn fsr_set_dpv(
    model: &DPVModel,
    tau: usize,
    x0: &DVector<f64>,
    traj: &ParameterTrajectory,
    inputs: &[DVector<f64>],
) -> Result<AffineReachSet> {
    let anchor = model.unperturbed_state(tau, x0, traj, inputs)?;
    let cw = model.concat_cw(tau, traj)?;
    // a disturbance with degenerate covariance only reaches range(𝒞_W Σ_w^{1/2})
    let dist = model.disturbance();
    let p = model.p();
    let mut gen = DMatrix::zeros(model.n(), cw.ncols());
    let root = {
        let eig = dist.cov.clone().symmetric_eigen();
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt())) * eig.eigenvectors.transpose()
    };
    for k in 0..tau {
        let block = cw.columns(k * p, p) * &root;
        gen.columns_mut(k * p, p).copy_from(&block);
    }
    AffineReachSet::new(anchor, gen)
}

/// One discrete sequence with the DPV reach law it induces.
#[derive(Debug, Clone)]
pub struct HybridEntry {
    pub sequence: DiscreteSequence,
    pub trajectory: ParameterTrajectory,
    pub state: GaussianState,
    pub set: AffineReachSet,
}

/// Mixture over discrete sequences: `x_τ ~ Σ_q 𝕡(q) N(μ_q, Σ_q)`.
#[derive(Debug, Clone)]
pub struct HybridReachSummary {
    pub entries: Vec<HybridEntry>,
}

impl HybridReachSummary {
    pub fn mixture_mean(&self) -> DVector<f64> {
        let n = self.entries[0].state.dim();
        self.entries
            .iter()
            .fold(DVector::zeros(n), |acc, e| acc + e.state.mean() * e.sequence.probability)
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|e| e.sequence.probability).sum()
    }
}

/// Per-sequence reach laws. The DPV for sequence `q̄_τ` runs on the
/// parameters `λ_0 … λ_{τ−1}` generated from it.
pub fn fsr_dmsp(model: &DMSPModel, tau: usize, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<HybridReachSummary> {
    let sub = model.subsystem();
    let entries = model
        .enumerate_sequences(tau)?
        .into_iter()
        .map(|sequence| {
            let trajectory = model.parameter_trajectory(&sequence);
            let state = fsr_gaussian_dpv(sub, tau, x0, &trajectory, inputs)?;
            let set = fsr_set_dpv(sub, tau, x0, &trajectory, inputs)?;
            Ok(HybridEntry {
                sequence,
                trajectory,
                state,
                set,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HybridReachSummary { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{biased_turning, unicycle_dmsp, uniform_turning, GaussianSpec, UnicycleParams};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::FRAC_PI_4;

    fn unicycle() -> DMSPModel {
        unicycle_dmsp(&UnicycleParams::with_transition(uniform_turning())).unwrap()
    }

    #[test]
    fn straight_unicycle_closed_form() {
        let uni = unicycle();
        let traj = ParameterTrajectory::from_scalars(&[FRAC_PI_4; 3]);
        let g = fsr_gaussian_dpv(uni.subsystem(), 3, &DVector::zeros(2), &traj, &[]).unwrap();
        let h = FRAC_PI_4.cos();
        let m = 3.0 * 0.05 * 5.0 * h;
        assert!((g.mean()[0] - m).abs() < 1e-12 && (g.mean()[1] - m).abs() < 1e-12);
        assert!((m - 0.5303).abs() < 1e-4);
        for v in g.cov().iter() {
            assert!((v - 0.00375).abs() < 1e-12);
        }
        assert_eq!(g.rank(), 1);
        let dir = g.basis().column(0);
        assert!((dir[0].abs() - h).abs() < 1e-12 && (dir[1].abs() - h).abs() < 1e-12);
    }

    #[test]
    fn straight_unicycle_against_sampling() {
        // independent simulation of the unicycle with ChaCha draws
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ns = 200_000;
        let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..ns {
            let (mut x, mut y) = (0.0f64, 0.0f64);
            for _ in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                let v = 5.0 + z;
                x += 0.05 * FRAC_PI_4.cos() * v;
                y += 0.05 * FRAC_PI_4.sin() * v;
            }
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        let n = ns as f64;
        let (mx, my) = (sx / n, sy / n);
        let uni = unicycle();
        let traj = ParameterTrajectory::from_scalars(&[FRAC_PI_4; 3]);
        let g = fsr_gaussian_dpv(uni.subsystem(), 3, &DVector::zeros(2), &traj, &[]).unwrap();
        assert!((mx - g.mean()[0]).abs() / g.mean()[0] < 1e-2);
        assert!((my - g.mean()[1]).abs() / g.mean()[1] < 1e-2);
        let c = [sxx / n - mx * mx, sxy / n - mx * my, syy / n - my * my];
        for (est, want) in c.iter().zip([g.cov()[(0, 0)], g.cov()[(0, 1)], g.cov()[(1, 1)]]) {
            assert!((est - want).abs() / want < 1e-2);
        }
    }

    #[test]
    fn disturbance_free_and_random_walk() {
        let m = DPVModel::constant(
            DMatrix::identity(2, 2),
            None,
            DMatrix::zeros(2, 1),
            GaussianSpec::scalar(0.0, 1.0).unwrap(),
            5,
        )
        .unwrap();
        let traj = ParameterTrajectory::constant(DVector::zeros(1), 5);
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let g = fsr_gaussian_dpv(&m, 4, &x0, &traj, &[]).unwrap();
        assert_eq!(g.rank(), 0);
        assert_eq!(g.mean(), &x0);
        let s = fsr_set_dpv(&m, 4, &x0, &traj, &[]).unwrap();
        assert_eq!(s.dim(), 0);
        assert!(s.contains(&x0, 1e-12));

        let m = DPVModel::constant(
            DMatrix::identity(1, 1),
            None,
            DMatrix::identity(1, 1),
            GaussianSpec::scalar(0.0, 1.0).unwrap(),
            5,
        )
        .unwrap();
        let g = fsr_gaussian_dpv(&m, 4, &DVector::from_element(1, 3.0), &traj, &[]).unwrap();
        assert_eq!(g.mean()[0], 3.0);
        assert!((g.cov()[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reach_set_dimension() {
        let uni = unicycle();
        let mut seq = vec![0.0, 0.0];
        seq.extend([-5.0; 5]);
        let traj = uni.trajectory_for_states(&seq);
        let s2 = fsr_set_dpv(uni.subsystem(), 2, &DVector::zeros(2), &traj, &[]).unwrap();
        assert_eq!(s2.dim(), 1);
        let on_line = DVector::from_vec(vec![3.0, 3.0]);
        assert!(s2.contains(&on_line, 1e-9));
        assert!(!s2.contains(&DVector::from_vec(vec![3.0, 2.0]), 1e-3));
        let s4 = fsr_set_dpv(uni.subsystem(), 4, &DVector::zeros(2), &traj, &[]).unwrap();
        assert_eq!(s4.dim(), 2);
        for t in 1..=4 {
            let g = fsr_gaussian_dpv(uni.subsystem(), t, &DVector::zeros(2), &traj, &[]).unwrap();
            assert_eq!(g.rank(), if t < 4 { 1 } else { 2 });
        }
    }

    #[test]
    fn dmsp_summary() {
        let single = unicycle_dmsp(&UnicycleParams {
            turning_rates: vec![0.0],
            transition: DMatrix::identity(1, 1),
            ..UnicycleParams::with_transition(uniform_turning())
        })
        .unwrap();
        let x0 = DVector::from_vec(vec![10.0, 10.0]);
        let sum = fsr_dmsp(&single, 15, &x0, &[]).unwrap();
        assert_eq!(sum.entries.len(), 1);
        let traj = ParameterTrajectory::from_scalars(&[FRAC_PI_4; 15]);
        let direct = fsr_gaussian_dpv(single.subsystem(), 15, &x0, &traj, &[]).unwrap();
        assert!((sum.entries[0].state.mean() - direct.mean()).amax() < 1e-12);
        assert!((sum.entries[0].state.cov() - direct.cov()).amax() < 1e-12);

        let sum = fsr_dmsp(&unicycle(), 15, &x0, &[]).unwrap();
        assert_eq!(sum.entries.len(), 25);
        assert!(sum.entries.iter().all(|e| (e.sequence.probability - 0.04).abs() < 1e-15));
        assert!((sum.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dmsp_mixture_mean_against_simulation() {
        use rand::Rng;
        let model = unicycle_dmsp(&UnicycleParams::with_transition(biased_turning())).unwrap();
        let sum = fsr_dmsp(&model, 15, &DVector::from_vec(vec![10.0, 10.0]), &[]).unwrap();
        let mean = sum.mixture_mean();
        // hand-rolled simulation of the switched unicycle
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rates = [-5.0, -2.5, 0.0, 2.5, 5.0];
        let probs = [0.5, 0.47, 0.03, 0.0, 0.0];
        let ns = 50_000;
        let mut xs = Vec::with_capacity(ns);
        for _ in 0..ns {
            let (mut x, mut y, mut lam, mut q) = (10.0f64, 10.0f64, FRAC_PI_4, 0.0f64);
            for t in 0..15 {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += 0.05 * lam.cos() * (5.0 + z);
                y += 0.05 * lam.sin() * (5.0 + z);
                if t == 6 || t == 11 {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (k, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            q = rates[k];
                            break;
                        }
                    }
                }
                lam += 0.05 * q;
            }
            xs.push((x, y));
        }
        let n = ns as f64;
        for (axis, m) in [0usize, 1].iter().zip(mean.iter()) {
            let vals: Vec<f64> = xs.iter().map(|p| if *axis == 0 { p.0 } else { p.1 }).collect();
            let mu = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((mu - m).abs() <= 3.0 * sd / n.sqrt(), "axis {axis}: {mu} vs {m}");
        }
    }

    #[test]
    fn confidence_polylines() {
        let g = GaussianState::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let pts = g.confidence_polyline(0.99, 64).unwrap();
        let r = (-2.0 * 0.01f64.ln()).sqrt();
        assert!(pts.iter().all(|p| (p.norm() - r).abs() < 1e-9));
        let line = GaussianState::new(DVector::zeros(2), DMatrix::from_element(2, 2, 0.5)).unwrap();
        assert_eq!(line.rank(), 1);
        assert_eq!(line.confidence_polyline(0.99, 64).unwrap().len(), 2);
    }

    #[test]
    fn serializes_mean_cov_rank() {
        let g = GaussianState::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"mean":[1.0,2.0],"cov":[[1.0,0.0],[0.0,1.0]],"rank":2}"#);
    }
}
