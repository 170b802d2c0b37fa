//! Probabilistic occupancy `φ(y) = P{x_τ ∈ y ⊕ (−𝒪(0))}`: the chance that
//! the obstacle body, centred on its random state, covers the point `y`.

use crate::dynamics::{DMSPModel, DPVModel, DiscreteSequence, ParameterTrajectory};
use crate::fsr::{fsr_dmsp, fsr_gaussian_dpv, mvn_shape_prob, GaussianState};
use crate::geometry::ConvexShape;
use crate::numeric::Estimate;
use crate::{Error, Result};
use nalgebra::DVector;

/// Absolute tolerance of the probability evaluations inside the maximizer.
const SEARCH_TOL: f64 = 1e-11;
const SEARCH_STEP_MIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum ObstacleDynamics {
    Dpv { model: DPVModel, trajectory: ParameterTrajectory },
    Dmsp(DMSPModel),
}

/// A rigid-body obstacle: its (robot-augmented) shape at the origin, its
/// dynamics and initial condition.
#[derive(Debug, Clone)]
pub struct ObstacleInstance {
    shape: ConvexShape,
    dynamics: ObstacleDynamics,
    x0: DVector<f64>,
    inputs: Vec<DVector<f64>>,
}

impl ObstacleInstance {
    pub fn new(shape: ConvexShape, dynamics: ObstacleDynamics, x0: DVector<f64>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        let model = match &dynamics {
            ObstacleDynamics::Dpv { model, .. } => model,
            ObstacleDynamics::Dmsp(m) => m.subsystem(),
        };
        if shape.dim() != model.n() {
            return Err(Error::dim(model.n(), shape.dim(), "obstacle shape"));
        }
        if x0.len() != model.n() {
            return Err(Error::dim(model.n(), x0.len(), "initial state"));
        }
        check_compact(&shape)?;
        Ok(ObstacleInstance {
            shape,
            dynamics,
            x0,
            inputs,
        })
    }

    pub fn dpv(shape: ConvexShape, model: DPVModel, trajectory: ParameterTrajectory, x0: DVector<f64>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        ObstacleInstance::new(shape, ObstacleDynamics::Dpv { model, trajectory }, x0, inputs)
    }

    pub fn dmsp(shape: ConvexShape, model: DMSPModel, x0: DVector<f64>, inputs: Vec<DVector<f64>>) -> Result<Self> {
        ObstacleInstance::new(shape, ObstacleDynamics::Dmsp(model), x0, inputs)
    }

    pub fn shape(&self) -> &ConvexShape {
        &self.shape
    }

    pub fn dynamics(&self) -> &ObstacleDynamics {
        &self.dynamics
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Same obstacle started from `x0`.
    pub fn with_x0(&self, x0: DVector<f64>) -> Result<Self> {
        ObstacleInstance::new(self.shape.clone(), self.dynamics.clone(), x0, self.inputs.clone())
    }

    /// Occupancy of a DPV obstacle at time `tau`.
    pub fn occupancy(&self, tau: usize) -> Result<Occupancy> {
        match &self.dynamics {
            ObstacleDynamics::Dpv { model, trajectory } => {
                let state = fsr_gaussian_dpv(model, tau, &self.x0, trajectory, &self.inputs)?;
                let nodist = model.unperturbed_state(tau, &self.x0, trajectory, &self.inputs)?;
                Occupancy::new(state, self.shape.clone(), nodist)
            }
            ObstacleDynamics::Dmsp(_) => Err(Error::Precondition("switched obstacle: use dmsp_occupancy".into())),
        }
    }

    /// Per-sequence occupancies of a DMSP obstacle at time `tau`.
    pub fn dmsp_occupancy(&self, tau: usize) -> Result<DmspOccupancy> {
        let ObstacleDynamics::Dmsp(model) = &self.dynamics else {
            return Err(Error::Precondition("obstacle is not switched: use occupancy".into()));
        };
        let summary = fsr_dmsp(model, tau, &self.x0, &self.inputs)?;
        let pieces = summary
            .entries
            .into_iter()
            .map(|e| {
                let occ = Occupancy::new(e.state, self.shape.clone(), e.set.anchor().clone())?;
                Ok((e.sequence, occ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DmspOccupancy { pieces })
    }
}

fn check_compact(shape: &ConvexShape) -> Result<()> {
    let n = shape.dim();
    match shape.bounding_box() {
        Ok(_) => {}
        Err(Error::UnboundedSupport(_)) => return Err(Error::Precondition("obstacle shape must be bounded".into())),
        Err(e) => return Err(e),
    }
    if n <= 3 {
        match shape.measure() {
            Ok(m) if m > 0.0 => Ok(()),
            Ok(_) | Err(Error::ZeroMeasure) => Err(Error::Precondition("obstacle shape must have an interior".into())),
            Err(e) => Err(e),
        }
    } else {
        Ok(())
    }
}

/// A point inside a compact convex shape.
fn interior_point(shape: &ConvexShape) -> Result<DVector<f64>> {
    Ok(match shape {
        ConvexShape::Box { center, .. } | ConvexShape::Ball { center, .. } => center.clone(),
        ConvexShape::VPolytope(v) => {
            let verts = v.vertices();
            verts.iter().fold(DVector::zeros(v.dim()), |a, p| a + p) / verts.len() as f64
        }
        ConvexShape::HPolytope(h) => {
            let verts = h.vertices();
            if verts.is_empty() {
                return Err(Error::EmptySet);
            }
            verts.iter().fold(DVector::zeros(h.dim()), |a, p| a + p) / verts.len() as f64
        }
    })
}

/// `φ` for one Gaussian reach law.
#[derive(Debug, Clone)]
pub struct Occupancy {
    state: GaussianState,
    shape: ConvexShape,
    /// `−𝒪(0)`, or `𝒪(0)` itself when the shape is symmetric about 0.
    body: ConvexShape,
    nodist: DVector<f64>,
}

impl Occupancy {
    pub fn new(state: GaussianState, shape: ConvexShape, nodist: DVector<f64>) -> Result<Self> {
        if shape.dim() != state.dim() {
            return Err(Error::dim(state.dim(), shape.dim(), "obstacle shape"));
        }
        let body = if shape.is_centrally_symmetric() { shape.clone() } else { shape.reflect() };
        Ok(Occupancy {
            state,
            shape,
            body,
            nodist,
        })
    }

    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn shape(&self) -> &ConvexShape {
        &self.shape
    }

    /// Disturbance-free state `x̄_nodist(τ)`.
    pub fn nodist(&self) -> &DVector<f64> {
        &self.nodist
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    /// `φ(y)` with absolute error at most `tol`.
    pub fn phi(&self, y: &DVector<f64>, tol: f64) -> Result<Estimate> {
        if y.len() != self.dim() {
            return Err(Error::dim(self.dim(), y.len(), "query point"));
        }
        mvn_shape_prob(&self.state, &self.body.translate(y), tol)
    }

    /// `φ(y)` through `y ⊕ (−𝒪(0))` even for symmetric shapes.
    pub fn phi_reflected(&self, y: &DVector<f64>, tol: f64) -> Result<Estimate> {
        mvn_shape_prob(&self.state, &self.shape.reflect().translate(y), tol)
    }

    /// Maximizer of `φ` and its value. For a shape `c + S` with `S = −S`
    /// the Gaussian's symmetry puts the peak at `mean + c`; otherwise a
    /// pattern search followed by golden-section refinement climbs the
    /// log-concave `φ`.
    pub fn y_max(&self) -> Result<(DVector<f64>, Estimate)> {
        if let Some(c) = self.shape.symmetry_center() {
            let y = self.state.mean() + c;
            let v = self.phi(&y, SEARCH_TOL)?;
            return Ok((y, v));
        }
        let n = self.dim();
        let mut y = self.state.mean() + interior_point(&self.shape)?;
        let mut best = self.phi(&y, SEARCH_TOL)?.value;
        let spread = self.state.variances().iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
        let mut step = (self.shape.diameter_bound()?.max(spread)) / 4.0;
        let dirs: Vec<DVector<f64>> = (0..n)
            .flat_map(|i| {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                [e.clone(), -e]
            })
            .collect();
        while step > SEARCH_STEP_MIN {
            let mut moved = false;
            for d in &dirs {
                let cand = &y + d * step;
                let v = self.phi(&cand, SEARCH_TOL)?.value;
                if v > best {
                    best = v;
                    y = cand;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        // coordinate-wise golden section within the final pattern bracket
        for i in 0..n {
            let f = |t: f64| -> Result<f64> {
                let mut c = y.clone();
                c[i] += t;
                Ok(self.phi(&c, SEARCH_TOL)?.value)
            };
            let t = golden_max(f, -4.0 * SEARCH_STEP_MIN, 4.0 * SEARCH_STEP_MIN, 1e-9)?;
            let mut c = y.clone();
            c[i] += t;
            let v = self.phi(&c, SEARCH_TOL)?.value;
            if v > best {
                best = v;
                y = c;
            }
        }
        let v = self.phi(&y, SEARCH_TOL)?;
        Ok((y, v))
    }
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok((a + b) / 2.0)
}

/// `φ_s(y) = Σ_q 𝕡(q) φ_q(y)` over the positive-probability sequences.
#[derive(Debug, Clone)]
pub struct DmspOccupancy {
    pub pieces: Vec<(DiscreteSequence, Occupancy)>,
}

impl DmspOccupancy {
    /// Each summand gets tolerance `tol / |𝒢|`.
    pub fn phi(&self, y: &DVector<f64>, tol: f64) -> Result<Estimate> {
        let k = self.pieces.len().max(1) as f64;
        let mut out = Estimate::exact(0.0);
        for (seq, occ) in &self.pieces {
            let e = occ.phi(y, tol / k)?;
            out.value += seq.probability * e.value;
            out.error += seq.probability * e.error;
            out.converged &= e.converged;
        }
        Ok(out.clamp_probability())
    }
}

/// `φ(y)` for a DPV obstacle at time `tau`.
pub fn phi_dpv(obs: &ObstacleInstance, y: &DVector<f64>, tau: usize, tol: f64) -> Result<Estimate> {
    obs.occupancy(tau)?.phi(y, tol)
}

/// `(y_max, φ(y_max))` for a DPV obstacle at time `tau`.
pub fn phi_max(obs: &ObstacleInstance, tau: usize) -> Result<(DVector<f64>, Estimate)> {
    obs.occupancy(tau)?.y_max()
}

/// `φ_s(y)` for a DMSP obstacle at time `tau`.
pub fn phi_dmsp(obs: &ObstacleInstance, y: &DVector<f64>, tau: usize, tol: f64) -> Result<Estimate> {
    obs.dmsp_occupancy(tau)?.phi(y, tol)
}
