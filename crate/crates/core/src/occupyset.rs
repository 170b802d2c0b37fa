//! Polytopic approximations of the α-occupied set `{y : φ(y) ≥ α}`:
//! projection-based inner/outer pairs, the Minkowski-sum outer bound, and
//! the union cover for switched obstacles.

use crate::dynamics::DiscreteSequence;
use crate::geometry::{
    convex_hull, gaussian_superlevel_ellipsoid, minkowski_support, planar_directions, HPolytope, Support, VPolytope,
};
use crate::occupancy::{DmspOccupancy, ObstacleInstance, Occupancy};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Variance given to null directions of a singular reach law before the
/// Minkowski bound is formed.
pub const EPS_SING: f64 = 1e-6;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_NDES: usize = 32;
pub const DEFAULT_TOL: f64 = 1e-6;
const SPHERE_SEED: u64 = 0x5eed_0f_5a3e;
const MAX_R_DOUBLINGS: usize = 4;
const MAX_RAY_DOUBLINGS: usize = 60;

/// A scalar function whose superlevel sets are convex.
pub trait LevelFunction {
    fn dim(&self) -> usize;
    fn level(&self, y: &DVector<f64>, tol: f64) -> Result<f64>;
}

impl LevelFunction for Occupancy {
    fn dim(&self) -> usize {
        Occupancy::dim(self)
    }

    fn level(&self, y: &DVector<f64>, tol: f64) -> Result<f64> {
        Ok(self.phi(y, tol)?.value)
    }
}

impl LevelFunction for DmspOccupancy {
    fn dim(&self) -> usize {
        self.pieces.first().map_or(0, |p| p.1.dim())
    }

    fn level(&self, y: &DVector<f64>, tol: f64) -> Result<f64> {
        Ok(self.phi(y, tol)?.value)
    }
}

/// Closure-backed level function, mostly for analytic checks.
pub struct FnLevel<F>(pub usize, pub F);

impl<F: Fn(&DVector<f64>) -> f64> LevelFunction for FnLevel<F> {
    fn dim(&self) -> usize {
        self.0
    }

    fn level(&self, y: &DVector<f64>, _tol: f64) -> Result<f64> {
        Ok((self.1)(y))
    }
}

/// A set that may also be one of the two trivial answers.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "set")]
pub enum Region<T> {
    Empty,
    All,
    Set(T),
}

impl<T> Region<T> {
    pub fn as_set(&self) -> Option<&T> {
        match self {
            Region::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Region::Empty)
    }

    pub fn is_all(&self) -> bool {
        matches!(self, Region::All)
    }
}

impl Region<HPolytope> {
    pub fn contains(&self, y: &DVector<f64>) -> bool {
        match self {
            Region::Empty => false,
            Region::All => true,
            Region::Set(h) => h.contains(y),
        }
    }
}

impl Region<VPolytope> {
    pub fn contains(&self, y: &DVector<f64>) -> bool {
        match self {
            Region::Empty => false,
            Region::All => true,
            Region::Set(v) => v.contains(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Projection,
    Minkowski,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxParams {
    pub alpha: f64,
    pub tau: Option<usize>,
    pub k: Option<usize>,
    pub r: Option<f64>,
    pub directions: Option<usize>,
    pub tol: f64,
}

/// Under/over-approximation of an α-occupied set. `inner` is `None` when
/// the method only bounds from outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupySetApprox {
    pub inner: Option<Region<VPolytope>>,
    pub outer: Region<HPolytope>,
    pub method: Method,
    pub params: ApproxParams,
    #[serde(serialize_with = "crate::geometry::ser_opt_vec")]
    pub y_max: Option<DVector<f64>>,
    pub phi_max: Option<f64>,
    pub provenance: Option<String>,
    pub warnings: Vec<String>,
}

impl OccupySetApprox {
    fn trivial(region_all: bool, method: Method, params: ApproxParams) -> Self {
        let (inner, outer) = if region_all { (Region::All, Region::All) } else { (Region::Empty, Region::Empty) };
        OccupySetApprox {
            inner: (method == Method::Projection || region_all || inner.is_empty()).then_some(inner),
            outer,
            method,
            params,
            y_max: None,
            phi_max: None,
            provenance: None,
            warnings: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    /// Inner vertices that fall outside the outer polytope (should be none).
    pub fn inner_outside_outer(&self, slack: f64) -> Vec<DVector<f64>> {
        match (&self.inner, &self.outer) {
            (Some(Region::Set(v)), Region::Set(h)) => {
                v.vertices().iter().filter(|p| !h.contains_with_tol(p, slack)).cloned().collect()
            }
            _ => Vec::new(),
        }
    }
}

/// `K` points on the sphere of radius `r` about `center`: equal angles from
/// `+e1` in the plane, a Fibonacci lattice in 3-D, normalized Gaussian
/// draws otherwise.
pub fn sample_sphere(center: &DVector<f64>, r: f64, k: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let n = center.len();
    if n == 0 {
        return Err(Error::invalid("zero-dimensional sphere"));
    }
    if k < n + 1 {
        return Err(Error::invalid(format!("need at least {} sphere samples, got {k}", n + 1)));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    let unit: Vec<DVector<f64>> = match n {
        1 => (0..k).map(|i| DVector::from_element(1, if i % 2 == 0 { 1.0 } else { -1.0 })).collect(),
        2 => planar_directions(k),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..k)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    DVector::from_vec(vec![rho * t.cos(), rho * t.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..k)
                .map(|_| loop {
                    let g: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let norm = g.norm();
                    if norm > 1e-12 {
                        break g / norm;
                    }
                })
                .collect()
        }
    };
    Ok(unit.into_iter().map(|u| center + u * r).collect())
}

/// Default outer-bound directions: equal angles in the plane, a sphere
/// sample of `min(2n², 64)` points above.
pub fn default_directions(n: usize) -> Result<Vec<DVector<f64>>> {
    if n == 2 {
        return Ok(planar_directions(DEFAULT_NDES));
    }
    let k = (2 * n * n).min(64).max(n + 1);
    sample_sphere(&DVector::zeros(n), 1.0, k, SPHERE_SEED)
}

/// Last point of the ray `start + t·dir` (`t ∈ [0, t_out]`) still in
/// `{f ≥ α}`, given `f(start) ≥ α > f(start + t_out·dir)`.
fn ray_boundary<L: LevelFunction + ?Sized>(
    f: &L,
    alpha: f64,
    start: &DVector<f64>,
    dir: &DVector<f64>,
    mut t_in: f64,
    mut t_out: f64,
    tol_phi: f64,
    tol_geo: f64,
) -> Result<DVector<f64>> {
    let eval_tol = tol_phi / 4.0;
    let mut v_in = f.level(&(start + dir * t_in), eval_tol)?;
    let scale = dir.norm();
    while (t_out - t_in) * scale > tol_geo && v_in - alpha > tol_phi {
        let mid = 0.5 * (t_in + t_out);
        let v = f.level(&(start + dir * mid), eval_tol)?;
        if v >= alpha {
            t_in = mid;
            v_in = v;
        } else {
            t_out = mid;
        }
    }
    Ok(start + dir * t_in)
}

/// Boundary point on the ray from `y_int` through `z`.
fn radial_boundary<L: LevelFunction + ?Sized>(
    f: &L,
    alpha: f64,
    y_int: &DVector<f64>,
    z: &DVector<f64>,
    tol_phi: f64,
    tol_geo: f64,
) -> Result<DVector<f64>> {
    let d = z - y_int;
    let len = d.norm();
    if len == 0.0 {
        return Ok(y_int.clone());
    }
    let dir = d / len;
    let mut t_out = len;
    let mut t_in = 0.0;
    let mut tries = 0;
    while f.level(&(y_int + &dir * t_out), tol_phi / 4.0)? >= alpha {
        t_in = t_out;
        t_out *= 2.0;
        tries += 1;
        if tries > MAX_RAY_DOUBLINGS {
            return Err(Error::Precondition("level set is unbounded along a probe ray".into()));
        }
    }
    ray_boundary(f, alpha, y_int, &dir, t_in, t_out, tol_phi, tol_geo)
}

/// Orthonormal basis of the complement of `normal`.
fn tangent_basis(normal: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = normal.len();
    let u = normal / normal.norm();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mut t = &e - &u * u.dot(&e);
        for b in &out {
            t -= b * b.dot(&t);
        }
        let norm = t.norm();
        if norm > 1e-8 {
            out.push(t / norm);
        }
        if out.len() + 1 == n {
            break;
        }
    }
    out
}

/// Euclidean projection of an outside point `p` onto `{f ≥ α}`: bisection
/// along `[y_int, p]` to the boundary, then a tangential pattern search on
/// the boundary for the point nearest `p`. `tol` is split evenly between
/// the level tolerance and the geometric one.
pub fn project_to_levelset<L: LevelFunction + ?Sized>(
    p: &DVector<f64>,
    f: &L,
    alpha: f64,
    y_int: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let n = f.dim();
    if p.len() != n || y_int.len() != n {
        return Err(Error::dim(n, p.len().min(y_int.len()), "projection points"));
    }
    let tol_phi = tol / 2.0;
    let tol_geo = tol / 2.0;
    let v_int = f.level(y_int, tol_phi / 4.0)?;
    if v_int <= alpha {
        return Err(Error::NoInterior { value: v_int, alpha });
    }
    let v_p = f.level(p, tol_phi / 4.0)?;
    if v_p >= alpha {
        if v_p - alpha <= tol_phi {
            return Ok(p.clone());
        }
        return Err(Error::invalid("point to project lies inside the level set"));
    }
    let mut y = ray_boundary(f, alpha, y_int, &(p - y_int), 0.0, 1.0, tol_phi, tol_geo)?;
    if n == 1 {
        return Ok(y);
    }
    let mut dist = (p - &y).norm();
    let mut step = 0.25 * (p - y_int).norm();
    while step > tol_geo {
        let normal = p - &y;
        if normal.norm() <= tol_geo {
            break;
        }
        let mut moved = false;
        for t in tangent_basis(&normal) {
            for sign in [1.0, -1.0] {
                let cand = radial_boundary(f, alpha, y_int, &(&y + &t * (sign * step)), tol_phi, tol_geo)?;
                let d = (p - &cand).norm();
                if d < dist {
                    y = cand;
                    dist = d;
                    moved = true;
                    break;
                }
            }
            if moved {
                break;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    Ok(y)
}

/// Result of [`tight_poly_pair`].
#[derive(Debug, Clone)]
pub struct TightPair {
    pub inner: VPolytope,
    pub outer: HPolytope,
    pub projections: Vec<DVector<f64>>,
    pub warnings: Vec<String>,
}

/// Inner hull of the projections and outer intersection of the supporting
/// halfspaces `(p_i − P(p_i))ᵀ (y − P(p_i)) ≤ 0`.
pub fn tight_poly_pair<L: LevelFunction + ?Sized>(
    f: &L,
    alpha: f64,
    y_int: &DVector<f64>,
    externals: &[DVector<f64>],
    tol: f64,
) -> Result<TightPair> {
    let n = f.dim();
    if externals.len() < n + 1 {
        return Err(Error::invalid(format!("need at least {} external points", n + 1)));
    }
    let tol_phi = tol / 2.0;
    let mut warnings = Vec::new();
    let mut projections = Vec::with_capacity(externals.len());
    let mut rows = Vec::with_capacity(externals.len());
    let mut offsets = Vec::with_capacity(externals.len());
    for (i, e) in externals.iter().enumerate() {
        let mut p = e.clone();
        let mut grown = 0;
        while f.level(&p, tol_phi / 4.0)? >= alpha {
            p = y_int + (&p - y_int) * 2.0;
            grown += 1;
            if grown > MAX_RAY_DOUBLINGS {
                return Err(Error::Precondition("external point cannot be moved outside the level set".into()));
            }
        }
        if grown > 0 {
            warnings.push(format!("external point {i} was inside the level set; pushed out by 2^{grown}"));
        }
        let proj = project_to_levelset(&p, f, alpha, y_int, tol)?;
        let a = &p - &proj;
        let norm = a.norm();
        if norm > 0.0 {
            let a = a / norm;
            offsets.push(a.dot(&proj));
            rows.push(a);
        }
        projections.push(proj);
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let outer = HPolytope::new(a, DVector::from_vec(offsets))?;
    let inner = convex_hull(&projections)?;
    Ok(TightPair {
        inner,
        outer,
        projections,
        warnings,
    })
}

/// Circumradius about `center` of the polytope's vertices.
fn circumradius(h: &HPolytope, center: &DVector<f64>) -> Option<f64> {
    let verts = h.vertices();
    if verts.is_empty() || !h.is_bounded() {
        return None;
    }
    Some(verts.iter().map(|v| (v - center).norm()).fold(0.0, f64::max))
}

/// Projection-based inner/outer approximation around the peak `(y_max,
/// phi_max)` of `f`. `r = None` picks the radius from the Minkowski bound
/// when `occ` is given.
pub fn projection_approx<L: LevelFunction + ?Sized>(
    f: &L,
    y_max: &DVector<f64>,
    phi_max: f64,
    alpha: f64,
    k: usize,
    r: f64,
    tol: f64,
) -> Result<OccupySetApprox> {
    let n = f.dim();
    let params = ApproxParams {
        alpha,
        tau: None,
        k: Some(k),
        r: Some(r),
        directions: None,
        tol,
    };
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange(format!("alpha out of range: {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(OccupySetApprox::trivial(true, Method::Projection, params));
    }
    let tol_phi = tol / 2.0;
    if alpha > phi_max + tol_phi {
        let mut out = OccupySetApprox::trivial(false, Method::Projection, params);
        out.y_max = Some(y_max.clone());
        out.phi_max = Some(phi_max);
        return Ok(out);
    }
    let mut warnings = Vec::new();
    // a level within tol of the peak: the set is (numerically) the peak
    // itself, so bound it from outside at a slightly lower level
    let degenerate = phi_max - alpha <= tol_phi;
    let level = if degenerate { phi_max - tol_phi / 2.0 } else { alpha };
    if degenerate {
        warnings.push("alpha within tolerance of the peak occupancy".to_string());
    }
    let mut r = r;
    let mut externals = sample_sphere(y_max, r, k, SPHERE_SEED)?;
    let mut doublings = 0;
    while externals.iter().map(|e| f.level(e, tol_phi / 4.0)).collect::<Result<Vec<_>>>()?.iter().any(|&v| v >= level) {
        doublings += 1;
        if doublings > MAX_R_DOUBLINGS {
            return Err(Error::Precondition(format!("sampling radius {r} still inside the level set after {MAX_R_DOUBLINGS} doublings")));
        }
        r *= 2.0;
        warnings.push(format!("sampling radius doubled to {r}"));
        externals = sample_sphere(y_max, r, k, SPHERE_SEED)?;
    }
    let pair = tight_poly_pair(f, level, y_max, &externals, tol)?;
    warnings.extend(pair.warnings);
    let inner = if degenerate { VPolytope::new(vec![y_max.clone()])? } else { pair.inner };
    debug_assert_eq!(inner.dim(), n);
    Ok(OccupySetApprox {
        inner: Some(Region::Set(inner)),
        outer: Region::Set(pair.outer),
        method: Method::Projection,
        params: ApproxParams { r: Some(r), ..params },
        y_max: Some(y_max.clone()),
        phi_max: Some(phi_max),
        provenance: None,
        warnings,
    })
}

/// Sampling radius: 1.2 × the Minkowski bound's circumradius about `y_max`,
/// or `40 σ_max + diameter` when that bound is unavailable.
pub fn default_radius(occ: &Occupancy, alpha: f64, y_max: &DVector<f64>, tol: f64) -> Result<f64> {
    let fallback = 40.0 * occ.state().variances().iter().fold(0.0f64, |m, v| m.max(v.sqrt())) + occ.shape().diameter_bound()?;
    let dirs = default_directions(occ.dim())?;
    let outer = minkowski_from_occupancy(occ, alpha, &dirs, tol)?;
    let r = match outer.outer.as_set().and_then(|h| circumradius(h, y_max)) {
        Some(c) if c > 0.0 => 1.2 * c,
        _ => fallback,
    };
    Ok(if r > 0.0 { r } else { 1.0 })
}

/// Projection-based approximation for one Gaussian occupancy.
pub fn projection_from_occupancy(occ: &Occupancy, alpha: f64, k: usize, r: Option<f64>, tol: f64) -> Result<OccupySetApprox> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange(format!("alpha out of range: {alpha}")));
    }
    let (y_max, phi_max) = occ.y_max()?;
    let r = match r {
        Some(r) => r,
        None if alpha > 0.0 => default_radius(occ, alpha, &y_max, tol)?,
        None => 1.0,
    };
    projection_approx(occ, &y_max, phi_max.value, alpha, k, r, tol)
}

/// Minkowski-sum outer bound `{ψ ≥ α/m(𝒪)} ⊕ 𝒪` sampled along `directions`.
pub fn minkowski_from_occupancy(occ: &Occupancy, alpha: f64, directions: &[DVector<f64>], tol: f64) -> Result<OccupySetApprox> {
    let params = ApproxParams {
        alpha,
        tau: None,
        k: None,
        r: None,
        directions: Some(directions.len()),
        tol,
    };
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange(format!("alpha out of range: {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(OccupySetApprox::trivial(true, Method::Minkowski, params));
    }
    let mut warnings = Vec::new();
    let state = if occ.state().is_full_rank() {
        occ.state().clone()
    } else {
        warnings.push(format!("singular reach law (rank {}): null directions inflated by {EPS_SING}", occ.state().rank()));
        occ.state().regularized(EPS_SING)?
    };
    let kappa = alpha / occ.shape().measure()?;
    let Some(ellipsoid) = gaussian_superlevel_ellipsoid(state.mean(), state.cov(), kappa)? else {
        let mut out = OccupySetApprox::trivial(false, Method::Minkowski, params);
        out.warnings = warnings;
        return Ok(out);
    };
    let n = occ.dim();
    let mut rows = Vec::with_capacity(directions.len());
    let mut offsets = Vec::with_capacity(directions.len());
    for d in directions {
        if d.len() != n {
            return Err(Error::dim(n, d.len(), "direction"));
        }
        let norm = d.norm();
        if norm == 0.0 {
            return Err(Error::invalid("zero direction"));
        }
        let a = d / norm;
        let parts: [&dyn Support; 2] = [&ellipsoid, occ.shape()];
        offsets.push(minkowski_support(&parts, &a)?);
        rows.push(a);
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let outer = HPolytope::new(a, DVector::from_vec(offsets))?;
    if !outer.is_bounded() {
        warnings.push("directions do not positively span the space; outer set is unbounded".into());
    }
    Ok(OccupySetApprox {
        inner: None,
        outer: Region::Set(outer),
        method: Method::Minkowski,
        params,
        y_max: Some(occ.state().mean().clone()),
        phi_max: None,
        provenance: None,
        warnings,
    })
}

/// Projection-based approximation for a DPV obstacle at time `tau`.
pub fn occupyset_projection(obs: &ObstacleInstance, alpha: f64, tau: usize, k: usize, r: Option<f64>, tol: f64) -> Result<OccupySetApprox> {
    let occ = obs.occupancy(tau)?;
    let mut out = projection_from_occupancy(&occ, alpha, k, r, tol)?;
    out.params.tau = Some(tau);
    Ok(out)
}

/// Minkowski-sum outer bound for a DPV obstacle at time `tau`.
pub fn occupyset_minkowski(obs: &ObstacleInstance, alpha: f64, tau: usize, directions: &[DVector<f64>], tol: f64) -> Result<OccupySetApprox> {
    let occ = obs.occupancy(tau)?;
    let mut out = minkowski_from_occupancy(&occ, alpha, directions, tol)?;
    out.params.tau = Some(tau);
    Ok(out)
}

/// Shift a set computed from the zero initial state to the one whose
/// disturbance-free state is `x_nodist`.
pub fn translate_occupyset(approx: &OccupySetApprox, x_nodist: &DVector<f64>) -> OccupySetApprox {
    let inner = approx.inner.as_ref().map(|r| match r {
        Region::Set(v) => Region::Set(v.translate(x_nodist)),
        other => other.clone(),
    });
    let outer = match &approx.outer {
        Region::Set(h) => Region::Set(h.translate(x_nodist)),
        other => other.clone(),
    };
    OccupySetApprox {
        inner,
        outer,
        y_max: approx.y_max.as_ref().map(|y| y + x_nodist),
        ..approx.clone()
    }
}

/// How each cover piece is built.
#[derive(Debug, Clone)]
pub enum CoverMethod {
    Projection { k: usize, r: Option<f64> },
    Minkowski { directions: Vec<DVector<f64>> },
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverPiece {
    pub sequence: DiscreteSequence,
    pub alpha_s: f64,
    pub approx: OccupySetApprox,
}

/// Union of per-sequence approximations at thresholds
/// `α_S = α / (|𝒢| 𝕡(q̄))`.
#[derive(Debug, Clone, Serialize)]
pub struct DMSPCover {
    pub alpha: f64,
    pub tau: usize,
    pub pieces: Vec<CoverPiece>,
}

impl DMSPCover {
    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.pieces.iter().any(|p| p.approx.outer.contains(y))
    }

    pub fn empty_pieces(&self) -> usize {
        self.pieces.iter().filter(|p| p.approx.is_empty()).count()
    }
}

pub fn cover_from_occupancy(occ: &DmspOccupancy, alpha: f64, tau: usize, method: &CoverMethod, tol: f64) -> Result<DMSPCover> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::OutOfRange(format!("alpha out of range for a cover: {alpha}")));
    }
    let count = occ.pieces.len() as f64;
    let mut pieces = Vec::with_capacity(occ.pieces.len());
    for (seq, piece) in &occ.pieces {
        let alpha_s = alpha / (count * seq.probability);
        let mut approx = if alpha_s > 1.0 {
            // no probability can reach the threshold: skip the computation
            let params = ApproxParams {
                alpha: alpha_s,
                tau: Some(tau),
                k: None,
                r: None,
                directions: None,
                tol,
            };
            let method = match method {
                CoverMethod::Projection { .. } => Method::Projection,
                CoverMethod::Minkowski { .. } => Method::Minkowski,
            };
            OccupySetApprox::trivial(false, method, params)
        } else {
            match method {
                CoverMethod::Projection { k, r } => projection_from_occupancy(piece, alpha_s, *k, *r, tol)?,
                CoverMethod::Minkowski { directions } => minkowski_from_occupancy(piece, alpha_s, directions, tol)?,
            }
        };
        approx.params.tau = Some(tau);
        pieces.push(CoverPiece {
            sequence: seq.clone(),
            alpha_s,
            approx,
        });
    }
    Ok(DMSPCover { alpha, tau, pieces })
}

/// Union cover of the α-occupied set of a switched obstacle at time `tau`.
pub fn dmsp_cover(obs: &ObstacleInstance, alpha: f64, tau: usize, method: &CoverMethod, tol: f64) -> Result<DMSPCover> {
    cover_from_occupancy(&obs.dmsp_occupancy(tau)?, alpha, tau, method, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{biased_turning, unicycle_dmsp, uniform_turning, DPVModel, GaussianSpec, ParameterTrajectory, UnicycleParams};
    use crate::geometry::ConvexShape;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// `exp(−|y − c|²/2)`: superlevel sets are discs about `c`.
    fn disc_level(c: DVector<f64>) -> FnLevel<impl Fn(&DVector<f64>) -> f64> {
        FnLevel(2, move |y: &DVector<f64>| (-(y - &c).norm_squared() / 2.0).exp())
    }

    fn disc_alpha(rho: f64) -> f64 {
        (-rho * rho / 2.0).exp()
    }

    fn gaussian_obstacle(cov: [f64; 4], mean: [f64; 2], shape: ConvexShape) -> ObstacleInstance {
        let model = DPVModel::constant(
            DMatrix::identity(2, 2),
            None,
            DMatrix::identity(2, 2),
            GaussianSpec::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &cov)).unwrap(),
            1,
        )
        .unwrap();
        ObstacleInstance::dpv(shape, model, ParameterTrajectory::constant(DVector::zeros(1), 1), v(&mean), vec![]).unwrap()
    }

    const H: [f64; 4] = [11.62, 0.59, 0.59, 3.75];

    fn area(h: &HPolytope) -> f64 {
        VPolytope::new(h.vertices()).unwrap().area()
    }

    #[test]
    fn sphere_samples() {
        let pts = sample_sphere(&v(&[0.0, 0.0]), 1.0, 4, 0).unwrap();
        let want = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, w) in pts.iter().zip(want) {
            assert!((p - v(&w)).amax() < 1e-15);
        }
        for n in [2usize, 3, 5] {
            let c = DVector::from_fn(n, |i, _| i as f64);
            let pts = sample_sphere(&c, 2.5, 12, 7).unwrap();
            assert!(pts.iter().all(|p| ((p - &c).norm() - 2.5).abs() < 1e-12));
            assert_eq!(pts, sample_sphere(&c, 2.5, 12, 7).unwrap());
        }
        assert!(sample_sphere(&v(&[0.0, 0.0]), 1.0, 2, 0).is_err());
    }

    #[test]
    fn disc_projection_is_radial() {
        let c = v(&[1.0, -2.0]);
        let f = disc_level(c.clone());
        let rho = 1.5;
        for p in [v(&[5.0, 1.0]), v(&[-3.0, -2.5]), v(&[1.0, 7.0])] {
            let got = project_to_levelset(&p, &f, disc_alpha(rho), &c, 1e-9).unwrap();
            let want = &c + (&p - &c).normalize() * rho;
            assert!((got - want).norm() < 1e-4);
        }
        // off-centre interior point
        let p = v(&[6.0, 0.0]);
        let got = project_to_levelset(&p, &f, disc_alpha(rho), &v(&[1.5, -2.8]), 1e-9).unwrap();
        let want = &c + (&p - &c).normalize() * rho;
        assert!((got - want).norm() < 1e-4);
    }

    #[test]
    fn projection_guards() {
        let c = v(&[0.0, 0.0]);
        let f = disc_level(c.clone());
        let alpha = disc_alpha(1.0);
        let on = v(&[1.0, 0.0]);
        assert_eq!(project_to_levelset(&on, &f, alpha, &c, 1e-9).unwrap(), on);
        assert!(project_to_levelset(&v(&[0.2, 0.0]), &f, alpha, &c, 1e-9).is_err());
        assert!(matches!(
            project_to_levelset(&v(&[3.0, 0.0]), &f, alpha, &v(&[2.0, 0.0]), 1e-9),
            Err(Error::NoInterior { .. })
        ));
    }

    #[test]
    fn disc_axis_pair_is_the_two_squares() {
        let c = v(&[0.0, 0.0]);
        let rho = 2.0;
        let ext = sample_sphere(&c, 5.0, 4, 0).unwrap();
        let pair = tight_poly_pair(&disc_level(c.clone()), disc_alpha(rho), &c, &ext, 1e-10).unwrap();
        for p in pair.inner.vertices() {
            assert!((p.norm() - rho).abs() < 1e-4);
        }
        assert!((pair.inner.area() - 2.0 * rho * rho).abs() < 1e-3);
        assert!((area(&pair.outer) - 4.0 * rho * rho).abs() < 1e-3);
        for b in pair.outer.b().iter() {
            assert!((b - rho).abs() < 1e-4);
        }
    }

    #[test]
    fn disc_refinement_is_monotone() {
        let c = v(&[0.5, 0.5]);
        let rho = 1.0;
        let f = disc_level(c.clone());
        let mut last: Option<(f64, f64, f64)> = None;
        for k in [4usize, 8, 16] {
            let ext = sample_sphere(&c, 4.0, k, 0).unwrap();
            let pair = tight_poly_pair(&f, disc_alpha(rho), &c, &ext, 1e-10).unwrap();
            let (ai, ao) = (pair.inner.area(), area(&pair.outer));
            // Hausdorff distance of the outer polygon to the disc
            let haus = pair.outer.vertices().iter().map(|p| (p - &c).norm() - rho).fold(0.0, f64::max);
            if let Some((pi, po, ph)) = last {
                assert!(ai > pi && ao < po && haus < ph);
            }
            assert!(ai < std::f64::consts::PI * rho * rho && ao > std::f64::consts::PI * rho * rho);
            last = Some((ai, ao, haus));
        }
    }

    #[test]
    fn sentinels() {
        let obs = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 5.0).unwrap());
        let all = occupyset_projection(&obs, 0.0, 1, 10, None, 1e-6).unwrap();
        assert!(all.outer.is_all() && all.inner.as_ref().unwrap().is_all());
        assert!(occupyset_projection(&obs, 1.5, 1, 10, None, 1e-6).is_err());
        let empty = occupyset_projection(&obs, 0.99, 1, 10, None, 1e-6).unwrap();
        assert!(empty.is_empty());
        let dirs = default_directions(2).unwrap();
        assert!(occupyset_minkowski(&obs, 0.0, 1, &dirs, 1e-6).unwrap().outer.is_all());
        // density peak × area below α
        let tiny = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 0.1).unwrap());
        assert!(occupyset_minkowski(&tiny, 1.0, 1, &dirs, 1e-6).unwrap().is_empty());
    }

    #[test]
    fn minkowski_offset_closed_form() {
        let obs = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 50.0).unwrap());
        let out = occupyset_minkowski(&obs, 0.001, 1, &[v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -1.0])], 1e-6).unwrap();
        let h = out.outer.as_set().unwrap();
        let kappa: f64 = 0.001 / 10000.0;
        let det = 11.62 * 3.75 - 0.59 * 0.59;
        let factor = -2.0 * (kappa * (4.0 * std::f64::consts::PI * std::f64::consts::PI * det).sqrt()).ln();
        let want = 2.0 + (11.62 * factor).sqrt() + 50.0;
        assert!((h.b()[0] - want).abs() < 1e-9);
    }

    #[test]
    fn minkowski_isotropic_ball_is_a_disc() {
        let obs = gaussian_obstacle([1.0, 0.0, 0.0, 1.0], [0.0, 0.0], ConvexShape::new_ball(v(&[0.0, 0.0]), 0.3).unwrap());
        let alpha = 0.01;
        let kappa = alpha / (std::f64::consts::PI * 0.09);
        let radius = (-2.0 * (kappa * 2.0 * std::f64::consts::PI).ln()).sqrt() + 0.3;
        let out = occupyset_minkowski(&obs, alpha, 1, &default_directions(2).unwrap(), 1e-6).unwrap();
        for b in out.outer.as_set().unwrap().b().iter() {
            assert!((b - radius).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_pair_brackets_the_level_set() {
        for shape in [
            ConvexShape::new_box(v(&[0.0, 0.0]), 2.0).unwrap(),
            ConvexShape::VPolytope(VPolytope::new(vec![v(&[0.0, 0.0]), v(&[2.0, 0.3]), v(&[0.4, 1.5])]).unwrap()),
        ] {
            let obs = gaussian_obstacle(H, [2.0, 2.0], shape);
            let occ = obs.occupancy(1).unwrap();
            let alpha = 0.01;
            let tol = 1e-6;
            let out = projection_from_occupancy(&occ, alpha, 12, None, tol).unwrap();
            let Some(Region::Set(inner)) = &out.inner else { panic!("no inner set") };
            for p in inner.vertices() {
                assert!(occ.phi(p, 1e-9).unwrap().value >= alpha - tol / 2.0);
            }
            assert!(out.inner_outside_outer(1e-7).is_empty());
            // grid points with φ clearly above α are inside the outer set
            let outer = out.outer.as_set().unwrap();
            for i in -20..=20 {
                for j in -20..=20 {
                    let y = v(&[2.0 + 0.5 * i as f64, 2.0 + 0.3 * j as f64]);
                    if occ.phi(&y, 1e-9).unwrap().value >= alpha + 1e-6 {
                        assert!(outer.contains_with_tol(&y, 1e-6), "{y}");
                    }
                }
            }
            // the Minkowski bound contains the projection inner set
            let mk = minkowski_from_occupancy(&occ, alpha, &default_directions(2).unwrap(), tol).unwrap();
            let h = mk.outer.as_set().unwrap();
            assert!(inner.vertices().iter().all(|p| h.contains(p)));
        }
    }

    #[test]
    fn small_radius_is_doubled() {
        let obs = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 2.0).unwrap());
        let out = occupyset_projection(&obs, 0.05, 1, 8, Some(2.0), 1e-6).unwrap();
        assert!(out.params.r.unwrap() > 2.0);
        assert!(!out.warnings.is_empty());
        assert!(occupyset_projection(&obs, 0.05, 1, 8, Some(0.01), 1e-6).is_err());
    }

    #[test]
    fn peak_level_collapses_to_a_point() {
        let obs = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 2.0).unwrap());
        let occ = obs.occupancy(1).unwrap();
        let (y, top) = occ.y_max().unwrap();
        let tol = 1e-6;
        let out = projection_from_occupancy(&occ, top.value, 8, None, tol).unwrap();
        assert_eq!(out.inner.as_ref().unwrap().as_set().unwrap().vertices(), &[y.clone()]);
        let outer = out.outer.as_set().unwrap();
        assert!(outer.contains(&y));
        assert!(outer.vertices().iter().all(|p| (p - &y).norm() < 0.1));
    }

    #[test]
    fn offline_translation_matches_direct() {
        let shape = ConvexShape::new_box(v(&[0.0, 0.0]), 2.0).unwrap();
        let at_zero = gaussian_obstacle(H, [0.0, 0.0], shape.clone());
        let moved = gaussian_obstacle(H, [3.0, -1.0], shape);
        let tol = 1e-6;
        let offline = occupyset_projection(&at_zero, 0.05, 1, 10, Some(20.0), tol).unwrap();
        let direct = occupyset_projection(&moved, 0.05, 1, 10, Some(20.0), tol).unwrap();
        let shifted = translate_occupyset(&offline, &v(&[3.0, -1.0]));
        let a = shifted.inner.unwrap();
        let b = direct.inner.unwrap();
        for (p, q) in a.as_set().unwrap().vertices().iter().zip(b.as_set().unwrap().vertices()) {
            assert!((p - q).norm() < 1e-3);
        }
        let back = translate_occupyset(&translate_occupyset(&offline, &v(&[1.0, 2.0])), &v(&[-1.0, -2.0]));
        let (h0, h1) = (offline.outer.as_set().unwrap(), back.outer.as_set().unwrap());
        assert!((h0.b() - h1.b()).amax() < 1e-12);
        let e = OccupySetApprox::trivial(false, Method::Projection, offline.params.clone());
        assert!(translate_occupyset(&e, &v(&[1.0, 1.0])).is_empty());
    }

    #[test]
    fn cover_thresholds() {
        let shape = ConvexShape::new_ball(v(&[0.0, 0.0]), 0.2).unwrap();
        let dirs = default_directions(2).unwrap();
        let m1 = unicycle_dmsp(&UnicycleParams::with_transition(uniform_turning())).unwrap();
        let obs = ObstacleInstance::dmsp(shape.clone(), m1, v(&[10.0, 10.0]), vec![]).unwrap();
        let cover = dmsp_cover(&obs, 0.01, 15, &CoverMethod::Minkowski { directions: dirs.clone() }, 1e-6).unwrap();
        assert_eq!(cover.pieces.len(), 25);
        assert!(cover.pieces.iter().all(|p| (p.alpha_s - 0.01).abs() < 1e-15));
        let m2 = unicycle_dmsp(&UnicycleParams::with_transition(biased_turning())).unwrap();
        let obs = ObstacleInstance::dmsp(shape, m2, v(&[10.0, 10.0]), vec![]).unwrap();
        let cover = dmsp_cover(&obs, 0.01, 15, &CoverMethod::Minkowski { directions: dirs }, 1e-6).unwrap();
        assert_eq!(cover.pieces.len(), 9);
        for p in &cover.pieces {
            assert_eq!(p.alpha_s, 0.01 / (9.0 * p.sequence.probability));
        }
        assert!(cover.empty_pieces() >= 1);
        assert!(dmsp_cover(&obs, 0.0, 15, &CoverMethod::Projection { k: 8, r: None }, 1e-6).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_is_nonexpansive(
            a in prop::collection::vec(-6.0..6.0f64, 2),
            b in prop::collection::vec(-6.0..6.0f64, 2),
        ) {
            let c = v(&[0.3, -0.2]);
            let rho = 1.2;
            let (pa, pb) = (v(&a), v(&b));
            prop_assume!((&pa - &c).norm() > rho + 0.01 && (&pb - &c).norm() > rho + 0.01);
            let f = disc_level(c.clone());
            let qa = project_to_levelset(&pa, &f, disc_alpha(rho), &c, 1e-10).unwrap();
            let qb = project_to_levelset(&pb, &f, disc_alpha(rho), &c, 1e-10).unwrap();
            prop_assert!((qa - qb).norm() <= (pa - pb).norm() + 1e-6);
        }

        #[test]
        fn minkowski_outer_is_antimonotone(a1 in 1e-4..0.2f64, a2 in 1e-4..0.2f64) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let obs = gaussian_obstacle(H, [2.0, 2.0], ConvexShape::new_box(v(&[0.0, 0.0]), 1.0).unwrap());
            let dirs = default_directions(2).unwrap();
            let big = occupyset_minkowski(&obs, lo, 1, &dirs, 1e-6).unwrap();
            let small = occupyset_minkowski(&obs, hi, 1, &dirs, 1e-6).unwrap();
            match (&big.outer, &small.outer) {
                (Region::Set(hb), Region::Set(hs)) => {
                    prop_assert!(hs.vertices().iter().all(|p| hb.contains(p)));
                }
                (_, Region::Empty) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn projection_outer_is_antimonotone_on_discs(r1 in 0.2..3.0f64, r2 in 0.2..3.0f64) {
            let c = v(&[0.0, 1.0]);
            let f = disc_level(c.clone());
            let ext = sample_sphere(&c, 5.0, 10, 0).unwrap();
            let (small, large) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let outer_small = tight_poly_pair(&f, disc_alpha(small), &c, &ext, 1e-10).unwrap().outer;
            let outer_large = tight_poly_pair(&f, disc_alpha(large), &c, &ext, 1e-10).unwrap().outer;
            prop_assert!(outer_small.vertices().iter().all(|p| outer_large.contains_with_tol(p, 1e-6)));
        }
    }
}
