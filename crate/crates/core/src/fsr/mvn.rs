//! Probability that a Gaussian vector falls in a box, ball or polytope.
//!
//! Everything is computed in the reduced coordinates `s = Vᵀ(x − μ)` of the
//! covariance range, where the components are independent `N(0, λ_i)`.
//! Up to three reduced dimensions the probability is an iterated integral
//! (slice along `s_1`, recurse on the slice) evaluated with adaptive
//! Gauss-Kronrod; beyond that a randomized lattice rule is used.

use super::GaussianState;
use crate::geometry::{ConvexShape, HPolytope};
use crate::numeric::{bvn_rect, integrate, norm_interval, norm_pdf, norm_quantile, Estimate};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reduced coordinates beyond this many standard deviations are dropped
/// (tail mass below 1e-32).
const CLIP_SIGMAS: f64 = 12.0;
const QMC_SHIFTS: usize = 8;
const QMC_MAX_POINTS: usize = 1 << 17;
const QMC_SEED: u64 = 0x6b65_6570_6f75_74;

/// `P{lower <= x <= upper}` for a full-rank Gaussian. Infinite limits are
/// allowed.
pub fn mvn_rect_prob(g: &GaussianState, lower: &DVector<f64>, upper: &DVector<f64>, tol: f64) -> Result<Estimate> {
    let n = g.dim();
    if lower.len() != n || upper.len() != n {
        return Err(Error::dim(n, lower.len().min(upper.len()), "rectangle limits"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
        return Err(Error::invalid("rectangle needs lower < upper in every coordinate"));
    }
    if !g.is_full_rank() {
        return Err(Error::SingularCovariance { rank: g.rank(), dim: n });
    }
    let cov = g.cov();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    let lo: Vec<f64> = (0..n).map(|i| (lower[i] - g.mean()[i]) / sd[i]).collect();
    let hi: Vec<f64> = (0..n).map(|i| (upper[i] - g.mean()[i]) / sd[i]).collect();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == 0.0));
    if n == 1 || diagonal {
        let p = (0..n).map(|i| norm_interval(lo[i], hi[i])).product();
        return Ok(Estimate::exact(p));
    }
    if n == 2 {
        let r = (cov[(0, 1)] / (sd[0] * sd[1])).clamp(-1.0, 1.0);
        let p = bvn_rect([lo[0], lo[1]], [hi[0], hi[1]], r).clamp(0.0, 1.0);
        return Ok(Estimate {
            value: p,
            error: 1e-14,
            converged: true,
        });
    }
    let corr = DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    let chol = corr
        .cholesky()
        .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))?
        .l();
    Ok(genz_lattice(&lo, &hi, &chol, tol))
}

/// Separation-of-variables integrand over `[0,1]^{n−1}` with a randomized
/// Richtmyer lattice.
fn genz_lattice(lo: &[f64], hi: &[f64], l: &DMatrix<f64>, tol: f64) -> Estimate {
    let n = lo.len();
    let d1 = crate::numeric::norm_cdf(lo[0] / l[(0, 0)]);
    let e1 = crate::numeric::norm_cdf(hi[0] / l[(0, 0)]);
    let mut y = vec![0.0; n];
    let mut f = |w: &[f64]| -> f64 {
        let (mut d, mut e) = (d1, e1);
        let mut prod = e - d;
        for i in 1..n {
            let u = (d + w[i - 1] * (e - d)).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = norm_quantile(u);
            let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
            d = crate::numeric::norm_cdf((lo[i] - s) / l[(i, i)]);
            e = crate::numeric::norm_cdf((hi[i] - s) / l[(i, i)]);
            prod *= e - d;
            if prod == 0.0 {
                break;
            }
        }
        prod
    };
    lattice_mean(n - 1, tol, &mut f)
}

fn lattice_mean(dim: usize, tol: f64, f: &mut dyn FnMut(&[f64]) -> f64) -> Estimate {
    const PRIMES: [f64; 24] = [
        2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0, 59.0, 61.0, 67.0, 71.0,
        73.0, 79.0, 83.0, 89.0,
    ];
    let gen: Vec<f64> = (0..dim).map(|j| PRIMES[j % PRIMES.len()].sqrt().fract() + (j / PRIMES.len()) as f64 * 0.5).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(QMC_SEED);
    let shifts: Vec<Vec<f64>> = (0..QMC_SHIFTS).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let mut w = vec![0.0; dim];
    let mut npts = 256;
    loop {
        let means: Vec<f64> = shifts
            .iter()
            .map(|shift| {
                let mut acc = 0.0;
                for i in 1..=npts {
                    for j in 0..dim {
                        let x = (i as f64 * gen[j] + shift[j]).fract();
                        // baker's transform periodizes the integrand
                        w[j] = (2.0 * x - 1.0).abs();
                    }
                    acc += f(&w);
                }
                acc / npts as f64
            })
            .collect();
        let k = means.len() as f64;
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let error = 3.0 * (var / k).sqrt();
        if error <= tol || npts >= QMC_MAX_POINTS {
            return Estimate {
                value: mean.clamp(0.0, 1.0),
                error,
                converged: error <= tol,
            };
        }
        npts *= 2;
    }
}

/// `P{x ∈ shape}`. Handles rank-deficient Gaussians by integrating over the
/// intersection of the shape with the affine support.
pub fn mvn_shape_prob(g: &GaussianState, shape: &ConvexShape, tol: f64) -> Result<Estimate> {
    let n = g.dim();
    if shape.dim() != n {
        return Err(Error::dim(n, shape.dim(), "shape dimension"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if g.rank() == 0 {
        return Ok(Estimate::exact(if shape.contains(g.mean()) { 1.0 } else { 0.0 }));
    }
    let sig: Vec<f64> = g.variances().iter().map(|v| v.sqrt()).collect();
    let v = g.basis();
    match shape {
        ConvexShape::Box { center, half_width } if g.is_full_rank() => {
            let lo = center.map(|c| c - half_width);
            let hi = center.map(|c| c + half_width);
            mvn_rect_prob(g, &lo, &hi, tol)
        }
        ConvexShape::Ball { center, radius } => {
            let d = center - g.mean();
            let cs = v.transpose() * &d;
            let perp2 = (d.norm_squared() - cs.norm_squared()).max(0.0);
            let r2 = radius * radius - perp2;
            if r2 <= 0.0 {
                return Ok(Estimate::exact(0.0));
            }
            if sig.len() > 3 {
                return Ok(qmc_indicator(g, shape, tol));
            }
            Ok(ball_prob(cs.as_slice(), r2.sqrt(), &sig, tol))
        }
        _ => {
            let h = match shape {
                ConvexShape::HPolytope(h) => h.clone(),
                other => other.to_hpolytope().map_err(|e| match e {
                    Error::ZeroMeasure => Error::Unsupported("flat polytopes have no occupancy integral".into()),
                    e => e,
                })?,
            };
            if sig.len() > 3 {
                return Ok(qmc_indicator(g, shape, tol));
            }
            match reduce_polytope(&h, g.mean(), v) {
                Some((rows, b)) => Ok(poly_prob(&rows, &b, &sig, tol)),
                None => Ok(Estimate::exact(0.0)),
            }
        }
    }
}

/// `{s : A(μ + V s) <= b}` as rows over `s`. `None` when a constraint that
/// does not involve `s` is violated (the support misses the polytope).
fn reduce_polytope(h: &HPolytope, mean: &DVector<f64>, v: &DMatrix<f64>) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let av = h.a() * v;
    let bs = h.b() - h.a() * mean;
    let scale = bs.amax().max(1.0);
    let mut rows = Vec::with_capacity(av.nrows());
    let mut b = Vec::with_capacity(av.nrows());
    for i in 0..av.nrows() {
        let row: Vec<f64> = av.row(i).iter().copied().collect();
        let rn = h.a().row(i).norm();
        if row.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12 * rn {
            if bs[i] < -1e-12 * scale {
                return None;
            }
            continue;
        }
        rows.push(row);
        b.push(bs[i]);
    }
    Some((rows, b))
}

/// Iterated integral over the ball `‖s − c‖ <= ρ` with `s_i ~ N(0, σ_i²)`.
/// The outer variable is `s_1 = c_1 + ρ sin θ`, which removes the square
/// root singularity at the poles.
fn ball_prob(c: &[f64], rho: f64, sig: &[f64], tol: f64) -> Estimate {
    let s1 = sig[0];
    if sig.len() == 1 {
        return Estimate::exact(norm_interval((c[0] - rho) / s1, (c[0] + rho) / s1));
    }
    let clip = CLIP_SIGMAS * s1;
    let theta = |s: f64| ((s - c[0]) / rho).clamp(-1.0, 1.0).asin();
    let (t_lo, t_hi) = (theta(-clip), theta(clip));
    if t_hi <= t_lo {
        return Estimate::exact(0.0);
    }
    let breaks: Vec<f64> = [-4.0, -2.0, 0.0, 2.0, 4.0].iter().map(|k| theta(k * s1)).collect();
    let mut inner_ok = true;
    let est = integrate(
        |t: f64| {
            let x = c[0] + rho * t.sin();
            let h = rho * t.cos();
            if h <= 0.0 {
                return 0.0;
            }
            let inner = ball_prob(&c[1..], h, &sig[1..], tol / 2.0);
            inner_ok &= inner.converged;
            norm_pdf(x / s1) / s1 * h * inner.value
        },
        t_lo,
        t_hi,
        &breaks,
        tol / 2.0,
    );
    Estimate {
        value: est.value.clamp(0.0, 1.0),
        error: est.error + tol / 2.0,
        converged: est.converged && inner_ok,
    }
}

/// Iterated integral over `{s : rows·s <= b}` with `s_i ~ N(0, σ_i²)`,
/// split at the vertices' first coordinates where the slice bounds kink.
fn poly_prob(rows: &[Vec<f64>], b: &[f64], sig: &[f64], tol: f64) -> Estimate {
    let d = sig.len();
    if d == 1 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (r, &bi) in rows.iter().zip(b) {
            let a = r[0];
            if a.abs() <= 1e-14 {
                if bi < -1e-12 * scale {
                    return Estimate::exact(0.0);
                }
            } else if a > 0.0 {
                hi = hi.min(bi / a);
            } else {
                lo = lo.max(bi / a);
            }
        }
        return Estimate::exact(norm_interval(lo / sig[0], hi / sig[0]));
    }
    let a = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let verts = crate::geometry::hull::enumerate_vertices(&a, &DVector::from_column_slice(b));
    if verts.is_empty() {
        return Estimate::exact(0.0);
    }
    let s1 = sig[0];
    let clip = CLIP_SIGMAS * s1;
    let lo = verts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min).max(-clip);
    let hi = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max).min(clip);
    if hi <= lo {
        return Estimate::exact(0.0);
    }
    let mut breaks: Vec<f64> = verts.iter().map(|v| v[0]).collect();
    breaks.extend([-4.0 * s1, -2.0 * s1, 0.0, 2.0 * s1, 4.0 * s1]);
    let sub_rows: Vec<Vec<f64>> = rows.iter().map(|r| r[1..].to_vec()).collect();
    let mut sub_b = vec![0.0; b.len()];
    let mut inner_ok = true;
    let est = integrate(
        |x: f64| {
            for (k, (r, &bi)) in rows.iter().zip(b).enumerate() {
                sub_b[k] = bi - r[0] * x;
            }
            let inner = poly_prob(&sub_rows, &sub_b, &sig[1..], tol / 2.0);
            inner_ok &= inner.converged;
            norm_pdf(x / s1) / s1 * inner.value
        },
        lo,
        hi,
        &breaks,
        tol / 2.0,
    );
    Estimate {
        value: est.value.clamp(0.0, 1.0),
        error: est.error + tol / 2.0,
        converged: est.converged && inner_ok,
    }
}

/// Indicator average over a randomized lattice in the whitened range
/// coordinates; used above three reduced dimensions.
fn qmc_indicator(g: &GaussianState, shape: &ConvexShape, tol: f64) -> Estimate {
    let r = g.rank();
    let root = g.basis() * DMatrix::from_diagonal(&g.variances().map(f64::sqrt));
    let mut z = DVector::zeros(r);
    let mut f = |w: &[f64]| -> f64 {
        for (zi, wi) in z.iter_mut().zip(w) {
            *zi = norm_quantile(wi.clamp(1e-16, 1.0 - 1e-16));
        }
        let x = g.mean() + &root * &z;
        if shape.contains(&x) {
            1.0
        } else {
            0.0
        }
    };
    lattice_mean(r, tol, &mut f)
}
