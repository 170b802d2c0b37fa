//! Scalar numerics shared by the integrators: the standard normal
//! distribution, Genz's bivariate normal routine and an adaptive
//! Gauss-Kronrod quadrature.

use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// A numerical estimate with its absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// `false` when the requested tolerance could not be met within the
    /// iteration budget; `value` is then the best estimate available.
    pub converged: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            error: 0.0,
            converged: true,
        }
    }

    pub(crate) fn clamp_probability(mut self) -> Self {
        self.value = self.value.clamp(0.0, 1.0);
        self
    }
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        // Acklam's rational start, polished with Halley steps on the
        // accurate CDF
        let mut x = acklam(p);
        for _ in 0..3 {
            let e = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_cdf(-x) };
            let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
            x -= u / (1.0 + 0.5 * x * u);
        }
        x
    }
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    if p < 0.02425 {
        tail(p)
    } else if p > 1.0 - 0.02425 {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `P(a <= Z <= b)` for a standard normal `Z`, computed on the tail that
/// avoids cancellation.
pub fn norm_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a > 0.0 {
        norm_cdf(-a) - norm_cdf(-b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

const GL6: [(f64, f64); 3] = [
    (0.1713244923791705, 0.9324695142031522),
    (0.3607615730481384, 0.6612093864662647),
    (0.4679139345726904, 0.2386191860831970),
];

const GL12: [(f64, f64); 6] = [
    (0.04717533638651177, 0.9815606342467191),
    (0.1069393259953183, 0.9041172563704750),
    (0.1600783285433464, 0.7699026741943050),
    (0.2031674267230659, 0.5873179542866171),
    (0.2334925365383547, 0.3678314989981802),
    (0.2491470458134029, 0.1252334085114692),
];

const GL20: [(f64, f64); 10] = [
    (0.01761400713915212, 0.9931285991850949),
    (0.04060142980038694, 0.9639719272779138),
    (0.06267204833410906, 0.9122344282513259),
    (0.08327674157670475, 0.8391169718222188),
    (0.1019301198172404, 0.7463319064601508),
    (0.1181945319615184, 0.6360536807265150),
    (0.1316886384491766, 0.5108670019508271),
    (0.1420961093183821, 0.3737060887154196),
    (0.1491729864726037, 0.2277858511416451),
    (0.1527533871307259, 0.07652652113349733),
];

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`.
///
/// Drezner-Wesolowsky with Genz's double precision modifications, including
/// the corrected branch for strongly negative correlation.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            norm_cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    if r == 0.0 {
        return norm_cdf(-h) * norm_cdf(-k);
    }
    let tp = 2.0 * PI;
    let quad: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for &(w, x) in quad {
            for xi in [1.0 - x, 1.0 + x] {
                let sn = (asr * xi).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let asr = -(bs / as_ + hk) / 2.0;
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * norm_cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut sum = 0.0;
            for &(w, x) in quad {
                for xi in [1.0 - x, 1.0 + x] {
                    let xs = (a * xi) * (a * xi);
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = (1.0 - xs).sqrt();
                        let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                        sum += w * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                norm_cdf(k) - norm_cdf(h)
            } else {
                norm_cdf(-h) - norm_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(lo <= (X, Y) <= hi)` for a standard bivariate normal with correlation `r`.
pub fn bvn_rect(lo: [f64; 2], hi: [f64; 2], r: f64) -> f64 {
    if hi[0] <= lo[0] || hi[1] <= lo[1] {
        return 0.0;
    }
    let p = bvn_upper(lo[0], lo[1], r) - bvn_upper(hi[0], lo[1], r) - bvn_upper(lo[0], hi[1], r)
        + bvn_upper(hi[0], hi[1], r);
    p.clamp(0.0, 1.0)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`
/// split first at the interior `breaks`, to absolute tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Estimate {
    const MAX_INTERVALS: usize = 400;
    if b <= a {
        return Estimate::exact(0.0);
    }
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut segs: Vec<(f64, f64, f64, f64)> = pts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total_err: f64 = segs.iter().map(|s| s.3).sum();
        if total_err <= tol {
            break;
        }
        if segs.len() >= MAX_INTERVALS {
            let value = segs.iter().map(|s| s.2).sum();
            return Estimate {
                value,
                error: total_err,
                converged: false,
            };
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = segs.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval exhausted at floating point resolution
            let value = segs.iter().map(|s| s.2).sum::<f64>();
            return Estimate {
                value,
                error: total_err,
                converged: false,
            };
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    Estimate {
        value: segs.iter().map(|s| s.2).sum(),
        error: segs.iter().map(|s| s.3).sum(),
        converged: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent route: P(X > h, Y > k) = ∫_h^∞ φ(x) Φ((r x - k)/√(1-r²)) dx,
    // evaluated with composite Simpson on a fine grid.
    fn bvn_upper_simpson(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        let a = h.max(-12.0);
        let b = 12.0f64;
        if a >= b {
            return 0.0;
        }
        let n = 20_000;
        let dx = (b - a) / n as f64;
        let g = |x: f64| norm_pdf(x) * norm_cdf((r * x - k) / s);
        let mut acc = g(a) + g(b);
        for i in 1..n {
            let x = a + i as f64 * dx;
            acc += if i % 2 == 1 { 4.0 * g(x) } else { 2.0 * g(x) };
        }
        acc * dx / 3.0
    }

    #[test]
    fn bvn_matches_quadrature_across_correlations() {
        for &r in &[-0.999, -0.95, -0.93, -0.8, -0.5, -0.1, 0.1, 0.29, 0.5, 0.8, 0.93, 0.99] {
            for &(h, k) in &[(0.0, 0.0), (-1.0, 0.5), (1.3, -0.7), (2.0, 2.5), (-2.0, -1.5), (0.3, 0.3)] {
                let got = bvn_upper(h, k, r);
                let want = bvn_upper_simpson(h, k, r);
                assert!((got - want).abs() < 1e-9, "h={h} k={k} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bvn_orthant_closed_form() {
        for &r in &[-0.9, -0.5, 0.0, 0.5, 0.95] {
            let want = 0.25 + (r as f64).asin() / (2.0 * PI);
            assert!((bvn_upper(0.0, 0.0, r) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn bvn_infinite_limits() {
        assert_eq!(bvn_upper(f64::NEG_INFINITY, f64::NEG_INFINITY, 0.3), 1.0);
        assert!((bvn_upper(f64::NEG_INFINITY, 1.0, 0.3) - norm_cdf(-1.0)).abs() < 1e-16);
        assert_eq!(bvn_upper(f64::INFINITY, 1.0, 0.3), 0.0);
        let full = bvn_rect([f64::NEG_INFINITY; 2], [f64::INFINITY; 2], 0.7);
        assert!((full - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-8, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((norm_cdf(norm_quantile(p)) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }

    #[test]
    fn gauss_kronrod_integrates_gaussian_tail() {
        let est = integrate(norm_pdf, -1.0, 1.0, &[], 1e-12);
        assert!(est.converged);
        assert!((est.value - norm_interval(-1.0, 1.0)).abs() < 1e-12);
        // sqrt endpoint singularity still converges with subdivision
        let est = integrate(|x: f64| (1.0 - x * x).max(0.0).sqrt(), -1.0, 1.0, &[0.0], 1e-7);
        assert!((est.value - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn interval_is_tail_accurate() {
        let p = norm_interval(8.0, 9.0);
        assert!(p > 0.0 && p < 1e-14);
    }
}
