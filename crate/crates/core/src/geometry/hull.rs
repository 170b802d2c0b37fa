//! Convex hulls, vertex enumeration and volumes for low dimensional
//! polytopes.

use super::lp::{maximize, Constraint, LpOutcome, Relation};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

const TOL: f64 = 1e-9;

fn cross2(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns the strict hull vertices in
/// counter-clockwise order, collinear points removed.
pub(crate) fn hull_2d(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<DVector<f64>> = points.to_vec();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= TOL && (a[1] - b[1]).abs() <= TOL);
    if pts.len() <= 2 {
        return pts;
    }
    let scale = pts
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(1.0f64, f64::max);
    let eps = TOL * scale * scale;
    let mut lower: Vec<DVector<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross2(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<DVector<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` is a convex combination of `others` (LP feasibility).
pub(crate) fn in_convex_hull(p: &DVector<f64>, others: &[DVector<f64>]) -> bool {
    if others.is_empty() {
        return false;
    }
    let n = p.len();
    let k = others.len();
    let mut cons: Vec<Constraint> = (0..n)
        .map(|d| Constraint {
            coeffs: others.iter().map(|v| v[d]).collect(),
            rel: Relation::Eq,
            rhs: p[d],
        })
        .collect();
    cons.push(Constraint {
        coeffs: vec![1.0; k],
        rel: Relation::Eq,
        rhs: 1.0,
    });
    matches!(maximize(&vec![0.0; k], &cons), LpOutcome::Optimal { .. })
}

/// Minimal vertex set of the hull of `points` in any dimension.
pub(crate) fn hull_vertices(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = points.first().map_or(0, |p| p.len());
    match n {
        0 => Vec::new(),
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            if (hi - lo).abs() <= TOL {
                vec![DVector::from_element(1, lo)]
            } else {
                vec![DVector::from_element(1, lo), DVector::from_element(1, hi)]
            }
        }
        2 => hull_2d(points),
        _ => {
            let mut uniq: Vec<DVector<f64>> = Vec::new();
            for p in points {
                if !uniq.iter().any(|q| (q - p).amax() <= TOL) {
                    uniq.push(p.clone());
                }
            }
            (0..uniq.len())
                .filter(|&i| {
                    let others: Vec<DVector<f64>> = uniq
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, v)| v.clone())
                        .collect();
                    !in_convex_hull(&uniq[i], &others)
                })
                .map(|i| uniq[i].clone())
                .collect()
        }
    }
}

/// Dimension of the affine hull of `points`.
pub(crate) fn affine_dim(points: &[DVector<f64>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let n = points[0].len();
    let base = &points[0];
    let cols: Vec<DVector<f64>> = points[1..].iter().map(|p| p - base).collect();
    let m = DMatrix::from_columns(&cols);
    let scale = m.amax().max(1.0);
    m.svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * scale)
        .count()
        .min(n)
}

fn combinations(k: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            if k - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, k, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, r, &mut Vec::with_capacity(r), &mut out);
    out
}

/// Vertices of `{y : A y <= b}` by enumerating `n`-subsets of active
/// constraints. Intended for small `n` and `k`.
pub(crate) fn enumerate_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let (k, n) = a.shape();
    let scale = b.amax().max(1.0);
    let mut verts: Vec<DVector<f64>> = Vec::new();
    for combo in combinations(k, n) {
        let sub = DMatrix::from_fn(n, n, |i, j| a[(combo[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| b[combo[i]]);
        let Some(sol) = sub.clone().lu().solve(&rhs) else {
            continue;
        };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        // reject nearly singular systems
        if (&sub * &sol - &rhs).amax() > 1e-9 * scale {
            continue;
        }
        let feasible = (a * &sol - b).iter().all(|&v| v <= 1e-9 * scale);
        if feasible && !verts.iter().any(|q| (q - &sol).amax() <= 1e-9 * scale) {
            verts.push(sol);
        }
    }
    if n == 2 {
        hull_2d(&verts)
    } else {
        verts
    }
}

/// Shoelace area of a counter-clockwise ordered polygon.
pub(crate) fn polygon_area(ordered: &[DVector<f64>]) -> f64 {
    let m = ordered.len();
    if m < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..m {
        let p = &ordered[i];
        let q = &ordered[(i + 1) % m];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc.abs()
}

/// Facets of the hull of a 3-D point set as `(unit normal, offset)` pairs,
/// found by brute force over point triples.
pub(crate) fn facets_3d(points: &[DVector<f64>]) -> Vec<(DVector<f64>, f64)> {
    let m = points.len();
    let scale = points.iter().map(|p| p.amax()).fold(1.0f64, f64::max);
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let u = &points[j] - &points[i];
                let v = &points[k] - &points[i];
                let nrm = DVector::from_vec(vec![
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ]);
                let len = nrm.norm();
                if len <= 1e-12 * scale * scale {
                    continue;
                }
                let mut nrm = nrm / len;
                let mut off = nrm.dot(&points[i]);
                let side: Vec<f64> = points.iter().map(|p| nrm.dot(p) - off).collect();
                let tol = 1e-9 * scale;
                if side.iter().all(|&s| s <= tol) {
                } else if side.iter().all(|&s| s >= -tol) {
                    nrm = -nrm;
                    off = -off;
                } else {
                    continue;
                }
                if !facets
                    .iter()
                    .any(|(n2, o2)| (n2 - &nrm).amax() <= 1e-9 && (o2 - off).abs() <= tol)
                {
                    facets.push((nrm, off));
                }
            }
        }
    }
    facets
}

/// Volume of the hull of a 3-D point set.
pub(crate) fn volume_3d(points: &[DVector<f64>]) -> Result<f64> {
    let facets = facets_3d(points);
    if facets.len() < 4 {
        return Err(Error::ZeroMeasure);
    }
    let centroid = points.iter().fold(DVector::zeros(3), |acc, p| acc + p) / points.len() as f64;
    let scale = points.iter().map(|p| p.amax()).fold(1.0f64, f64::max);
    let mut vol = 0.0;
    for (nrm, off) in &facets {
        let on: Vec<&DVector<f64>> = points
            .iter()
            .filter(|p| (nrm.dot(p) - off).abs() <= 1e-9 * scale)
            .collect();
        let c = on.iter().fold(DVector::zeros(3), |acc, p| acc + *p) / on.len() as f64;
        // in-plane basis
        let helper = if nrm[0].abs() < 0.9 {
            DVector::from_vec(vec![1.0, 0.0, 0.0])
        } else {
            DVector::from_vec(vec![0.0, 1.0, 0.0])
        };
        let e1 = {
            let t = &helper - nrm * nrm.dot(&helper);
            t.normalize()
        };
        let e2 = DVector::from_vec(vec![
            nrm[1] * e1[2] - nrm[2] * e1[1],
            nrm[2] * e1[0] - nrm[0] * e1[2],
            nrm[0] * e1[1] - nrm[1] * e1[0],
        ]);
        let flat: Vec<DVector<f64>> = on
            .iter()
            .map(|p| {
                let d = *p - &c;
                DVector::from_vec(vec![d.dot(&e1), d.dot(&e2)])
            })
            .collect();
        let area = polygon_area(&hull_2d(&flat));
        let height = off - nrm.dot(&centroid);
        vol += area * height / 3.0;
    }
    Ok(vol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn monotone_chain_drops_interior_and_collinear() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.1, 0.1]), v(&[0.5, 0.0])];
        let h = hull_2d(&pts);
        assert_eq!(h.len(), 3);
        assert!((polygon_area(&h) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(5, 3).len(), 10);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn vertex_enumeration_of_square() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = v(&[1.0, 1.0, 2.0, 0.0]);
        let vs = enumerate_vertices(&a, &b);
        assert_eq!(vs.len(), 4);
        assert!((polygon_area(&vs) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unit_cube_volume_and_hull() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(v(&[(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]));
        }
        pts.push(v(&[0.5, 0.5, 0.5]));
        assert!((volume_3d(&pts).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(hull_vertices(&pts).len(), 8);
        assert_eq!(affine_dim(&pts), 3);
    }

    #[test]
    fn flat_point_sets_have_low_affine_dimension() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[2.0, 2.0])];
        assert_eq!(affine_dim(&pts), 1);
    }
}
