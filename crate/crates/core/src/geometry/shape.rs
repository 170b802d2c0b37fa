use super::hull::{affine_dim, enumerate_vertices, hull_2d, hull_vertices, in_convex_hull, polygon_area, volume_3d};
use super::lp::{maximize_free, LpOutcome};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Sets that expose a support function `ρ(l) = sup_{y ∈ S} lᵀy`.
pub trait Support {
    fn dim(&self) -> usize;
    fn support(&self, dir: &DVector<f64>) -> Result<f64>;
}

fn check_direction(dir: &DVector<f64>, n: usize) -> Result<()> {
    if dir.len() != n {
        return Err(Error::dim(n, dir.len(), "support direction"));
    }
    if dir.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("support direction must be non-zero"));
    }
    Ok(())
}

fn rows_of(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// `{y : A y <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl HPolytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::invalid("halfspace representation needs at least one row and column"));
        }
        if a.nrows() != b.len() {
            return Err(Error::dim(a.nrows(), b.len(), "halfspace offsets"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("halfspace data must be finite"));
        }
        Ok(HPolytope { a, b })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("ragged halfspace matrix"));
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        HPolytope::new(a, DVector::from_column_slice(b))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_halfspaces(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        self.contains_with_tol(y, MEMBERSHIP_TOL)
    }

    pub fn contains_with_tol(&self, y: &DVector<f64>, tol: f64) -> bool {
        let ay = &self.a * y;
        ay.iter().zip(self.b.iter()).all(|(l, r)| *l <= r + tol * (1.0 + r.abs()))
    }

    /// `{y + v : y ∈ P}`: offsets shift by `A v`.
    pub fn translate(&self, v: &DVector<f64>) -> HPolytope {
        HPolytope {
            a: self.a.clone(),
            b: &self.b + &self.a * v,
        }
    }

    pub fn reflect(&self) -> HPolytope {
        HPolytope {
            a: -&self.a,
            b: self.b.clone(),
        }
    }

    /// Vertices (counter-clockwise when planar).
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        enumerate_vertices(&self.a, &self.b)
    }

    pub fn is_bounded(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            self.support(&e).is_ok() && self.support(&-e).is_ok()
        })
    }

    pub(crate) fn rows(&self) -> Vec<Vec<f64>> {
        rows_of(&self.a)
    }
}

impl Support for HPolytope {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        check_direction(dir, self.dim())?;
        let c: Vec<f64> = dir.iter().copied().collect();
        match maximize_free(&c, &self.rows(), self.b.as_slice()) {
            LpOutcome::Optimal { value, .. } => Ok(value),
            LpOutcome::Unbounded => Err(Error::UnboundedSupport(c)),
            LpOutcome::Infeasible => Err(Error::EmptySet),
        }
    }
}

/// Convex hull of a finite point list.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
}

impl VPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::invalid("vertex representation needs at least one point"));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::invalid("zero-dimensional vertices"));
        }
        if let Some(bad) = vertices.iter().find(|v| v.len() != n) {
            return Err(Error::dim(n, bad.len(), "polytope vertex"));
        }
        if vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("vertices must be finite"));
        }
        Ok(VPolytope { vertices })
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Dimension of the affine hull; smaller than `dim()` for flat hulls.
    pub fn affine_dim(&self) -> usize {
        affine_dim(&self.vertices)
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.affine_dim() == self.dim()
    }

    pub fn translate(&self, v: &DVector<f64>) -> VPolytope {
        VPolytope {
            vertices: self.vertices.iter().map(|p| p + v).collect(),
        }
    }

    pub fn reflect(&self) -> VPolytope {
        VPolytope {
            vertices: self.vertices.iter().map(|p| -p).collect(),
        }
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        if self.dim() == 2 && self.is_full_dimensional() {
            if let Ok(h) = self.to_hpolytope() {
                return h.contains(y);
            }
        }
        self.vertices.iter().any(|v| (v - y).amax() <= MEMBERSHIP_TOL) || in_convex_hull(y, &self.vertices)
    }

    /// Halfspace form of a full-dimensional planar or spatial hull.
    pub fn to_hpolytope(&self) -> Result<HPolytope> {
        if !self.is_full_dimensional() {
            return Err(Error::ZeroMeasure);
        }
        match self.dim() {
            1 => {
                let lo = self.vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = self.vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                HPolytope::from_rows(&[vec![1.0], vec![-1.0]], &[hi, -lo])
            }
            2 => {
                let h = hull_2d(&self.vertices);
                let m = h.len();
                let mut rows = Vec::with_capacity(m);
                let mut b = Vec::with_capacity(m);
                for i in 0..m {
                    let p = &h[i];
                    let q = &h[(i + 1) % m];
                    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                    let len = (dx * dx + dy * dy).sqrt();
                    let nrm = [dy / len, -dx / len];
                    rows.push(nrm.to_vec());
                    b.push(nrm[0] * p[0] + nrm[1] * p[1]);
                }
                HPolytope::from_rows(&rows, &b)
            }
            3 => {
                let facets = super::hull::facets_3d(&self.vertices);
                let rows: Vec<Vec<f64>> = facets.iter().map(|(n, _)| n.iter().copied().collect()).collect();
                let b: Vec<f64> = facets.iter().map(|(_, o)| *o).collect();
                HPolytope::from_rows(&rows, &b)
            }
            n => Err(Error::Unsupported(format!("halfspace conversion in dimension {n}"))),
        }
    }

    /// Area of a planar hull.
    pub fn area(&self) -> f64 {
        if self.dim() != 2 {
            return 0.0;
        }
        polygon_area(&hull_2d(&self.vertices))
    }
}

impl Support for VPolytope {
    fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        check_direction(dir, self.dim())?;
        Ok(self
            .vertices
            .iter()
            .map(|v| v.dot(dir))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("HPolytope", 2)?;
        st.serialize_field("a", &self.rows())?;
        st.serialize_field("b", self.b.as_slice())?;
        st.end()
    }
}

impl Serialize for VPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let verts: Vec<&[f64]> = self.vertices.iter().map(|v| v.as_slice()).collect();
        let mut st = s.serialize_struct("VPolytope", 1)?;
        st.serialize_field("vertices", &verts)?;
        st.end()
    }
}

/// Serialize an optional vector as a plain list.
pub(crate) fn ser_opt_vec<S: serde::Serializer>(v: &Option<DVector<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.as_ref().map(|v| v.as_slice()).serialize(s)
}

/// Rigid-body shape `𝒪(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRecord", into = "ShapeRecord")]
pub enum ConvexShape {
    /// Axis-aligned box `{y : ‖y − c‖∞ <= a}` (side `2a`).
    Box { center: DVector<f64>, half_width: f64 },
    Ball { center: DVector<f64>, radius: f64 },
    HPolytope(HPolytope),
    VPolytope(VPolytope),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ShapeRecord {
    Box { center: Vec<f64>, half_width: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    HPolytope { a: Vec<Vec<f64>>, b: Vec<f64> },
    VPolytope { vertices: Vec<Vec<f64>> },
}

impl TryFrom<ShapeRecord> for ConvexShape {
    type Error = Error;

    fn try_from(r: ShapeRecord) -> Result<Self> {
        match r {
            ShapeRecord::Box { center, half_width } => ConvexShape::new_box(DVector::from_vec(center), half_width),
            ShapeRecord::Ball { center, radius } => ConvexShape::new_ball(DVector::from_vec(center), radius),
            ShapeRecord::HPolytope { a, b } => Ok(ConvexShape::HPolytope(HPolytope::from_rows(&a, &b)?)),
            ShapeRecord::VPolytope { vertices } => Ok(ConvexShape::VPolytope(VPolytope::new(
                vertices.into_iter().map(DVector::from_vec).collect(),
            )?)),
        }
    }
}

impl From<ConvexShape> for ShapeRecord {
    fn from(s: ConvexShape) -> Self {
        match s {
            ConvexShape::Box { center, half_width } => ShapeRecord::Box {
                center: center.iter().copied().collect(),
                half_width,
            },
            ConvexShape::Ball { center, radius } => ShapeRecord::Ball {
                center: center.iter().copied().collect(),
                radius,
            },
            ConvexShape::HPolytope(h) => ShapeRecord::HPolytope {
                a: h.rows(),
                b: h.b.iter().copied().collect(),
            },
            ConvexShape::VPolytope(v) => ShapeRecord::VPolytope {
                vertices: v.vertices.iter().map(|p| p.iter().copied().collect()).collect(),
            },
        }
    }
}

impl std::fmt::Display for ShapeRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeRecord::Box { .. } => write!(f, "box"),
            ShapeRecord::Ball { .. } => write!(f, "ball"),
            ShapeRecord::HPolytope { .. } => write!(f, "hpolytope"),
            ShapeRecord::VPolytope { .. } => write!(f, "vpolytope"),
        }
    }
}

fn check_center(center: &DVector<f64>) -> Result<()> {
    if center.is_empty() {
        return Err(Error::invalid("shape center must have at least one coordinate"));
    }
    if center.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("shape center must be finite"));
    }
    Ok(())
}

impl ConvexShape {
    pub fn new_box(center: DVector<f64>, half_width: f64) -> Result<Self> {
        check_center(&center)?;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("box half-width must be positive"));
        }
        Ok(ConvexShape::Box { center, half_width })
    }

    pub fn new_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        check_center(&center)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("ball radius must be positive"));
        }
        Ok(ConvexShape::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexShape::Box { center, .. } | ConvexShape::Ball { center, .. } => center.len(),
            ConvexShape::HPolytope(h) => h.dim(),
            ConvexShape::VPolytope(v) => v.dim(),
        }
    }

    pub fn contains(&self, y: &DVector<f64>) -> bool {
        match self {
            ConvexShape::Box { center, half_width } => (y - center).amax() <= *half_width,
            ConvexShape::Ball { center, radius } => (y - center).norm_squared() <= radius * radius,
            ConvexShape::HPolytope(h) => h.contains(y),
            ConvexShape::VPolytope(v) => v.contains(y),
        }
    }

    pub fn reflect(&self) -> ConvexShape {
        match self {
            ConvexShape::Box { center, half_width } => ConvexShape::Box {
                center: -center,
                half_width: *half_width,
            },
            ConvexShape::Ball { center, radius } => ConvexShape::Ball {
                center: -center,
                radius: *radius,
            },
            ConvexShape::HPolytope(h) => ConvexShape::HPolytope(h.reflect()),
            ConvexShape::VPolytope(v) => ConvexShape::VPolytope(v.reflect()),
        }
    }

    pub fn translate(&self, offset: &DVector<f64>) -> ConvexShape {
        match self {
            ConvexShape::Box { center, half_width } => ConvexShape::Box {
                center: center + offset,
                half_width: *half_width,
            },
            ConvexShape::Ball { center, radius } => ConvexShape::Ball {
                center: center + offset,
                radius: *radius,
            },
            ConvexShape::HPolytope(h) => ConvexShape::HPolytope(h.translate(offset)),
            ConvexShape::VPolytope(v) => ConvexShape::VPolytope(v.translate(offset)),
        }
    }

    /// Lebesgue measure. Polytopes are supported up to dimension three.
    pub fn measure(&self) -> Result<f64> {
        let n = self.dim();
        match self {
            ConvexShape::Box { half_width, .. } => Ok((2.0 * half_width).powi(n as i32)),
            ConvexShape::Ball { radius, .. } => {
                let nf = n as f64;
                Ok(PI.powf(nf / 2.0) / libm::tgamma(nf / 2.0 + 1.0) * radius.powi(n as i32))
            }
            ConvexShape::HPolytope(h) => {
                if n > 3 {
                    return Err(Error::Unsupported(format!("polytope volume in dimension {n}")));
                }
                let verts = h.vertices();
                if verts.is_empty() && !h.is_bounded() {
                    return Err(Error::UnboundedSupport(vec![]));
                }
                VPolytope::new(verts).map_err(|_| Error::ZeroMeasure)?.volume()
            }
            ConvexShape::VPolytope(v) => v.volume(),
        }
    }

    /// Center of central symmetry, when the shape has one.
    pub fn symmetry_center(&self) -> Option<DVector<f64>> {
        match self {
            ConvexShape::Box { center, .. } | ConvexShape::Ball { center, .. } => Some(center.clone()),
            ConvexShape::HPolytope(h) => {
                let c = self.bounding_box().ok().map(|(lo, hi)| (lo + hi) / 2.0)?;
                let dirs: Vec<DVector<f64>> = (0..h.num_halfspaces())
                    .map(|i| h.a.row(i).transpose())
                    .filter(|d| d.norm() > 0.0)
                    .collect();
                symmetric_about(self, &c, &dirs).then_some(c)
            }
            ConvexShape::VPolytope(v) => {
                let verts = hull_vertices(v.vertices());
                let c = verts.iter().fold(DVector::zeros(v.dim()), |acc, p| acc + p) / verts.len() as f64;
                let scale = verts.iter().map(|p| p.amax()).fold(1.0f64, f64::max);
                let ok = verts.iter().all(|p| {
                    let mirror = 2.0 * &c - p;
                    verts.iter().any(|q| (q - &mirror).amax() <= 1e-9 * scale)
                });
                ok.then_some(c)
            }
        }
    }

    /// `shape = −shape` (symmetric about the origin).
    pub fn is_centrally_symmetric(&self) -> bool {
        self.symmetry_center()
            .is_some_and(|c| c.amax() <= 1e-12 * (1.0 + self.extent_scale()))
    }

    fn extent_scale(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| lo.amax().max(hi.amax()))
            .unwrap_or(1.0)
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            hi[i] = self.support(&e)?;
            lo[i] = -self.support(&-e)?;
        }
        Ok((lo, hi))
    }

    /// Largest axis width, used to size grids and bounding balls.
    pub fn diameter_bound(&self) -> Result<f64> {
        let (lo, hi) = self.bounding_box()?;
        Ok((hi - lo).norm())
    }

    /// Halfspace form; balls have none.
    pub fn to_hpolytope(&self) -> Result<HPolytope> {
        match self {
            ConvexShape::Box { center, half_width } => {
                let n = center.len();
                let mut rows = Vec::with_capacity(2 * n);
                let mut b = Vec::with_capacity(2 * n);
                for i in 0..n {
                    let mut e = vec![0.0; n];
                    e[i] = 1.0;
                    rows.push(e.clone());
                    b.push(center[i] + half_width);
                    e[i] = -1.0;
                    rows.push(e);
                    b.push(-center[i] + half_width);
                }
                HPolytope::from_rows(&rows, &b)
            }
            ConvexShape::Ball { .. } => Err(Error::Unsupported("halfspace form of a ball".into())),
            ConvexShape::HPolytope(h) => Ok(h.clone()),
            ConvexShape::VPolytope(v) => v.to_hpolytope(),
        }
    }
}

fn symmetric_about(shape: &ConvexShape, c: &DVector<f64>, extra: &[DVector<f64>]) -> bool {
    let n = shape.dim();
    let mut dirs: Vec<DVector<f64>> = extra.to_vec();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        dirs.push(e);
    }
    let scale = 1.0 + shape.extent_scale();
    dirs.iter().all(|l| {
        let l = l / l.norm();
        match (shape.support(&l), shape.support(&-&l)) {
            (Ok(p), Ok(m)) => ((p - l.dot(c)) - (m + l.dot(c))).abs() <= 1e-9 * scale,
            _ => false,
        }
    })
}

impl VPolytope {
    /// Lebesgue measure of the hull (dimension at most three).
    pub fn volume(&self) -> Result<f64> {
        let n = self.dim();
        if n > 3 {
            return Err(Error::Unsupported(format!("polytope volume in dimension {n}")));
        }
        if !self.is_full_dimensional() {
            return Err(Error::ZeroMeasure);
        }
        match n {
            1 => {
                let lo = self.vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = self.vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                Ok(hi - lo)
            }
            2 => Ok(self.area()),
            _ => volume_3d(&self.vertices),
        }
    }
}

impl Support for ConvexShape {
    fn dim(&self) -> usize {
        ConvexShape::dim(self)
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        check_direction(dir, self.dim())?;
        match self {
            ConvexShape::Box { center, half_width } => Ok(center.dot(dir) + half_width * dir.lp_norm(1)),
            ConvexShape::Ball { center, radius } => Ok(center.dot(dir) + radius * dir.norm()),
            ConvexShape::HPolytope(h) => h.support(dir),
            ConvexShape::VPolytope(v) => v.support(dir),
        }
    }
}

/// `ℰ(c, Q) = {c + Q^{1/2} u : ‖u‖ <= 1}` with `Q` symmetric positive
/// semidefinite. `Q = 0` is the point `{c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::dim(n, shape.nrows(), "ellipsoid shape matrix"));
        }
        let sym = (&shape + shape.transpose()) / 2.0;
        let scale = sym.amax().max(1.0);
        if (&shape - &sym).amax() > 1e-10 * scale {
            return Err(Error::invalid("ellipsoid shape matrix must be symmetric"));
        }
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 * scale {
            return Err(Error::invalid("ellipsoid shape matrix must be positive semidefinite"));
        }
        Ok(Ellipsoid { center, shape: sym })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Ellipsoid {
            center,
            shape: DMatrix::zeros(n, n),
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape_matrix(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn is_point(&self) -> bool {
        self.shape.iter().all(|v| *v == 0.0)
    }

    /// Points `c + Q^{1/2}(cos t, sin t)` on the boundary of a planar ellipsoid.
    pub fn boundary_polyline(&self, count: usize) -> Result<Vec<DVector<f64>>> {
        if self.center.len() != 2 {
            return Err(Error::Unsupported("boundary polylines are planar only".into()));
        }
        let eig = self.shape.clone().symmetric_eigen();
        let root = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
            * eig.eigenvectors.transpose();
        Ok(super::planar_directions(count)
            .into_iter()
            .map(|u| &self.center + &root * u)
            .collect())
    }
}

impl Support for Ellipsoid {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        check_direction(dir, self.dim())?;
        let q = dir.dot(&(&self.shape * dir)).max(0.0);
        Ok(self.center.dot(dir) + q.sqrt())
    }
}

/// A support-function evaluation `ρ(l)` along a unit direction `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSample {
    direction: DVector<f64>,
    value: f64,
}

impl SupportSample {
    pub fn new(direction: DVector<f64>, value: f64) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("support sample direction must be a unit vector"));
        }
        Ok(SupportSample { direction, value })
    }

    /// Evaluate `set`'s support along the normalisation of `dir`.
    pub fn of<S: Support + ?Sized>(set: &S, dir: &DVector<f64>) -> Result<Self> {
        check_direction(dir, set.dim())?;
        let unit = dir / dir.norm();
        let value = set.support(&unit)?;
        Ok(SupportSample { direction: unit, value })
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Output of [`polytope_from_supports`]: the polytope and whether it is
/// bounded (the directions positively span the space).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolytope {
    pub polytope: HPolytope,
    pub bounded: bool,
}

pub fn support<S: Support + ?Sized>(set: &S, dir: &DVector<f64>) -> Result<f64> {
    set.support(dir)
}

/// Support function of a Minkowski sum: the sum of the parts' supports.
pub fn minkowski_support(parts: &[&dyn Support], dir: &DVector<f64>) -> Result<f64> {
    if parts.is_empty() {
        return Err(Error::invalid("Minkowski sum of an empty list"));
    }
    parts.iter().map(|p| p.support(dir)).sum()
}

/// κ-superlevel set of the `N(mean, cov)` density:
/// `ℰ(mean, −2 log(κ √|2πΣ|) Σ)`, or `None` when κ exceeds the peak density.
pub fn gaussian_superlevel_ellipsoid(mean: &DVector<f64>, cov: &DMatrix<f64>, kappa: f64) -> Result<Option<Ellipsoid>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::dim(n, cov.nrows(), "covariance"));
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid("density level must be positive"));
    }
    let sym = (cov + cov.transpose()) / 2.0;
    let eig = sym.clone().symmetric_eigenvalues();
    let scale = eig.amax().max(1.0);
    let rank = eig.iter().filter(|&&v| v > 1e-10 * scale).count();
    if rank < n {
        return Err(Error::SingularCovariance { rank, dim: n });
    }
    // log(κ √|2πΣ|) without forming the determinant
    let log_c = kappa.ln() + 0.5 * eig.iter().map(|l| (2.0 * PI * l).ln()).sum::<f64>();
    let factor = -2.0 * log_c;
    if factor < 0.0 {
        if factor > -1e-12 {
            return Ok(Some(Ellipsoid::point(mean.clone())));
        }
        return Ok(None);
    }
    if factor < 1e-12 {
        return Ok(Some(Ellipsoid::point(mean.clone())));
    }
    Ellipsoid::new(mean.clone(), sym * factor).map(Some)
}

pub fn reflect(shape: &ConvexShape) -> ConvexShape {
    shape.reflect()
}

pub fn translate(shape: &ConvexShape, offset: &DVector<f64>) -> ConvexShape {
    shape.translate(offset)
}

pub fn measure(shape: &ConvexShape) -> Result<f64> {
    shape.measure()
}

/// `{y : a_iᵀ y <= b_i}` from support samples `(a_i, b_i)`.
pub fn polytope_from_supports(samples: &[SupportSample]) -> Result<SupportPolytope> {
    let Some(first) = samples.first() else {
        return Err(Error::invalid("no support samples"));
    };
    let n = first.direction.len();
    if let Some(bad) = samples.iter().find(|s| s.direction.len() != n) {
        return Err(Error::dim(n, bad.direction.len(), "support sample direction"));
    }
    let a = DMatrix::from_fn(samples.len(), n, |i, j| samples[i].direction[j]);
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.value));
    let polytope = HPolytope::new(a, b)?;
    let bounded = polytope.is_bounded();
    Ok(SupportPolytope { polytope, bounded })
}

/// Minimal vertex representation of the hull of `points`.
pub fn convex_hull(points: &[DVector<f64>]) -> Result<VPolytope> {
    if points.is_empty() {
        return Err(Error::invalid("convex hull of no points"));
    }
    VPolytope::new(points.to_vec())?;
    VPolytope::new(hull_vertices(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn unit_square() -> ConvexShape {
        ConvexShape::VPolytope(
            VPolytope::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[1.0, 1.0]), v(&[0.0, 1.0])]).unwrap(),
        )
    }

    #[test]
    fn support_closed_forms() {
        let e = Ellipsoid::new(v(&[2.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(e.support(&v(&[1.0, 0.0])).unwrap(), 3.0);
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 0.2).unwrap();
        assert_eq!(ball.support(&v(&[0.0, 1.0])).unwrap(), 0.2);
        let bx = ConvexShape::new_box(v(&[0.0, 0.0]), 50.0).unwrap();
        // brute force over the corners
        let corners = [[50.0, 50.0], [50.0, -50.0], [-50.0, 50.0], [-50.0, -50.0]];
        let brute = corners.iter().map(|c| c[0] + c[1]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(bx.support(&v(&[1.0, 1.0])).unwrap(), brute);
        assert_eq!(brute, 100.0);
    }

    #[test]
    fn support_rejects_zero_direction_and_unbounded() {
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert!(matches!(ball.support(&v(&[0.0, 0.0])), Err(Error::InvalidArgument(_))));
        let half = ConvexShape::HPolytope(HPolytope::from_rows(&[vec![1.0, 0.0]], &[1.0]).unwrap());
        assert!(matches!(half.support(&v(&[0.0, 1.0])), Err(Error::UnboundedSupport(_))));
    }

    #[test]
    fn polytope_support_matches_box() {
        let bx = ConvexShape::new_box(v(&[1.0, -2.0]), 3.0).unwrap();
        let hp = ConvexShape::HPolytope(bx.to_hpolytope().unwrap());
        for d in crate::geometry::planar_directions(12) {
            assert!((bx.support(&d).unwrap() - hp.support(&d).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn minkowski_support_examples() {
        let e = Ellipsoid::new(v(&[2.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let bx = ConvexShape::new_box(v(&[0.0, 0.0]), 50.0).unwrap();
        assert_eq!(minkowski_support(&[&e, &bx], &v(&[1.0, 0.0])).unwrap(), 53.0);
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(minkowski_support(&[&ball], &v(&[0.0, -1.0])).unwrap(), 1.0);
        let b20 = ConvexShape::new_box(v(&[0.0, 0.0]), 20.0).unwrap();
        let b5 = ConvexShape::new_box(v(&[0.0, 0.0]), 5.0).unwrap();
        assert_eq!(minkowski_support(&[&b20, &b5], &v(&[1.0, 0.0])).unwrap(), 25.0);
        assert!(minkowski_support(&[], &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn superlevel_ellipsoid_examples() {
        let mean = v(&[0.0, 0.0]);
        let cov = DMatrix::identity(2, 2);
        let peak = gaussian_superlevel_ellipsoid(&mean, &cov, 1.0 / (2.0 * PI)).unwrap().unwrap();
        assert!(peak.is_point() || peak.shape_matrix().amax() < 1e-12);
        let unit = gaussian_superlevel_ellipsoid(&mean, &cov, (-0.5f64).exp() / (2.0 * PI))
            .unwrap()
            .unwrap();
        assert!((unit.shape_matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!(gaussian_superlevel_ellipsoid(&mean, &cov, 1.0).unwrap().is_none());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            gaussian_superlevel_ellipsoid(&mean, &singular, 0.01),
            Err(Error::SingularCovariance { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn reflect_examples() {
        let bx = ConvexShape::new_box(v(&[1.0, 0.0]), 2.0).unwrap();
        assert_eq!(bx.reflect(), ConvexShape::new_box(v(&[-1.0, 0.0]), 2.0).unwrap());
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 0.3).unwrap();
        assert_eq!(ball.reflect(), ball);
        assert!(ball.is_centrally_symmetric());
        let tri = ConvexShape::VPolytope(
            VPolytope::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap(),
        );
        let want = ConvexShape::VPolytope(
            VPolytope::new(vec![v(&[0.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, -1.0])]).unwrap(),
        );
        assert_eq!(tri.reflect(), want);
        assert!(!tri.is_centrally_symmetric());
    }

    #[test]
    fn translate_examples() {
        let bx = ConvexShape::new_box(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(bx.translate(&v(&[3.0, 0.0])), ConvexShape::new_box(v(&[3.0, 0.0]), 1.0).unwrap());
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 0.2).unwrap();
        let x = v(&[0.53, 0.53]);
        assert_eq!(ball.translate(&x), ConvexShape::new_ball(x, 0.2).unwrap());
    }

    #[test]
    fn measure_examples() {
        let bx = ConvexShape::new_box(v(&[0.0, 0.0]), 50.0).unwrap();
        assert_eq!(bx.measure().unwrap(), 10000.0);
        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 0.2).unwrap();
        assert!((ball.measure().unwrap() - PI * 0.04).abs() < 1e-12);
        assert!((unit_square().measure().unwrap() - 1.0).abs() < 1e-12);
        let ball3 = ConvexShape::new_ball(v(&[0.0, 0.0, 0.0]), 1.0).unwrap();
        assert!((ball3.measure().unwrap() - 4.0 * PI / 3.0).abs() < 1e-12);
        let flat = ConvexShape::VPolytope(VPolytope::new(vec![v(&[0.0, 0.0]), v(&[1.0, 1.0])]).unwrap());
        assert_eq!(flat.measure(), Err(Error::ZeroMeasure));
        let cube = ConvexShape::new_box(v(&[0.0, 0.0, 0.0]), 0.5).unwrap();
        let hcube = ConvexShape::HPolytope(cube.to_hpolytope().unwrap());
        assert!((hcube.measure().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_sizes_rejected() {
        assert!(ConvexShape::new_box(v(&[0.0]), 0.0).is_err());
        assert!(ConvexShape::new_ball(v(&[0.0]), -1.0).is_err());
        assert!(VPolytope::new(vec![]).is_err());
    }

    #[test]
    fn polytope_from_supports_examples() {
        let dirs = [v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, -1.0])];
        let samples: Vec<SupportSample> =
            dirs.iter().map(|d| SupportSample::new(d.clone(), 1.0).unwrap()).collect();
        let out = polytope_from_supports(&samples).unwrap();
        assert!(out.bounded);
        let verts = out.polytope.vertices();
        assert_eq!(verts.len(), 4);
        assert!(verts.iter().all(|p| (p[0].abs() - 1.0).abs() < 1e-12 && (p[1].abs() - 1.0).abs() < 1e-12));

        let ball = ConvexShape::new_ball(v(&[0.0, 0.0]), 1.0).unwrap();
        let samples: Vec<SupportSample> = dirs.iter().map(|d| SupportSample::of(&ball, d).unwrap()).collect();
        let out = polytope_from_supports(&samples).unwrap();
        assert!(out.polytope.contains(&v(&[0.99, 0.99])));

        let half = vec![SupportSample::new(v(&[1.0, 0.0]), 1.0).unwrap()];
        assert!(!polytope_from_supports(&half).unwrap().bounded);
    }

    #[test]
    fn support_polytope_of_ellipsoid_hausdorff_gap() {
        let e = Ellipsoid::new(v(&[2.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let samples: Vec<SupportSample> = crate::geometry::planar_directions(32)
            .iter()
            .map(|d| SupportSample::of(&e, d).unwrap())
            .collect();
        let poly = polytope_from_supports(&samples).unwrap().polytope;
        // dense boundary sampling of the ellipsoid is contained
        for p in e.boundary_polyline(720).unwrap() {
            assert!(poly.contains(&p));
        }
        // vertices lie within the bound (1/cos(π/32) − 1) of the unit circle
        let gap = 1.0 / (PI / 32.0).cos() - 1.0;
        for q in poly.vertices() {
            let d = (q - v(&[2.0, 2.0])).norm() - 1.0;
            assert!(d <= gap + 1e-9 && d >= -1e-9);
        }
    }

    #[test]
    fn convex_hull_examples() {
        let pts = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.1, 0.1])];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices().len(), 3);
        let single = convex_hull(&[v(&[0.3, 0.4])]).unwrap();
        assert_eq!(single.vertices(), &[v(&[0.3, 0.4])]);
        assert!(!single.is_full_dimensional());
    }

    #[test]
    fn convex_hull_of_random_disc_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        while pts.len() < 100 {
            let p = v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            if p.norm() <= 1.0 {
                pts.push(p);
            }
        }
        let h = convex_hull(&pts).unwrap();
        assert!(h.vertices().iter().all(|p| p.norm() <= 1.0));
        assert!(pts.iter().all(|p| h.contains(p)));
    }

    #[test]
    fn shape_record_round_trip() {
        let bx = ConvexShape::new_box(v(&[0.0, 0.0]), 50.0).unwrap();
        let text = serde_json::to_string(&bx).unwrap();
        assert_eq!(text, r#"{"kind":"box","center":[0.0,0.0],"half_width":50.0}"#);
        let back: ConvexShape = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bx);
        let bad = serde_json::from_str::<ConvexShape>(r#"{"kind":"ball","center":[0.0],"radius":0.0}"#);
        assert!(bad.is_err());
    }

    fn arb_vec2() -> impl Strategy<Value = DVector<f64>> {
        (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b)| v(&[a, b]))
    }

    fn arb_shape() -> impl Strategy<Value = ConvexShape> {
        prop_oneof![
            (arb_vec2(), 0.1..3.0f64).prop_map(|(c, a)| ConvexShape::new_box(c, a).unwrap()),
            (arb_vec2(), 0.1..3.0f64).prop_map(|(c, r)| ConvexShape::new_ball(c, r).unwrap()),
            prop::collection::vec(arb_vec2(), 3..8)
                .prop_filter("full dimensional", |pts| VPolytope::new(pts.clone()).unwrap().is_full_dimensional())
                .prop_map(|pts| ConvexShape::VPolytope(convex_hull(&pts).unwrap())),
            prop::collection::vec(arb_vec2(), 3..8)
                .prop_filter("full dimensional", |pts| VPolytope::new(pts.clone()).unwrap().is_full_dimensional())
                .prop_map(|pts| ConvexShape::HPolytope(convex_hull(&pts).unwrap().to_hpolytope().unwrap())),
        ]
    }

    proptest! {
        #[test]
        fn reflection_is_an_involution(s in arb_shape(), z in arb_vec2()) {
            let rr = s.reflect().reflect();
            prop_assert_eq!(&rr, &s);
            prop_assert_eq!(s.reflect().contains(&z), s.contains(&-&z));
        }

        #[test]
        fn rigid_body_identities(s in arb_shape(), y in arb_vec2(), z in arb_vec2()) {
            // −𝒪(−y) = reflect(translate(reflect(S), −y)) and z ∈ −𝒪(−y) ⇔ y − z ∈ 𝒪(0)
            let lhs = s.translate(&-&y).reflect();
            prop_assert_eq!(lhs.contains(&z), s.contains(&(&y - &z)));
            // translation invariance: 𝒪(y) = {y} ⊕ 𝒪(0)
            prop_assert_eq!(s.translate(&y).contains(&z), s.contains(&(&z - &y)));
        }

        #[test]
        fn translation_group_and_measure(s in arb_shape(), w in arb_vec2()) {
            let back = s.translate(&w).translate(&-&w);
            for d in crate::geometry::planar_directions(8) {
                prop_assert!((back.support(&d).unwrap() - s.support(&d).unwrap()).abs() < 1e-9);
            }
            let m0 = s.measure().unwrap();
            let m1 = s.translate(&w).measure().unwrap();
            prop_assert!((m0 - m1).abs() <= 1e-9 * (1.0 + m0));
        }

        #[test]
        fn support_additivity(a in arb_shape(), b in arb_shape(), t in 0.0..6.3f64) {
            let d = v(&[t.cos(), t.sin()]);
            let sum = minkowski_support(&[&a, &b], &d).unwrap();
            prop_assert_eq!(sum, a.support(&d).unwrap() + b.support(&d).unwrap());
        }

        #[test]
        fn support_sandwich(s in arb_shape(), ndir in 3usize..24, probe in arb_vec2()) {
            let dirs = crate::geometry::planar_directions(ndir);
            let samples: Vec<SupportSample> = dirs.iter().map(|d| SupportSample::of(&s, d).unwrap()).collect();
            let outer = polytope_from_supports(&samples).unwrap().polytope;
            // touching points: maximisers of each direction, found on a dense boundary scan
            let touching: Vec<DVector<f64>> = match &s {
                ConvexShape::Ball { center, radius } => dirs.iter().map(|d| center + d * *radius).collect(),
                ConvexShape::Box { center, half_width } => dirs.iter().map(|d| {
                    center + v(&[half_width * d[0].signum(), half_width * d[1].signum()])
                }).collect(),
                ConvexShape::VPolytope(p) => dirs.iter().map(|d| {
                    p.vertices().iter().max_by(|x, y| x.dot(d).partial_cmp(&y.dot(d)).unwrap()).unwrap().clone()
                }).collect(),
                ConvexShape::HPolytope(h) => {
                    let verts = h.vertices();
                    dirs.iter().map(|d| verts.iter().max_by(|x, y| x.dot(d).partial_cmp(&y.dot(d)).unwrap()).unwrap().clone()).collect()
                }
            };
            let inner = convex_hull(&touching).unwrap();
            if inner.is_full_dimensional() && inner.contains(&probe) {
                prop_assert!(s.contains(&probe));
            }
            if s.contains(&probe) {
                prop_assert!(outer.contains(&probe));
            }
        }
    }
}
