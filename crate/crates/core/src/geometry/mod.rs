//! Convex-set primitives: boxes, balls, polytopes and ellipsoids, their
//! support functions, Minkowski sums, reflections and Lebesgue measure.

pub(crate) mod hull;
pub(crate) mod lp;
mod shape;

pub(crate) use shape::ser_opt_vec;

pub use shape::{
    convex_hull, gaussian_superlevel_ellipsoid, measure, minkowski_support, polytope_from_supports,
    reflect, support, translate, ConvexShape, Ellipsoid, HPolytope, Support, SupportPolytope,
    SupportSample, VPolytope,
};

use nalgebra::DVector;

/// `count` unit directions equally spaced in angle, starting at `+e1`.
pub fn planar_directions(count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            DVector::from_vec(vec![t.cos(), t.sin()])
        })
        .collect()
}
