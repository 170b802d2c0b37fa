use keepout::dynamics::{biased_turning, unicycle_dmsp, DPVModel, GaussianSpec, ParameterTrajectory, UnicycleParams};
use keepout::geometry::{ConvexShape, VPolytope};
use keepout::occupancy::ObstacleInstance;
use keepout::occupyset::{default_directions, dmsp_cover, occupyset_minkowski, occupyset_projection, CoverMethod, Region};
use keepout::oracle::{contour_and_containment, GridSpec, MonteCarloOccupancy, Target};
use nalgebra::{DMatrix, DVector};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Double integrator-like drift with noise on both axes, three steps.
fn drifting(shape: ConvexShape) -> ObstacleInstance {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let noise = GaussianSpec::new(v(&[0.2, 0.0]), DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2])).unwrap();
    let model = DPVModel::constant(a, None, DMatrix::identity(2, 2), noise, 3).unwrap();
    ObstacleInstance::dpv(shape, model, ParameterTrajectory::constant(DVector::zeros(1), 3), v(&[1.0, -1.0]), vec![]).unwrap()
}

#[test]
fn both_algorithms_sandwich_the_sampled_occupancy() {
    let triangle = VPolytope::new(vec![v(&[-0.5, -0.3]), v(&[0.6, -0.2]), v(&[0.0, 0.7])]).unwrap();
    let obs = drifting(ConvexShape::VPolytope(triangle));
    let alpha = 0.05;
    let proj = occupyset_projection(&obs, alpha, 3, 12, None, 1e-6).unwrap();
    let mink = occupyset_minkowski(&obs, alpha, 3, &default_directions(2).unwrap(), 1e-6).unwrap();
    assert!(matches!(proj.inner, Some(Region::Set(_))));
    assert!(proj.inner_outside_outer(1e-9).is_empty());

    let mc = MonteCarloOccupancy::simulate(&obs, 3, 50_000, 11).unwrap();
    let spec = GridSpec::around_gaussian(obs.occupancy(3).unwrap().state(), obs.shape(), 60, 60).unwrap();
    let grid = mc.grid(&spec).unwrap();
    for approx in [&proj, &mink] {
        let rep = contour_and_containment(&mc, &grid, alpha, Target::Single(approx));
        assert!(rep.nodes_above > 0);
        assert!(rep.pass, "{:?} failed: {rep:?}", approx.method);
    }

    // the projection outer set is the tighter one
    let area = |a: &keepout::occupyset::OccupySetApprox| VPolytope::new(a.outer.as_set().unwrap().vertices()).unwrap().area();
    assert!(area(&proj) < area(&mink));
}

#[test]
fn switched_cover_contains_sampled_cells() {
    let mut params = UnicycleParams::with_transition(biased_turning());
    params.horizon = 10;
    let obs = ObstacleInstance::dmsp(ConvexShape::new_ball(v(&[0.0, 0.0]), 0.2).unwrap(), unicycle_dmsp(&params).unwrap(), v(&[0.0, 0.0]), vec![])
        .unwrap();
    let method = CoverMethod::Minkowski {
        directions: default_directions(2).unwrap(),
    };
    let cover = dmsp_cover(&obs, 0.02, 10, &method, 1e-6).unwrap();
    assert!(!cover.pieces.is_empty());
    let mc = MonteCarloOccupancy::simulate(&obs, 10, 40_000, 3).unwrap();
    let spec = GridSpec::around_samples(mc.samples(), obs.shape(), 60, 60).unwrap();
    let rep = contour_and_containment(&mc, &mc.grid(&spec).unwrap(), 0.02, Target::Cover(&cover));
    assert!(rep.nodes_above > 0);
    assert!(rep.pass, "{rep:?}");
}
