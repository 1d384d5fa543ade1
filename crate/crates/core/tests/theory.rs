use mtrnet::theory::{
    check_bounds, check_decompositions, eps_terms, sweep, DiscreteWorld, OutcomeLaw, TabularModel,
};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-14
}

/// Two cells, constant outcomes 0 / 1, the model predicts 0 for both arms.
fn two_cell() -> (DiscreteWorld<f64>, TabularModel<f64>) {
    let world = DiscreteWorld {
        px: vec![0.5, 0.5],
        p_t1: vec![0.8, 0.2],
        p_r1: vec![1.0, 0.5],
        y0: vec![OutcomeLaw::point(0.0), OutcomeLaw::point(0.0)],
        y1: vec![OutcomeLaw::point(1.0), OutcomeLaw::point(1.0)],
    };
    let model = TabularModel {
        phi: vec![0, 1],
        h0: vec![0.0, 0.0],
        h1: vec![0.0, 0.0],
    };
    (world, model)
}

#[test]
fn hand_computed_terms() {
    let (world, model) = two_cell();
    let e = eps_terms(&world, &model).unwrap();
    assert!(close(e.pehe, 1.0));
    assert!(close(e.f, 0.5) && close(e.cf, 0.5));
    assert!(close(e.f_r1, 0.6) && close(e.cf_r1, 0.4));
    assert!(close(e.f_r0, 0.2));
    assert!(close(e.f_r1_t1, 1.0) && close(e.f_r1_t0, 0.0));
    assert!(close(e.v, 0.25));
    assert!(close(e.u, 0.4) && close(e.u_marginal, 0.5));
    assert!(close(e.b_phi, 1.0));
    assert!(close(e.ipm_t, 10.0 / 9.0));
    assert!(close(e.ipm_r, 4.0 / 3.0));
    assert!(close(e.sigma2_y, 0.0));
    assert!(close(e.pehe_bound(), 2.0));
    assert!(close(e.final_bound(), 50.0 / 9.0));
}

#[test]
fn hand_world_passes_every_check() {
    let (world, model) = two_cell();
    let dec = check_decompositions(&world, &model).unwrap();
    let bnd = check_bounds(&world, &model).unwrap();
    assert!(dec.violations(1e-12).is_empty(), "{}", dec.table());
    assert!(bnd.violations(1e-12).is_empty(), "{}", bnd.table());
    assert!(close(bnd.get("pehe_bound").unwrap(), 1.0));
}

#[test]
fn relabeled_representation_leaves_terms_unchanged() {
    let (world, model) = two_cell();
    let swapped = TabularModel {
        phi: vec![1, 0],
        ..model.clone()
    };
    let a = eps_terms(&world, &model).unwrap();
    let b = eps_terms(&world, &swapped).unwrap();
    assert!(close(a.ipm_t, b.ipm_t) && close(a.ipm_r, b.ipm_r) && close(a.final_bound(), b.final_bound()));
}

#[test]
fn random_sweep_is_clean_and_reproducible() {
    let a = sweep::<f64>(200, 9, 6, 1e-10).unwrap();
    let b = sweep::<f64>(200, 9, 6, 1e-10).unwrap();
    assert!(a.passed(), "{}", a.table());
    assert_eq!(a.violations, 0);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn invalid_world_is_rejected() {
    let (mut world, model) = two_cell();
    world.px = vec![0.7, 0.7];
    assert!(eps_terms(&world, &model).is_err());
    let (world, mut model) = two_cell();
    model.phi = vec![0, 0];
    assert!(eps_terms(&world, &model).is_err());
}
