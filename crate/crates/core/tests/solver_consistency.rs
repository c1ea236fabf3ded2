//! Newton convergence rate and agreement between the two solvers.

use bbpd::adr::{AdrConfig, LoadProgram};
use bbpd::adaptive::{run_explicit, run_implicit};
use bbpd::implicit::{newton_load_step, relative_residual, NewtonConfig};
use bbpd::scenario::{load_scenario, relative_l2};
use bbpd::SystemState;

#[test]
fn newton_converges_quadratically() {
    // First tenth of the plate pull: geometrically nonlinear, no damage yet.
    let (model, _) = load_scenario("plate_hole_tension_desk").unwrap().build_models().unwrap();
    let mut st = SystemState::new(&model);
    st.install_load(&model.load_at(0.1));
    let r = newton_load_step(&model, &mut st, &NewtonConfig::default()).unwrap();
    assert_eq!(r.secant_fallbacks, 0);
    let mut checked = 0;
    for w in r.residuals.windows(2) {
        let (prev, next) = (w[0], w[1]);
        // Below ~1e-13 the residual is round-off.
        if prev < 1e-2 && next > 1e-13 {
            assert!(next <= 10.0 * prev * prev, "{prev:e} -> {next:e} in {:?}", r.residuals);
            checked += 1;
        }
    }
    assert!(checked >= 1, "no iterate in the quadratic regime: {:?}", r.residuals);
}

#[test]
fn relaxed_state_passes_the_newton_check() {
    let sc = load_scenario("bar2d_transverse_desk").unwrap();
    let (model, _) = sc.build_models().unwrap();
    let mut explicit = SystemState::new(&model);
    let report = run_explicit(
        &model,
        &mut explicit,
        &LoadProgram::ramp(sc.loading.explicit_ramp_steps),
        &AdrConfig::default(),
    )
    .unwrap();
    assert!(report.converged);
    // Relaxation stops on the displacement change, so its force residual sits
    // somewhat above the Newton tolerance.
    let rel = relative_residual(&model, &explicit).unwrap();
    assert!(rel < 1e-6, "relaxed state leaves relative residual {rel:e}");

    let mut implicit = SystemState::new(&model);
    run_implicit(&model, &mut implicit, 1, &NewtonConfig::default(), 0).unwrap();
    let d = relative_l2(&explicit.displacement, &implicit.displacement);
    assert!(d < 1e-5, "fields differ by {d:e}");
}
