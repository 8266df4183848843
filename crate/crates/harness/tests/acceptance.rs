//! Acceptance suite: one line per criterion, `[PASS]` or `[FAIL]`.
//!
//! Run with `cargo test -p wkbsplit-harness --test acceptance -- --nocapture`.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use wkbsplit::fit::log_log_slope;
use wkbsplit::local_error::{apply_a, apply_b, commutator_ab, OperatorOutput};
use wkbsplit::wave::{gauge_step, lie_trotter_march, lie_trotter_step};
use wkbsplit::wkb::{flow_x, flow_y, lie_trotter_wkb, linearized_flow, record_trajectory};
use wkbsplit::{assemble_wave, ComplexField, GrenierParams, Grid, RealField, WkbState};
use wkbsplit_harness::runs::{self, SweepReport};
use wkbsplit_harness::{ExperimentConfig, Task};

// tolerances
const MASS_DRIFT: f64 = 1e-9;
const MASS_STEPS: usize = 10_000;
const GAUGE_MODULUS: f64 = 1e-13;
const COMMUTATION: f64 = 1e-8;
const COMMUTATION_DT: f64 = 1e-2;
const FD_SLOPE_MIN: f64 = 0.9;
/// `(flow_Y(s, h) - s) / h` against `B(s)`: affine flow, so only rounding remains.
const GENERATOR_B_TOL: f64 = 1e-10;

fn verdict(n: u32, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {n}: {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn desk(task: Task) -> ExperimentConfig {
    ExperimentConfig::desk(task)
}

fn initial(cfg: &ExperimentConfig) -> (Arc<Grid>, WkbState) {
    let g = cfg.build_grid().unwrap();
    let s = cfg.initial_state(&g).unwrap();
    (g, s)
}

fn sweep() -> &'static SweepReport {
    static SWEEP: OnceLock<SweepReport> = OnceLock::new();
    SWEEP.get_or_init(|| runs::run_global_convergence(&desk(Task::Sweep)).unwrap())
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

#[test]
fn criterion_1_unitarity() {
    let cfg = desk(Task::Simulate);
    let (_, s0) = initial(&cfg);
    let eps = 1.0 / 16.0;
    let model = cfg.model_params(eps).unwrap();
    let u0 = assemble_wave(&s0, eps).unwrap();
    let m0 = u0.l2_norm().powi(2);
    // 10^4 steps across the desk horizon
    let dt = cfg.model.horizon / MASS_STEPS as f64;
    let u = lie_trotter_march(&u0, dt, MASS_STEPS, &model).unwrap();
    let drift = (u.l2_norm().powi(2) - m0).abs() / m0;

    let mut gauge_dev: f64 = 0.0;
    for t in [1e-3, 0.1, 1.0, 10.0] {
        let g = gauge_step(&u0, t, &model).unwrap();
        for (a, b) in g.values.iter().zip(&u0.values) {
            gauge_dev = gauge_dev.max((a.norm() - b.norm()).abs());
        }
    }
    verdict(
        1,
        drift <= MASS_DRIFT && gauge_dev <= GAUGE_MODULUS,
        format!("mass drift {drift:.3e} over {MASS_STEPS} steps of {dt:e} (<= {MASS_DRIFT:e}); gauge |u| deviation {gauge_dev:.3e} (<= {GAUGE_MODULUS:e})"),
    );
}

#[test]
fn criterion_2_commutation() {
    let cfg = desk(Task::Simulate);
    let (_, s0) = initial(&cfg);
    let mut gaps = Vec::new();
    for &eps in &cfg.model.epsilons {
        let gp = cfg.grenier_params(eps).unwrap();
        let lhs = assemble_wave(&lie_trotter_wkb(&s0, COMMUTATION_DT, &gp).unwrap(), eps).unwrap();
        let rhs = lie_trotter_step(&assemble_wave(&s0, eps).unwrap(), COMMUTATION_DT, &cfg.model_params(eps).unwrap()).unwrap();
        gaps.push(lhs.sub(&rhs).unwrap().l2_norm());
    }
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    verdict(2, worst <= COMMUTATION, format!("L2 gaps per eps [{}] (<= {COMMUTATION:e})", fmt(&gaps)));
}

#[test]
fn criterion_3_global_first_order() {
    let r = sweep();
    let slopes: Vec<f64> = r.epsilons.iter().map(|e| e.wkb_slope.unwrap_or(f64::NAN)).collect();
    let (lo, hi) = runs::FIRST_ORDER_BAND;
    verdict(3, r.verdicts.first_order, format!("phase/amplitude H^l error slopes per eps [{}] (in [{lo}, {hi}])", fmt(&slopes)));
}

#[test]
fn criterion_4_uniform_observables() {
    let r = sweep();
    let cfg = desk(Task::Sweep);
    let target = cfg.model.horizon * runs::UNIFORMITY_STEP_FRACTION;
    let u = r.uniformity.iter().find(|u| ((u.dt - target) / target).abs() < 1e-9).expect("dt = T/256 in sweep");
    let pass = r.verdicts.uniform_observables == Some(true) && r.verdicts.wave_amplification == Some(true);
    let (lo, hi) = runs::WAVE_AMPLIFICATION_BAND;
    verdict(
        4,
        pass,
        format!(
            "dt = T/256: density ratio {:.3}, current ratio {:.3} (<= {}); wave error vs 1/eps slope {:.3} (in [{lo}, {hi}])",
            u.density_ratio.unwrap_or(f64::NAN),
            u.current_ratio.unwrap_or(f64::NAN),
            runs::UNIFORMITY_RATIO,
            u.wave_amplification.unwrap_or(f64::NAN)
        ),
    );
}

fn local_report() -> &'static runs::LocalReport {
    static LOCAL: OnceLock<runs::LocalReport> = OnceLock::new();
    LOCAL.get_or_init(|| runs::run_local_error_study(&desk(Task::LocalError)).unwrap())
}

#[test]
fn criterion_5_local_second_order() {
    let r = local_report();
    let slopes: Vec<f64> = r.summary.iter().map(|s| s.slope.unwrap_or(f64::NAN)).collect();
    let spread = r.prefactor_spread.unwrap_or(f64::NAN);
    verdict(
        5,
        r.verdicts.second_order && r.verdicts.prefactor_uniform,
        format!(
            "defect slopes per eps [{}] (>= {}); prefactor spread {spread:.4} (< {})",
            fmt(&slopes),
            runs::LOCAL_SLOPE_MIN,
            runs::PREFACTOR_SPREAD_MAX
        ),
    );
}

#[test]
fn criterion_6_integral_representation() {
    let r = local_report();
    let finest: Vec<f64> = desk(Task::LocalError)
        .model
        .epsilons
        .iter()
        .filter_map(|&e| r.integral.iter().rfind(|row| row.eps == e).map(|row| row.relative_defect))
        .collect();
    let defects: Vec<f64> = r.integral.iter().filter(|row| row.eps == 1.0 / 16.0).map(|row| row.defect).collect();
    verdict(
        6,
        r.verdicts.integral_matches && r.verdicts.integral_converges,
        format!(
            "relative defect at finest nodes per eps [{}] (<= {}); eps = 1/16 defects by node doubling [{}] (>= {}x or below rounding floor)",
            fmt(&finest),
            runs::INTEGRAL_RELATIVE_TOL,
            fmt(&defects),
            runs::INTEGRAL_REDUCTION_MIN
        ),
    );
}

#[test]
fn criterion_7_norm_budgets() {
    let r = runs::run_norm_tracking(&desk(Task::NormTrack)).unwrap();
    let pass = r.verdicts.iter().all(|v| v.accepted_m.is_some());
    let mut detail: Vec<String> = Vec::new();
    for v in &r.verdicts {
        let margins = match v.accepted_m {
            Some(m) => {
                let exact = r.rows.iter().find(|row| row.eps == v.eps && row.trajectory == "exact" && row.m == m).unwrap();
                let split: Vec<_> =
                    r.rows.iter().filter(|row| row.eps == v.eps && row.trajectory == "split" && row.m == m).collect();
                let min = |f: fn(&runs::NormRow) -> f64| split.iter().map(|row| f(row)).fold(f64::INFINITY, f64::min);
                format!(
                    " (triple margin {:.3}; split pointwise margin {:.3}, {:.2e} over t > 0)",
                    exact.triple_margin,
                    min(|row| row.pointwise_margin),
                    min(|row| row.pointwise_margin_after_start)
                )
            }
            None => String::new(),
        };
        detail.push(format!("eps {}: {}{margins}", v.eps, v.verdict));
    }
    verdict(7, pass, detail.join("; "));
}

#[test]
fn criterion_8_oracles() {
    let r = runs::run_cross_check(&desk(Task::CrossCheck)).unwrap();
    let col = |f: fn(&runs::CrossCheckRow) -> Option<f64>| r.rows.iter().map(|row| f(row).unwrap_or(f64::NAN)).collect::<Vec<_>>();
    let worst_ratio = r.rows.iter().flat_map(|row| row.iteration_ratios.iter().cloned()).fold(0.0, f64::max);
    verdict(
        8,
        r.passed,
        format!(
            "reference gaps [{}] (<= {:e}); characteristics [{}] (<= {:e}); Picard max ratio {worst_ratio:.3} (< 0.9), reference gaps [{}]",
            fmt(&col(|row| row.reference_gap)),
            runs::CROSS_CHECK_TOL,
            fmt(&col(|row| row.oracle_error)),
            runs::ORACLE_TOL,
            fmt(&col(|row| row.iteration_gap)),
        ),
    );
}

fn direction(g: &Arc<Grid>) -> WkbState {
    WkbState::new(
        RealField::from_fn(g.clone(), |x| 0.5 * (-(x[0] - 0.2).powi(2)).exp()),
        ComplexField::from_fn(g.clone(), |x| Complex64::new(0.3 * (-x[0] * x[0]).exp(), 0.1 * (-(x[0] + 0.5).powi(2)).exp())),
        0.0,
    )
    .unwrap()
}

fn fd_slope(hs: &[f64], err: impl Fn(f64) -> f64) -> (f64, Vec<f64>) {
    let errs: Vec<f64> = hs.iter().map(|&h| err(h)).collect();
    (log_log_slope(hs, &errs).unwrap_or(f64::NAN), errs)
}

#[test]
fn criterion_9_generators() {
    let cfg = desk(Task::Simulate);
    let (g, s0) = initial(&cfg);
    let gp: GrenierParams = cfg.grenier_params(1.0 / 16.0).unwrap();
    let hs: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
    let quotient = |a: &WkbState, b: &WkbState, scale: f64| OperatorOutput::from_state(&a.difference(b).unwrap().scaled(scale));

    let a = apply_a(&s0, &gp).unwrap();
    let (sa, _) = fd_slope(&hs, |h| quotient(&flow_x(&s0, h, &gp).unwrap(), &s0, 1.0 / h).sub(&a).unwrap().l2_norm());

    let b = apply_b(&s0, &gp).unwrap();
    let b_err = hs
        .iter()
        .map(|&h| quotient(&flow_y(&s0, h, &gp).unwrap(), &s0, 1.0 / h).sub(&b).unwrap().l2_norm())
        .fold(0.0, f64::max);

    // (Y^h X^h - X^h Y^h) / h^2 -> [B, A] = -commutator_ab
    let bracket = commutator_ab(&s0, &gp).unwrap().scaled(-1.0);
    let (sc, _) = fd_slope(&hs, |h| {
        let yx = flow_y(&flow_x(&s0, h, &gp).unwrap(), h, &gp).unwrap();
        let xy = flow_x(&flow_y(&s0, h, &gp).unwrap(), h, &gp).unwrap();
        quotient(&yx, &xy, 1.0 / (h * h)).sub(&bracket).unwrap().l2_norm()
    });

    let t = 0.1;
    let steps = 40;
    let dir = direction(&g);
    let base = record_trajectory(&s0, t, steps, &gp).unwrap();
    let lin = OperatorOutput::from_state(&linearized_flow(&base, &dir, t, &gp).unwrap());
    let end = base.last().unwrap().clone();
    let lhs: Vec<f64> = (2..=7).map(|k| 2f64.powi(-k)).collect();
    let (sl, _) = fd_slope(&lhs, |h| {
        let pert = record_trajectory(&s0.axpy(h, &dir).unwrap(), t, steps, &gp).unwrap();
        quotient(pert.last().unwrap(), &end, 1.0 / h).sub(&lin).unwrap().l2_norm()
    });

    let pass = sa >= FD_SLOPE_MIN && sc >= FD_SLOPE_MIN && sl >= FD_SLOPE_MIN && b_err <= GENERATOR_B_TOL;
    verdict(
        9,
        pass,
        format!(
            "FD slopes: apply_A {sa:.3}, commutator {sc:.3}, linearized flow {sl:.3} (>= {FD_SLOPE_MIN}); apply_B max deviation {b_err:.3e} (<= {GENERATOR_B_TOL:e}, exact)"
        ),
    );
}
