//! Experiment drivers. Every driver is a pure function of the configuration:
//! cells run on a work pool, results are collected in input order.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use wkbsplit::fields::{current_distance, density_distance, l2_distance};
use wkbsplit::fit::{log_log_slope, ERROR_FLOOR};
use wkbsplit::local_error::{integral_refinement_study, local_wave_error, measure_local_error};
use wkbsplit::norms::{analytic_norm, budget_check, BudgetRow};
use wkbsplit::wave::{lie_trotter_march, reference_solve};
use wkbsplit::wkb::{
    flow_x, grenier_iterative, grenier_reference, lie_trotter_wkb, lie_trotter_wkb_march, record_trajectory,
};
use wkbsplit::{assemble_wave, observables, ComplexField, Grid, NormParams, WkbState};

use crate::config::{step_count, ExperimentConfig};
use crate::HarnessError;

pub const FIRST_ORDER_BAND: (f64, f64) = (0.85, 1.15);
pub const UNIFORMITY_RATIO: f64 = 2.5;
pub const WAVE_AMPLIFICATION_BAND: (f64, f64) = (0.7, 1.3);
/// Step (as a fraction of `T`) at which observable uniformity is judged.
pub const UNIFORMITY_STEP_FRACTION: f64 = 1.0 / 256.0;
pub const LOCAL_SLOPE_MIN: f64 = 1.8;
pub const PREFACTOR_SPREAD_MAX: f64 = 2.0;
/// Errors of an exactly split problem (`lambda = 0`) must stay below this.
pub const EXACT_SPLIT_TOL: f64 = 1e-9;
pub const INTEGRAL_RELATIVE_TOL: f64 = 0.05;
pub const INTEGRAL_REDUCTION_MIN: f64 = 4.0;
pub const CROSS_CHECK_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-6;

/// Runs `f` on a pool with `jobs` workers (all cores when `None`).
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(f)
}

fn slope(xs: &[f64], ys: &[Option<f64>]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter_map(|(&x, y)| y.map(|y| (x, y))).unzip();
    log_log_slope(&x, &y).ok()
}

fn ratio(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (min > 0.0).then_some(max / min)
}

fn within(v: Option<f64>, band: (f64, f64)) -> bool {
    v.is_some_and(|v| v >= band.0 && v <= band.1)
}

fn sobolev(cfg: &ExperimentConfig) -> NormParams {
    NormParams { ell: cfg.norms.ell, nu: 1.0, rho: 0.0, m0: cfg.norms.m0, m: 0.0, band: cfg.norms.band, bracket: false }
}

// ---------------------------------------------------------------------------
// global convergence

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub wave_l2_error: Option<f64>,
    pub density_l1_error: Option<f64>,
    pub density_linf_error: Option<f64>,
    pub current_l1_error: Option<f64>,
    pub current_linf_error: Option<f64>,
    pub phase_hk_error: Option<f64>,
    pub amplitude_hk_error: Option<f64>,
    /// L^2 distance of the pair `(phi_n, a_n)` from the reference.
    pub wkb_l2_error: Option<f64>,
    /// `ok`, or the reason some errors are missing.
    pub status: String,
}

impl SweepRow {
    pub fn wkb_error(&self) -> Option<f64> {
        Some(self.phase_hk_error?.max(self.amplitude_hk_error?))
    }

    /// `max(L^1, L^infinity)` density error.
    pub fn density_error(&self) -> Option<f64> {
        Some(self.density_l1_error?.max(self.density_linf_error?))
    }

    pub fn current_error(&self) -> Option<f64> {
        Some(self.current_l1_error?.max(self.current_linf_error?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonSummary {
    pub eps: f64,
    pub wave_certificate: Option<f64>,
    pub wkb_certificate: Option<f64>,
    /// `|assemble(phi, a) - u|` between the two references at `T`.
    pub reference_gap: Option<f64>,
    pub wkb_slope: Option<f64>,
    pub wave_slope: Option<f64>,
    pub density_slope: Option<f64>,
    pub current_slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Uniformity {
    pub dt: f64,
    pub density_ratio: Option<f64>,
    pub current_ratio: Option<f64>,
    /// Slope of `log(wave error)` against `log(1 / eps)`.
    pub wave_amplification: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepVerdicts {
    pub first_order: bool,
    pub uniform_observables: Option<bool>,
    pub wave_amplification: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub epsilons: Vec<EpsilonSummary>,
    pub uniformity: Vec<Uniformity>,
    pub verdicts: SweepVerdicts,
}

struct References {
    wave: Result<ComplexField, String>,
    wave_certificate: Option<f64>,
    wkb: Result<WkbState, String>,
    wkb_certificate: Option<f64>,
}

fn references(cfg: &ExperimentConfig, s0: &WkbState, eps: f64) -> Result<References, HarnessError> {
    let t = cfg.model.horizon;
    let model = cfg.model_params(eps)?;
    let gp = cfg.grenier_params(eps)?;
    let u0 = assemble_wave(s0, eps)?;
    let (wave, wave_certificate) = match reference_solve(&u0, t, &model, cfg.reference_substeps) {
        Ok(r) => (Ok(r.field), Some(r.certificate)),
        Err(e) => (Err(format!("wave reference: {e}")), None),
    };
    let (wkb, wkb_certificate) = match grenier_reference(s0, t, &gp) {
        Ok(r) => (Ok(r.state), Some(r.certificate)),
        Err(e) => (Err(format!("wkb reference: {e}")), None),
    };
    Ok(References { wave, wave_certificate, wkb, wkb_certificate })
}

fn sweep_cell(cfg: &ExperimentConfig, s0: &WkbState, eps: f64, dt: f64, refs: &References) -> Result<SweepRow, HarnessError> {
    let t = cfg.model.horizon;
    let n = step_count(t, dt)?;
    let model = cfg.model_params(eps)?;
    let gp = cfg.grenier_params(eps)?;
    let mut row = SweepRow {
        eps,
        dt,
        n_steps: n,
        wave_l2_error: None,
        density_l1_error: None,
        density_linf_error: None,
        current_l1_error: None,
        current_linf_error: None,
        phase_hk_error: None,
        amplitude_hk_error: None,
        wkb_l2_error: None,
        status: String::new(),
    };
    let mut notes = Vec::new();
    match &refs.wave {
        Ok(reference) => {
            let u = lie_trotter_march(&assemble_wave(s0, eps)?, dt, n, &model)?;
            row.wave_l2_error = Some(l2_distance(&u, reference)?);
            let (split, exact) = (observables(&u, eps)?, observables(reference, eps)?);
            let (d1, dinf) = density_distance(&split, &exact)?;
            let (j1, jinf) = current_distance(&split, &exact)?;
            row.density_l1_error = Some(d1);
            row.density_linf_error = Some(dinf);
            row.current_l1_error = Some(j1);
            row.current_linf_error = Some(jinf);
        }
        Err(e) => notes.push(e.clone()),
    }
    match (&refs.wkb, lie_trotter_wkb_march(s0, dt, n, &gp)) {
        (Ok(reference), Ok(s)) => {
            let np = sobolev(cfg);
            let d = s.difference(reference)?;
            row.phase_hk_error = Some(analytic_norm(&d.phase.to_complex(), &np)?);
            row.amplitude_hk_error = Some(analytic_norm(&d.amplitude, &np)?);
            row.wkb_l2_error = Some(d.l2_norm());
        }
        (Err(e), _) => notes.push(e.clone()),
        (_, Err(e)) => notes.push(format!("split march: {e}")),
    }
    row.status = if notes.is_empty() { "ok".into() } else { notes.join("; ") };
    Ok(row)
}

/// Marches both splittings to `T` for every `(eps, dt)` and compares with the
/// certified references at the final time. Errors in the phase/amplitude pair use
/// the Sobolev norm of order `norms.ell` (band-limited as configured).
pub fn run_global_convergence(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let eps_list = &cfg.model.epsilons;
    let refs: Vec<References> =
        eps_list.par_iter().map(|&e| references(cfg, &s0, e)).collect::<Result<_, _>>()?;
    let cells: Vec<(usize, f64)> =
        (0..eps_list.len()).flat_map(|i| cfg.time_steps.iter().map(move |&dt| (i, dt))).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(i, dt)| sweep_cell(cfg, &s0, eps_list[i], dt, &refs[i]))
        .collect::<Result<_, _>>()?;

    let mut epsilons = Vec::new();
    for (i, &eps) in eps_list.iter().enumerate() {
        let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.eps == eps).collect();
        let dts: Vec<f64> = mine.iter().map(|r| r.dt).collect();
        let col = |f: fn(&SweepRow) -> Option<f64>| mine.iter().map(|r| f(r)).collect::<Vec<_>>();
        let reference_gap = match (&refs[i].wave, &refs[i].wkb) {
            (Ok(u), Ok(s)) => Some(l2_distance(&assemble_wave(s, eps)?, u)?),
            _ => None,
        };
        epsilons.push(EpsilonSummary {
            eps,
            wave_certificate: refs[i].wave_certificate,
            wkb_certificate: refs[i].wkb_certificate,
            reference_gap,
            wkb_slope: slope(&dts, &col(SweepRow::wkb_error)),
            wave_slope: slope(&dts, &col(|r| r.wave_l2_error)),
            density_slope: slope(&dts, &col(SweepRow::density_error)),
            current_slope: slope(&dts, &col(SweepRow::current_error)),
        });
    }

    let uniformity: Vec<Uniformity> = cfg
        .time_steps
        .iter()
        .map(|&dt| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.dt == dt).collect();
            let all = |f: fn(&SweepRow) -> Option<f64>| at.iter().map(|r| f(r)).collect::<Option<Vec<f64>>>();
            let inv_eps: Vec<f64> = at.iter().map(|r| 1.0 / r.eps).collect();
            let wave: Vec<Option<f64>> = at.iter().map(|r| r.wave_l2_error).collect();
            Uniformity {
                dt,
                density_ratio: all(SweepRow::density_error).and_then(|v| ratio(&v)),
                current_ratio: all(SweepRow::current_error).and_then(|v| ratio(&v)),
                wave_amplification: slope(&inv_eps, &wave),
            }
        })
        .collect();

    let target = cfg.model.horizon * UNIFORMITY_STEP_FRACTION;
    let judged = uniformity.iter().find(|u| ((u.dt - target) / target).abs() < 1e-9);
    let verdicts = SweepVerdicts {
        first_order: epsilons.iter().all(|e| within(e.wkb_slope, FIRST_ORDER_BAND)),
        uniform_observables: judged.map(|u| {
            u.density_ratio.is_some_and(|r| r <= UNIFORMITY_RATIO) && u.current_ratio.is_some_and(|r| r <= UNIFORMITY_RATIO)
        }),
        wave_amplification: judged.map(|u| within(u.wave_amplification, WAVE_AMPLIFICATION_BAND)),
    };
    Ok(SweepReport { rows, epsilons, uniformity, verdicts })
}

// ---------------------------------------------------------------------------
// local error

#[derive(Debug, Clone, Serialize)]
pub struct LocalRow {
    pub eps: f64,
    pub lambda: f64,
    pub t: f64,
    pub phase_norm: Option<f64>,
    pub amplitude_norm: Option<f64>,
    pub total: Option<f64>,
    pub l2: Option<f64>,
    pub wave_l2: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalSummary {
    pub eps: f64,
    pub slope: Option<f64>,
    /// Geometric mean of `defect / t^2`.
    pub prefactor: Option<f64>,
    pub wave_slope: Option<f64>,
    pub wave_prefactor: Option<f64>,
    /// Largest defect with the nonlinearity switched off.
    pub linear_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralRow {
    pub eps: f64,
    pub t: f64,
    pub nodes: usize,
    pub defect: f64,
    pub measured_norm: f64,
    pub relative_defect: f64,
    /// Defect ratio against the previous node count.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalVerdicts {
    pub second_order: bool,
    pub prefactor_uniform: bool,
    pub linear_exact: bool,
    pub integral_matches: bool,
    pub integral_converges: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalReport {
    pub rows: Vec<LocalRow>,
    pub summary: Vec<LocalSummary>,
    pub prefactor_spread: Option<f64>,
    /// Slope of the wave prefactor against `1 / eps`.
    pub wave_amplification: Option<f64>,
    pub integral: Vec<IntegralRow>,
    pub verdicts: LocalVerdicts,
}

fn local_cell(cfg: &ExperimentConfig, s0: &WkbState, eps: f64, lambda: f64, t: f64) -> Result<LocalRow, HarnessError> {
    let gp = wkbsplit::GrenierParams { lambda, ..cfg.grenier_params(eps)? };
    let np = cfg.norm_params(cfg.norms.local_m)?;
    let mut row = LocalRow {
        eps,
        lambda,
        t,
        phase_norm: None,
        amplitude_norm: None,
        total: None,
        l2: None,
        wave_l2: None,
        status: "ok".into(),
    };
    match measure_local_error(s0, t, &gp, &np) {
        Ok(m) => {
            row.phase_norm = Some(m.phase_norm);
            row.amplitude_norm = Some(m.amplitude_norm);
            row.total = Some(m.total());
            row.l2 = Some(m.l2);
            row.wave_l2 = Some(local_wave_error(s0, t, &gp)?);
        }
        Err(e) => row.status = e.to_string(),
    }
    Ok(row)
}

fn geometric_mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp())
}

/// A doubling counts as converged when the defect dropped by the required
/// factor, or when the coarser defect was already below the rounding floor.
pub fn doubling_converged(coarse: f64, fine: f64) -> bool {
    coarse < ERROR_FLOOR || coarse >= INTEGRAL_REDUCTION_MIN * fine
}

/// Single-step defects over `local.times` for every `eps`, with and without the
/// nonlinearity, plus the quadrature check of the defect formula.
pub fn run_local_error_study(cfg: &ExperimentConfig) -> Result<LocalReport, HarnessError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let times = &cfg.local.times;
    let mut cells = Vec::new();
    for &eps in &cfg.model.epsilons {
        for lambda in [cfg.model.lambda, 0.0] {
            cells.extend(times.iter().map(|&t| (eps, lambda, t)));
        }
    }
    let rows: Vec<LocalRow> =
        cells.par_iter().map(|&(e, l, t)| local_cell(cfg, &s0, e, l, t)).collect::<Result<_, _>>()?;

    let summary: Vec<LocalSummary> = cfg
        .model
        .epsilons
        .iter()
        .map(|&eps| {
            let main: Vec<&LocalRow> = rows.iter().filter(|r| r.eps == eps && r.lambda == cfg.model.lambda).collect();
            let ts: Vec<f64> = main.iter().map(|r| r.t).collect();
            let total: Vec<Option<f64>> = main.iter().map(|r| r.total).collect();
            let wave: Vec<Option<f64>> = main.iter().map(|r| r.wave_l2).collect();
            let pref = |col: &[Option<f64>]| {
                let v: Option<Vec<f64>> = col.iter().zip(&ts).map(|(e, t)| e.map(|e| e / (t * t))).collect();
                v.and_then(|v| geometric_mean(&v))
            };
            let linear: Option<Vec<f64>> =
                rows.iter().filter(|r| r.eps == eps && r.lambda == 0.0).map(|r| r.total.zip(r.l2).map(|(a, b)| a.max(b))).collect();
            LocalSummary {
                eps,
                slope: slope(&ts, &total),
                prefactor: pref(&total),
                wave_slope: slope(&ts, &wave),
                wave_prefactor: pref(&wave),
                linear_max: linear.map(|v| v.into_iter().fold(0.0, f64::max)),
            }
        })
        .collect();
    let prefactors: Option<Vec<f64>> = summary.iter().map(|s| s.prefactor).collect();
    let prefactor_spread = prefactors.and_then(|v| ratio(&v));
    let inv_eps: Vec<f64> = summary.iter().map(|s| 1.0 / s.eps).collect();
    let wave_pref: Vec<Option<f64>> = summary.iter().map(|s| s.wave_prefactor).collect();
    let wave_amplification = slope(&inv_eps, &wave_pref);

    let t = cfg.local.integral_time;
    let studies: Vec<Vec<IntegralRow>> = cfg
        .model
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<Vec<IntegralRow>, HarnessError> {
            let gp = cfg.grenier_params(eps)?;
            let checks = integral_refinement_study(&s0, t, &gp, &cfg.local.integral_nodes)?;
            Ok(checks
                .iter()
                .enumerate()
                .map(|(i, c)| IntegralRow {
                    eps,
                    t,
                    nodes: c.nodes,
                    defect: c.defect,
                    measured_norm: c.measured_norm,
                    relative_defect: c.relative_defect(),
                    reduction: (i > 0).then(|| checks[i - 1].defect / c.defect),
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let integral_matches = studies
        .iter()
        .all(|s| s.last().is_some_and(|r| r.relative_defect <= INTEGRAL_RELATIVE_TOL));
    let integral_converges = studies.iter().all(|s| s.windows(2).all(|w| doubling_converged(w[0].defect, w[1].defect)));

    let verdicts = LocalVerdicts {
        second_order: summary.iter().all(|s| s.slope.is_some_and(|v| v >= LOCAL_SLOPE_MIN)),
        prefactor_uniform: prefactor_spread.is_some_and(|r| r < PREFACTOR_SPREAD_MAX),
        linear_exact: summary.iter().all(|s| s.linear_max.is_some_and(|v| v <= EXACT_SPLIT_TOL)),
        integral_matches,
        integral_converges,
    };
    Ok(LocalReport {
        rows,
        summary,
        prefactor_spread,
        wave_amplification,
        integral: studies.into_iter().flatten().collect(),
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// norm tracking

#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub eps: f64,
    /// `exact`, or `split` with its step.
    pub trajectory: String,
    pub dt: Option<f64>,
    pub m: f64,
    pub horizon: f64,
    pub samples: usize,
    pub phase_triple_sq: f64,
    pub phase_budget: f64,
    pub amplitude_triple_sq: f64,
    pub amplitude_budget: f64,
    pub pointwise_max: f64,
    pub pointwise_budget: f64,
    pub triple_margin: f64,
    pub pointwise_margin: f64,
    /// Pointwise slack over `t > 0`.
    pub pointwise_margin_after_start: f64,
    pub tail_warning: bool,
}

impl NormRow {
    fn new(eps: f64, trajectory: &str, dt: Option<f64>, r: &BudgetRow) -> Self {
        NormRow {
            eps,
            trajectory: trajectory.into(),
            dt,
            m: r.m,
            horizon: r.horizon,
            samples: r.samples,
            phase_triple_sq: r.phase_triple_sq,
            phase_budget: r.phase_budget,
            amplitude_triple_sq: r.amplitude_triple_sq,
            amplitude_budget: r.amplitude_budget,
            pointwise_max: r.pointwise_max,
            pointwise_budget: r.pointwise_budget,
            triple_margin: r.triple_margin(),
            pointwise_margin: r.pointwise_margin(),
            pointwise_margin_after_start: r.pointwise_margin_after_start(),
            tail_warning: r.tail_warning,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormVerdict {
    pub eps: f64,
    /// Smallest `M` meeting the triple-norm budgets on the exact trajectory and the
    /// pointwise budget on every split trajectory.
    pub accepted_m: Option<f64>,
    /// `accepted M = ...` or `ladder exhausted`.
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub rows: Vec<NormRow>,
    pub verdicts: Vec<NormVerdict>,
}

fn split_states(s0: &WkbState, dt: f64, n: usize, gp: &wkbsplit::GrenierParams) -> Result<Vec<WkbState>, HarnessError> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(s0.clone());
    for _ in 0..n {
        let next = lie_trotter_wkb(out.last().unwrap(), dt, gp)?;
        out.push(next);
    }
    Ok(out)
}

fn norm_cell(cfg: &ExperimentConfig, s0: &WkbState, eps: f64) -> Result<(Vec<NormRow>, NormVerdict), HarnessError> {
    let gp = cfg.grenier_params(eps)?;
    let np = cfg.norm_params(cfg.norms.m_ladder[0])?;
    let n = &cfg.norms;
    let t = cfg.model.horizon;
    let exact = record_trajectory(s0, t, n.samples, &gp)?;
    let ev = budget_check(&exact.states, &np, cfg.model.sigma, &n.m_ladder, n.horizon_fraction)?;
    let mut rows: Vec<NormRow> = ev.rows.iter().map(|r| NormRow::new(eps, "exact", None, r)).collect();
    let mut accepted: Vec<bool> = ev.rows.iter().map(BudgetRow::triple_holds).collect();
    for &dt in &cfg.time_steps {
        let states = split_states(s0, dt, step_count(t, dt)?, &gp)?;
        let sv = budget_check(&states, &np, cfg.model.sigma, &n.m_ladder, n.horizon_fraction)?;
        for (ok, r) in accepted.iter_mut().zip(&sv.rows) {
            *ok &= r.pointwise_holds();
        }
        rows.extend(sv.rows.iter().map(|r| NormRow::new(eps, "split", Some(dt), r)));
    }
    let accepted_m = n
        .m_ladder
        .iter()
        .zip(&accepted)
        .filter(|(_, &ok)| ok)
        .map(|(&m, _)| m)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))));
    let verdict = match accepted_m {
        Some(m) => format!("accepted M = {m}"),
        None => "ladder exhausted".into(),
    };
    Ok((rows, NormVerdict { eps, accepted_m, verdict }))
}

/// Budget checks on the reference trajectory and on the split trajectory for
/// every configured step.
pub fn run_norm_tracking(cfg: &ExperimentConfig) -> Result<NormReport, HarnessError> {
    cfg.validate()?;
    cfg.check_norm_horizon()?;
    let grid = cfg.build_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let cells: Vec<(Vec<NormRow>, NormVerdict)> =
        cfg.model.epsilons.par_iter().map(|&e| norm_cell(cfg, &s0, e)).collect::<Result<_, _>>()?;
    let (rows, verdicts): (Vec<Vec<NormRow>>, Vec<NormVerdict>) = cells.into_iter().unzip();
    Ok(NormReport { rows: rows.into_iter().flatten().collect(), verdicts })
}

// ---------------------------------------------------------------------------
// cross-check

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckRow {
    pub eps: f64,
    pub wave_certificate: Option<f64>,
    pub wkb_certificate: Option<f64>,
    /// `|assemble(reference phi, a) - reference u|` in L^2.
    pub reference_gap: Option<f64>,
    /// Max-norm distance of the eikonal phase from characteristics; 1-D only.
    pub oracle_error: Option<f64>,
    pub iteration_ratios: Vec<f64>,
    pub iteration_contracted: bool,
    pub iteration_gap: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckReport {
    pub rows: Vec<CrossCheckRow>,
    pub passed: bool,
}

/// Phase of the eikonal flow at time `t` from rays `x = x0 + t phi0'(x0)`.
pub fn characteristics_phase(cfg: &ExperimentConfig, grid: &Arc<Grid>, t: f64) -> Result<Vec<f64>, HarnessError> {
    if grid.dim() != 1 {
        return Err(HarnessError::Config("characteristics oracle is one-dimensional".into()));
    }
    let p = cfg.initial.phase;
    (0..grid.len())
        .map(|i| {
            let x = grid.coordinate(i)[0];
            let mut x0 = x;
            for _ in 0..100 {
                let (d1, d2) = p.derivatives_1d(x0);
                let step = (x0 + t * d1 - x) / (1.0 + t * d2);
                x0 -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (d1, _) = p.derivatives_1d(x0);
            let residual = x0 + t * d1 - x;
            if residual.abs() > 1e-12 {
                return Err(HarnessError::Config(format!("rays cross before t = {t}")));
            }
            Ok(p.value([x0, 0.0], 1) + 0.5 * t * d1 * d1)
        })
        .collect()
}

fn cross_check_cell(cfg: &ExperimentConfig, s0: &WkbState, eps: f64) -> Result<CrossCheckRow, HarnessError> {
    let refs = references(cfg, s0, eps)?;
    let gp = cfg.grenier_params(eps)?;
    let mut notes: Vec<String> =
        [refs.wave.as_ref().err(), refs.wkb.as_ref().err()].into_iter().flatten().cloned().collect();
    let reference_gap = match (&refs.wave, &refs.wkb) {
        (Ok(u), Ok(s)) => Some(l2_distance(&assemble_wave(s, eps)?, u)?),
        _ => None,
    };
    let grid = s0.grid().clone();
    let oracle_error = if grid.dim() == 1 {
        let t = cfg.cross_check.oracle_time;
        let expected = characteristics_phase(cfg, &grid, t)?;
        let out = flow_x(s0, t, &gp)?;
        Some(out.phase.values.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let c = &cfg.cross_check;
    let iter = grenier_iterative(s0, c.iteration_horizon, &gp, c.iteration_stages)?;
    let iteration_gap = match grenier_reference(s0, c.iteration_horizon, &gp) {
        Ok(r) => Some(iter.state.difference(&r.state)?.l2_norm()),
        Err(e) => {
            notes.push(format!("iteration reference: {e}"));
            None
        }
    };
    Ok(CrossCheckRow {
        eps,
        wave_certificate: refs.wave_certificate,
        wkb_certificate: refs.wkb_certificate,
        reference_gap,
        oracle_error,
        iteration_ratios: iter.ratios,
        iteration_contracted: iter.contracted,
        iteration_gap,
        status: if notes.is_empty() { "ok".into() } else { notes.join("; ") },
    })
}

impl CrossCheckRow {
    pub fn passed(&self) -> bool {
        self.reference_gap.is_some_and(|g| g <= CROSS_CHECK_TOL)
            && self.oracle_error.is_none_or(|e| e <= ORACLE_TOL)
            && self.iteration_contracted
            && self.iteration_gap.is_some_and(|g| g <= CROSS_CHECK_TOL)
    }
}

/// Reference agreement, characteristics oracle and Picard contraction per `eps`.
pub fn run_cross_check(cfg: &ExperimentConfig) -> Result<CrossCheckReport, HarnessError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let rows: Vec<CrossCheckRow> =
        cfg.model.epsilons.par_iter().map(|&e| cross_check_cell(cfg, &s0, e)).collect::<Result<_, _>>()?;
    let passed = rows.iter().all(CrossCheckRow::passed);
    Ok(CrossCheckReport { rows, passed })
}

// ---------------------------------------------------------------------------
// single run

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub eps: f64,
    pub dt: f64,
    pub wave: ComplexField,
    pub state: Result<WkbState, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRow {
    pub eps: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub initial_mass: f64,
    pub final_mass: f64,
    /// `|assemble(phi_n, a_n) - u_n|` in L^2.
    pub commutation_gap: Option<f64>,
    pub status: String,
}

/// Marches both splittings to `T` with the first configured step.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<(Vec<SimulationRow>, Vec<SimulationRun>), HarnessError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let s0 = cfg.initial_state(&grid)?;
    let dt = cfg.time_steps[0];
    let n = step_count(cfg.model.horizon, dt)?;
    let out: Vec<(SimulationRow, SimulationRun)> = cfg
        .model
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<_, HarnessError> {
            let u0 = assemble_wave(&s0, eps)?;
            let wave = lie_trotter_march(&u0, dt, n, &cfg.model_params(eps)?)?;
            let state = lie_trotter_wkb_march(&s0, dt, n, &cfg.grenier_params(eps)?).map_err(|e| e.to_string());
            let commutation_gap = match &state {
                Ok(s) => Some(l2_distance(&assemble_wave(s, eps)?, &wave)?),
                Err(_) => None,
            };
            let row = SimulationRow {
                eps,
                dt,
                n_steps: n,
                initial_mass: u0.l2_norm().powi(2),
                final_mass: wave.l2_norm().powi(2),
                commutation_gap,
                status: state.as_ref().err().cloned().unwrap_or_else(|| "ok".into()),
            };
            Ok((row, SimulationRun { eps, dt, wave, state }))
        })
        .collect::<Result<_, _>>()?;
    Ok(out.into_iter().unzip())
}
