//! Time-dependent analytic norms
//!
//! ```text
//! |psi|_{rho,l}^2 = sum_{|k|>1} |k|^{2l} e^{2 rho |k|^nu} |psi^(k)|^2 dk^d
//!                 + sum_{|k|<=1} e^{2 rho} |psi^(k)|^2 dk^d
//! ```
//!
//! with the shrinking width `rho(t) = M0 - M t`, the sup/integral triple norm along
//! a trajectory, and checks of the norm evolution identity and of the a priori
//! budgets satisfied by exact and split solutions.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::WkbState;
use crate::grid::{forward_transform, same_grid, ComplexField, Grid, Spectrum};

/// Largest admissible exponent `rho <k_max>^nu` before `exp` loses the plot.
pub const EXPONENT_CEILING: f64 = 700.0;

/// Relative size of the outermost weighted coefficient that raises a tail warning.
pub const TAIL_WARNING_RATIO: f64 = 1e-20;

/// Relative change of the trapezoid integral under halving of the sample set
/// above which a trace counts as undersampled.
pub const TRAPEZOID_REFINEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    /// Regularity index at which the norm is evaluated.
    pub ell: f64,
    pub nu: f64,
    /// Current analyticity width.
    pub rho: f64,
    pub m0: f64,
    /// Decay rate of the width.
    pub m: f64,
    /// Wavenumbers with `|k|` above this are left out of every sum.
    pub band: Option<f64>,
    /// Use `<k>^l e^{rho <k>^nu}` instead of the split weight.
    pub bracket: bool,
}

impl NormParams {
    pub fn new(ell: f64, m0: f64, m: f64) -> Result<Self> {
        let np = NormParams { ell, nu: 1.0, rho: m0, m0, m, band: None, bracket: false };
        np.validate()?;
        Ok(np)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell >= 0.0) {
            return Err(Error::Parameter(format!("regularity index {} must be nonnegative", self.ell)));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Parameter(format!("nu = {} not in (0, 1]", self.nu)));
        }
        if !(self.rho >= 0.0) || !(self.m0 > 0.0) || !(self.m >= 0.0) {
            return Err(Error::Parameter("need rho >= 0, M0 > 0, M >= 0".into()));
        }
        if let Some(b) = self.band {
            if !(b > 0.0) {
                return Err(Error::Parameter(format!("band limit {b} must be positive")));
            }
        }
        Ok(())
    }

    /// `rho(t) = M0 - M t`; errors once the width is no longer positive.
    pub fn rho_at(&self, t: f64) -> Result<f64> {
        let rho = self.m0 - self.m * t;
        if !(rho > 0.0) {
            return Err(Error::Parameter(format!(
                "weight schedule exhausted: rho({t}) = {rho} with M0 = {}, M = {}",
                self.m0, self.m
            )));
        }
        Ok(rho)
    }

    /// Copy evaluated at time `t` on the schedule.
    pub fn at_time(&self, t: f64) -> Result<NormParams> {
        Ok(NormParams { rho: self.rho_at(t)?, ..*self })
    }

    pub fn with_ell(&self, ell: f64) -> NormParams {
        NormParams { ell, ..*self }
    }

    pub fn with_rho(&self, rho: f64) -> NormParams {
        NormParams { rho, ..*self }
    }

    /// Time at which the width reaches zero.
    pub fn exhaustion_time(&self) -> f64 {
        if self.m > 0.0 {
            self.m0 / self.m
        } else {
            f64::INFINITY
        }
    }

    /// `(log weight, exponent rho r^nu)` at wavenumber modulus `k`.
    #[inline]
    fn log_weight(&self, k: f64) -> (f64, f64) {
        if self.bracket {
            let r = (1.0 + k * k).sqrt();
            let e = self.rho * r.powf(self.nu);
            (self.ell * r.ln() + e, e)
        } else if k > 1.0 {
            let e = self.rho * k.powf(self.nu);
            (self.ell * k.ln() + e, e)
        } else {
            (self.rho, self.rho)
        }
    }

    #[inline]
    fn included(&self, k: f64) -> bool {
        self.band.is_none_or(|b| k <= b)
    }
}

/// Norm value with its tail diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub value: f64,
    /// The outermost retained shell carries a non-negligible weighted share.
    pub tail_warning: bool,
}

fn weights_sq(grid: &Grid, np: &NormParams) -> Result<Vec<f64>> {
    np.validate()?;
    let mut kmax: f64 = 0.0;
    for idx in 0..grid.len() {
        let k = grid.wavenumber_norm(idx);
        if np.included(k) {
            kmax = kmax.max(k);
        }
    }
    let top_exponent = np.log_weight(kmax).1;
    if top_exponent > EXPONENT_CEILING {
        return Err(Error::NormOverflow(top_exponent));
    }
    Ok((0..grid.len())
        .map(|idx| {
            let k = grid.wavenumber_norm(idx);
            if np.included(k) {
                (2.0 * np.log_weight(k).0).exp()
            } else {
                0.0
            }
        })
        .collect())
}

pub fn analytic_norm_report_spectrum(s: &Spectrum, np: &NormParams) -> Result<NormReport> {
    let w2 = weights_sq(&s.grid, np)?;
    let grid = &s.grid;
    let sq: f64 = s.coeffs.iter().zip(&w2).map(|(c, w)| w * c.norm_sqr()).sum::<f64>() * grid.spectral_cell();
    let kmax = (0..grid.len())
        .map(|i| grid.wavenumber_norm(i))
        .filter(|&k| np.included(k))
        .fold(0.0, f64::max);
    let shell = grid.dk() * (grid.dim() as f64).sqrt();
    let outer = (0..grid.len())
        .filter(|&i| {
            let k = grid.wavenumber_norm(i);
            np.included(k) && k > kmax - shell
        })
        .map(|i| s.coeffs[i].norm_sqr())
        .fold(0.0, f64::max);
    let tail = (2.0 * np.log_weight(kmax).1).exp() * outer * grid.spectral_cell();
    Ok(NormReport { value: sq.sqrt(), tail_warning: tail > TAIL_WARNING_RATIO * sq })
}

pub fn analytic_norm_report(f: &ComplexField, np: &NormParams) -> Result<NormReport> {
    analytic_norm_report_spectrum(&forward_transform(f), np)
}

/// `|f|_{H^l_rho}` with `l = np.ell`, `rho = np.rho`.
pub fn analytic_norm(f: &ComplexField, np: &NormParams) -> Result<f64> {
    Ok(analytic_norm_report(f, np)?.value)
}

pub fn analytic_norm_spectrum(s: &Spectrum, np: &NormParams) -> Result<f64> {
    Ok(analytic_norm_report_spectrum(s, np)?.value)
}

/// Weighted inner product `<f, g>_{H^l_rho}`.
pub fn analytic_inner(f: &Spectrum, g: &Spectrum, np: &NormParams) -> Result<Complex64> {
    same_grid(&f.grid, &g.grid)?;
    let w2 = weights_sq(&f.grid, np)?;
    let sum: Complex64 = f.coeffs.iter().zip(&g.coeffs).zip(&w2).map(|((a, b), w)| a * b.conj() * *w).sum();
    Ok(sum * f.grid.spectral_cell())
}

/// Constant `C` with `|psi|_inf <= C |psi|_{H^s_rho}` for every `rho >= 0`:
/// Cauchy-Schwarz against the inverse transform at `rho = 0`.
pub fn embedding_constant(grid: &Grid, s: f64, np: &NormParams) -> Result<f64> {
    let w2 = weights_sq(grid, &NormParams { ell: s, rho: 0.0, ..*np })?;
    let sum: f64 = w2.iter().filter(|&&w| w > 0.0).map(|w| 1.0 / w).sum();
    let d = grid.dim() as i32;
    Ok((2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * (sum * grid.spectral_cell()).sqrt())
}

// ---------------------------------------------------------------------------
// traces and the triple norm

/// Squared norms of one component along a trajectory, evaluated on the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrace {
    pub times: Vec<f64>,
    pub rhos: Vec<f64>,
    /// `|psi(t)|^2_{H^l_{rho(t)}}`.
    pub norm_sq: Vec<f64>,
    /// `|psi(t)|^2_{H^{l+1/2}_{rho(t)}}`.
    pub half_sq: Vec<f64>,
    /// Running value of `2 int_0^t |rho'| |psi|^2_{H^{l+1/2}_rho}` (trapezoid).
    pub integral: Vec<f64>,
    pub rate: f64,
    pub tail_warning: bool,
}

impl ComponentTrace {
    pub fn from_fields(fields: &[(f64, ComplexField)], np: &NormParams) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let mut out = ComponentTrace {
            times: Vec::with_capacity(fields.len()),
            rhos: Vec::with_capacity(fields.len()),
            norm_sq: Vec::with_capacity(fields.len()),
            half_sq: Vec::with_capacity(fields.len()),
            integral: Vec::with_capacity(fields.len()),
            rate: np.m,
            tail_warning: false,
        };
        for (t, f) in fields {
            if let Some(&last) = out.times.last() {
                if !(*t > last) {
                    return Err(Error::Trajectory(format!("trace times must increase ({last} then {t})")));
                }
            }
            let at = np.at_time(*t)?;
            let spec = forward_transform(f);
            let full = analytic_norm_report_spectrum(&spec, &at)?;
            let half = analytic_norm_report_spectrum(&spec, &at.with_ell(np.ell + 0.5))?;
            out.tail_warning |= full.tail_warning || half.tail_warning;
            out.times.push(*t);
            out.rhos.push(at.rho);
            out.norm_sq.push(full.value * full.value);
            out.half_sq.push(half.value * half.value);
        }
        out.integral = running_trapezoid(&out.times, &out.half_sq, 2.0 * np.m);
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_sq(&self) -> f64 {
        self.norm_sq.iter().cloned().fold(0.0, f64::max)
    }

    /// Restriction to samples with `t <= horizon`.
    pub fn truncated(&self, horizon: f64) -> ComponentTrace {
        let n = self.times.iter().take_while(|&&t| t <= horizon * (1.0 + 1e-12)).count();
        ComponentTrace {
            times: self.times[..n].to_vec(),
            rhos: self.rhos[..n].to_vec(),
            norm_sq: self.norm_sq[..n].to_vec(),
            half_sq: self.half_sq[..n].to_vec(),
            integral: self.integral[..n].to_vec(),
            rate: self.rate,
            tail_warning: self.tail_warning,
        }
    }

    /// Relative change of the final integral when every other sample is dropped.
    pub fn refinement_change(&self) -> f64 {
        let full = self.integral.last().copied().unwrap_or(0.0);
        if self.len() < 3 || full == 0.0 {
            return 0.0;
        }
        let times: Vec<f64> = self.times.iter().step_by(2).cloned().collect();
        let vals: Vec<f64> = self.half_sq.iter().step_by(2).cloned().collect();
        if !(self.len() - 1).is_multiple_of(2) {
            return f64::INFINITY;
        }
        let coarse = running_trapezoid(&times, &vals, 2.0 * self.rate).last().copied().unwrap_or(0.0);
        (coarse - full).abs() / full
    }
}

fn running_trapezoid(times: &[f64], values: &[f64], factor: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]) * factor;
        }
        out.push(acc);
    }
    out
}

/// `|||psi|||_{l,t}`: square root of the larger of the sup of squared norms and
/// the weighted time integral.
pub fn triple_norm(trace: &ComponentTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let integral = trace.integral.last().copied().unwrap_or(0.0);
    Ok(trace.sup_sq().max(integral).sqrt())
}

/// Phase (index `l + 1`) and amplitude (index `l`) traces of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTrace {
    pub phase: ComponentTrace,
    pub amplitude: ComponentTrace,
}

impl NormTrace {
    pub fn from_states(states: &[WkbState], np: &NormParams) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let phases: Vec<(f64, ComplexField)> = states.iter().map(|s| (s.time, s.phase.to_complex())).collect();
        let amps: Vec<(f64, ComplexField)> = states.iter().map(|s| (s.time, s.amplitude.clone())).collect();
        Ok(NormTrace {
            phase: ComponentTrace::from_fields(&phases, &np.with_ell(np.ell + 1.0))?,
            amplitude: ComponentTrace::from_fields(&amps, np)?,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.amplitude.times
    }
}

// ---------------------------------------------------------------------------
// evolution identity

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    /// Interior sample times where the identity was evaluated.
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Largest `|d/dt |psi|^2|` seen, for relative comparisons.
    pub scale: f64,
}

/// Checks `d/dt |psi|^2 = 2 rho' |psi|^2_{l + nu/2} + 2 Re <psi, psi_t>` at interior
/// samples of uniformly spaced snapshots, all derivatives by central differences.
pub fn evolution_identity_check(snapshots: &[(f64, ComplexField)], np: &NormParams) -> Result<EvolutionReport> {
    if snapshots.len() < 3 {
        return Err(Error::EmptyTrace);
    }
    let specs: Vec<Spectrum> = snapshots.iter().map(|(_, f)| forward_transform(f)).collect();
    let rho_dot = -np.m;
    let sq = |i: usize| -> Result<f64> {
        let at = np.at_time(snapshots[i].0)?;
        Ok(analytic_norm_spectrum(&specs[i], &at)?.powi(2))
    };
    let mut report = EvolutionReport { times: vec![], residuals: vec![], max_residual: 0.0, scale: 0.0 };
    for i in 1..snapshots.len() - 1 {
        let (t_prev, t, t_next) = (snapshots[i - 1].0, snapshots[i].0, snapshots[i + 1].0);
        let span = t_next - t_prev;
        if !(span > 0.0) {
            return Err(Error::Trajectory("snapshot times must increase".into()));
        }
        let lhs = (sq(i + 1)? - sq(i - 1)?) / span;
        let at = np.at_time(t)?;
        let shifted = analytic_norm_spectrum(&specs[i], &at.with_ell(np.ell + 0.5 * np.nu))?.powi(2);
        let dpsi = Spectrum {
            grid: specs[i].grid.clone(),
            coeffs: specs[i + 1].coeffs.iter().zip(&specs[i - 1].coeffs).map(|(a, b)| (a - b) / span).collect(),
        };
        let rhs = 2.0 * rho_dot * shifted + 2.0 * analytic_inner(&specs[i], &dpsi, &at)?.re;
        let r = (lhs - rhs).abs();
        report.times.push(t);
        report.residuals.push(r);
        report.max_residual = report.max_residual.max(r);
        report.scale = report.scale.max(lhs.abs());
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// budgets

/// Budgets for one decay rate `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub m: f64,
    pub horizon: f64,
    pub samples: usize,
    /// `|||phi|||^2_{l+1, T}` and its budget `2 |phi0|^2_{M0,l+1} + |a0|_{M0,l}^{4 sigma}`.
    pub phase_triple_sq: f64,
    pub phase_budget: f64,
    /// `|||a|||^2_{l, T}` and its budget `2 |a0|^2_{M0,l}`.
    pub amplitude_triple_sq: f64,
    pub amplitude_budget: f64,
    /// `max_n (|phi_n|_{rho(t_n),l+1} + |a_n|_{rho(t_n),l})` and its budget `|phi0|_{M0,l+1} + |a0|_{M0,l}`.
    pub pointwise_max: f64,
    /// Same maximum over `t > 0`; the budget is met with equality at `t = 0`.
    pub pointwise_max_after_start: f64,
    pub pointwise_budget: f64,
    pub tail_warning: bool,
}

impl BudgetRow {
    pub fn triple_holds(&self) -> bool {
        self.phase_triple_sq <= self.phase_budget && self.amplitude_triple_sq <= self.amplitude_budget
    }

    pub fn pointwise_holds(&self) -> bool {
        self.pointwise_max <= self.pointwise_budget
    }

    /// Smallest relative slack over the triple-norm budgets (negative when violated).
    pub fn triple_margin(&self) -> f64 {
        let m = |v: f64, b: f64| if b > 0.0 { (b - v) / b } else if v == 0.0 { 0.0 } else { -f64::INFINITY };
        m(self.phase_triple_sq, self.phase_budget).min(m(self.amplitude_triple_sq, self.amplitude_budget))
    }

    pub fn pointwise_margin(&self) -> f64 {
        relative_slack(self.pointwise_max, self.pointwise_budget)
    }

    pub fn pointwise_margin_after_start(&self) -> f64 {
        relative_slack(self.pointwise_max_after_start, self.pointwise_budget)
    }
}

fn relative_slack(v: f64, budget: f64) -> f64 {
    if budget > 0.0 {
        (budget - v) / budget
    } else if v == 0.0 {
        0.0
    } else {
        -f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetVerdict {
    pub rows: Vec<BudgetRow>,
    /// Smallest ladder rate meeting both triple-norm budgets.
    pub triple_m: Option<f64>,
    /// Smallest ladder rate meeting the pointwise budget.
    pub pointwise_m: Option<f64>,
}

/// Evaluates the budgets for every `M` in `ladder` on `[0, min(T, fraction M0 / M)]`.
/// `states` must start at the initial data.
pub fn budget_check(
    states: &[WkbState],
    np: &NormParams,
    sigma: u32,
    ladder: &[f64],
    horizon_fraction: f64,
) -> Result<BudgetVerdict> {
    let first = states.first().ok_or(Error::EmptyTrace)?;
    if !(horizon_fraction > 0.0 && horizon_fraction < 1.0) {
        return Err(Error::Parameter(format!("horizon fraction {horizon_fraction} not in (0, 1)")));
    }
    let t0 = first.time;
    let at0 = np.with_rho(np.m0);
    let phi0 = analytic_norm(&first.phase.to_complex(), &at0.with_ell(np.ell + 1.0))?;
    let a0 = analytic_norm(&first.amplitude, &at0)?;
    let t_end = states.last().map_or(t0, |s| s.time);
    let mut rows = Vec::with_capacity(ladder.len());
    for &m in ladder {
        let rate = NormParams { m, ..*np };
        let horizon = (t_end - t0).min(horizon_fraction * np.m0 / m);
        let window: Vec<WkbState> = states
            .iter()
            .take_while(|s| s.time - t0 <= horizon * (1.0 + 1e-12))
            .map(|s| WkbState { time: s.time - t0, ..s.clone() })
            .collect();
        let trace = NormTrace::from_states(&window, &rate)?;
        let pointwise: Vec<f64> =
            trace.phase.norm_sq.iter().zip(&trace.amplitude.norm_sq).map(|(p, a)| p.sqrt() + a.sqrt()).collect();
        let pointwise_max = pointwise.iter().cloned().fold(0.0, f64::max);
        let pointwise_max_after_start = pointwise.iter().skip(1).cloned().fold(0.0, f64::max);
        rows.push(BudgetRow {
            m,
            horizon,
            samples: window.len(),
            phase_triple_sq: triple_norm(&trace.phase)?.powi(2),
            phase_budget: 2.0 * phi0 * phi0 + a0.powi(4 * sigma as i32),
            amplitude_triple_sq: triple_norm(&trace.amplitude)?.powi(2),
            amplitude_budget: 2.0 * a0 * a0,
            pointwise_max,
            pointwise_max_after_start,
            pointwise_budget: phi0 + a0,
            tail_warning: trace.phase.tail_warning || trace.amplitude.tail_warning,
        });
    }
    let smallest = |pred: &dyn Fn(&BudgetRow) -> bool| {
        rows.iter().filter(|r| pred(r)).map(|r| r.m).fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
    };
    let triple_m = smallest(&|r| r.triple_holds());
    let pointwise_m = smallest(&|r| r.pointwise_holds());
    Ok(BudgetVerdict { rows, triple_m, pointwise_m })
}
