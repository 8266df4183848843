//! Operators of the split phase/amplitude system,
//!
//! ```text
//! A(phi, a) = (-|grad phi|^2 / 2, -grad phi . grad a - a Lap phi / 2 + i eps Lap a / 2)
//! B(phi, a) = (-f(|a|^2), 0)
//! ```
//!
//! their commutator, and measurements of the one-step defect `Z^t - S^t`
//! together with its double-integral representation.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{assemble_wave, WkbState, PHASE_IMAG_TOL};
use crate::fit::gauss_legendre_unit;
use crate::grid::{forward_transform, same_grid, ComplexField, Grid, RealField, Spectrum};
use crate::norms::{analytic_norm, NormParams};
use crate::wkb::{flow_x, flow_y, grenier_reference, lie_trotter_wkb, linearized_flow, record_trajectory, GrenierParams};

/// Phase/amplitude pair produced by an operator; no time attached.
#[derive(Debug, Clone)]
pub struct OperatorOutput {
    pub phase: RealField,
    pub amplitude: ComplexField,
}

impl OperatorOutput {
    pub fn into_state(self, time: f64) -> WkbState {
        WkbState { phase: self.phase, amplitude: self.amplitude, time }
    }

    pub fn from_state(s: &WkbState) -> Self {
        OperatorOutput { phase: s.phase.clone(), amplitude: s.amplitude.clone() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.phase.l2_norm().hypot(self.amplitude.l2_norm())
    }

    pub fn max_abs(&self) -> f64 {
        self.phase.max_abs().max(self.amplitude.max_abs())
    }

    pub fn sub(&self, other: &OperatorOutput) -> Result<OperatorOutput> {
        Ok(OperatorOutput { phase: self.phase.sub(&other.phase)?, amplitude: self.amplitude.sub(&other.amplitude)? })
    }

    pub fn scaled(&self, s: f64) -> OperatorOutput {
        OperatorOutput::from_state(&self.clone().into_state(0.0).scaled(s))
    }
}

fn f(p: &GrenierParams, r: f64) -> f64 {
    p.lambda * r.powi(p.sigma as i32)
}

fn f_prime(p: &GrenierParams, r: f64) -> f64 {
    p.sigma as f64 * p.lambda * r.powi(p.sigma as i32 - 1)
}

fn band(spec: &mut Spectrum) {
    crate::grid::dealias_in_place(spec);
}

fn grad(s: &Spectrum) -> Vec<ComplexField> {
    (0..s.grid.dim()).map(|axis| s.derivative(axis).to_field()).collect()
}

/// Dealiased product fields back in physical space.
fn finish(grid: &Arc<Grid>, phase: Vec<Complex64>, amp: Vec<Complex64>, dealias: bool) -> Result<OperatorOutput> {
    let mut ps = forward_transform(&ComplexField { grid: grid.clone(), values: phase });
    let mut as_ = forward_transform(&ComplexField { grid: grid.clone(), values: amp });
    if dealias {
        band(&mut ps);
        band(&mut as_);
    }
    Ok(OperatorOutput { phase: ps.to_field().into_real(PHASE_IMAG_TOL)?, amplitude: as_.to_field() })
}

pub fn apply_a(s: &WkbState, p: &GrenierParams) -> Result<OperatorOutput> {
    let grid = s.grid().clone();
    let phi = forward_transform(&s.phase.to_complex());
    let amp = forward_transform(&s.amplitude);
    let gphi = grad(&phi);
    let lphi = phi.laplacian().to_field();
    let gamp = grad(&amp);
    let lamp = amp.laplacian().to_field();
    let n = grid.len();
    let mut out_phi = vec![Complex64::new(0.0, 0.0); n];
    let mut out_amp = vec![Complex64::new(0.0, 0.0); n];
    let half_ie = Complex64::new(0.0, 0.5 * p.eps);
    for i in 0..n {
        let mut g2 = 0.0;
        let mut transport = Complex64::new(0.0, 0.0);
        for axis in 0..grid.dim() {
            let g = gphi[axis].values[i].re;
            g2 += g * g;
            transport += g * gamp[axis].values[i];
        }
        let a = s.amplitude.values[i];
        out_phi[i] = Complex64::new(-0.5 * g2, 0.0);
        out_amp[i] = -transport - 0.5 * a * lphi.values[i].re + half_ie * lamp.values[i];
    }
    finish(&grid, out_phi, out_amp, p.dealias)
}

/// `(-f(|a|^2), 0)`, pointwise like the flow it generates.
pub fn apply_b(s: &WkbState, p: &GrenierParams) -> Result<OperatorOutput> {
    let values = s.amplitude.values.iter().map(|a| -f(p, a.norm_sqr())).collect();
    Ok(OperatorOutput {
        phase: RealField { grid: s.grid().clone(), values },
        amplitude: ComplexField::zeros(s.grid().clone()),
    })
}

/// `A'(v) B(v) - B'(v) A(v)` in closed form:
///
/// ```text
/// phase:     grad phi . grad f(|a|^2) - div(|a|^2 grad phi + eps Im(conj(a) grad a)) f'(|a|^2)
/// amplitude: grad a . grad f(|a|^2) + a Lap f(|a|^2) / 2
/// ```
///
/// This is the negative of the bracket `B'A - A'B` entering the defect formula.
pub fn commutator_ab(s: &WkbState, p: &GrenierParams) -> Result<OperatorOutput> {
    let grid = s.grid().clone();
    let n = grid.len();
    let dim = grid.dim();
    let phi = forward_transform(&s.phase.to_complex());
    let amp = forward_transform(&s.amplitude);
    let gphi = grad(&phi);
    let gamp = grad(&amp);
    let fa = ComplexField {
        grid: grid.clone(),
        values: s.amplitude.values.iter().map(|a| Complex64::new(f(p, a.norm_sqr()), 0.0)).collect(),
    };
    let fspec = forward_transform(&fa);
    let gf = grad(&fspec);
    let lf = fspec.laplacian().to_field();
    // current-like flux |a|^2 grad phi + eps Im(conj(a) grad a), one field per axis
    let flux: Vec<ComplexField> = (0..dim)
        .map(|axis| ComplexField {
            grid: grid.clone(),
            values: (0..n)
                .map(|i| {
                    let a = s.amplitude.values[i];
                    let v = a.norm_sqr() * gphi[axis].values[i].re + p.eps * (a.conj() * gamp[axis].values[i]).im;
                    Complex64::new(v, 0.0)
                })
                .collect(),
        })
        .collect();
    let mut div = vec![0.0; n];
    for (axis, fl) in flux.iter().enumerate() {
        let mut spec = forward_transform(fl);
        if p.dealias {
            band(&mut spec);
        }
        for (d, v) in div.iter_mut().zip(spec.derivative(axis).to_field().values) {
            *d += v.re;
        }
    }
    let mut out_phi = vec![Complex64::new(0.0, 0.0); n];
    let mut out_amp = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let a = s.amplitude.values[i];
        let mut transport = 0.0;
        let mut amp_transport = Complex64::new(0.0, 0.0);
        for axis in 0..dim {
            transport += gphi[axis].values[i].re * gf[axis].values[i].re;
            amp_transport += gamp[axis].values[i] * gf[axis].values[i].re;
        }
        out_phi[i] = Complex64::new(transport - div[i] * f_prime(p, a.norm_sqr()), 0.0);
        out_amp[i] = amp_transport + 0.5 * a * lf.values[i].re;
    }
    finish(&grid, out_phi, out_amp, p.dealias)
}

/// Derivative of the explicit phase shift `Y^t` at `base` in direction `pert`:
/// `(varphi - 2 sigma lambda t |a|^{2 sigma - 2} Re(conj(a) b), b)`.
pub fn d2_gauge_flow(base: &WkbState, pert: &WkbState, t: f64, p: &GrenierParams) -> Result<WkbState> {
    same_grid(base.grid(), pert.grid())?;
    let values = pert
        .phase
        .values
        .iter()
        .zip(&base.amplitude.values)
        .zip(&pert.amplitude.values)
        .map(|((phi, a), b)| phi - 2.0 * t * f_prime(p, a.norm_sqr()) * (a.conj() * b).re)
        .collect();
    Ok(WkbState {
        phase: RealField { grid: base.grid().clone(), values },
        amplitude: pert.amplitude.clone(),
        time: pert.time,
    })
}

// ---------------------------------------------------------------------------
// defect measurements

/// `Z^t s0 - S^t s0`, the reference taken from the certified Grenier solver.
pub fn local_defect(s0: &WkbState, t: f64, p: &GrenierParams) -> Result<WkbState> {
    let split = lie_trotter_wkb(s0, t, p)?;
    let exact = grenier_reference(s0, t, p)?.state;
    split.difference(&exact)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalErrorMeasurement {
    pub t: f64,
    /// Phase defect in `H^{l-3}_{rho(t)}`.
    pub phase_norm: f64,
    /// Amplitude defect in `H^{l-4}_{rho(t)}`.
    pub amplitude_norm: f64,
    pub l2: f64,
}

impl LocalErrorMeasurement {
    pub fn total(&self) -> f64 {
        self.phase_norm + self.amplitude_norm
    }
}

/// One-step defect measured at the regularity indices `l - 3` (phase) and `l - 4`
/// (amplitude), with `l = np.ell >= 4`.
pub fn measure_local_error(s0: &WkbState, t: f64, p: &GrenierParams, np: &NormParams) -> Result<LocalErrorMeasurement> {
    if np.ell < 4.0 {
        return Err(Error::Parameter(format!("regularity index {} leaves no room for the loss of four", np.ell)));
    }
    let d = local_defect(s0, t, p)?;
    let at = np.at_time(t)?;
    Ok(LocalErrorMeasurement {
        t,
        phase_norm: analytic_norm(&d.phase.to_complex(), &at.with_ell(np.ell - 3.0))?,
        amplitude_norm: analytic_norm(&d.amplitude, &at.with_ell(np.ell - 4.0))?,
        l2: d.l2_norm(),
    })
}

/// L^2 distance between the assembled split and reference waves after one step.
pub fn local_wave_error(s0: &WkbState, t: f64, p: &GrenierParams) -> Result<f64> {
    let split = assemble_wave(&lie_trotter_wkb(s0, t, p)?, p.eps)?;
    let exact = assemble_wave(&grenier_reference(s0, t, p)?.state, p.eps)?;
    Ok(split.sub(&exact)?.l2_norm())
}

/// Quadrature evaluation of the defect formula against the measured defect.
#[derive(Debug, Clone)]
pub struct IntegralCheck {
    pub nodes: usize,
    pub integral: WkbState,
    pub measured: WkbState,
    /// `|integral - measured|` in L^2.
    pub defect: f64,
    pub measured_norm: f64,
}

impl IntegralCheck {
    pub fn relative_defect(&self) -> f64 {
        if self.measured_norm > 0.0 {
            self.defect / self.measured_norm
        } else {
            self.defect
        }
    }
}

/// RK4 steps used for each linearized solve per unit time.
const LINEARIZED_STEPS_PER_UNIT: f64 = 8192.0;

/// Evaluates
///
/// ```text
/// int_0^t int_0^tau1 dS(t - tau1, Z^tau1 u) dY(tau1 - tau2, X^tau1 u) [B, A](Y^tau2 X^tau1 u) dtau2 dtau1
/// ```
///
/// with `nodes`-point Gauss rules on the square `[0,1]^2` pulled back to the
/// simplex by `tau1 = t s`, `tau2 = tau1 r`, and compares it with the measured
/// defect `Z^t u - S^t u`.
pub fn integral_representation_check(s0: &WkbState, t: f64, p: &GrenierParams, nodes: usize) -> Result<IntegralCheck> {
    let measured = local_defect(s0, t, p)?;
    integral_against(s0, t, p, nodes, measured)
}

/// Same as [`integral_representation_check`] for several node counts, sharing
/// one defect measurement.
pub fn integral_refinement_study(s0: &WkbState, t: f64, p: &GrenierParams, nodes: &[usize]) -> Result<Vec<IntegralCheck>> {
    let measured = local_defect(s0, t, p)?;
    nodes.iter().map(|&n| integral_against(s0, t, p, n, measured.clone())).collect()
}

fn integral_against(s0: &WkbState, t: f64, p: &GrenierParams, nodes: usize, measured: WkbState) -> Result<IntegralCheck> {
    if nodes == 0 || !(t > 0.0) {
        return Err(Error::Parameter("quadrature needs nodes >= 1 and t > 0".into()));
    }
    let (x, w) = gauss_legendre_unit(nodes);
    let mut total = WkbState { time: s0.time + t, ..WkbState::zeros(s0.grid().clone()) };
    for (&si, &wi) in x.iter().zip(&w) {
        let tau1 = t * si;
        let x_tau1 = flow_x(s0, tau1, p)?;
        // inner integral over tau2 in [0, tau1]; dY is linear so the pieces are summed first
        let mut inner = WkbState::zeros(s0.grid().clone());
        for (&sj, &wj) in x.iter().zip(&w) {
            let tau2 = tau1 * sj;
            let v = flow_y(&x_tau1, tau2, p)?;
            let bracket = commutator_ab(&v, p)?.scaled(-1.0).into_state(0.0);
            let pushed = d2_gauge_flow(&x_tau1, &bracket, tau1 - tau2, p)?;
            inner = inner.axpy(wj * t * t * si, &pushed)?;
        }
        let remaining = t - tau1;
        let transported = if remaining > 0.0 {
            let z_tau1 = flow_y(&x_tau1, tau1, p)?;
            let half_steps = ((remaining * LINEARIZED_STEPS_PER_UNIT / 2.0).ceil() as usize).max(4);
            let base = record_trajectory(&z_tau1, remaining, 2 * half_steps, p)?;
            let start = WkbState { time: base.start_time(), ..inner };
            linearized_flow(&base, &start, base.end_time() - base.start_time(), p)?
        } else {
            inner
        };
        total = total.axpy(wi, &transported)?;
    }
    total.time = s0.time + t;
    let defect = total.difference(&measured)?.l2_norm();
    let measured_norm = measured.l2_norm();
    Ok(IntegralCheck { nodes, integral: total, measured, defect, measured_norm })
}
