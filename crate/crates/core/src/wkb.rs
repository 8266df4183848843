//! Phase/amplitude dynamics: the split flows `X` (eikonal + transport) and `Y`
//! (explicit phase shift), their Lie-Trotter composition, a reference solver for
//! the coupled system
//!
//! ```text
//! phi_t + |grad phi|^2 / 2 + f(|a|^2) = 0
//! a_t + grad phi . grad a + a Lap phi / 2 = i eps Lap a / 2
//! ```
//!
//! with `f(r) = lambda r^sigma`, the Picard iteration for it, and its linearization.
//!
//! All PDE integration uses fourth-order Runge-Kutta in integrating-factor form:
//! the `i eps Lap / 2` term is propagated exactly by its spectral multiplier and
//! RK4 handles the remaining products, which are formed in physical space and
//! dealiased.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{WkbState, PHASE_IMAG_TOL};
use crate::grid::{outside_dealias_band, same_grid, ComplexField, Grid, RealField};
use crate::wave::ModelParams;

/// Threshold on `min(1 + t lambda_min(D^2 phi))` below which a flow refuses to run.
pub const CAUSTIC_THRESHOLD: f64 = 0.1;

/// L^2 threshold for the reference certificate of [`grenier_reference`].
pub const GRENIER_CERTIFICATE_TOL: f64 = 1e-9;

const MAX_FLOW_X_SUBSTEP: f64 = 1e-3;
const MAX_REFERENCE_STEPS: usize = 1 << 16;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrenierParams {
    pub eps: f64,
    pub lambda: f64,
    pub sigma: u32,
    /// Base RK4 step count for the reference and iterative solvers.
    pub substeps: usize,
    pub dealias: bool,
}

impl GrenierParams {
    pub fn new(model: &ModelParams, substeps: usize) -> Result<Self> {
        let p = GrenierParams {
            eps: model.eps,
            lambda: model.lambda,
            sigma: model.sigma,
            substeps,
            dealias: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Parameter(format!("eps = {} not in (0, 1]", self.eps)));
        }
        if self.sigma < 1 {
            return Err(Error::Parameter("sigma must be a positive integer".into()));
        }
        if self.substeps < 1 {
            return Err(Error::Parameter("substep count must be at least 1".into()));
        }
        Ok(())
    }

    #[inline]
    fn f(&self, modulus_sq: f64) -> f64 {
        self.lambda * modulus_sq.powi(self.sigma as i32)
    }

    /// `f'(r) = sigma lambda r^{sigma - 1}`.
    #[inline]
    fn f_prime(&self, modulus_sq: f64) -> f64 {
        self.sigma as f64 * self.lambda * modulus_sq.powi(self.sigma as i32 - 1)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("flow time {t} must be nonnegative")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// spectral machinery

/// Precomputed multipliers for one grid.
struct Ops {
    grid: Arc<Grid>,
    /// `i k_axis`, Nyquist zeroed.
    deriv: Vec<Vec<Complex64>>,
    /// `-|k|^2`, Nyquist zeroed.
    lap: Vec<f64>,
    /// `|k|^2` for the exact propagator.
    k2: Vec<f64>,
    keep: Vec<bool>,
    dealias: bool,
}

impl Ops {
    fn new(grid: &Arc<Grid>, dealias: bool) -> Ops {
        let n = grid.len();
        let dim = grid.dim();
        let mut deriv = vec![vec![ZERO; n]; dim];
        let mut lap = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut keep = vec![true; n];
        for idx in 0..n {
            let k = grid.wavenumber(idx);
            k2[idx] = k[0] * k[0] + k[1] * k[1];
            keep[idx] = !outside_dealias_band(grid, idx);
            if !grid.is_nyquist(idx) {
                for (axis, d) in deriv.iter_mut().enumerate() {
                    d[idx] = Complex64::new(0.0, k[axis]);
                }
                lap[idx] = -k2[idx];
            }
        }
        Ops { grid: grid.clone(), deriv, lap, k2, keep, dealias }
    }

    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn to_spec(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.grid.forward_in_place(&mut buf);
        buf
    }

    fn to_phys(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut buf = coeffs.to_vec();
        self.grid.inverse_in_place(&mut buf);
        buf
    }

    /// Forward transform of a pointwise product, dealiased if enabled.
    fn product_to_spec(&self, mut values: Vec<Complex64>) -> Vec<Complex64> {
        self.grid.forward_in_place(&mut values);
        if self.dealias {
            for (c, &k) in values.iter_mut().zip(&self.keep) {
                if !k {
                    *c = ZERO;
                }
            }
        }
        values
    }

    fn grad_phys(&self, coeffs: &[Complex64]) -> Vec<Vec<Complex64>> {
        self.deriv
            .iter()
            .map(|m| {
                let spec: Vec<Complex64> = coeffs.iter().zip(m).map(|(c, d)| c * d).collect();
                self.to_phys(&spec)
            })
            .collect()
    }

    fn grad_phys_real(&self, coeffs: &[Complex64]) -> Vec<Vec<f64>> {
        self.grad_phys(coeffs).into_iter().map(|g| g.into_iter().map(|c| c.re).collect()).collect()
    }

    fn lap_phys_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let spec: Vec<Complex64> = coeffs.iter().zip(&self.lap).map(|(c, l)| c * l).collect();
        self.to_phys(&spec).into_iter().map(|c| c.re).collect()
    }

    fn propagator(&self, eps: f64, h: f64) -> Vec<Complex64> {
        self.k2.iter().map(|k2| Complex64::from_polar(1.0, -0.5 * eps * h * k2)).collect()
    }

    fn encode(&self, s: &WkbState) -> Pair {
        let phase: Vec<Complex64> = s.phase.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Pair { phi: self.to_spec(&phase), amp: self.to_spec(&s.amplitude.values) }
    }

    fn decode(&self, y: &Pair, time: f64) -> Result<WkbState> {
        let phase = ComplexField { grid: self.grid.clone(), values: self.to_phys(&y.phi) }.into_real(PHASE_IMAG_TOL)?;
        let amplitude = ComplexField { grid: self.grid.clone(), values: self.to_phys(&y.amp) };
        Ok(WkbState { phase, amplitude, time })
    }
}

/// Spectral coefficients of a (phase-like, amplitude-like) pair.
#[derive(Clone)]
struct Pair {
    phi: Vec<Complex64>,
    amp: Vec<Complex64>,
}

impl Pair {
    fn combine(&self, h: f64, k: &Pair) -> Pair {
        Pair {
            phi: self.phi.iter().zip(&k.phi).map(|(a, b)| a + h * b).collect(),
            amp: self.amp.iter().zip(&k.amp).map(|(a, b)| a + h * b).collect(),
        }
    }

    /// Applies the amplitude propagator; the phase component is untouched.
    fn propagate(&self, e: &[Complex64]) -> Pair {
        Pair { phi: self.phi.clone(), amp: self.amp.iter().zip(e).map(|(a, m)| a * m).collect() }
    }
}

/// One integrating-factor RK4 step of `y' = L y + N(t, y)` with `exp(hL)` given
/// by the half and full step propagators.
fn lawson_step(
    y: &Pair,
    t: f64,
    h: f64,
    e_half: &[Complex64],
    e_full: &[Complex64],
    rhs: &mut dyn FnMut(f64, &Pair) -> Result<Pair>,
) -> Result<Pair> {
    let k1 = rhs(t, y)?;
    let y2 = y.combine(0.5 * h, &k1).propagate(e_half);
    let k2 = rhs(t + 0.5 * h, &y2)?;
    let yh = y.propagate(e_half);
    let y3 = yh.combine(0.5 * h, &k2);
    let k3 = rhs(t + 0.5 * h, &y3)?;
    let yf = y.propagate(e_full);
    let y4 = yf.combine(h, &k3.propagate(e_half));
    let k4 = rhs(t + h, &y4)?;
    let mid = k2.combine(1.0, &k3).propagate(e_half);
    let out = yf
        .combine(h / 6.0, &k1.propagate(e_full))
        .combine(h / 3.0, &mid)
        .combine(h / 6.0, &k4);
    Ok(out)
}

/// Marches `n` steps of size `h`, calling `visit` on every accepted state.
#[allow(clippy::too_many_arguments)]
fn lawson_march(
    ops: &Ops,
    eps: f64,
    y0: Pair,
    t0: f64,
    h: f64,
    n: usize,
    rhs: &mut dyn FnMut(f64, &Pair) -> Result<Pair>,
    visit: &mut dyn FnMut(usize, &Pair) -> Result<()>,
) -> Result<Pair> {
    let e_half = ops.propagator(eps, 0.5 * h);
    let e_full = ops.propagator(eps, h);
    let mut y = y0;
    visit(0, &y)?;
    for step in 0..n {
        y = lawson_step(&y, t0 + step as f64 * h, h, &e_half, &e_full, rhs)?;
        visit(step + 1, &y)?;
    }
    Ok(y)
}

/// Physical-space coefficient fields derived from a phase/amplitude pair.
struct Coeffs {
    grad_phi: Vec<Vec<f64>>,
    lap_phi: Vec<f64>,
    amp: Vec<Complex64>,
    grad_amp: Vec<Vec<Complex64>>,
}

impl Coeffs {
    fn from_pair(ops: &Ops, y: &Pair) -> Coeffs {
        Coeffs {
            grad_phi: ops.grad_phys_real(&y.phi),
            lap_phi: ops.lap_phys_real(&y.phi),
            amp: ops.to_phys(&y.amp),
            grad_amp: ops.grad_phys(&y.amp),
        }
    }
}

/// Full right-hand side of the coupled system (minus the `i eps Lap / 2` term).
fn grenier_rhs(ops: &Ops, p: &GrenierParams, y: &Pair, nonlinear: bool) -> Pair {
    let c = Coeffs::from_pair(ops, y);
    let n = c.amp.len();
    let mut nphi = vec![ZERO; n];
    let mut namp = vec![ZERO; n];
    for i in 0..n {
        let mut g2 = 0.0;
        let mut transport = ZERO;
        for axis in 0..ops.dim() {
            g2 += c.grad_phi[axis][i] * c.grad_phi[axis][i];
            transport += c.grad_phi[axis][i] * c.grad_amp[axis][i];
        }
        let source = if nonlinear { p.f(c.amp[i].norm_sqr()) } else { 0.0 };
        nphi[i] = Complex64::new(-0.5 * g2 - source, 0.0);
        namp[i] = -transport - 0.5 * c.amp[i] * c.lap_phi[i];
    }
    Pair { phi: ops.product_to_spec(nphi), amp: ops.product_to_spec(namp) }
}

fn hessian_min_eigenvalue(ops: &Ops, phi: &[Complex64]) -> Vec<f64> {
    let second = |i: usize, j: usize| -> Vec<f64> {
        let spec: Vec<Complex64> = phi
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                if ops.grid.is_nyquist(idx) {
                    ZERO
                } else {
                    let k = ops.grid.wavenumber(idx);
                    c * (-k[i] * k[j])
                }
            })
            .collect();
        ops.to_phys(&spec).into_iter().map(|c| c.re).collect()
    };
    if ops.dim() == 1 {
        return second(0, 0);
    }
    let (a, b, c) = (second(0, 0), second(0, 1), second(1, 1));
    (0..a.len())
        .map(|i| 0.5 * (a[i] + c[i]) - (0.25 * (a[i] - c[i]).powi(2) + b[i] * b[i]).sqrt())
        .collect()
}

/// `(min_x (1 + t lambda_min(D^2 phi)), 1 / max(-lambda_min))`; the second entry
/// is the time at which the monitor would reach zero (infinite for convex phases).
pub fn caustic_monitor(phase: &RealField, t: f64) -> (f64, f64) {
    let ops = Ops::new(&phase.grid, false);
    let coeffs = ops.to_spec(&phase.to_complex().values);
    caustic_from_spec(&ops, &coeffs, t)
}

fn caustic_from_spec(ops: &Ops, phi: &[Complex64], t: f64) -> (f64, f64) {
    let lmin = hessian_min_eigenvalue(ops, phi).into_iter().fold(f64::INFINITY, f64::min);
    let critical = if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY };
    ((1.0 + t * lmin).min(1.0), critical)
}

fn check_caustic(ops: &Ops, phi: &[Complex64], t: f64, t0: f64) -> Result<()> {
    let (monitor, critical) = caustic_from_spec(ops, phi, t);
    if monitor <= CAUSTIC_THRESHOLD {
        return Err(Error::Horizon { monitor, critical_time: t0 + critical });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// split flows

/// Exact `Y^t`: `phi <- phi - t f(|a|^2)`, amplitude untouched.
pub fn flow_y(s: &WkbState, t: f64, p: &GrenierParams) -> Result<WkbState> {
    check_time(t)?;
    let values = s
        .phase
        .values
        .iter()
        .zip(&s.amplitude.values)
        .map(|(&phi, a)| phi - t * p.f(a.norm_sqr()))
        .collect();
    Ok(WkbState {
        phase: RealField { grid: s.grid().clone(), values },
        amplitude: s.amplitude.clone(),
        time: s.time + t,
    })
}

/// Substep count used by [`flow_x`] for a step of length `t`.
pub fn flow_x_substeps(t: f64) -> usize {
    let h = (t / 8.0).min(MAX_FLOW_X_SUBSTEP);
    ((t / h).ceil() as usize).max(8)
}

/// `X^t`: eikonal equation for the phase, transport/Schrodinger equation for
/// the amplitude.
pub fn flow_x(s: &WkbState, t: f64, p: &GrenierParams) -> Result<WkbState> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(s.clone());
    }
    let ops = Ops::new(s.grid(), p.dealias);
    let y0 = ops.encode(s);
    check_caustic(&ops, &y0.phi, t, s.time)?;
    let n = flow_x_substeps(t);
    let h = t / n as f64;
    let mut rhs = |_t: f64, y: &Pair| Ok(grenier_rhs(&ops, p, y, false));
    let y = lawson_march(&ops, p.eps, y0, s.time, h, n, &mut rhs, &mut |_, _| Ok(()))?;
    ops.decode(&y, s.time + t)
}

/// `Y^dt X^dt`.
pub fn lie_trotter_wkb(s: &WkbState, dt: f64, p: &GrenierParams) -> Result<WkbState> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step {dt} must be positive")));
    }
    // both sub-flows cover the same interval, so the clock advances once
    let out = flow_y(&flow_x(s, dt, p)?, dt, p)?;
    Ok(WkbState { time: s.time + dt, ..out })
}

/// `n` Lie-Trotter steps of size `dt`.
pub fn lie_trotter_wkb_march(s: &WkbState, dt: f64, n: usize, p: &GrenierParams) -> Result<WkbState> {
    let mut state = s.clone();
    for _ in 0..n {
        state = lie_trotter_wkb(&state, dt, p)?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// trajectories and the reference solver

/// States sampled at `t0 + i dt`, `i = 0..len`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<WkbState>,
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.states.first().map_or(0.0, |s| s.time)
    }

    pub fn end_time(&self) -> f64 {
        self.start_time() + self.dt * (self.states.len().saturating_sub(1)) as f64
    }

    pub fn last(&self) -> Option<&WkbState> {
        self.states.last()
    }

    pub fn grid(&self) -> Option<&Arc<Grid>> {
        self.states.first().map(|s| s.grid())
    }

    /// State at time `t`: a stored sample when `t` is on the lattice, otherwise
    /// cubic Lagrange interpolation through the four nearest samples.
    pub fn sample(&self, t: f64) -> Result<WkbState> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Trajectory("empty trajectory".into()));
        }
        let u = (t - self.start_time()) / self.dt;
        let slack = 1e-9 * (1.0 + u.abs());
        if u < -slack || u > (n - 1) as f64 + slack {
            return Err(Error::Trajectory(format!(
                "time {t} outside [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        let nearest = u.round().clamp(0.0, (n - 1) as f64);
        if (u - nearest).abs() <= slack {
            return Ok(self.states[nearest as usize].clone());
        }
        let width = n.min(4);
        let first = (u.floor() as isize - 1).clamp(0, (n - width) as isize) as usize;
        let nodes: Vec<usize> = (first..first + width).collect();
        let mut out = self.states[nodes[0]].scaled(0.0);
        for &j in &nodes {
            let w: f64 = nodes
                .iter()
                .filter(|&&m| m != j)
                .map(|&m| (u - m as f64) / (j as f64 - m as f64))
                .product();
            out = out.axpy(w, &self.states[j])?;
        }
        out.time = t;
        Ok(out)
    }
}

/// Integrates the coupled system with `steps` RK4 steps, keeping every state.
pub fn record_trajectory(s0: &WkbState, t: f64, steps: usize, p: &GrenierParams) -> Result<Trajectory> {
    check_time(t)?;
    if steps == 0 {
        return Err(Error::Parameter("trajectory needs at least one step".into()));
    }
    let ops = Ops::new(s0.grid(), p.dealias);
    let y0 = ops.encode(s0);
    check_caustic(&ops, &y0.phi, t, s0.time)?;
    let h = t / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut rhs = |_t: f64, y: &Pair| Ok(grenier_rhs(&ops, p, y, true));
    let t0 = s0.time;
    lawson_march(&ops, p.eps, y0, t0, h, steps, &mut rhs, &mut |i, y| {
        states.push(ops.decode(y, t0 + i as f64 * h)?);
        Ok(())
    })?;
    Ok(Trajectory { dt: h, states })
}

fn grenier_solve(ops: &Ops, s0: &WkbState, t: f64, steps: usize, p: &GrenierParams) -> Result<Pair> {
    let h = t / steps as f64;
    let mut rhs = |_t: f64, y: &Pair| Ok(grenier_rhs(ops, p, y, true));
    lawson_march(ops, p.eps, ops.encode(s0), s0.time, h, steps, &mut rhs, &mut |_, _| Ok(()))
}

#[derive(Debug, Clone)]
pub struct GrenierReference {
    pub state: WkbState,
    /// Estimated L^2 error of `state`.
    pub certificate: f64,
    pub substeps: usize,
}

/// Fine-step solution of the coupled system. Step counts double from
/// `p.substeps` until `|y_n - y_2n| / 15` (the RK4 error estimate for `y_2n`)
/// drops below [`GRENIER_CERTIFICATE_TOL`].
pub fn grenier_reference(s0: &WkbState, t: f64, p: &GrenierParams) -> Result<GrenierReference> {
    p.validate()?;
    check_time(t)?;
    if t == 0.0 {
        return Ok(GrenierReference { state: s0.clone(), certificate: 0.0, substeps: 0 });
    }
    let ops = Ops::new(s0.grid(), p.dealias);
    check_caustic(&ops, &ops.encode(s0).phi, t, s0.time)?;
    let mut n = p.substeps;
    let mut coarse = ops.decode(&grenier_solve(&ops, s0, t, n, p)?, s0.time + t)?;
    let mut certificate = f64::INFINITY;
    while 2 * n <= MAX_REFERENCE_STEPS {
        let fine = ops.decode(&grenier_solve(&ops, s0, t, 2 * n, p)?, s0.time + t)?;
        certificate = fine.difference(&coarse)?.l2_norm() / 15.0;
        if certificate < GRENIER_CERTIFICATE_TOL {
            return Ok(GrenierReference { state: fine, certificate, substeps: 2 * n });
        }
        coarse = fine;
        n *= 2;
    }
    Err(Error::ReferenceQuality { certificate, tolerance: GRENIER_CERTIFICATE_TOL, substeps: n })
}

// ---------------------------------------------------------------------------
// linearized flow

/// Solves the linearization of the coupled system along `base` with initial
/// perturbation `init` up to time `t` after the start of `base`. The RK4 step is
/// twice the trajectory spacing so that every stage lands on a stored sample.
pub fn linearized_flow(base: &Trajectory, init: &WkbState, t: f64, p: &GrenierParams) -> Result<WkbState> {
    check_time(t)?;
    let grid = base.grid().ok_or_else(|| Error::Trajectory("empty base trajectory".into()))?;
    same_grid(grid, init.grid()).map_err(|_| Error::Trajectory("perturbation grid differs".into()))?;
    if t == 0.0 {
        return Ok(WkbState { time: base.start_time(), ..init.clone() });
    }
    let h = 2.0 * base.dt;
    let steps = (t / h).round() as usize;
    if steps == 0 || (steps as f64 * h - t).abs() > 1e-9 * t.max(h) {
        return Err(Error::Trajectory(format!("time {t} is not a multiple of the step {h}")));
    }
    if t > base.end_time() - base.start_time() + 1e-9 * h {
        return Err(Error::Trajectory(format!("time {t} beyond the stored trajectory")));
    }
    let ops = Ops::new(grid, p.dealias);
    let t0 = base.start_time();
    let mut rhs = |tau: f64, y: &Pair| -> Result<Pair> {
        let c = Coeffs::from_pair(&ops, &ops.encode(&base.sample(tau)?));
        Ok(linearized_rhs(&ops, p, &c, y))
    };
    let y = lawson_march(&ops, p.eps, ops.encode(init), t0, h, steps, &mut rhs, &mut |_, _| Ok(()))?;
    ops.decode(&y, t0 + t)
}

fn linearized_rhs(ops: &Ops, p: &GrenierParams, base: &Coeffs, y: &Pair) -> Pair {
    let pert = Coeffs::from_pair(ops, y);
    let n = base.amp.len();
    let mut nphi = vec![ZERO; n];
    let mut namp = vec![ZERO; n];
    for i in 0..n {
        let mut phi_transport = 0.0;
        let mut amp_transport = ZERO;
        for axis in 0..ops.dim() {
            phi_transport += base.grad_phi[axis][i] * pert.grad_phi[axis][i];
            amp_transport += base.grad_phi[axis][i] * pert.grad_amp[axis][i]
                + pert.grad_phi[axis][i] * base.grad_amp[axis][i];
        }
        let a = base.amp[i];
        let b = pert.amp[i];
        let coupling = 2.0 * p.f_prime(a.norm_sqr()) * (a.conj() * b).re;
        nphi[i] = Complex64::new(-phi_transport - coupling, 0.0);
        namp[i] = -amp_transport - 0.5 * (b * base.lap_phi[i] + a * pert.lap_phi[i]);
    }
    Pair { phi: ops.product_to_spec(nphi), amp: ops.product_to_spec(namp) }
}

// ---------------------------------------------------------------------------
// Picard iteration

/// Result of [`grenier_iterative`].
#[derive(Debug, Clone)]
pub struct IterativeOutcome {
    /// Final-time state of the last stage.
    pub state: WkbState,
    /// Final stage, sampled on the solver lattice.
    pub trajectory: Trajectory,
    /// `sup_t |stage_{j+1} - stage_j|` for `j = 0..J`.
    pub differences: Vec<f64>,
    /// Consecutive ratios of `differences`.
    pub ratios: Vec<f64>,
    /// Every ratio below [`CONTRACTION_RATIO`].
    pub contracted: bool,
}

pub const CONTRACTION_RATIO: f64 = 0.9;

/// Picard scheme with the L^2 norm for stage differences.
pub fn grenier_iterative(s0: &WkbState, t: f64, p: &GrenierParams, iterations: usize) -> Result<IterativeOutcome> {
    grenier_iterative_with_norm(s0, t, p, iterations, &|s: &WkbState| Ok(s.l2_norm()))
}

/// Picard scheme: stage `j + 1` solves the linear system with transport field,
/// potential and source frozen from stage `j`,
///
/// ```text
/// phi' + grad phi_j . grad phi' / 2 + f(|a_j|^2) = 0
/// a'   + grad phi_j . grad a' + a' Lap phi_j / 2 = i eps Lap a' / 2
/// ```
///
/// starting from the constant-in-time stage `(phi_0, a_0)`. Stage `j`
/// coefficients between lattice times come from cubic interpolation.
pub fn grenier_iterative_with_norm(
    s0: &WkbState,
    t: f64,
    p: &GrenierParams,
    iterations: usize,
    norm: &dyn Fn(&WkbState) -> Result<f64>,
) -> Result<IterativeOutcome> {
    p.validate()?;
    check_time(t)?;
    if iterations == 0 {
        return Err(Error::Parameter("at least one iteration is required".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Parameter("iteration horizon must be positive".into()));
    }
    let ops = Ops::new(s0.grid(), p.dealias);
    let n = p.substeps;
    let h = t / n as f64;
    let start = Coeffs::from_pair(&ops, &ops.encode(s0));
    let mut previous = Trajectory {
        dt: h,
        states: (0..=n)
            .map(|i| WkbState { time: s0.time + i as f64 * h, ..s0.clone() })
            .collect(),
    };
    let mut differences = Vec::with_capacity(iterations);
    for stage in 0..iterations {
        let mut states = Vec::with_capacity(n + 1);
        let mut rhs = |tau: f64, y: &Pair| -> Result<Pair> {
            if stage == 0 {
                return Ok(frozen_rhs(&ops, p, &start, y));
            }
            let c = Coeffs::from_pair(&ops, &ops.encode(&previous.sample(tau)?));
            Ok(frozen_rhs(&ops, p, &c, y))
        };
        let t0 = s0.time;
        lawson_march(&ops, p.eps, ops.encode(s0), t0, h, n, &mut rhs, &mut |i, y| {
            states.push(ops.decode(y, t0 + i as f64 * h)?);
            Ok(())
        })?;
        let current = Trajectory { dt: h, states };
        let mut sup: f64 = 0.0;
        for (a, b) in current.states.iter().zip(&previous.states) {
            sup = sup.max(norm(&a.difference(b)?)?);
        }
        differences.push(sup);
        previous = current;
    }
    let ratios: Vec<f64> = differences.windows(2).map(|w| w[1] / w[0]).collect();
    let contracted = ratios.iter().all(|&r| r < CONTRACTION_RATIO);
    let state = previous.last().cloned().ok_or(Error::EmptyTrace)?;
    Ok(IterativeOutcome { state, trajectory: previous, differences, ratios, contracted })
}

fn frozen_rhs(ops: &Ops, p: &GrenierParams, c: &Coeffs, y: &Pair) -> Pair {
    let grad_phi = ops.grad_phys_real(&y.phi);
    let amp = ops.to_phys(&y.amp);
    let grad_amp = ops.grad_phys(&y.amp);
    let n = amp.len();
    let mut nphi = vec![ZERO; n];
    let mut namp = vec![ZERO; n];
    for i in 0..n {
        let mut phi_transport = 0.0;
        let mut amp_transport = ZERO;
        for axis in 0..ops.dim() {
            phi_transport += c.grad_phi[axis][i] * grad_phi[axis][i];
            amp_transport += c.grad_phi[axis][i] * grad_amp[axis][i];
        }
        nphi[i] = Complex64::new(-0.5 * phi_transport - p.f(c.amp[i].norm_sqr()), 0.0);
        namp[i] = -amp_transport - 0.5 * amp[i] * c.lap_phi[i];
    }
    Pair { phi: ops.product_to_spec(nphi), amp: ops.product_to_spec(namp) }
}
