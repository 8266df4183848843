//! Wave-function level flows: free Schrodinger flow `X`, nonlinear gauge flow `Y`,
//! their Lie-Trotter and Strang compositions, and a self-certified reference
//! solver for `i eps u_t + eps^2/2 Lap u = lambda |u|^{2 sigma} u`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{forward_transform, ComplexField, Grid, Spectrum};

/// L^2 threshold for the wave reference certificate.
pub const WAVE_CERTIFICATE_TOL: f64 = 1e-10;

const MAX_REFERENCE_SUBSTEPS: usize = 1 << 22;

/// Composition order of the two sub-flows in a Lie-Trotter step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitOrder {
    /// `Y^t X^t`: free flow first, then the gauge flow.
    #[default]
    GaugeAfterFree,
    /// `X^t Y^t`.
    FreeAfterGauge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub eps: f64,
    pub lambda: f64,
    pub sigma: u32,
    pub horizon: f64,
    pub split_order: SplitOrder,
}

impl ModelParams {
    pub fn new(eps: f64, lambda: f64, sigma: u32, horizon: f64) -> Result<Self> {
        let p = ModelParams { eps, lambda, sigma, horizon, split_order: SplitOrder::default() };
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
        if !self.lambda.is_finite() {
            return Err(Error::Parameter("lambda must be finite".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon {} must be positive", self.horizon)));
        }
        Ok(())
    }

    /// `f(r) = lambda r^sigma` evaluated at `r = |z|^2`.
    #[inline]
    pub fn nonlinearity(&self, modulus_sq: f64) -> f64 {
        self.lambda * modulus_sq.powi(self.sigma as i32)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("flow time {t} must be nonnegative")));
    }
    Ok(())
}

fn apply_free_multiplier(s: &mut Spectrum, t: f64, eps: f64) {
    let grid = s.grid.clone();
    for (idx, c) in s.coeffs.iter_mut().enumerate() {
        let k = grid.wavenumber(idx);
        let k2 = k[0] * k[0] + k[1] * k[1];
        *c *= Complex64::from_polar(1.0, -0.5 * eps * t * k2);
    }
}

fn apply_gauge(values: &mut [Complex64], t: f64, p: &ModelParams) {
    for v in values.iter_mut() {
        let rotation = -p.nonlinearity(v.norm_sqr()) * t / p.eps;
        *v *= Complex64::from_polar(1.0, rotation);
    }
}

/// Exact free flow `X^t`: multiplier `exp(-i eps t |k|^2 / 2)` on the spectrum.
pub fn free_step(u: &ComplexField, t: f64, p: &ModelParams) -> Result<ComplexField> {
    check_time(t)?;
    let mut s = forward_transform(u);
    apply_free_multiplier(&mut s, t, p.eps);
    Ok(s.to_field())
}

/// Exact gauge flow `Y^t`: pointwise `u exp(-i lambda t |u|^{2 sigma} / eps)`.
pub fn gauge_step(u: &ComplexField, t: f64, p: &ModelParams) -> Result<ComplexField> {
    check_time(t)?;
    let mut out = u.clone();
    apply_gauge(&mut out.values, t, p);
    Ok(out)
}

/// One Lie-Trotter step, gauge product dealiased.
pub fn lie_trotter_step(u: &ComplexField, dt: f64, p: &ModelParams) -> Result<ComplexField> {
    lie_trotter_march(u, dt, 1, p)
}

/// `n` Lie-Trotter steps of size `dt`.
pub fn lie_trotter_march(u: &ComplexField, dt: f64, n: usize, p: &ModelParams) -> Result<ComplexField> {
    check_positive_step(dt)?;
    let mut values = u.values.clone();
    let grid = u.grid.clone();
    for _ in 0..n {
        match p.split_order {
            SplitOrder::GaugeAfterFree => {
                free_in_place(&grid, &mut values, dt, p.eps, false);
                apply_gauge(&mut values, dt, p);
                dealias_values(&grid, &mut values);
            }
            SplitOrder::FreeAfterGauge => {
                apply_gauge(&mut values, dt, p);
                free_in_place(&grid, &mut values, dt, p.eps, true);
            }
        }
    }
    Ok(ComplexField { grid, values })
}

/// One Strang step `Y^{dt/2} X^{dt} Y^{dt/2}`.
pub fn strang_step(u: &ComplexField, dt: f64, p: &ModelParams) -> Result<ComplexField> {
    strang_march(u, dt, 1, p)
}

/// `n` Strang steps; adjacent half gauge steps are fused.
pub fn strang_march(u: &ComplexField, dt: f64, n: usize, p: &ModelParams) -> Result<ComplexField> {
    check_positive_step(dt)?;
    let grid = u.grid.clone();
    let mut values = u.values.clone();
    if n == 0 {
        return Ok(ComplexField { grid, values });
    }
    apply_gauge(&mut values, 0.5 * dt, p);
    for step in 0..n {
        free_in_place(&grid, &mut values, dt, p.eps, true);
        let tail = if step + 1 == n { 0.5 * dt } else { dt };
        apply_gauge(&mut values, tail, p);
    }
    dealias_values(&grid, &mut values);
    Ok(ComplexField { grid, values })
}

fn check_positive_step(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("time step {dt} must be positive")));
    }
    Ok(())
}

fn free_in_place(grid: &Grid, values: &mut [Complex64], t: f64, eps: f64, dealias: bool) {
    grid.forward_in_place(values);
    for (idx, c) in values.iter_mut().enumerate() {
        if dealias && crate::grid::outside_dealias_band(grid, idx) {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let k = grid.wavenumber(idx);
        *c *= Complex64::from_polar(1.0, -0.5 * eps * t * (k[0] * k[0] + k[1] * k[1]));
    }
    grid.inverse_in_place(values);
}

fn dealias_values(grid: &Grid, values: &mut [Complex64]) {
    grid.forward_in_place(values);
    for (idx, c) in values.iter_mut().enumerate() {
        if crate::grid::outside_dealias_band(grid, idx) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    grid.inverse_in_place(values);
}

/// Reference wave function with its self-convergence certificate.
#[derive(Debug, Clone)]
pub struct WaveReference {
    pub field: ComplexField,
    /// Estimated L^2 error of `field`.
    pub certificate: f64,
    /// Finest Strang substep count used.
    pub substeps: usize,
}

/// Fine-step Strang reference for `S^t`, certified at [`WAVE_CERTIFICATE_TOL`].
pub fn reference_solve(u0: &ComplexField, t: f64, p: &ModelParams, substeps: usize) -> Result<WaveReference> {
    reference_solve_with_tolerance(u0, t, p, substeps, WAVE_CERTIFICATE_TOL)
}

/// Strang marches at `n, 2n, 4n, ...` substeps combined by Richardson
/// extrapolation (the symmetric scheme has an even error expansion). The
/// certificate is the scaled gap between consecutive extrapolants; substeps are
/// doubled until it falls below `tolerance`.
pub fn reference_solve_with_tolerance(
    u0: &ComplexField,
    t: f64,
    p: &ModelParams,
    substeps: usize,
    tolerance: f64,
) -> Result<WaveReference> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(WaveReference { field: u0.clone(), certificate: 0.0, substeps: 0 });
    }
    let mut n = substeps.max(1);
    let march = |n: usize| strang_march(u0, t / n as f64, n, p);
    let mut coarse = march(n)?;
    let mut fine = march(2 * n)?;
    let mut previous = richardson(&fine, &coarse, 4.0)?;
    let mut certificate = f64::INFINITY;
    while 4 * n <= MAX_REFERENCE_SUBSTEPS {
        let finer = march(4 * n)?;
        let current = richardson(&finer, &fine, 4.0)?;
        certificate = current.sub(&previous)?.l2_norm() / 15.0;
        if certificate < tolerance {
            return Ok(WaveReference { field: current, certificate, substeps: 4 * n });
        }
        coarse = fine;
        fine = finer;
        previous = current;
        n *= 2;
    }
    let _ = coarse;
    Err(Error::ReferenceQuality { certificate, tolerance, substeps: 2 * n })
}

/// `(r fine - coarse) / (r - 1)`.
pub(crate) fn richardson(fine: &ComplexField, coarse: &ComplexField, r: f64) -> Result<ComplexField> {
    crate::grid::same_grid(&fine.grid, &coarse.grid)?;
    let values = fine
        .values
        .iter()
        .zip(&coarse.values)
        .map(|(f, c)| (f * r - c) / (r - 1.0))
        .collect();
    Ok(ComplexField { grid: fine.grid.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    use crate::fields::{assemble_wave, WkbState};
    use crate::grid::{dealias, dealias_field, RealField};

    fn params(eps: f64, lambda: f64) -> ModelParams {
        ModelParams::new(eps, lambda, 1, 1.0).unwrap()
    }

    fn wkb_gaussian(grid: &Arc<Grid>, eps: f64) -> ComplexField {
        let phase = RealField::from_fn(grid.clone(), |x| -0.25 * (-x[0] * x[0]).exp());
        let amp = ComplexField::from_fn(grid.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        assemble_wave(&WkbState::new(phase, amp, 0.0).unwrap(), eps).unwrap()
    }

    fn slope(xs: &[f64], ys: &[f64]) -> f64 {
        crate::fit::log_log_slope(xs, ys).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(0.0, 1.0, 1, 1.0).is_err());
        assert!(ModelParams::new(1.5, 1.0, 1, 1.0).is_err());
        assert!(ModelParams::new(0.5, 1.0, 0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -2.0, 2, 1.0).is_ok());
    }

    #[test]
    fn free_step_on_lattice_mode() {
        let g = Grid::new(1, 64, PI).unwrap();
        let p = params(0.3, 1.0);
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new(0.0, 5.0 * x[0]).exp());
        let v = free_step(&u, 0.7, &p).unwrap();
        let phase = Complex64::from_polar(1.0, -0.3 * 0.7 * 25.0 / 2.0);
        for (a, b) in v.values.iter().zip(&u.values) {
            assert!((a - b * phase).norm() < 1e-12);
        }
        let id = free_step(&u, 0.0, &p).unwrap();
        assert!(id.sub(&u).unwrap().l2_norm() < 1e-13);
        assert!(free_step(&u, -1.0, &p).is_err());
    }

    #[test]
    fn free_step_group_property_and_unitarity() {
        let g = Grid::new(1, 256, 2.0 * PI).unwrap();
        let p = params(1.0 / 16.0, 1.0);
        let u = wkb_gaussian(&g, p.eps);
        let a = free_step(&free_step(&u, 0.3, &p).unwrap(), 0.45, &p).unwrap();
        let b = free_step(&u, 0.75, &p).unwrap();
        assert!(a.sub(&b).unwrap().l2_norm() <= 1e-12);
        assert!((b.l2_norm() - u.l2_norm()).abs() <= 1e-12 * u.l2_norm());
    }

    #[test]
    fn free_gaussian_closed_form() {
        // i v_t + v_xx / 2 = 0, v(0) = exp(-x^2): v = (1 + 2it)^{-1/2} exp(-x^2 / (1 + 2it))
        let g = Grid::new(1, 512, 12.0).unwrap();
        let p = params(1.0, 0.0);
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let v = free_step(&u, 0.5, &p).unwrap();
        let z = Complex64::new(1.0, 1.0);
        let exact = ComplexField::from_fn(g.clone(), |x| (-(x[0] * x[0]) / z).exp() / z.sqrt());
        assert!(v.sub(&exact).unwrap().l2_norm() <= 1e-10);
    }

    #[test]
    fn gauge_step_properties() {
        let g = Grid::new(1, 64, PI).unwrap();
        let u = wkb_gaussian(&g, 0.1);
        let free = params(0.1, 0.0);
        assert_eq!(gauge_step(&u, 0.4, &free).unwrap().values, u.values);

        let p = params(0.1, 2.0);
        let c = Complex64::new(0.6, -0.3);
        let flat = ComplexField::from_fn(g.clone(), |_| c);
        let out = gauge_step(&flat, 0.25, &p).unwrap();
        let expected = c * Complex64::from_polar(1.0, -2.0 * 0.25 * c.norm_sqr() / 0.1);
        assert!(out.values.iter().all(|v| (v - expected).norm() < 1e-14));

        let once = gauge_step(&u, 0.5, &p).unwrap();
        let twice = gauge_step(&gauge_step(&u, 0.2, &p).unwrap(), 0.3, &p).unwrap();
        assert!(once.sub(&twice).unwrap().l2_norm() < 1e-13);
        for (a, b) in once.values.iter().zip(&u.values) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_case_reduces_to_free_flow() {
        let g = Grid::new(1, 128, 2.0 * PI).unwrap();
        let p = params(0.125, 0.0);
        let u = wkb_gaussian(&g, p.eps);
        let free = dealias_field(&free_step(&u, 0.05, &p).unwrap());
        assert!(lie_trotter_step(&u, 0.05, &p).unwrap().sub(&free).unwrap().l2_norm() < 1e-13);
        assert!(strang_step(&u, 0.05, &p).unwrap().sub(&free).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn steps_conserve_mass_and_respect_dealias() {
        let g = Grid::new(1, 256, 2.0 * PI).unwrap();
        let p = params(1.0 / 16.0, 1.0);
        let u = dealias(&forward_transform(&wkb_gaussian(&g, p.eps))).to_field();
        let m0 = u.l2_norm();
        let lt = lie_trotter_step(&u, 0.01, &p).unwrap();
        let st = strang_step(&u, 0.01, &p).unwrap();
        assert!((lt.l2_norm() - m0).abs() <= 1e-12 * m0);
        assert!((st.l2_norm() - m0).abs() <= 1e-12 * m0);
        let spec = forward_transform(&lt);
        for (idx, c) in spec.coeffs.iter().enumerate() {
            if crate::grid::outside_dealias_band(&g, idx) {
                assert!(c.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn strang_is_exact_on_plane_waves() {
        let g = Grid::new(1, 64, PI).unwrap();
        let p = params(0.2, 1.5);
        let c = 0.8;
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(c, 3.0 * x[0]));
        let t = 0.3;
        let out = strang_step(&u, t, &p).unwrap();
        let rot = -0.5 * p.eps * t * 9.0 - p.lambda * c * c * t / p.eps;
        let exact = u.scale(Complex64::from_polar(1.0, rot));
        assert!(out.sub(&exact).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn split_order_flag_changes_composition() {
        let g = Grid::new(1, 128, 2.0 * PI).unwrap();
        let mut p = params(0.125, 1.0);
        let u = wkb_gaussian(&g, p.eps);
        let yx = lie_trotter_step(&u, 0.05, &p).unwrap();
        p.split_order = SplitOrder::FreeAfterGauge;
        let xy = lie_trotter_step(&u, 0.05, &p).unwrap();
        let manual = dealias_field(&free_step(&gauge_step(&u, 0.05, &p).unwrap(), 0.05, &p).unwrap());
        assert!(xy.sub(&manual).unwrap().l2_norm() < 1e-10);
        assert!(xy.sub(&yx).unwrap().l2_norm() > 1e-6);
    }

    #[test]
    fn reference_identity_and_mass() {
        let g = Grid::new(1, 256, 2.0 * PI).unwrap();
        let p = params(0.125, 1.0);
        let u = wkb_gaussian(&g, p.eps);
        let r0 = reference_solve(&u, 0.0, &p, 8).unwrap();
        assert_eq!(r0.field.values, u.values);
        let r = reference_solve(&u, 0.5, &p, 64).unwrap();
        assert!(r.certificate < WAVE_CERTIFICATE_TOL);
        let m0 = dealias_field(&u).l2_norm().powi(2);
        let drift = (r.field.l2_norm().powi(2) - m0).abs() / m0;
        // dealiasing sheds a little mass each step
        assert!(drift <= 1e-10, "mass drift {drift:e}");
    }

    #[test]
    fn lie_trotter_local_order() {
        let g = Grid::new(1, 512, 2.0 * PI).unwrap();
        let p = params(1.0 / 16.0, 1.0);
        let u = wkb_gaussian(&g, p.eps);
        let dts: Vec<f64> = (4..=8).map(|k| 2f64.powi(-k)).collect();
        let mut lie = Vec::new();
        let mut strang = Vec::new();
        for &dt in &dts {
            let r = reference_solve(&u, dt, &p, 16).unwrap().field;
            lie.push(lie_trotter_step(&u, dt, &p).unwrap().sub(&r).unwrap().l2_norm());
            strang.push(strang_step(&u, dt, &p).unwrap().sub(&r).unwrap().l2_norm());
        }
        assert!(slope(&dts, &lie) >= 1.8, "lie {:?}", lie);
        assert!(slope(&dts, &strang) >= 2.8, "strang {:?}", strang);
    }
}
