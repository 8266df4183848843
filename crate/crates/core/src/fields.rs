//! WKB states, wave assembly `u = a e^{i phi / eps}` and quadratic observables.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{same_grid, spectral_gradient, ComplexField, Grid, RealField};

/// Imaginary residue tolerated when a spectral computation produces a phase.
pub const PHASE_IMAG_TOL: f64 = 1e-12;

/// Phase/amplitude pair at one instant.
#[derive(Debug, Clone)]
pub struct WkbState {
    pub phase: RealField,
    pub amplitude: ComplexField,
    pub time: f64,
}

impl WkbState {
    pub fn new(phase: RealField, amplitude: ComplexField, time: f64) -> Result<Self> {
        same_grid(&phase.grid, &amplitude.grid)?;
        if !(time >= 0.0) {
            return Err(Error::Parameter(format!("state time {time} must be nonnegative")));
        }
        Ok(WkbState { phase, amplitude, time })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        WkbState {
            phase: RealField::zeros(grid.clone()),
            amplitude: ComplexField::zeros(grid),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.phase.grid
    }

    /// Componentwise difference `self - other` (time of `self`).
    pub fn difference(&self, other: &WkbState) -> Result<WkbState> {
        Ok(WkbState {
            phase: self.phase.sub(&other.phase)?,
            amplitude: self.amplitude.sub(&other.amplitude)?,
            time: self.time,
        })
    }

    /// `self + h * dir`.
    pub fn axpy(&self, h: f64, dir: &WkbState) -> Result<WkbState> {
        same_grid(self.grid(), dir.grid())?;
        let phase = self.phase.values.iter().zip(&dir.phase.values).map(|(a, b)| a + h * b).collect();
        let amplitude = self
            .amplitude
            .values
            .iter()
            .zip(&dir.amplitude.values)
            .map(|(a, b)| a + h * b)
            .collect();
        Ok(WkbState {
            phase: RealField { grid: self.grid().clone(), values: phase },
            amplitude: ComplexField { grid: self.grid().clone(), values: amplitude },
            time: self.time,
        })
    }

    pub fn scaled(&self, s: f64) -> WkbState {
        WkbState {
            phase: RealField {
                grid: self.grid().clone(),
                values: self.phase.values.iter().map(|v| v * s).collect(),
            },
            amplitude: self.amplitude.scale(Complex64::new(s, 0.0)),
            time: self.time,
        }
    }

    /// `sqrt(|phi|_2^2 + |a|_2^2)`.
    pub fn l2_norm(&self) -> f64 {
        self.phase.l2_norm().hypot(self.amplitude.l2_norm())
    }
}

/// Position and current densities of a wave function.
#[derive(Debug, Clone)]
pub struct Observables {
    pub position_density: RealField,
    pub current_density: Vec<RealField>,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Parameter(format!("semiclassical parameter must be positive, got {eps}")));
    }
    Ok(())
}

pub fn assemble_wave(s: &WkbState, eps: f64) -> Result<ComplexField> {
    check_eps(eps)?;
    let values = s
        .phase
        .values
        .iter()
        .zip(&s.amplitude.values)
        .map(|(&phi, &a)| a * Complex64::from_polar(1.0, phi / eps))
        .collect();
    Ok(ComplexField { grid: s.grid().clone(), values })
}

/// `rho = |u|^2`, `J = eps Im(conj(u) grad u)` with the spectral gradient.
pub fn observables(u: &ComplexField, eps: f64) -> Result<Observables> {
    check_eps(eps)?;
    let grid = u.grid.clone();
    let position_density = RealField {
        grid: grid.clone(),
        values: u.values.iter().map(|c| c.norm_sqr()).collect(),
    };
    let current_density = spectral_gradient(u)
        .into_iter()
        .map(|du| RealField {
            grid: grid.clone(),
            values: u.values.iter().zip(&du.values).map(|(v, d)| eps * (v.conj() * d).im).collect(),
        })
        .collect();
    Ok(Observables { position_density, current_density })
}

pub fn l2_distance(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    Ok(u.sub(v)?.l2_norm())
}

/// `(L^1, L^infinity)` distance between densities.
pub fn density_distance(a: &Observables, b: &Observables) -> Result<(f64, f64)> {
    same_grid(&a.position_density.grid, &b.position_density.grid)?;
    let pointwise: Vec<f64> = a
        .position_density
        .values
        .iter()
        .zip(&b.position_density.values)
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(l1_linf(&pointwise, a.position_density.grid.cell_volume()))
}

/// `(L^1, L^infinity)` distance between currents, pointwise euclidean magnitude.
pub fn current_distance(a: &Observables, b: &Observables) -> Result<(f64, f64)> {
    same_grid(&a.position_density.grid, &b.position_density.grid)?;
    let n = a.position_density.values.len();
    let pointwise: Vec<f64> = (0..n)
        .map(|i| {
            a.current_density
                .iter()
                .zip(&b.current_density)
                .map(|(ja, jb)| (ja.values[i] - jb.values[i]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(l1_linf(&pointwise, a.position_density.grid.cell_volume()))
}

fn l1_linf(pointwise: &[f64], cell: f64) -> (f64, f64) {
    let l1 = pointwise.iter().sum::<f64>() * cell;
    let linf = pointwise.iter().cloned().fold(0.0, f64::max);
    (l1, linf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<Grid> {
        Grid::new(1, 128, PI).unwrap()
    }

    fn gaussian_state(g: &Arc<Grid>) -> WkbState {
        let phase = RealField::from_fn(g.clone(), |x| 0.3 * (-x[0] * x[0]).exp() + 0.1 * x[0].sin());
        let amplitude = ComplexField::from_fn(g.clone(), |x| {
            Complex64::new((-x[0] * x[0]).exp(), 0.2 * (-(x[0] - 0.5).powi(2)).exp())
        });
        WkbState::new(phase, amplitude, 0.0).unwrap()
    }

    #[test]
    fn zero_phase_wave_is_amplitude() {
        let g = grid();
        let mut s = gaussian_state(&g);
        s.phase = RealField::zeros(g);
        let u = assemble_wave(&s, 0.1).unwrap();
        assert_eq!(u.values, s.amplitude.values);
    }

    #[test]
    fn linear_phase_gives_plane_wave() {
        let g = grid();
        let eps = 1.0 / 16.0;
        let phase = RealField::from_fn(g.clone(), |x| 3.0 * x[0] * eps);
        let amplitude = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
        let s = WkbState::new(phase, amplitude, 0.0).unwrap();
        let u = assemble_wave(&s, eps).unwrap();
        for (i, v) in u.values.iter().enumerate() {
            let x = g.coordinate(i)[0];
            assert!((v - Complex64::new(0.0, 3.0 * x).exp()).norm() < 1e-13);
        }
    }

    #[test]
    fn modulus_identity_and_bad_eps() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phase = RealField::from_fn(g.clone(), |_| rng.gen_range(-3.0..3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let amplitude =
            ComplexField::from_fn(g.clone(), |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let s = WkbState::new(phase, amplitude, 0.0).unwrap();
        let u = assemble_wave(&s, 0.01).unwrap();
        for (v, a) in u.values.iter().zip(&s.amplitude.values) {
            assert!((v.norm() - a.norm()).abs() < 1e-13);
        }
        assert!(matches!(assemble_wave(&s, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(assemble_wave(&s, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn plane_wave_observables() {
        let g = grid();
        let eps = 0.2;
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new(0.0, 4.0 * x[0]).exp());
        let obs = observables(&u, eps).unwrap();
        assert!(obs.position_density.values.iter().all(|r| (r - 1.0).abs() < 1e-13));
        assert!(obs.current_density[0].values.iter().all(|j| (j - eps * 4.0).abs() < 1e-12));
    }

    #[test]
    fn real_wave_has_no_current() {
        let g = grid();
        let u = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp() * (1.0 + x[0]), 0.0));
        let obs = observables(&u, 0.5).unwrap();
        assert!(obs.current_density[0].values.iter().all(|j| j.abs() < 1e-12));
    }

    #[test]
    fn current_matches_hydrodynamic_expansion() {
        let g = Grid::new(1, 512, 2.0 * PI).unwrap();
        let eps = 1.0 / 16.0;
        let s = gaussian_state(&g);
        let u = assemble_wave(&s, eps).unwrap();
        let obs = observables(&u, eps).unwrap();
        // |a|^2 grad phi + eps Im(conj(a) grad a), with the closed-form derivatives
        for i in 0..g.len() {
            let x = g.coordinate(i)[0];
            let e = (-x * x).exp();
            let dphi = -0.6 * x * e + 0.1 * x.cos();
            let a = s.amplitude.values[i];
            let da = Complex64::new(-2.0 * x * e, -0.4 * (x - 0.5) * (-(x - 0.5).powi(2)).exp());
            let expected = a.norm_sqr() * dphi + eps * (a.conj() * da).im;
            assert!((obs.current_density[0].values[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_and_gauge_covariance() {
        let g = grid();
        let s = gaussian_state(&g);
        let u = assemble_wave(&s, 0.1).unwrap();
        let obs = observables(&u, 0.1).unwrap();
        let mass: f64 = obs.position_density.values.iter().sum::<f64>() * g.cell_volume();
        assert!((mass - u.l2_norm().powi(2)).abs() <= 1e-12 * mass);
        assert!(obs.position_density.values.iter().all(|&r| r >= -1e-13));

        let rotated = u.scale(Complex64::from_polar(1.0, 0.7));
        let obs2 = observables(&rotated, 0.1).unwrap();
        let (d1, dinf) = density_distance(&obs, &obs2).unwrap();
        let (j1, jinf) = current_distance(&obs, &obs2).unwrap();
        assert!(d1 < 1e-13 && dinf < 1e-13 && j1 < 1e-13 && jinf < 1e-13);
    }

    #[test]
    fn l2_distance_properties() {
        let g = grid();
        let u = ComplexField::from_fn(g.clone(), |x| Complex64::new(0.0, 2.0 * x[0]).exp());
        assert_eq!(l2_distance(&u, &u).unwrap(), 0.0);
        let zero = ComplexField::zeros(g.clone());
        assert!((l2_distance(&u, &zero).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-13);

        let other = Grid::new(1, 64, PI).unwrap();
        assert!(matches!(l2_distance(&u, &ComplexField::zeros(other)), Err(Error::GridMismatch)));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let mut f = || {
                ComplexField::from_fn(g.clone(), |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            };
            let (a, b, c) = (f(), f(), f());
            let ab = l2_distance(&a, &b).unwrap();
            let bc = l2_distance(&b, &c).unwrap();
            let ac = l2_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-14);
        }
    }
}
