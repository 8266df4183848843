//! Periodic grid on the torus `[-L, L)^d`, discrete Fourier transforms and
//! spectral calculus.
//!
//! Spectral coefficients approximate the continuous transform
//! `f^(k) = (2 pi)^{-d/2} \int e^{-i x.k} f(x) dx` by the rectangle rule, so that
//! the discrete Parseval identity reads `dx^d sum |f|^2 = dk^d sum |f^|^2`.
//! Coefficients are stored in FFT order along each axis: mode index `m` for
//! slot `j < N/2` and `m = j - N` otherwise, with wavenumber `k = pi m / L`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 16;

/// Fraction of the resolved band kept by [`dealias`].
pub const DEALIAS_FRACTION: f64 = 2.0 / 3.0;

pub struct Grid {
    dim: usize,
    points: usize,
    half_length: f64,
    modes: Vec<i64>,
    wavenumbers: Vec<f64>,
    forward_plan: Arc<dyn Fft<f64>>,
    inverse_plan: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("half_length", &self.half_length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && self.half_length.to_bits() == other.half_length.to_bits()
    }
}

impl Grid {
    pub fn new(dim: usize, points: usize, half_length: f64) -> Result<Arc<Grid>> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("dimension {dim} not in {{1, 2}}")));
        }
        if points < MIN_POINTS || !points.is_power_of_two() {
            return Err(Error::Config(format!(
                "points per axis must be a power of two >= {MIN_POINTS}, got {points}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::Config(format!("half length must be positive, got {half_length}")));
        }
        let n = points as i64;
        let modes: Vec<i64> = (0..n).map(|j| if j < n / 2 { j } else { j - n }).collect();
        let wavenumbers = modes.iter().map(|&m| PI * m as f64 / half_length).collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            dim,
            points,
            half_length,
            modes,
            wavenumbers,
            forward_plan: planner.plan_fft_forward(points),
            inverse_plan: planner.plan_fft_inverse(points),
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    pub fn dk(&self) -> f64 {
        PI / self.half_length
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn spectral_cell(&self) -> f64 {
        self.dk().powi(self.dim as i32)
    }

    /// Largest resolved wavenumber `pi N / (2 L)` (the Nyquist mode).
    pub fn nyquist(&self) -> f64 {
        PI * (self.points / 2) as f64 / self.half_length
    }

    pub fn dealias_cutoff(&self) -> f64 {
        DEALIAS_FRACTION * self.nyquist()
    }

    /// Per-axis wavenumbers in FFT order.
    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn axis_coordinate(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx()
    }

    /// Axis indices of a flat node / coefficient index (row-major).
    #[inline]
    pub fn split_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    pub fn coordinate(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.split_index(idx);
        match self.dim {
            1 => [self.axis_coordinate(i), 0.0],
            _ => [self.axis_coordinate(i), self.axis_coordinate(j)],
        }
    }

    /// Wavenumber vector of a flat coefficient index; unused components are zero.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.split_index(idx);
        match self.dim {
            1 => [self.wavenumbers[i], 0.0],
            _ => [self.wavenumbers[i], self.wavenumbers[j]],
        }
    }

    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.split_index(idx);
        match self.dim {
            1 => [self.modes[i], 0],
            _ => [self.modes[i], self.modes[j]],
        }
    }

    #[inline]
    pub fn wavenumber_norm(&self, idx: usize) -> f64 {
        let [k1, k2] = self.wavenumber(idx);
        (k1 * k1 + k2 * k2).sqrt()
    }

    /// True when some axis of this coefficient sits on the unpaired Nyquist mode.
    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = (self.points / 2) as i64;
        let m = self.mode(idx);
        m[..self.dim].iter().any(|&mi| mi == -half)
    }

    fn forward_scale(&self) -> f64 {
        (self.dx() / (2.0 * PI).sqrt()).powi(self.dim as i32)
    }

    fn inverse_scale(&self) -> f64 {
        (self.dk() / (2.0 * PI).sqrt()).powi(self.dim as i32)
    }

    /// `(-1)^(m1 + m2)`: the phase from the domain offset `x_0 = -L`.
    #[inline]
    fn offset_sign(&self, idx: usize) -> f64 {
        let m = self.mode(idx);
        if (m[0] + m[1]).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::Config(format!(
                "buffer of length {len} does not match grid with {} nodes",
                self.len()
            )));
        }
        Ok(())
    }

    fn raw_fft(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.points;
        if self.dim == 1 {
            plan.process(buf);
            return;
        }
        plan.process(buf);
        transpose_square(buf, n);
        plan.process(buf);
        transpose_square(buf, n);
    }

    /// Physical values to spectral coefficients.
    pub fn forward(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(values.len())?;
        let mut buf = values.to_vec();
        self.forward_in_place(&mut buf);
        Ok(buf)
    }

    pub(crate) fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.raw_fft(buf, &self.forward_plan);
        let scale = self.forward_scale();
        for (idx, c) in buf.iter_mut().enumerate() {
            *c *= scale * self.offset_sign(idx);
        }
    }

    /// Spectral coefficients to physical values.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(coeffs.len())?;
        let mut buf = coeffs.to_vec();
        self.inverse_in_place(&mut buf);
        Ok(buf)
    }

    pub(crate) fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let scale = self.inverse_scale();
        for (idx, c) in buf.iter_mut().enumerate() {
            *c *= scale * self.offset_sign(idx);
        }
        self.raw_fft(buf, &self.inverse_plan);
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Gridded complex function in physical space.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

/// Gridded real function in physical space.
#[derive(Debug, Clone)]
pub struct RealField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

/// Spectral coefficients of a field, in FFT order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub grid: Arc<Grid>,
    pub coeffs: Vec<Complex64>,
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        ComplexField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coordinate(i))).collect();
        ComplexField { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Discrete L^2 norm with cell-volume quadrature.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|c| c.norm_sqr()).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: Complex64) -> ComplexField {
        let values = self.values.iter().map(|&c| c * s).collect();
        ComplexField { grid: self.grid.clone(), values }
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ComplexField { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ComplexField { grid: self.grid.clone(), values })
    }

    /// Splits into real part, rejecting imaginary residue above `tol * max(1, max|re|)`.
    pub fn into_real(self, tol: f64) -> Result<RealField> {
        let scale = self.values.iter().map(|c| c.re.abs()).fold(1.0, f64::max);
        let residue = self.values.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if residue > tol * scale {
            return Err(Error::ComplexPhase(residue));
        }
        let values = self.values.iter().map(|c| c.re).collect();
        Ok(RealField { grid: self.grid, values })
    }
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(RealField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        RealField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coordinate(i))).collect();
        RealField { grid, values }
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(RealField { grid: self.grid.clone(), values })
    }
}

impl Spectrum {
    pub fn new(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        grid.check_len(coeffs.len())?;
        Ok(Spectrum { grid, coeffs })
    }

    /// Weighted l^2 norm `(dk^d sum |c|^2)^{1/2}`, equal to the physical L^2 norm.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (s * self.grid.spectral_cell()).sqrt()
    }

    pub fn to_field(&self) -> ComplexField {
        let mut values = self.coeffs.clone();
        self.grid.inverse_in_place(&mut values);
        ComplexField { grid: self.grid.clone(), values }
    }

    /// Multiplies every coefficient by `m(k)`.
    pub fn multiply(&self, m: impl Fn([f64; 2]) -> Complex64) -> Spectrum {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| c * m(self.grid.wavenumber(idx)))
            .collect();
        Spectrum { grid: self.grid.clone(), coeffs }
    }

    /// Spectral derivative along `axis` (`i k_axis`, Nyquist zeroed).
    pub fn derivative(&self, axis: usize) -> Spectrum {
        let grid = &self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                if grid.is_nyquist(idx) {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, grid.wavenumber(idx)[axis])
                }
            })
            .collect();
        Spectrum { grid: grid.clone(), coeffs }
    }

    /// Second derivative `d_i d_j` (multiplier `-k_i k_j`, Nyquist zeroed).
    pub fn second_derivative(&self, i: usize, j: usize) -> Spectrum {
        let grid = &self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                if grid.is_nyquist(idx) {
                    Complex64::new(0.0, 0.0)
                } else {
                    let k = grid.wavenumber(idx);
                    c * (-k[i] * k[j])
                }
            })
            .collect();
        Spectrum { grid: grid.clone(), coeffs }
    }

    pub fn laplacian(&self) -> Spectrum {
        let grid = &self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                if grid.is_nyquist(idx) {
                    Complex64::new(0.0, 0.0)
                } else {
                    let k = grid.wavenumber(idx);
                    c * -(k[0] * k[0] + k[1] * k[1])
                }
            })
            .collect();
        Spectrum { grid: grid.clone(), coeffs }
    }
}

pub fn forward_transform(f: &ComplexField) -> Spectrum {
    let mut coeffs = f.values.clone();
    f.grid.forward_in_place(&mut coeffs);
    Spectrum { grid: f.grid.clone(), coeffs }
}

pub fn inverse_transform(s: &Spectrum) -> ComplexField {
    s.to_field()
}

/// Physical gradient, one component per axis.
pub fn spectral_gradient(f: &ComplexField) -> Vec<ComplexField> {
    let spec = forward_transform(f);
    (0..f.grid.dim()).map(|axis| spec.derivative(axis).to_field()).collect()
}

pub fn spectral_laplacian(f: &ComplexField) -> ComplexField {
    forward_transform(f).laplacian().to_field()
}

/// True when a coefficient lies outside the 2/3 box `|m_j| <= N/3` on some axis.
#[inline]
pub(crate) fn outside_dealias_band(grid: &Grid, idx: usize) -> bool {
    let limit = (grid.points_per_axis() / 3) as i64;
    let m = grid.mode(idx);
    m[..grid.dim()].iter().any(|mi| mi.abs() > limit)
}

pub fn dealias_in_place(s: &mut Spectrum) {
    let grid = s.grid.clone();
    for (idx, c) in s.coeffs.iter_mut().enumerate() {
        if outside_dealias_band(&grid, idx) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Zeroes every coefficient with some `|k_j|` above the 2/3 cutoff.
pub fn dealias(s: &Spectrum) -> Spectrum {
    let mut out = s.clone();
    dealias_in_place(&mut out);
    out
}

/// Forward transform, dealias, inverse transform.
pub fn dealias_field(f: &ComplexField) -> ComplexField {
    let mut s = forward_transform(f);
    dealias_in_place(&mut s);
    s.to_field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Arc<Grid>, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(grid.clone(), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(3, 64, 1.0).is_err());
        assert!(Grid::new(1, 8, 1.0).is_err());
        assert!(Grid::new(1, 48, 1.0).is_err());
        assert!(Grid::new(1, 64, 0.0).is_err());
        assert!(Grid::new(2, 16, 1.0).is_ok());
    }

    #[test]
    fn lattice_is_symmetric_up_to_nyquist() {
        let g = Grid::new(1, 32, 2.0).unwrap();
        let k = g.axis_wavenumbers();
        let mut unpaired = 0;
        for &ki in k {
            if !k.iter().any(|&kj| (kj + ki).abs() < 1e-14) {
                unpaired += 1;
                assert!((ki.abs() - g.nyquist()).abs() < 1e-12);
            }
        }
        assert_eq!(unpaired, 1);
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = Grid::new(1, 64, 3.0).unwrap();
        let f = ComplexField::from_fn(g.clone(), |_| Complex64::new(2.0, -1.0));
        let s = forward_transform(&f);
        for (idx, c) in s.coeffs.iter().enumerate() {
            if idx == 0 {
                assert!(c.norm() > 1.0);
            } else {
                assert!(c.norm() < 1e-13, "mode {idx}: {c}");
            }
        }
    }

    #[test]
    fn pure_mode_is_single_coefficient() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 32, PI).unwrap();
            let f = ComplexField::from_fn(g.clone(), |x| Complex64::new(0.0, 3.0 * x[0]).exp());
            let s = forward_transform(&f);
            let big: Vec<usize> = (0..s.coeffs.len()).filter(|&i| s.coeffs[i].norm() > 1e-12).collect();
            assert_eq!(big.len(), 1);
            let k = g.wavenumber(big[0]);
            assert!((k[0] - 3.0).abs() < 1e-13 && k[1] == 0.0);
            let expected = (2.0 * PI / (2.0 * PI).sqrt()).powi(dim as i32);
            assert!((s.coeffs[big[0]].norm() - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 64, 5.0).unwrap();
            let f = random_field(&g, 7 + dim as u64);
            let s = forward_transform(&f);
            let back = s.to_field();
            let err = back.sub(&f).unwrap().l2_norm() / f.l2_norm();
            assert!(err <= 1e-13, "round trip {err:e}");
            let parseval = (s.l2_norm() - f.l2_norm()).abs() / f.l2_norm();
            assert!(parseval <= 1e-12, "parseval {parseval:e}");
        }
    }

    #[test]
    fn size_mismatch_is_config_error() {
        let g = Grid::new(1, 32, 1.0).unwrap();
        assert!(matches!(g.forward(&[Complex64::new(0.0, 0.0); 31]), Err(Error::Config(_))));
        assert!(ComplexField::new(g, vec![Complex64::new(0.0, 0.0); 33]).is_err());
    }

    #[test]
    fn gradient_of_sine_and_constant() {
        let g = Grid::new(1, 64, PI).unwrap();
        let f = ComplexField::from_fn(g.clone(), |x| Complex64::new(x[0].sin(), 0.0));
        let d = &spectral_gradient(&f)[0];
        for (i, v) in d.values.iter().enumerate() {
            let x = g.coordinate(i)[0];
            assert!((v - Complex64::new(x.cos(), 0.0)).norm() < 1e-12);
        }
        let c = ComplexField::from_fn(g.clone(), |_| Complex64::new(4.0, 1.0));
        assert!(spectral_gradient(&c)[0].max_abs() < 1e-12);
    }

    #[test]
    fn gradient_of_gaussian_matches_closed_form() {
        let g = Grid::new(1, 256, 10.0).unwrap();
        let f = ComplexField::from_fn(g.clone(), |x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let d = &spectral_gradient(&f)[0];
        let err = d
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = g.coordinate(i)[0];
                (v - Complex64::new(-2.0 * x * (-x * x).exp(), 0.0)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "max error {err:e}");
    }

    #[test]
    fn gradient_in_two_dimensions() {
        let g = Grid::new(2, 32, PI).unwrap();
        let f = ComplexField::from_fn(g.clone(), |x| Complex64::new((2.0 * x[0]).sin() * x[1].cos(), 0.0));
        let grad = spectral_gradient(&f);
        for i in 0..g.len() {
            let [x, y] = g.coordinate(i);
            assert!((grad[0].values[i].re - 2.0 * (2.0 * x).cos() * y.cos()).abs() < 1e-12);
            assert!((grad[1].values[i].re + (2.0 * x).sin() * y.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn dealias_contract() {
        let g = Grid::new(1, 64, PI).unwrap();
        let low = ComplexField::from_fn(g.clone(), |x| Complex64::new(0.0, 5.0 * x[0]).exp());
        let s = forward_transform(&low);
        let d = dealias(&s);
        let diff: f64 = s.coeffs.iter().zip(&d.coeffs).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff < 1e-12);

        let mut nyq = Spectrum::new(g.clone(), vec![Complex64::new(0.0, 0.0); g.len()]).unwrap();
        let idx = g.points_per_axis() / 2;
        nyq.coeffs[idx] = Complex64::new(1.0, 0.0);
        assert!(dealias(&nyq).coeffs.iter().all(|c| c.norm() == 0.0));

        let f = random_field(&g, 3);
        let once = dealias(&forward_transform(&f));
        let twice = dealias(&once);
        assert_eq!(once.coeffs, twice.coeffs);
    }

    #[test]
    fn gradient_commutes_with_transforms() {
        let g = Grid::new(1, 64, 4.0).unwrap();
        let f = random_field(&g, 11);
        let band = dealias(&forward_transform(&f)).to_field();
        let via_spectrum = forward_transform(&band).derivative(0).to_field();
        let again = forward_transform(&via_spectrum).to_field();
        let direct = &spectral_gradient(&band)[0];
        assert!(again.sub(direct).unwrap().l2_norm() <= 1e-12 * direct.l2_norm());
    }
}
