//! Angle grid, sampling matrix, objective radar pattern and pattern metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{steering_vector, Scenario, C64};

/// Everything needed to score a transmit beam against the radar objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    /// Sampling matrix, `M x N_BS`. Row `m` is `a(N_BS, grid[m])^H`, so
    /// `(phi * f)[m]` is the response a receiver at `grid[m]` sees.
    pub phi: DMatrix<C64>,
    /// Objective pattern magnitudes.
    pub b: DVector<f64>,
    /// Diagonal of the weighting matrix.
    pub d_diag: DVector<f64>,
    /// Diagonal of the gain matrix used with the phase vector; equals `b`.
    pub a_diag: DVector<f64>,
    /// Sine-space sample points, strictly increasing.
    pub grid: Vec<f64>,
}

impl PatternSpec {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let grid = build_grid(scenario.grid_size)?;
        let b = build_objective(scenario, &grid)?;
        if scenario.weight_diag.len() != grid.len() {
            return Err(Error::invalid("weight vector length differs from grid size"));
        }
        Self::from_parts(
            sampling_matrix(scenario.n_bs, &grid)?,
            DVector::from_vec(b),
            DVector::from_column_slice(&scenario.weight_diag),
            grid,
        )
    }

    /// Build from explicit pieces, checking shapes and signs.
    pub fn from_parts(
        phi: DMatrix<C64>,
        b: DVector<f64>,
        d_diag: DVector<f64>,
        grid: Vec<f64>,
    ) -> Result<Self> {
        let m = phi.nrows();
        if b.len() != m || d_diag.len() != m || grid.len() != m {
            return Err(Error::invalid(format!(
                "pattern pieces disagree on grid size: phi {m}, b {}, d {}, grid {}",
                b.len(),
                d_diag.len(),
                grid.len()
            )));
        }
        if b.iter().chain(d_diag.iter()).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("objective and weights must be nonnegative"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        Ok(Self {
            phi,
            a_diag: b.clone(),
            b,
            d_diag,
            grid,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }

    pub fn n_bs(&self) -> usize {
        self.phi.ncols()
    }

    /// Grid points in physical degrees.
    pub fn grid_deg(&self) -> Vec<f64> {
        self.grid.iter().map(|s| s.asin().to_degrees()).collect()
    }

    /// Indices where the objective is nonzero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.b.len()).filter(|&m| self.b[m] > 0.0).collect()
    }
}

/// `m` equally spaced sine-space points covering `(-1, 1]`.
pub fn build_grid(m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::invalid(format!("grid needs at least 2 points, got {m}")));
    }
    let step = 2.0 / m as f64;
    Ok((1..=m).map(|i| -1.0 + step * i as f64).collect())
}

/// Sampling matrix whose row `m` is `sqrt(N_BS)` times the conjugate-transposed
/// steering vector at `grid[m]`, so a unit-norm beam steered at a grid point
/// shows the full array gain `sqrt(N_BS)` there. This is the scale on which
/// the flat-top objective carries the transmit power.
pub fn sampling_matrix(n_bs: usize, grid: &[f64]) -> Result<DMatrix<C64>> {
    let mut phi = DMatrix::zeros(grid.len(), n_bs);
    let gain = (n_bs as f64).sqrt();
    for (m, &s) in grid.iter().enumerate() {
        let a = steering_vector(n_bs, s)?;
        for k in 0..n_bs {
            phi[(m, k)] = a[k].conj() * gain;
        }
    }
    Ok(phi)
}

/// Flat-top objective: gain `G` inside any band, zero elsewhere, with
/// `G = sqrt(2 * N_RF * P_T / sum(sin(upper) - sin(lower)))` so the pattern
/// carries the full transmit power when integrated over sine space.
pub fn build_objective(scenario: &Scenario, grid: &[f64]) -> Result<Vec<f64>> {
    if scenario.objective_bands.is_empty() {
        return Err(Error::invalid("objective needs at least one band"));
    }
    let mut measure = 0.0;
    for band in &scenario.objective_bands {
        if band.lower_deg <= -90.0 || band.upper_deg > 90.0 {
            return Err(Error::invalid(format!(
                "band [{}, {}] leaves (-90, 90]",
                band.lower_deg, band.upper_deg
            )));
        }
        let w = band.sine_width();
        if !(w > 0.0) {
            return Err(Error::invalid(format!(
                "band [{}, {}] has zero measure",
                band.lower_deg, band.upper_deg
            )));
        }
        measure += w;
    }
    let gain = (2.0 * scenario.n_rf() as f64 * scenario.p_t / measure).sqrt();
    Ok(grid
        .iter()
        .map(|&s| {
            if scenario.objective_bands.iter().any(|b| b.contains_sine(s)) {
                gain
            } else {
                0.0
            }
        })
        .collect())
}

/// Elementwise magnitude of `phi * f_sum`.
pub fn beam_pattern(phi: &DMatrix<C64>, f_sum: &DVector<C64>) -> Result<DVector<f64>> {
    if phi.ncols() != f_sum.len() {
        return Err(Error::invalid(format!(
            "sampling matrix has {} columns but beam has {} entries",
            phi.ncols(),
            f_sum.len()
        )));
    }
    Ok((phi * f_sum).map(|z| z.norm()))
}

/// Sum of the columns of a beamformer matrix (the transmitted beam).
pub fn beam_sum(beams: &DMatrix<C64>) -> DVector<C64> {
    DVector::from_fn(beams.nrows(), |k, _| beams.row(k).sum())
}

/// Normalized pattern error `|| |phi * sum_i f_i| - b ||^2 / (N_RF * P_T)`,
/// with `N_RF` taken as the number of columns of `beams`.
pub fn pattern_mse(
    phi: &DMatrix<C64>,
    beams: &DMatrix<C64>,
    b: &DVector<f64>,
    p_t: f64,
) -> Result<f64> {
    if phi.nrows() != b.len() {
        return Err(Error::invalid("objective length differs from grid size"));
    }
    if beams.ncols() == 0 {
        return Err(Error::invalid("no beamformers given"));
    }
    if !(p_t > 0.0) {
        return Err(Error::invalid("transmit power must be positive"));
    }
    let pattern = beam_pattern(phi, &beam_sum(beams))?;
    let err = (pattern - b).norm_squared();
    Ok(err / (beams.ncols() as f64 * p_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AngleBand;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn grid_of_four() {
        assert_eq!(build_grid(4).unwrap(), vec![-0.5, 0.0, 0.5, 1.0]);
        assert!(build_grid(1).is_err());
    }

    #[test]
    fn grid_of_four_hundred() {
        let g = build_grid(400).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(*g.last().unwrap(), 1.0);
        for w in g.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 2.0 / 400.0, epsilon = 1e-12);
        }
        assert!(g.iter().all(|&s| s > -1.0 && s <= 1.0));
    }

    #[test]
    fn objective_gain_for_the_two_band_setup() {
        let mut sc = Scenario::baseline();
        sc.p_t = 100.0;
        let grid = build_grid(400).unwrap();
        let b = build_objective(&sc, &grid).unwrap();
        let denom = 30f64.to_radians().sin() - 10f64.to_radians().sin()
            + 60f64.to_radians().sin()
            - 40f64.to_radians().sin();
        assert_abs_diff_eq!(denom, 0.54959, epsilon = 1e-5);
        let g = b.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(g, 33.04, epsilon = 5e-3);
        // 0 degrees sits outside both bands
        let zero = grid.iter().position(|&s| s == 0.0).unwrap();
        assert_eq!(b[zero], 0.0);
    }

    #[test]
    fn objective_covering_everything_has_unit_gain() {
        let mut sc = Scenario::baseline();
        sc.n_c = 1;
        sc.p_t = 1.0;
        sc.objective_bands = vec![AngleBand::new(-90.0 + 1e-12, 90.0)];
        let grid = build_grid(10).unwrap();
        let b = build_objective(&sc, &grid).unwrap();
        for v in b {
            assert_relative_eq!(v, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn objective_rejects_bad_bands() {
        let grid = build_grid(10).unwrap();
        let mut sc = Scenario::baseline();
        sc.objective_bands.clear();
        assert!(build_objective(&sc, &grid).is_err());
        sc.objective_bands = vec![AngleBand::new(20.0, 20.0)];
        assert!(build_objective(&sc, &grid).is_err());
    }

    #[test]
    fn objective_integrates_to_total_power() {
        let mut sc = Scenario::baseline();
        sc.grid_size = 4000;
        let grid = build_grid(sc.grid_size).unwrap();
        let b = build_objective(&sc, &grid).unwrap();
        let spacing = 2.0 / sc.grid_size as f64;
        let integral: f64 = b.iter().map(|v| v * v * spacing).sum();
        let target = 2.0 * sc.n_rf() as f64 * sc.p_t;
        assert_relative_eq!(integral, target, max_relative = 0.01);
    }

    #[test]
    fn matched_beam_peaks_at_its_grid_point() {
        let n = 16;
        let grid = build_grid(32).unwrap();
        let phi = sampling_matrix(n, &grid).unwrap();
        let k = 21;
        let f = steering_vector(n, grid[k]).unwrap();
        let p = beam_pattern(&phi, &f).unwrap();
        assert_abs_diff_eq!(p[k], (n as f64).sqrt(), epsilon = 1e-12);
        assert!(p.iter().all(|&v| v <= (n as f64).sqrt() + 1e-12));
    }

    #[test]
    fn zero_beam_and_phase_rotation() {
        let grid = build_grid(20).unwrap();
        let phi = sampling_matrix(8, &grid).unwrap();
        let zero = DVector::zeros(8);
        assert!(beam_pattern(&phi, &zero).unwrap().iter().all(|&v| v == 0.0));
        let f = DVector::from_fn(8, |k, _| C64::new(k as f64 * 0.3 - 1.0, 0.7 - 0.1 * k as f64));
        let rot = &f * C64::from_polar(1.0, 1.234);
        let a = beam_pattern(&phi, &f).unwrap();
        let b = beam_pattern(&phi, &rot).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(beam_pattern(&phi, &DVector::zeros(7)).is_err());
    }

    #[test]
    fn mse_of_zero_design_is_objective_energy() {
        let sc = Scenario::baseline();
        let pat = PatternSpec::new(&sc).unwrap();
        let beams = DMatrix::zeros(sc.n_bs, sc.n_rf());
        let mse = pattern_mse(&pat.phi, &beams, &pat.b, sc.p_t).unwrap();
        let direct: f64 = pat.b.iter().map(|v| v * v).sum::<f64>() / (3.0 * sc.p_t);
        assert_relative_eq!(mse, direct, max_relative = 1e-12);
        let halved = pattern_mse(&pat.phi, &beams, &pat.b, 2.0 * sc.p_t).unwrap();
        assert_relative_eq!(halved, mse / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn mse_is_zero_for_an_exact_match() {
        let grid = build_grid(12).unwrap();
        let phi = sampling_matrix(6, &grid).unwrap();
        let beams = DMatrix::from_fn(6, 2, |r, c| C64::new((r + c) as f64 * 0.1, 0.2));
        let b = beam_pattern(&phi, &beam_sum(&beams)).unwrap();
        assert_abs_diff_eq!(pattern_mse(&phi, &beams, &b, 1.0).unwrap(), 0.0, epsilon = 1e-24);
    }

    #[test]
    fn rows_are_scaled_conjugate_steering_vectors() {
        let sc = Scenario::baseline();
        let pat = PatternSpec::new(&sc).unwrap();
        assert_eq!(pat.a_diag, pat.b);
        let a = steering_vector(sc.n_bs, pat.grid[17]).unwrap();
        for k in 0..sc.n_bs {
            let expect = a[k].conj() * (sc.n_bs as f64).sqrt();
            assert_abs_diff_eq!((pat.phi[(17, k)] - expect).norm(), 0.0, epsilon = 1e-13);
        }
    }
}
