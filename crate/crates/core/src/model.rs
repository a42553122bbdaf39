//! Scenario description, array steering vectors and the multipath user channels.
//!
//! Angles are carried in sine space (`sin` of the physical angle) everywhere
//! inside the library; degrees only appear in [`Scenario`] fields that mirror
//! the configuration file. Powers are linear milliwatts.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// A closed interval of physical angles, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBand {
    pub lower_deg: f64,
    pub upper_deg: f64,
}

impl AngleBand {
    pub fn new(lower_deg: f64, upper_deg: f64) -> Self {
        Self {
            lower_deg,
            upper_deg,
        }
    }

    /// Width of the band in sine space.
    pub fn sine_width(&self) -> f64 {
        self.upper_deg.to_radians().sin() - self.lower_deg.to_radians().sin()
    }

    /// Whether a sine-space point falls inside the band (boundaries included).
    pub fn contains_sine(&self, s: f64) -> bool {
        const SLACK: f64 = 1e-12;
        let lo = self.lower_deg.to_radians().sin();
        let hi = self.upper_deg.to_radians().sin();
        s >= lo - SLACK && s <= hi + SLACK
    }
}

/// Full configuration of one design experiment, in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_bs: usize,
    pub n_c: usize,
    /// Dedicated radar RF chains.
    pub n_t: usize,
    /// Total transmit power, mW.
    pub p_t: f64,
    /// Noise power at each user, mW.
    pub noise_power: f64,
    pub sinr_thresholds: Vec<f64>,
    pub grid_size: usize,
    pub objective_bands: Vec<AngleBand>,
    /// Diagonal of the pattern weighting matrix, one entry per grid point.
    pub weight_diag: Vec<f64>,
    pub user_angles_deg: Vec<f64>,
    pub nlos_paths_per_user: usize,
    pub nlos_gain_variance: f64,
    pub rng_seed: u64,
}

impl Scenario {
    /// Total number of RF chains.
    pub fn n_rf(&self) -> usize {
        self.n_c + self.n_t
    }

    /// 128 antennas, three users at -70/-40/-10 degrees with 30 dB SINR
    /// targets, 20 dBm transmit power, 0 dBm noise, 400 grid points and two
    /// objective bands at [10, 30] and [40, 60] degrees.
    pub fn baseline() -> Self {
        let grid_size = 400;
        Self {
            n_bs: 128,
            n_c: 3,
            n_t: 0,
            p_t: dbm_to_mw(20.0),
            noise_power: dbm_to_mw(0.0),
            sinr_thresholds: vec![db_to_linear(30.0); 3],
            grid_size,
            objective_bands: vec![AngleBand::new(10.0, 30.0), AngleBand::new(40.0, 60.0)],
            weight_diag: vec![1.0; grid_size],
            user_angles_deg: vec![-70.0, -40.0, -10.0],
            nlos_paths_per_user: 2,
            nlos_gain_variance: 0.01,
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        if self.n_bs == 0 {
            return Err(Error::config("n_bs", "antenna count must be positive"));
        }
        if self.n_c == 0 {
            return Err(Error::config("user_angles_deg", "at least one user is required"));
        }
        positive("p_t", self.p_t)?;
        positive("noise_power", self.noise_power)?;
        if self.sinr_thresholds.len() != self.n_c {
            return Err(Error::config(
                "sinr_db",
                format!(
                    "expected {} thresholds (one per user), got {}",
                    self.n_c,
                    self.sinr_thresholds.len()
                ),
            ));
        }
        for &g in &self.sinr_thresholds {
            positive("sinr_db", g)?;
        }
        if self.user_angles_deg.len() != self.n_c {
            return Err(Error::config("user_angles_deg", "one angle per user is required"));
        }
        if let Some(a) = self
            .user_angles_deg
            .iter()
            .find(|a| !a.is_finite() || a.abs() > 90.0)
        {
            return Err(Error::config(
                "user_angles_deg",
                format!("angle {a} outside [-90, 90]"),
            ));
        }
        if self.grid_size < 2 {
            return Err(Error::config("grid_size", "at least two grid points are required"));
        }
        if self.objective_bands.is_empty() {
            return Err(Error::config("objective_bands_deg", "at least one band is required"));
        }
        for band in &self.objective_bands {
            let ok = band.lower_deg.is_finite()
                && band.upper_deg.is_finite()
                && band.lower_deg > -90.0
                && band.upper_deg <= 90.0
                && band.lower_deg < band.upper_deg;
            if !ok {
                return Err(Error::config(
                    "objective_bands_deg",
                    format!(
                        "band [{}, {}] must satisfy -90 < lower < upper <= 90",
                        band.lower_deg, band.upper_deg
                    ),
                ));
            }
        }
        if self.weight_diag.len() != self.grid_size {
            return Err(Error::config(
                "weights",
                format!(
                    "expected {} weights, got {}",
                    self.grid_size,
                    self.weight_diag.len()
                ),
            ));
        }
        if self.weight_diag.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("weights", "weights must be finite and nonnegative"));
        }
        if !(self.nlos_gain_variance.is_finite() && self.nlos_gain_variance >= 0.0) {
            return Err(Error::config("nlos_gain_variance", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Uniform linear array response toward sine-space direction `theta`:
/// entry `k` is `exp(j*pi*k*theta) / sqrt(n)`.
pub fn steering_vector(n: usize, theta: f64) -> Result<DVector<C64>> {
    if n == 0 {
        return Err(Error::invalid("steering vector needs at least one antenna"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(DVector::from_fn(n, |k, _| {
        C64::from_polar(scale, std::f64::consts::PI * k as f64 * theta)
    }))
}

/// One propagation path of a user channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    /// Angle of departure in sine space.
    pub aod: f64,
}

/// Stacked user channels. Row `n` of `h` is the row vector of user `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: DMatrix<C64>,
    pub paths: Vec<Vec<Path>>,
}

impl ChannelSet {
    /// Assemble `h_n = sqrt(N/L) * sum_l g_l * a(N, theta_l)^H` for every user.
    pub fn from_paths(n_bs: usize, paths: Vec<Vec<Path>>) -> Result<Self> {
        if n_bs == 0 {
            return Err(Error::invalid("channel needs at least one antenna"));
        }
        let mut h = DMatrix::zeros(paths.len(), n_bs);
        for (n, user) in paths.iter().enumerate() {
            if user.is_empty() {
                return Err(Error::invalid(format!("user {n} has no paths")));
            }
            let scale = (n_bs as f64 / user.len() as f64).sqrt();
            for path in user {
                let a = steering_vector(n_bs, path.aod)?;
                for k in 0..n_bs {
                    h[(n, k)] += path.gain * a[k].conj() * scale;
                }
            }
        }
        Ok(Self { h, paths })
    }

    pub fn n_users(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_bs(&self) -> usize {
        self.h.ncols()
    }
}

/// Circularly symmetric complex normal sample with total variance `variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Draw one channel realization: a unit-variance line-of-sight path toward
/// each user angle plus `nlos_paths_per_user` weak paths at uniform sine-space
/// directions.
pub fn generate_channels<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelSet {
    let paths: Vec<Vec<Path>> = scenario
        .user_angles_deg
        .iter()
        .map(|angle| {
            let mut user = Vec::with_capacity(1 + scenario.nlos_paths_per_user);
            user.push(Path {
                gain: complex_normal(rng, 1.0),
                aod: angle.to_radians().sin(),
            });
            for _ in 0..scenario.nlos_paths_per_user {
                let gain = complex_normal(rng, scenario.nlos_gain_variance);
                let aod = rng.random_range(-1.0..=1.0);
                user.push(Path { gain, aod });
            }
            user
        })
        .collect();
    ChannelSet::from_paths(scenario.n_bs, paths).expect("validated scenario")
}

/// Independent random streams used by the pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStage {
    Channels = 0,
    PhaseInit = 1,
    AnalogInit = 2,
}

/// Seeded generator for one pipeline stage. Each stage gets its own stream so
/// changing one stage's consumption never perturbs another's draws.
pub fn stage_rng(seed: u64, stage: RngStage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

/// Uniform random phases, `exp(j*u)` with `u ~ U[0, 2*pi)`.
pub fn random_unit_modulus<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<C64> {
    (0..len)
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn steering_vector_small_cases() {
        let a = steering_vector(2, 0.0).unwrap();
        let r = 1.0 / 2f64.sqrt();
        for z in a.iter() {
            assert_abs_diff_eq!(z.re, r, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        let a = steering_vector(4, 1.0).unwrap();
        for (k, z) in a.iter().enumerate() {
            let expect = if k % 2 == 0 { 0.5 } else { -0.5 };
            assert_abs_diff_eq!(z.re, expect, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        // exp(j*pi*2*0.5) / sqrt(8) = -1/sqrt(8)
        let a = steering_vector(8, 0.5).unwrap();
        assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[2].re, -1.0 / 8f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a[2].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn steering_vector_rejects_empty_array() {
        assert!(matches!(
            steering_vector(0, 0.3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_broadside_path_is_all_ones() {
        let ch = ChannelSet::from_paths(
            16,
            vec![vec![Path {
                gain: C64::new(1.0, 0.0),
                aod: 0.0,
            }]],
        )
        .unwrap();
        for z in ch.h.row(0).iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let sc = Scenario::baseline();
        let a = generate_channels(&sc, &mut stage_rng(11, RngStage::Channels));
        let b = generate_channels(&sc, &mut stage_rng(11, RngStage::Channels));
        let c = generate_channels(&sc, &mut stage_rng(12, RngStage::Channels));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stage_streams_differ() {
        let a: u64 = stage_rng(5, RngStage::Channels).random();
        let b: u64 = stage_rng(5, RngStage::PhaseInit).random();
        assert_ne!(a, b);
    }

    #[test]
    fn baseline_is_valid() {
        let sc = Scenario::baseline();
        sc.validate().unwrap();
        assert_eq!(sc.n_rf(), 3);
        assert_abs_diff_eq!(sc.p_t, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sc.noise_power, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn validation_names_the_field() {
        let mut sc = Scenario::baseline();
        sc.sinr_thresholds = vec![10.0; 2];
        match sc.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "sinr_db"),
            other => panic!("unexpected {other:?}"),
        }
        let mut sc = Scenario::baseline();
        sc.objective_bands = vec![AngleBand::new(10.0, 10.0)];
        assert!(sc.validate().is_err());
        let mut sc = Scenario::baseline();
        sc.noise_power = 0.0;
        assert!(sc.validate().is_err());
        let mut sc = Scenario::baseline();
        sc.grid_size = 1;
        sc.weight_diag = vec![1.0];
        assert!(sc.validate().is_err());
    }

    #[test]
    fn unit_conversions() {
        assert_abs_diff_eq!(dbm_to_mw(20.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dbm_to_mw(0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(linear_to_db(1000.0), 30.0, epsilon = 1e-12);
    }

    #[test]
    fn band_membership_is_inclusive() {
        let band = AngleBand::new(10.0, 30.0);
        assert!(band.contains_sine(0.5));
        assert!(band.contains_sine(10f64.to_radians().sin()));
        assert!(!band.contains_sine(0.0));
        assert!(!band.contains_sine(0.51));
    }
}
