//! Achieved SINR, beam patterns in dBi and pattern MSE for a design and its
//! hybrid factorization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::altmin::BeamDesign;
use crate::error::{Error, Result};
use crate::factorize::HybridFactors;
use crate::model::{ChannelSet, Scenario, C64};
use crate::pattern::{beam_pattern, beam_sum, pattern_mse, PatternSpec};

/// Floor used when a zero value is converted to decibels.
pub const DB_FLOOR: f64 = -120.0;

/// Relative slack on SINR targets when flagging feasibility.
pub const SINR_SLACK: f64 = 1e-6;

/// `10 log10(x)`, floored.
pub fn power_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// `20 log10(magnitude / sqrt(n_rf p_t))`, floored.
pub fn pattern_dbi(magnitude: f64, n_rf: usize, p_t: f64) -> f64 {
    power_db(magnitude * magnitude / (n_rf as f64 * p_t))
}

/// Linear SINR of each user row of `h` (`N_c x N_BS`) when beam `n` serves
/// user `n` and every other column interferes.
pub fn sinr(h: &DMatrix<C64>, beams: &DMatrix<C64>, noise_power: f64) -> Result<Vec<f64>> {
    if h.ncols() != beams.nrows() {
        return Err(Error::invalid(format!(
            "channel has {} antennas, beamformers have {}",
            h.ncols(),
            beams.nrows()
        )));
    }
    if beams.ncols() < h.nrows() {
        return Err(Error::invalid("fewer beamformers than users"));
    }
    let resp = h * beams;
    Ok((0..h.nrows())
        .map(|n| {
            let signal = resp[(n, n)].norm_sqr();
            let interference: f64 = (0..beams.ncols())
                .filter(|&i| i != n)
                .map(|i| resp[(n, i)].norm_sqr())
                .sum();
            signal / (interference + noise_power)
        })
        .collect())
}

/// Pattern curves sampled on the grid, all normalized by `sqrt(N_RF P_T)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternCurves {
    pub angle_deg: Vec<f64>,
    pub objective_dbi: Vec<f64>,
    pub dtb_dbi: Vec<f64>,
    pub dtb_hbf_dbi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub sinr_no_hbf_db: Vec<f64>,
    pub sinr_hbf_db: Vec<f64>,
    pub mse_no_hbf: f64,
    pub mse_hbf: f64,
    /// Per-user target satisfaction of the fully digital design.
    pub feasible: Vec<bool>,
    pub transmit_power: f64,
    /// Share of grid energy of the fully digital design inside the objective bands.
    pub in_band_energy: f64,
    pub factorization_error: f64,
    #[serde(skip)]
    pub pattern: PatternCurves,
}

impl EvaluationReport {
    pub fn min_user_sinr_db(&self) -> f64 {
        self.sinr_no_hbf_db.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `sum_{m in bands} |(Phi f)_m|^2 / sum_m |(Phi f)_m|^2`.
pub fn in_band_energy(pattern: &PatternSpec, scenario: &Scenario, beams: &DMatrix<C64>) -> Result<f64> {
    let mag = beam_pattern(&pattern.phi, &beam_sum(beams))?;
    let (mut inside, mut total) = (0.0, 0.0);
    for (m, &g) in pattern.grid.iter().enumerate() {
        let e = mag[m] * mag[m];
        total += e;
        if scenario.objective_bands.iter().any(|b| b.contains_sine(g)) {
            inside += e;
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

pub fn evaluate(
    design: &BeamDesign,
    factors: &HybridFactors,
    channels: &ChannelSet,
    pattern: &PatternSpec,
    scenario: &Scenario,
) -> Result<EvaluationReport> {
    let n_rf = scenario.n_rf();
    if design.beams.shape() != (scenario.n_bs, n_rf) || factors.effective.shape() != design.beams.shape() {
        return Err(Error::invalid("design and factors must both be N_BS x N_RF"));
    }
    let g_hat = sinr(&channels.h, &design.beams, scenario.noise_power)?;
    let g_hbf = sinr(&channels.h, &factors.effective, scenario.noise_power)?;
    let feasible = g_hat
        .iter()
        .zip(&scenario.sinr_thresholds)
        .map(|(g, t)| *g >= t * (1.0 - SINR_SLACK))
        .collect();

    let dtb = beam_pattern(&pattern.phi, &beam_sum(&design.beams))?;
    let hbf = beam_pattern(&pattern.phi, &beam_sum(&factors.effective))?;
    let curves = PatternCurves {
        angle_deg: pattern.grid_deg(),
        objective_dbi: pattern.b.iter().map(|&x| pattern_dbi(x, n_rf, scenario.p_t)).collect(),
        dtb_dbi: dtb.iter().map(|&x| pattern_dbi(x, n_rf, scenario.p_t)).collect(),
        dtb_hbf_dbi: hbf.iter().map(|&x| pattern_dbi(x, n_rf, scenario.p_t)).collect(),
    };

    Ok(EvaluationReport {
        sinr_no_hbf_db: g_hat.iter().map(|&g| power_db(g)).collect(),
        sinr_hbf_db: g_hbf.iter().map(|&g| power_db(g)).collect(),
        mse_no_hbf: pattern_mse(&pattern.phi, &design.beams, &pattern.b, scenario.p_t)?,
        mse_hbf: pattern_mse(&pattern.phi, &factors.effective, &pattern.b, scenario.p_t)?,
        feasible,
        transmit_power: design.beams.norm_squared(),
        in_band_energy: in_band_energy(pattern, scenario, &design.beams)?,
        factorization_error: factors.relative_error(&design.beams),
        pattern: curves,
    })
}
