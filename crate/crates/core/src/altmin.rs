//! Alternating minimization of the phase-augmented beam design: a cone
//! program over the beamformers for fixed phases, then the closed-form phase
//! update for fixed beamformers, until a stop rule fires.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{assemble, solve, ConicStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::model::{ChannelSet, Scenario, C64};
use crate::pattern::{beam_sum, PatternSpec};
use crate::phase::{precompute_w, update_phase, PhaseVector};

/// Absolute change below which two consecutive objective values count as equal.
const ABS_CHANGE_FLOOR: f64 = 1e-9;

/// When to stop an alternating loop. `max_iters` always applies; the other
/// two criteria are optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_change: Option<f64>,
}

impl StopRule {
    /// 20 iterations or a relative objective change below 1e-4.
    pub fn design_default() -> Self {
        Self {
            max_iters: 20,
            objective_threshold: None,
            relative_change: Some(1e-4),
        }
    }

    /// 50 iterations or a relative residual change below 1e-6.
    pub fn factorization_default() -> Self {
        Self {
            max_iters: 50,
            objective_threshold: None,
            relative_change: Some(1e-6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        for v in [self.objective_threshold, self.relative_change].into_iter().flatten() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("stop threshold {v} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// Whether the trace so far satisfies a convergence criterion.
    pub fn converged(&self, trace: &[f64]) -> bool {
        let Some(&last) = trace.last() else {
            return false;
        };
        if self.objective_threshold.is_some_and(|t| last <= t) {
            return true;
        }
        if let (Some(rel), [.., prev, _]) = (self.relative_change, trace) {
            let change = (prev - last).abs();
            return change <= ABS_CHANGE_FLOOR || change <= rel * prev.abs();
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignStatus {
    Converged,
    MaxIterations,
    /// The first cone program was infeasible: no beamformer meets the SINR
    /// targets within the power budget.
    Infeasible,
    /// The first cone program failed numerically.
    Failed,
    /// A later cone program failed; the design is the last good iterate.
    SolverStopped,
}

impl DesignStatus {
    pub fn has_design(self) -> bool {
        !matches!(self, DesignStatus::Infeasible | DesignStatus::Failed)
    }
}

/// Output of the transmit-beam design.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamDesign {
    /// `N_BS x N_RF`, column `i` is beamformer `i`. Zero columns when there is no design.
    pub beams: DMatrix<C64>,
    pub p: PhaseVector,
    /// Phase-augmented objective after each full iteration.
    pub trace: Vec<f64>,
    pub status: DesignStatus,
    /// Interior-point iterations of each cone solve.
    pub solver_iterations: Vec<u32>,
}

impl BeamDesign {
    pub fn f_stacked(&self) -> DVector<C64> {
        DVector::from_column_slice(self.beams.as_slice())
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `|| D (Phi * sum_i f_i - A p) ||_2`.
pub fn augmented_objective(
    pattern: &PatternSpec,
    beams: &DMatrix<C64>,
    p: &PhaseVector,
) -> Result<f64> {
    if beams.nrows() != pattern.n_bs() || p.len() != pattern.grid_size() {
        return Err(Error::invalid("shapes do not match the pattern"));
    }
    let resp = &pattern.phi * beam_sum(beams);
    Ok(resp
        .iter()
        .enumerate()
        .map(|(m, z)| {
            let r = (z - p.values()[m] * pattern.a_diag[m]) * pattern.d_diag[m];
            r.norm_sqr()
        })
        .sum::<f64>()
        .sqrt())
}

/// Run the alternating design loop from a random phase vector drawn from `rng`.
///
/// A new cone solution is only accepted if it does not raise the objective at
/// the current phases; otherwise the previous (equally feasible) beamformers
/// are kept. This makes the trace monotone regardless of solver round-off.
pub fn design_transmit_beam<R: Rng + ?Sized>(
    scenario: &Scenario,
    channels: &ChannelSet,
    pattern: &PatternSpec,
    stop: &StopRule,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<BeamDesign> {
    stop.validate()?;
    let w = precompute_w(pattern);
    let mut p = PhaseVector::random(pattern.grid_size(), rng);
    let mut beams: Option<DMatrix<C64>> = None;
    let mut trace = Vec::new();
    let mut solver_iterations = Vec::new();
    let mut status = DesignStatus::MaxIterations;

    for _ in 0..stop.max_iters {
        let problem = assemble(pattern, channels, scenario, &p)?;
        let solution = solve(&problem, settings)?;
        solver_iterations.push(solution.iterations);

        let candidate = match (solution.f_stacked, &beams) {
            (Some(f), _) => problem.selector.unstack(&f),
            (None, None) => {
                let status = if solution.status == ConicStatus::Infeasible {
                    DesignStatus::Infeasible
                } else {
                    DesignStatus::Failed
                };
                return Ok(BeamDesign {
                    beams: DMatrix::zeros(scenario.n_bs, 0),
                    p,
                    trace,
                    status,
                    solver_iterations,
                });
            }
            (None, Some(_)) => {
                status = DesignStatus::SolverStopped;
                break;
            }
        };

        let accepted = match beams.take() {
            Some(prev)
                if augmented_objective(pattern, &prev, &p)?
                    < augmented_objective(pattern, &candidate, &p)? =>
            {
                prev
            }
            _ => candidate,
        };
        p = update_phase(&w, &accepted, &p)?;
        trace.push(augmented_objective(pattern, &accepted, &p)?);
        beams = Some(accepted);

        if stop.converged(&trace) {
            status = DesignStatus::Converged;
            break;
        }
    }

    Ok(BeamDesign {
        beams: beams.expect("at least one accepted iterate"),
        p,
        trace,
        status,
        solver_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_channels, stage_rng, RngStage};
    use crate::pattern::{build_grid, sampling_matrix};

    fn desk_scenario(n_bs: usize, grid: usize, sinr: f64) -> Scenario {
        let mut sc = Scenario::baseline();
        sc.n_bs = n_bs;
        sc.grid_size = grid;
        sc.weight_diag = vec![1.0; grid];
        sc.sinr_thresholds = vec![sinr; 3];
        sc
    }

    #[test]
    fn stop_rule_logic() {
        let rule = StopRule::design_default();
        assert!(!rule.converged(&[]));
        assert!(!rule.converged(&[10.0]));
        assert!(!rule.converged(&[10.0, 9.0]));
        assert!(rule.converged(&[10.0, 9.9995]));
        let thr = StopRule {
            max_iters: 5,
            objective_threshold: Some(0.5),
            relative_change: None,
        };
        assert!(thr.converged(&[0.4]));
        assert!(!thr.converged(&[1.0, 0.9]));
        assert!(StopRule { max_iters: 0, ..rule }.validate().is_err());
    }

    #[test]
    fn zero_objective_converges_quickly() {
        let mut sc = desk_scenario(8, 16, 1e-9);
        sc.sinr_thresholds = vec![1e-9; 3];
        let ch = generate_channels(&sc, &mut stage_rng(1, RngStage::Channels));
        let grid = build_grid(16).unwrap();
        let pattern = PatternSpec::from_parts(
            sampling_matrix(8, &grid).unwrap(),
            DVector::zeros(16),
            DVector::from_element(16, 1.0),
            grid,
        )
        .unwrap();
        let d = design_transmit_beam(
            &sc,
            &ch,
            &pattern,
            &StopRule::design_default(),
            &SolverSettings::default(),
            &mut stage_rng(1, RngStage::PhaseInit),
        )
        .unwrap();
        assert_eq!(d.status, DesignStatus::Converged);
        assert!(d.iterations() <= 2);
        assert!(*d.trace.last().unwrap() < 1e-4);
    }

    #[test]
    fn single_iteration_rule_runs_one_round() {
        let sc = desk_scenario(8, 32, 10.0);
        let ch = generate_channels(&sc, &mut stage_rng(2, RngStage::Channels));
        let pattern = PatternSpec::new(&sc).unwrap();
        let stop = StopRule {
            max_iters: 1,
            objective_threshold: None,
            relative_change: None,
        };
        let d = design_transmit_beam(
            &sc,
            &ch,
            &pattern,
            &stop,
            &SolverSettings::default(),
            &mut stage_rng(2, RngStage::PhaseInit),
        )
        .unwrap();
        assert_eq!(d.trace.len(), 1);
        assert_eq!(d.solver_iterations.len(), 1);
        assert_eq!(d.status, DesignStatus::MaxIterations);
    }

    fn desk_run(max_iters: usize) -> BeamDesign {
        let sc = desk_scenario(32, 100, 10.0);
        let ch = generate_channels(&sc, &mut stage_rng(3, RngStage::Channels));
        let pattern = PatternSpec::new(&sc).unwrap();
        let stop = StopRule {
            max_iters,
            ..StopRule::design_default()
        };
        design_transmit_beam(
            &sc,
            &ch,
            &pattern,
            &stop,
            &SolverSettings::default(),
            &mut stage_rng(3, RngStage::PhaseInit),
        )
        .unwrap()
    }

    #[test]
    fn desk_scale_run_is_monotone_and_repeatable() {
        let d = desk_run(25);
        assert!(d.status.has_design());
        for w in d.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "trace went up: {:?}", d.trace);
        }
        assert_eq!(desk_run(25).trace, d.trace);
    }

    #[test]
    fn desk_scale_run_converges() {
        let d = desk_run(400);
        assert_eq!(d.status, DesignStatus::Converged, "trace {:?}", d.trace);
        let n = d.trace.len();
        assert!((d.trace[n - 2] - d.trace[n - 1]) <= 1e-4 * d.trace[n - 2]);
    }

    #[test]
    fn infeasible_first_solve_yields_empty_design() {
        let sc = desk_scenario(8, 16, crate::model::db_to_linear(200.0));
        let ch = generate_channels(&sc, &mut stage_rng(4, RngStage::Channels));
        let pattern = PatternSpec::new(&sc).unwrap();
        let d = design_transmit_beam(
            &sc,
            &ch,
            &pattern,
            &StopRule::design_default(),
            &SolverSettings::default(),
            &mut stage_rng(4, RngStage::PhaseInit),
        )
        .unwrap();
        assert_eq!(d.status, DesignStatus::Infeasible);
        assert_eq!(d.beams.ncols(), 0);
        assert!(d.trace.is_empty());
    }
}
