//! Split a fully digital design `F_hat` into a unit-modulus analog precoder
//! `F_RF` and an unconstrained digital precoder `F_BB`.
//!
//! The digital step is a least-squares solve. The analog step is steepest
//! descent on the product of unit circles with Armijo backtracking and
//! elementwise renormalization as the retraction.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::altmin::StopRule;
use crate::error::{Error, Result};
use crate::model::{random_unit_modulus, C64};

/// Relative ridge added to a rank-deficient Gram matrix.
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSettings {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub slope: f64,
    /// Stop once the Riemannian gradient norm falls below
    /// `grad_tol * ||F_hat||_F * ||F_BB||_F`, which keeps the test scale-free.
    pub grad_tol: f64,
    pub max_steps: usize,
}

impl Default for ManifoldSettings {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            slope: 1e-4,
            grad_tol: 1e-6,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridFactors {
    /// `N_BS x N_RF`, unit-modulus entries.
    pub f_rf: DMatrix<C64>,
    /// `N_RF x N_RF`, scaled so that `||F_RF F_BB||_F^2 = P_T`.
    pub f_bb: DMatrix<C64>,
    /// `||F_hat - F_RF F_BB||_F` after each outer iteration, before scaling.
    pub residual_trace: Vec<f64>,
    /// `F_RF F_BB`.
    pub effective: DMatrix<C64>,
    /// Some digital update hit a rank-deficient `F_RF` and was regularized.
    pub regularized: bool,
    /// `F_hat` was zero: `F_BB` is zero and no scaling happened.
    pub degenerate: bool,
}

impl HybridFactors {
    /// `||F_hat - F||_F / ||F_hat||_F` for the scaled product.
    pub fn relative_error(&self, f_hat: &DMatrix<C64>) -> f64 {
        let norm = f_hat.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (f_hat - &self.effective).norm() / norm
    }
}

/// `||F_hat - F_RF F_BB||_F`.
pub fn residual(f_hat: &DMatrix<C64>, f_rf: &DMatrix<C64>, f_bb: &DMatrix<C64>) -> f64 {
    (f_hat - f_rf * f_bb).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalUpdate {
    pub f_bb: DMatrix<C64>,
    pub regularized: bool,
}

/// `F_BB = (F_RF^H F_RF)^{-1} F_RF^H F_hat`.
pub fn update_digital(f_rf: &DMatrix<C64>, f_hat: &DMatrix<C64>) -> Result<DigitalUpdate> {
    if f_rf.nrows() != f_hat.nrows() {
        return Err(Error::invalid("F_RF and F_hat disagree on antenna count"));
    }
    let gram = f_rf.adjoint() * f_rf;
    let rhs = f_rf.adjoint() * f_hat;
    let k = gram.nrows();
    let scale = gram.trace().re.max(f64::MIN_POSITIVE) / k.max(1) as f64;

    // Cholesky succeeds on numerically singular Gram matrices too; check the
    // pivots against the trace before trusting it.
    if let Some(chol) = gram.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..k).map(|i| l[(i, i)].re.powi(2)).fold(f64::INFINITY, f64::min);
        if min_pivot > 1e-12 * scale {
            return Ok(DigitalUpdate {
                f_bb: chol.solve(&rhs),
                regularized: false,
            });
        }
    }
    let ridged = gram + DMatrix::<C64>::identity(k, k) * C64::new(RIDGE * scale, 0.0);
    let chol = ridged
        .cholesky()
        .ok_or_else(|| Error::invalid("regularized Gram matrix is not positive definite"))?;
    Ok(DigitalUpdate {
        f_bb: chol.solve(&rhs),
        regularized: true,
    })
}

/// Projection of the Euclidean gradient of `0.5 ||F_hat - X B||_F^2` onto the
/// tangent space of the unit-circle product at `X`.
pub fn riemannian_gradient(
    f_rf: &DMatrix<C64>,
    f_bb: &DMatrix<C64>,
    f_hat: &DMatrix<C64>,
) -> DMatrix<C64> {
    project_tangent(f_rf, &(-(f_hat - f_rf * f_bb) * f_bb.adjoint()))
}

fn project_tangent(x: &DMatrix<C64>, v: &DMatrix<C64>) -> DMatrix<C64> {
    v.zip_map(x, |vi, xi| vi - xi * (vi * xi.conj()).re)
}

fn real_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Elementwise `x / |x|`.
pub fn retract(x: &DMatrix<C64>) -> DMatrix<C64> {
    x.map(|z| {
        let n = z.norm();
        if n > 0.0 {
            z / n
        } else {
            C64::new(1.0, 0.0)
        }
    })
}

fn half_sq(f_hat: &DMatrix<C64>, f_rf: &DMatrix<C64>, f_bb: &DMatrix<C64>) -> f64 {
    0.5 * (f_hat - f_rf * f_bb).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogUpdate {
    pub f_rf: DMatrix<C64>,
    pub steps: usize,
}

/// Riemannian steepest descent on `F_RF` at fixed `F_BB`. Never increases
/// the residual. The first trial step is `initial_step`; later iterations
/// start from a Barzilai-Borwein estimate, and every step passes Armijo.
pub fn update_analog(
    f_bb: &DMatrix<C64>,
    f_hat: &DMatrix<C64>,
    current: &DMatrix<C64>,
    settings: &ManifoldSettings,
) -> Result<AnalogUpdate> {
    if current.shape() != f_hat.shape() || f_bb.nrows() != current.ncols() || f_bb.ncols() != f_hat.ncols() {
        return Err(Error::invalid("F_RF, F_BB and F_hat shapes do not conform"));
    }
    if current.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::invalid("F_RF entries must have unit modulus"));
    }
    if !(settings.shrink > 0.0 && settings.shrink < 1.0 && settings.initial_step > 0.0) {
        return Err(Error::invalid("line search needs 0 < shrink < 1 and a positive step"));
    }

    let mut x = retract(current);
    let mut value = half_sq(f_hat, &x, f_bb);
    let mut steps = 0;
    let mut t = riemannian_gradient(&x, f_bb, f_hat);
    let mut first_step = settings.initial_step;
    let grad_floor = settings.grad_tol * f_hat.norm() * f_bb.norm();
    while steps < settings.max_steps {
        let gnorm2 = t.norm_squared();
        if gnorm2.sqrt() <= grad_floor {
            break;
        }
        let mut step = first_step;
        let mut accepted = None;
        // 60 halvings take the step below any meaningful scale
        for _ in 0..60 {
            let trial = retract(&(&x - &t * C64::new(step, 0.0)));
            let trial_value = half_sq(f_hat, &trial, f_bb);
            if trial_value <= value - settings.slope * step * gnorm2 {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= settings.shrink;
        }
        let Some((next, next_value)) = accepted else {
            break;
        };
        let t_next = riemannian_gradient(&next, f_bb, f_hat);
        // Barzilai-Borwein estimate for the next trial step, with the old
        // gradient carried over by projection onto the new tangent space
        let carried = project_tangent(&next, &t);
        let sy = -step * real_inner(&carried, &(&t_next - &carried));
        let ss = step * step * carried.norm_squared();
        first_step = if sy > 0.0 && (ss / sy).is_finite() {
            (ss / sy).clamp(1e-8 * settings.initial_step, 1e8 * settings.initial_step)
        } else {
            settings.initial_step
        };
        x = next;
        value = next_value;
        t = t_next;
        steps += 1;
    }
    Ok(AnalogUpdate { f_rf: x, steps })
}

/// Alternate the digital and analog updates from a random analog precoder,
/// then scale `F_BB` so the product spends exactly `p_t`.
pub fn factorize<R: Rng + ?Sized>(
    f_hat: &DMatrix<C64>,
    p_t: f64,
    stop: &StopRule,
    settings: &ManifoldSettings,
    rng: &mut R,
) -> Result<HybridFactors> {
    stop.validate()?;
    if !(p_t.is_finite() && p_t > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    let (n_bs, n_rf) = f_hat.shape();
    if n_bs == 0 || n_rf == 0 {
        return Err(Error::invalid("F_hat is empty"));
    }
    let mut f_rf = DMatrix::from_vec(n_bs, n_rf, random_unit_modulus(rng, n_bs * n_rf));

    if f_hat.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        let f_bb = DMatrix::zeros(n_rf, n_rf);
        return Ok(HybridFactors {
            effective: DMatrix::zeros(n_bs, n_rf),
            f_rf,
            f_bb,
            residual_trace: vec![0.0],
            regularized: false,
            degenerate: true,
        });
    }

    let mut regularized = false;
    let mut trace = Vec::new();
    let mut f_bb;
    loop {
        let digital = update_digital(&f_rf, f_hat)?;
        regularized |= digital.regularized;
        f_bb = digital.f_bb;
        f_rf = update_analog(&f_bb, f_hat, &f_rf, settings)?.f_rf;
        trace.push(residual(f_hat, &f_rf, &f_bb));
        if trace.len() >= stop.max_iters || stop.converged(&trace) {
            break;
        }
    }

    let product = &f_rf * &f_bb;
    let norm = product.norm();
    if norm > 0.0 {
        f_bb *= C64::new(p_t.sqrt() / norm, 0.0);
    }
    Ok(HybridFactors {
        effective: &f_rf * &f_bb,
        f_rf,
        f_bb,
        residual_trace: trace,
        regularized,
        degenerate: norm == 0.0,
    })
}
