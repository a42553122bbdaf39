//! Unit-modulus phase vector attached to the objective pattern, and its
//! closed-form update for fixed beamformers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{random_unit_modulus, C64};
use crate::pattern::{beam_sum, PatternSpec};

/// Magnitudes at or below this are treated as zero in the update.
pub const ZERO_MAGNITUDE: f64 = 1e-14;

/// Complex vector with unit-modulus entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<C64>);

impl PhaseVector {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if let Some((i, z)) = values
            .iter()
            .enumerate()
            .find(|(_, z)| !((z.norm() - 1.0).abs() <= 1e-9))
        {
            return Err(Error::invalid(format!(
                "phase entry {i} has modulus {}",
                z.norm()
            )));
        }
        Ok(Self(values))
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(values: Vec<C64>) -> Self {
        Self(values)
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![C64::new(1.0, 0.0); len])
    }

    /// I.i.d. uniform phases.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self(random_unit_modulus(rng, len))
    }

    pub fn values(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.0)
    }
}

/// `W = (A^H D^H D A)^{-1} A^H D^H D Phi`, restricted to the rows where the
/// inverse exists (`b_m > 0` and `d_m > 0`). With diagonal `A` and `D` each
/// such row is `Phi_m / b_m`; every other row is zero.
pub fn precompute_w(pattern: &PatternSpec) -> DMatrix<C64> {
    let mut w = DMatrix::zeros(pattern.phi.nrows(), pattern.phi.ncols());
    for m in 0..pattern.phi.nrows() {
        let a = pattern.a_diag[m];
        let d2 = pattern.d_diag[m] * pattern.d_diag[m];
        let gram = a * d2 * a;
        if gram > 0.0 {
            let scale = a * d2 / gram;
            for k in 0..pattern.phi.ncols() {
                w[(m, k)] = pattern.phi[(m, k)] * scale;
            }
        }
    }
    w
}

/// Project the unconstrained least-squares phase `W * sum_i f_i` onto unit
/// modulus. Entries whose unconstrained value vanishes (including every row
/// outside the support of the objective) keep their previous phase.
pub fn update_phase(
    w: &DMatrix<C64>,
    beams: &DMatrix<C64>,
    previous: &PhaseVector,
) -> Result<PhaseVector> {
    if w.nrows() != previous.len() {
        return Err(Error::invalid("phase vector length differs from W"));
    }
    if w.ncols() != beams.nrows() {
        return Err(Error::invalid("W and beamformers disagree on antenna count"));
    }
    let unconstrained = w * beam_sum(beams);
    let values = unconstrained
        .iter()
        .zip(previous.values())
        .map(|(z, &prev)| {
            let mag = z.norm();
            if mag > ZERO_MAGNITUDE {
                let u = z / mag;
                // second pass kills rounding drift in the modulus
                u / u.norm()
            } else {
                prev
            }
        })
        .collect();
    Ok(PhaseVector(values))
}
