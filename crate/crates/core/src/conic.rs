//! Fixed-phase transmit-beam design as a second-order cone program.
//!
//! Given a phase vector `p`, the stacked beamformer `f = [f_1; ...; f_NRF]`
//! solves
//!
//! ```text
//! minimize    u
//! subject to  || D (Phi S f - A p) ||_2 <= u
//!             || f ||_2 <= sqrt(P_T)
//!             || [h_n S_1 f, ..., h_n S_NRF f, sigma] ||_2 <= c_n Re(h_n S_n f),  n = 1..N_c
//!             Im(h_n S_n f) = 0
//! ```
//!
//! with `c_n = sqrt(1 + 1/Gamma_n)`. Squaring the per-user cone gives
//! `sum_{i != n} |h_n f_i|^2 + sigma^2 <= |h_n f_n|^2 / Gamma_n`, the SINR
//! constraint. Every complex quantity is carried through the real embedding
//! `z -> [Re z; Im z]`.

use std::ops::Range;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ChannelSet, Scenario, C64};
use crate::pattern::PatternSpec;
use crate::phase::PhaseVector;

/// `[Re z; Im z]`.
pub fn embed_vector(z: &DVector<C64>) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

/// Inverse of [`embed_vector`].
pub fn unembed_vector(x: &DVector<f64>) -> Result<DVector<C64>> {
    if x.len() % 2 != 0 {
        return Err(Error::invalid("real embedding must have even length"));
    }
    let n = x.len() / 2;
    Ok(DVector::from_fn(n, |i, _| C64::new(x[i], x[n + i])))
}

/// `[[Re A, -Im A], [Im A, Re A]]`, so that `embed(A z) = embed(A) embed(z)`.
pub fn embed_matrix(a: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Index bookkeeping for the stacked vector `f = [f_1; ...; f_NRF]`. `sum`
/// realizes `S f = sum_i f_i` and `block` realizes `S_i f = f_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorMap {
    pub n_rf: usize,
    pub n_bs: usize,
}

impl SelectorMap {
    pub fn stacked_len(&self) -> usize {
        self.n_rf * self.n_bs
    }

    pub fn block_range(&self, i: usize) -> Range<usize> {
        i * self.n_bs..(i + 1) * self.n_bs
    }

    pub fn block(&self, f: &DVector<C64>, i: usize) -> DVector<C64> {
        f.rows(i * self.n_bs, self.n_bs).into_owned()
    }

    pub fn sum(&self, f: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.n_bs);
        for i in 0..self.n_rf {
            out += f.rows(i * self.n_bs, self.n_bs);
        }
        out
    }

    /// Stack the columns of an `N_BS x N_RF` matrix.
    pub fn stack(&self, beams: &DMatrix<C64>) -> DVector<C64> {
        DVector::from_column_slice(beams.as_slice())
    }

    /// Columns of the beamformer matrix from the stacked vector.
    pub fn unstack(&self, f: &DVector<C64>) -> DMatrix<C64> {
        DMatrix::from_column_slice(self.n_bs, self.n_rf, f.as_slice())
    }

    /// Explicit `S = [I, I, ..., I]`.
    pub fn sum_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_bs, self.stacked_len(), |r, c| {
            if c % self.n_bs == r {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Explicit `S_i = [0, ..., I, ..., 0]`.
    pub fn block_matrix(&self, i: usize) -> DMatrix<f64> {
        let range = self.block_range(i);
        DMatrix::from_fn(self.n_bs, self.stacked_len(), |r, c| {
            if range.contains(&c) && c - range.start == r {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// One user's SINR cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrRows {
    pub user: usize,
    /// Real embedding of `h_n`, `2 x 2 N_BS`.
    pub channel: DMatrix<f64>,
    /// `sqrt(1 + 1/Gamma_n)`.
    pub coefficient: f64,
    pub sigma: f64,
}

impl SinrRows {
    /// `h_n S_i f` for every RF chain `i`, evaluated through the embedded rows.
    pub fn responses(&self, selector: &SelectorMap, f: &DVector<C64>) -> Vec<C64> {
        (0..selector.n_rf)
            .map(|i| {
                let v = self.channel.clone() * embed_vector(&selector.block(f, i));
                C64::new(v[0], v[1])
            })
            .collect()
    }

    /// The cone's stacked vector `t` (real coordinates, sigma last) and the
    /// right-hand side `c_n Re(h_n S_n f)`.
    pub fn cone_terms(&self, selector: &SelectorMap, f: &DVector<C64>) -> (DVector<f64>, f64) {
        let resp = self.responses(selector, f);
        let mut t = Vec::with_capacity(2 * resp.len() + 1);
        for z in &resp {
            t.push(z.re);
            t.push(z.im);
        }
        t.push(self.sigma);
        (DVector::from_vec(t), self.coefficient * resp[self.user].re)
    }

    /// SINR of this user computed from the cone rows.
    pub fn sinr(&self, selector: &SelectorMap, f: &DVector<C64>) -> f64 {
        let resp = self.responses(selector, f);
        let interference: f64 = resp
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.user)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        resp[self.user].norm_sqr() / (interference + self.sigma * self.sigma)
    }
}

/// The assembled cone program for one phase vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedProblem {
    pub selector: SelectorMap,
    /// Real embedding of `D Phi`, `2M x 2 N_BS`. The objective matrix
    /// `embed(D Phi S)` repeats it once per RF chain; see [`Self::objective_matrix`].
    pub beam_matrix: DMatrix<f64>,
    /// Real embedding of `D A p`.
    pub objective_target: DVector<f64>,
    pub power_budget: f64,
    pub sinr_rows: Vec<SinrRows>,
}

impl StackedProblem {
    /// Real embedding of `D Phi S`, acting on `embed(f)`.
    pub fn objective_matrix(&self) -> DMatrix<f64> {
        let s = self.selector.sum_matrix();
        let mut s_real = DMatrix::zeros(2 * s.nrows(), 2 * s.ncols());
        s_real.view_mut((0, 0), s.shape()).copy_from(&s);
        s_real.view_mut((s.nrows(), s.ncols()), s.shape()).copy_from(&s);
        &self.beam_matrix * s_real
    }

    /// `|| D (Phi S f - A p) ||_2`.
    pub fn objective(&self, f: &DVector<C64>) -> f64 {
        let y = embed_vector(&self.selector.sum(f));
        (&self.beam_matrix * y - &self.objective_target).norm()
    }
}

/// Build the cone program for phase vector `p`.
pub fn assemble(
    pattern: &PatternSpec,
    channels: &ChannelSet,
    scenario: &Scenario,
    p: &PhaseVector,
) -> Result<StackedProblem> {
    let m = pattern.grid_size();
    let n_bs = pattern.n_bs();
    if p.len() != m {
        return Err(Error::invalid(format!(
            "phase vector has {} entries, grid has {m}",
            p.len()
        )));
    }
    if let Some(z) = p.values().iter().find(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::invalid(format!("phase entry {z} is not unit modulus")));
    }
    if channels.n_bs() != n_bs || scenario.n_bs != n_bs {
        return Err(Error::invalid("channel and pattern disagree on antenna count"));
    }
    if channels.n_users() != scenario.n_c || scenario.sinr_thresholds.len() != scenario.n_c {
        return Err(Error::invalid("channel set and scenario disagree on user count"));
    }
    let selector = SelectorMap {
        n_rf: scenario.n_rf(),
        n_bs,
    };

    let weighted_phi = DMatrix::from_fn(m, n_bs, |r, c| pattern.phi[(r, c)] * pattern.d_diag[r]);
    let target = DVector::from_fn(m, |r, _| p.values()[r] * (pattern.d_diag[r] * pattern.a_diag[r]));

    let sigma = scenario.noise_power.sqrt();
    let sinr_rows = (0..scenario.n_c)
        .map(|n| {
            let h = channels.h.rows(n, 1).into_owned();
            SinrRows {
                user: n,
                channel: embed_matrix(&h),
                coefficient: (1.0 + 1.0 / scenario.sinr_thresholds[n]).sqrt(),
                sigma,
            }
        })
        .collect();

    Ok(StackedProblem {
        selector,
        beam_matrix: embed_matrix(&weighted_phi),
        objective_target: embed_vector(&target),
        power_budget: scenario.p_t,
        sinr_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConicStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Failed,
}

impl ConicStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, ConicStatus::Optimal | ConicStatus::NearOptimal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    /// Present only when the status carries a solution.
    pub f_stacked: Option<DVector<C64>>,
    /// Objective recomputed from `f_stacked`; infinite when there is none.
    pub objective_value: f64,
    pub status: ConicStatus,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverSettings {
    /// Feasibility tolerance.
    pub tol_feas: f64,
    /// Absolute and relative duality-gap tolerance.
    pub tol_gap: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            max_iter: 200,
        }
    }
}

/// Sparse triplet builder for the constraint matrix `A` in `A z + s = b`.
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Self {
            i: Vec::new(),
            j: Vec::new(),
            v: Vec::new(),
            b: Vec::new(),
        }
    }

    fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.b.len();
        for (j, v) in entries {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(rhs);
    }

    fn len(&self) -> usize {
        self.b.len()
    }
}

/// Solve the cone program with an interior-point method.
///
/// The epigraph cone is compressed before solving: with `D Phi = Q R`,
/// `|| D Phi y - c ||^2 = || R y - Q^T c ||^2 + || (I - Q Q^T) c ||^2`,
/// which shrinks that cone from `2M + 1` to `2 N_BS + 2` entries without
/// changing the program. Decision variables are ordered as
/// `[Re f, Im f, Re y, Im y, u]` with `y = S f`.
pub fn solve(problem: &StackedProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    let sel = problem.selector;
    let k = sel.stacked_len();
    let n = sel.n_bs;
    if problem.beam_matrix.ncols() != 2 * n
        || problem.beam_matrix.nrows() != problem.objective_target.len()
    {
        return Err(Error::invalid("malformed objective block"));
    }
    if !(problem.power_budget > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    let re = |j: usize| j;
    let im = |j: usize| k + j;
    let y_re = |j: usize| 2 * k + j;
    let y_im = |j: usize| 2 * k + n + j;
    let u = 2 * k + 2 * n;
    let n_vars = u + 1;

    let (r_mat, target, residual) = compress(&problem.beam_matrix, &problem.objective_target);

    let mut rows = Rows::new();
    let mut cones = Vec::new();

    // y - S f = 0, real and imaginary parts.
    for j in 0..n {
        rows.push_row(
            std::iter::once((y_re(j), 1.0)).chain((0..sel.n_rf).map(|i| (re(i * n + j), -1.0))),
            0.0,
        );
    }
    for j in 0..n {
        rows.push_row(
            std::iter::once((y_im(j), 1.0)).chain((0..sel.n_rf).map(|i| (im(i * n + j), -1.0))),
            0.0,
        );
    }
    // Im(h_n S_n f) = 0.
    for s in &problem.sinr_rows {
        let block = sel.block_range(s.user);
        rows.push_row(
            (0..n).flat_map(|c| {
                [
                    (re(block.start + c), s.channel[(1, c)]),
                    (im(block.start + c), s.channel[(1, n + c)]),
                ]
            }),
            0.0,
        );
    }
    cones.push(SupportedConeT::ZeroConeT(rows.len()));

    // Epigraph: || R y - c || <= u.
    let start = rows.len();
    rows.push_row([(u, -1.0)], 0.0);
    for r in 0..r_mat.nrows() {
        rows.push_row(
            (0..2 * n).map(|c| {
                let col = if c < n { y_re(c) } else { y_im(c - n) };
                (col, r_mat[(r, c)])
            }),
            target[r],
        );
    }
    if residual > 0.0 {
        rows.push_row([], residual);
    }
    cones.push(SupportedConeT::SecondOrderConeT(rows.len() - start));

    // Power: || f || <= sqrt(P_T).
    let start = rows.len();
    rows.push_row([], problem.power_budget.sqrt());
    for j in 0..2 * k {
        rows.push_row([(j, -1.0)], 0.0);
    }
    cones.push(SupportedConeT::SecondOrderConeT(rows.len() - start));

    // Per-user SINR cones.
    for s in &problem.sinr_rows {
        let start = rows.len();
        let own = sel.block_range(s.user);
        rows.push_row(
            (0..n).flat_map(|c| {
                [
                    (re(own.start + c), -s.coefficient * s.channel[(0, c)]),
                    (im(own.start + c), -s.coefficient * s.channel[(0, n + c)]),
                ]
            }),
            0.0,
        );
        for i in 0..sel.n_rf {
            let block = sel.block_range(i);
            for part in 0..2 {
                rows.push_row(
                    (0..n).flat_map(|c| {
                        [
                            (re(block.start + c), -s.channel[(part, c)]),
                            (im(block.start + c), -s.channel[(part, n + c)]),
                        ]
                    }),
                    0.0,
                );
            }
        }
        rows.push_row([], s.sigma);
        cones.push(SupportedConeT::SecondOrderConeT(rows.len() - start));
    }

    let m_rows = rows.len();
    let a = CscMatrix::new_from_triplets(m_rows, n_vars, rows.i, rows.j, rows.v);
    let p = CscMatrix::zeros((n_vars, n_vars));
    let mut q = vec![0.0; n_vars];
    q[u] = 1.0;

    // the gap is certified on the compressed epigraph; a tenth of the
    // requested tolerance leaves room for the recomputed objective and the
    // power pull-back below
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_feas(settings.tol_feas)
        .tol_gap_abs(0.1 * settings.tol_gap)
        .tol_gap_rel(0.1 * settings.tol_gap)
        .max_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, clarabel_settings)
        .map_err(|e| Error::invalid(format!("solver setup: {e}")))?;
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved => ConicStatus::Optimal,
        SolverStatus::AlmostSolved => ConicStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            ConicStatus::Infeasible
        }
        _ => ConicStatus::Failed,
    };
    let iterations = solver.solution.iterations;
    if !status.has_solution() {
        return Ok(ConicSolution {
            f_stacked: None,
            objective_value: f64::INFINITY,
            status,
            iterations,
        });
    }
    let x = &solver.solution.x;
    let mut f = DVector::from_fn(k, |j, _| C64::new(x[re(j)], x[im(j)]));
    // interior-point iterates may overshoot the power budget by the solver
    // tolerance; pull them back onto the sphere
    let power = f.norm_squared();
    if power > problem.power_budget {
        f *= C64::new((problem.power_budget / power).sqrt(), 0.0);
    }
    Ok(ConicSolution {
        objective_value: problem.objective(&f),
        f_stacked: Some(f),
        status,
        iterations,
    })
}

/// Thin QR compression of the epigraph block. Returns `(R, Q^T c, ||c - Q Q^T c||)`.
fn compress(g: &DMatrix<f64>, c: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
    if g.nrows() <= g.ncols() {
        return (g.clone(), c.clone(), 0.0);
    }
    let qr = g.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let d = q.transpose() * c;
    let residual = (c - &q * &d).norm();
    (r, d, residual)
}
