//! Infinite-horizon discrete LQR with cross term.
//!
//! The Riccati recursion
//!
//! ```text
//! P <- Q + A'PA - (A'PB + S)(R + B'PB)^-1 (B'PA + S')
//! ```
//!
//! is iterated from `P = Q` to its fixed point; the gain is
//! `K = (R + B'PB)^-1 (B'PA + S')` and the closed loop is `A_K = A - BK`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{Const, DimMin, Matrix2, Matrix2x4, Matrix4, Matrix4x2, SMatrix, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlInput, PedestrianState};
use crate::roadgraph::ReferenceState;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Relative determinant threshold below which `R + B'PB` is treated as singular.
const SINGULAR_DET: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("Riccati iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("system is not stabilizable with these weights: {0}")]
    NotStabilizable(String),
    #[error("invalid weights: {0}")]
    BadWeights(String),
    #[error("R + B'PB is numerically singular (det {det:e})")]
    SingularInnerMatrix { det: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Stage cost weights `[[Q, S], [S', R]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<const N: usize, const M: usize> {
    pub q: SMatrix<f64, N, N>,
    pub r: SMatrix<f64, M, M>,
    pub s: SMatrix<f64, N, M>,
}

/// Weights for the 4-state, 2-input pedestrian model.
pub type LqrWeights = Weights<4, 2>;

impl LqrWeights {
    /// `Q = q I4`, `R = r I2`, `S = 0`.
    pub fn scalar(q: f64, r: f64) -> Self {
        Self {
            q: Matrix4::identity() * q,
            r: Matrix2::identity() * r,
            s: Matrix4x2::zeros(),
        }
    }
}

impl<const N: usize, const M: usize> Weights<N, M> {
    /// Same weights multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            q: self.q * alpha,
            r: self.r * alpha,
            s: self.s * alpha,
        }
    }

    pub fn validate(&self) -> Result<(), LqrError> {
        let finite = self.q.iter().chain(self.r.iter()).chain(self.s.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(LqrError::BadWeights("non-finite entry".into()));
        }
        let sym_tol = 1e-12 * (1.0 + self.q.amax().max(self.r.amax()));
        if (self.q - self.q.transpose()).amax() > sym_tol {
            return Err(LqrError::BadWeights("Q is not symmetric".into()));
        }
        if (self.r - self.r.transpose()).amax() > sym_tol {
            return Err(LqrError::BadWeights("R is not symmetric".into()));
        }
        if self.r.cholesky().is_none() {
            return Err(LqrError::BadWeights("R is not positive definite".into()));
        }
        if !is_psd(&self.q, sym_tol) {
            return Err(LqrError::BadWeights("Q is not positive semidefinite".into()));
        }
        // Schur complement of R in the composite matrix must be PSD too.
        let r_inv = self.r.cholesky().expect("checked above").inverse();
        let schur = self.q - self.s * r_inv * self.s.transpose();
        if !is_psd(&schur, sym_tol) {
            return Err(LqrError::BadWeights(
                "[[Q, S], [S', R]] is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

/// PSD test by Cholesky of `m + tol I`.
fn is_psd<const N: usize>(m: &SMatrix<f64, N, N>, tol: f64) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    (sym + SMatrix::<f64, N, N>::identity() * tol.max(f64::MIN_POSITIVE))
        .cholesky()
        .is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solution<const N: usize, const M: usize> {
    /// Riccati fixed point.
    pub p: SMatrix<f64, N, N>,
    pub k: SMatrix<f64, M, N>,
    /// Closed loop `A - BK`.
    pub a_k: SMatrix<f64, N, N>,
    pub iterations: usize,
    /// Max-abs Riccati residual at `p`.
    pub residual: f64,
}

pub type LqrSolution = Solution<4, 2>;

struct RiccatiStep<const N: usize, const M: usize> {
    next: SMatrix<f64, N, N>,
    gain: SMatrix<f64, M, N>,
}

fn inverse_checked<const M: usize>(m: &SMatrix<f64, M, M>) -> Result<SMatrix<f64, M, M>, LqrError>
where
    Const<M>: DimMin<Const<M>, Output = Const<M>>,
{
    let det = m.determinant();
    let scale = m.amax().powi(M as i32);
    if !det.is_finite() || det.abs() < SINGULAR_DET * scale || scale == 0.0 {
        return Err(LqrError::SingularInnerMatrix { det });
    }
    m.try_inverse().ok_or(LqrError::SingularInnerMatrix { det })
}

fn riccati_step<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    w: &Weights<N, M>,
    p: &SMatrix<f64, N, N>,
) -> Result<RiccatiStep<N, M>, LqrError>
where
    Const<M>: DimMin<Const<M>, Output = Const<M>>,
{
    let pa = p * a;
    let pb = p * b;
    let inner = w.r + b.transpose() * pb;
    let cross = b.transpose() * pa + w.s.transpose();
    let gain = inverse_checked(&inner)? * cross;
    let next = w.q + a.transpose() * pa - cross.transpose() * gain;
    // Keep the iterate exactly symmetric.
    let next = (next + next.transpose()) * 0.5;
    Ok(RiccatiStep { next, gain })
}

/// Solve the discrete algebraic Riccati equation by fixed-point iteration.
pub fn solve_dare<const N: usize, const M: usize>(
    a: &SMatrix<f64, N, N>,
    b: &SMatrix<f64, N, M>,
    weights: &Weights<N, M>,
    tol: f64,
    max_iter: usize,
) -> Result<Solution<N, M>, LqrError>
where
    Const<M>: DimMin<Const<M>, Output = Const<M>>,
{
    if !(tol > 0.0) {
        return Err(LqrError::BadTolerance(tol));
    }
    weights.validate()?;
    let divergence_bound = 1e12 * (1.0 + weights.q.amax());
    let mut p = weights.q;
    let mut change = f64::INFINITY;
    for iteration in 1..=max_iter {
        let step = riccati_step(a, b, weights, &p)?;
        change = (step.next - p).amax();
        p = step.next;
        if !p.amax().is_finite() || p.amax() > divergence_bound {
            return Err(LqrError::NotStabilizable(format!(
                "Riccati iterate diverged after {iteration} iterations"
            )));
        }
        if change < tol {
            let check = riccati_step(a, b, weights, &p)?;
            let residual = (check.next - p).amax();
            if residual < tol {
                let k = check.gain;
                let a_k = a - b * k;
                let rho = spectral_radius(&a_k);
                if !(rho < 1.0) {
                    return Err(LqrError::NotStabilizable(format!(
                        "closed loop spectral radius {rho} >= 1"
                    )));
                }
                return Ok(Solution {
                    p,
                    k,
                    a_k,
                    iterations: iteration,
                    residual,
                });
            }
        }
    }
    Err(LqrError::NoConvergence {
        iterations: max_iter,
        change,
    })
}

/// Spectral radius via the Gelfand limit `||M^(2^j)||^(1/2^j)`, computed
/// with per-step normalization so powers never overflow or underflow.
pub fn spectral_radius<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let mut x = *m;
    let mut log_scale = 0.0_f64;
    let mut power = 1.0_f64;
    let mut estimate = f64::INFINITY;
    for _ in 0..64 {
        let norm = x.norm();
        if norm == 0.0 {
            return 0.0;
        }
        x /= norm;
        log_scale += norm.ln();
        estimate = (log_scale / power).exp();
        x = x * x;
        log_scale *= 2.0;
        power *= 2.0;
    }
    estimate
}

/// `u = r_u - K (x - r_x)`.
pub fn tracking_input(k: &Matrix2x4<f64>, state: &PedestrianState, reference: &ReferenceState) -> ControlInput {
    let e = state.to_vector() - reference.state().to_vector();
    let u = Vector2::new(reference.ru_a, reference.ru_omega) - k * e;
    ControlInput { a: u[0], omega: u[1] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GainKey {
    heading: u64,
    v_ref: u64,
}

/// Memoized gains per (edge heading, reference speed) for fixed weights and
/// sampling time. Lookups take a read lock; insertion is single-writer.
#[derive(Debug)]
pub struct GainCache {
    weights: LqrWeights,
    t_s: f64,
    tol: f64,
    max_iter: usize,
    entries: RwLock<HashMap<GainKey, Arc<LqrSolution>>>,
}

impl GainCache {
    pub fn new(weights: LqrWeights, t_s: f64, tol: f64, max_iter: usize) -> Self {
        Self {
            weights,
            t_s,
            tol,
            max_iter,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gain for a straight edge with the given heading and reference speed.
    pub fn get_or_solve(
        &self,
        heading: f64,
        v_ref: f64,
        a: &Matrix4<f64>,
        b: &Matrix4x2<f64>,
    ) -> Result<Arc<LqrSolution>, LqrError> {
        let key = GainKey {
            heading: heading.to_bits(),
            v_ref: v_ref.to_bits(),
        };
        if let Some(hit) = self.entries.read().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let solved = Arc::new(solve_dare(a, b, &self.weights, self.tol, self.max_iter)?);
        let mut entries = self.entries.write().unwrap();
        Ok(Arc::clone(entries.entry(key).or_insert(solved)))
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }
}
