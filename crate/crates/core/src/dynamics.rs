//! Unicycle pedestrian model, its linearization around an edge reference and
//! exact zero-order-hold discretization.
//!
//! State `x = [x y v theta]`, input `u = [a omega]`:
//!
//! ```text
//! d/dt [x, y, v, theta] = [v cos(theta), v sin(theta), a, omega]
//! ```
//!
//! Linearized around a straight constant-speed reference the continuous
//! Jacobian `A_c` only couples (v, theta) into (x, y), so `A_c^2 = 0` and the
//! matrix exponential truncates after the linear term.

use nalgebra::{Matrix4, Matrix4x2, SMatrix, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roadgraph::{Edge, ReferenceState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("sampling time must be positive, got {0}")]
    NonPositiveSamplingTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

impl PedestrianState {
    pub const fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        Self { x, y, v, theta }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v, self.theta)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }

    /// Copy with heading wrapped into (-pi, pi].
    pub fn normalized(&self) -> Self {
        Self {
            theta: wrap_angle(self.theta),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub omega: f64,
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}

/// Noise-free unicycle right-hand side.
pub fn unicycle_rhs(state: &PedestrianState, input: &ControlInput) -> Vector4<f64> {
    let (sin, cos) = state.theta.sin_cos();
    Vector4::new(state.v * cos, state.v * sin, input.a, input.omega)
}

/// Continuous Jacobians `(A_c, B_c)` of the unicycle at the reference.
pub fn jacobians(reference: &ReferenceState) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let (sin, cos) = reference.rtheta.sin_cos();
    let mut a_c = Matrix4::zeros();
    a_c[(0, 2)] = cos;
    a_c[(0, 3)] = -reference.rv * sin;
    a_c[(1, 2)] = sin;
    a_c[(1, 3)] = reference.rv * cos;
    let mut b_c = Matrix4x2::zeros();
    b_c[(2, 0)] = 1.0;
    b_c[(3, 1)] = 1.0;
    (a_c, b_c)
}

/// Zero-order-hold discretization of `(A_c, B_c)` over `t_s`.
///
/// Uses the closed form `A = I + t A_c`, `B = t B_c + t^2/2 A_c B_c` when
/// `A_c` squares to zero (always the case for unicycle Jacobians), and a
/// scaled Taylor expansion of the augmented exponential otherwise.
pub fn discretize(
    a_c: &Matrix4<f64>,
    b_c: &Matrix4x2<f64>,
    t_s: f64,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>), DynamicsError> {
    if !(t_s > 0.0) {
        return Err(DynamicsError::NonPositiveSamplingTime(t_s));
    }
    if (a_c * a_c).iter().all(|&v| v == 0.0) {
        let a = Matrix4::identity() + a_c * t_s;
        let b = b_c * t_s + a_c * b_c * (0.5 * t_s * t_s);
        return Ok((a, b));
    }
    Ok(zoh_series(a_c, b_c, t_s))
}

fn zoh_series(a_c: &Matrix4<f64>, b_c: &Matrix4x2<f64>, t_s: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(a_c);
    m.fixed_view_mut::<4, 2>(0, 4).copy_from(b_c);
    m *= t_s;
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / f64::powi(2.0, squarings as i32);
    let mut exp = SMatrix::<f64, 6, 6>::identity();
    let mut term = SMatrix::<f64, 6, 6>::identity();
    for k in 1..=20 {
        term = term * scaled / k as f64;
        exp += term;
    }
    for _ in 0..squarings {
        exp = exp * exp;
    }
    (
        exp.fixed_view::<4, 4>(0, 0).into_owned(),
        exp.fixed_view::<4, 2>(0, 4).into_owned(),
    )
}

/// Affine term making the edge reference an exact solution of the
/// discrete model: `c = r_{k+1} - A r_k - B r_u`.
pub fn affine_term(
    edge: &Edge,
    a: &Matrix4<f64>,
    b: &Matrix4x2<f64>,
    t_s: f64,
) -> Vector4<f64> {
    let r_k = edge.reference_unchecked(0.0);
    reference_affine_term(&r_k, a, b, t_s)
}

pub(crate) fn reference_affine_term(
    r_k: &ReferenceState,
    a: &Matrix4<f64>,
    b: &Matrix4x2<f64>,
    t_s: f64,
) -> Vector4<f64> {
    let x_k = r_k.state().to_vector();
    let x_next = advance_reference(r_k, t_s).state().to_vector();
    let u_ref = nalgebra::Vector2::new(r_k.ru_a, r_k.ru_omega);
    x_next - a * x_k - b * u_ref
}

/// Reference sample `t_s` seconds later along a straight constant-speed edge.
pub fn advance_reference(r: &ReferenceState, t_s: f64) -> ReferenceState {
    let (sin, cos) = r.rtheta.sin_cos();
    ReferenceState {
        rx: r.rx + r.rv * t_s * cos,
        ry: r.ry + r.rv * t_s * sin,
        ..*r
    }
}

/// Affine discrete model `x_{k+1} = A x_k + B u_k + c` for one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Vector4<f64>,
    pub t_s: f64,
}

impl DiscreteModel {
    /// Linearize and discretize around the center-line reference of `edge`.
    pub fn for_edge(edge: &Edge, t_s: f64) -> Result<Self, DynamicsError> {
        let reference = edge.reference_unchecked(0.0);
        let (a_c, b_c) = jacobians(&reference);
        let (a, b) = discretize(&a_c, &b_c, t_s)?;
        let c = affine_term(edge, &a, &b, t_s);
        Ok(Self { a, b, c, t_s })
    }

    pub fn step(&self, x: &Vector4<f64>, u: &ControlInput) -> Vector4<f64> {
        self.a * x + self.b * nalgebra::Vector2::new(u.a, u.omega) + self.c
    }
}
