//! Passivity-based tracking control with Lyapunov diagnostics.
//!
//! The control law is the classic inertia-shaped tracking controller
//! `tau = D(q) a + C(q, qdot) v + g(q) - K r` with
//! `v = qdot_d - Lambda e`, `a = qddot_d - Lambda edot`, `r = qdot - v`,
//! which drives the tracking error to zero exponentially for any positive
//! diagonal `K`, `Lambda` (the closed loop reduces to
//! `D rdot + C r + K r = 0`, and the skew symmetry of `Ddot - 2C` cancels
//! the cross terms in the Lyapunov derivative).

use crate::dynamics::{self, ControlVector, GenState, PhysicalParams};
use crate::kernels::KernelConfig;
use crate::{Mat5, Vec5};

/// Diagonal controller gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    k: Vec5,
    lambda: Vec5,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GainsError {
    #[error("gain {name}[{index}] must be strictly positive, got {value}")]
    NonPositive {
        name: &'static str,
        index: usize,
        value: f64,
    },
}

impl Gains {
    pub fn new(k: Vec5, lambda: Vec5) -> Result<Self, GainsError> {
        for i in 0..5 {
            if !(k[i] > 0.0) {
                return Err(GainsError::NonPositive {
                    name: "K",
                    index: i + 1,
                    value: k[i],
                });
            }
            if !(lambda[i] > 0.0) {
                return Err(GainsError::NonPositive {
                    name: "Lambda",
                    index: i + 1,
                    value: lambda[i],
                });
            }
        }
        Ok(Gains { k, lambda })
    }

    pub fn k(&self) -> &Vec5 {
        &self.k
    }

    pub fn lambda(&self) -> &Vec5 {
        &self.lambda
    }
}

impl Default for Gains {
    /// Stock gains for the bundled scenario. `K` acts on the combined error
    /// `r`, so the effective PD pair is `(K Lambda, K)`.
    fn default() -> Self {
        Gains {
            k: Vec5::new(2.55, 2.55, 10.5, 21.0, 21.0),
            lambda: Vec5::new(1.0, 1.0, 5.0, 10.0, 10.0),
        }
    }
}

/// Desired position, velocity, and acceleration for all five coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub q_d: Vec5,
    pub qdot_d: Vec5,
    pub qddot_d: Vec5,
}

impl ReferenceSample {
    pub fn hold(q_d: Vec5) -> Self {
        ReferenceSample {
            q_d,
            qdot_d: Vec5::zeros(),
            qddot_d: Vec5::zeros(),
        }
    }

    /// Replaces the arm entries (indices 3, 4) of position, velocity, and
    /// acceleration.
    pub fn with_arms(mut self, arms: &ArmReference) -> Self {
        self.q_d[3] = arms.q[0];
        self.q_d[4] = arms.q[1];
        self.qdot_d[3] = arms.qdot[0];
        self.qdot_d[4] = arms.qdot[1];
        self.qddot_d[3] = arms.qddot[0];
        self.qddot_d[4] = arms.qddot[1];
        self
    }
}

/// Tracking controller.
pub fn tracking_control(
    state: &GenState,
    reference: &ReferenceSample,
    gains: &Gains,
    p: &PhysicalParams,
    cfg: &KernelConfig,
) -> ControlVector {
    let e = state.q - reference.q_d;
    let edot = state.qdot - reference.qdot_d;
    let v = reference.qdot_d - gains.lambda.component_mul(&e);
    let a = reference.qddot_d - gains.lambda.component_mul(&edot);
    let r = state.qdot - v;
    dynamics::mass_matrix(&state.q, p, cfg) * a
        + dynamics::coriolis_matrix(&state.q, &state.qdot, p, cfg) * v
        + dynamics::gravity_vector(&state.q, p, cfg)
        - gains.k.component_mul(&r)
}

/// The bundled pose trajectory: a sinusoidal sweep in `x`, a slow vertical
/// oscillation in `z`, and zero pitch. Arm entries are left at zero; the
/// closed loop fills them from the allocation feedback, and the smooth
/// verification scenario uses [`prescribed_reference`].
pub fn pose_reference(t: f64) -> ReferenceSample {
    let q_d = Vec5::new(4.0 * (0.5 * t).sin(), 3.0 * (0.1 * t).cos() + 4.0, 0.0, 0.0, 0.0);
    let qdot_d = Vec5::new(2.0 * (0.5 * t).cos(), -0.3 * (0.1 * t).sin(), 0.0, 0.0, 0.0);
    let qddot_d = Vec5::new(-(0.5 * t).sin(), -0.03 * (0.1 * t).cos(), 0.0, 0.0, 0.0);
    ReferenceSample {
        q_d,
        qdot_d,
        qddot_d,
    }
}

/// Fully prescribed smooth 5-DOF reference: the pose trajectory plus
/// analytic arm profiles. Used when the allocation loop is bypassed and the
/// exponential-decay guarantee is checked directly.
pub fn prescribed_reference(t: f64) -> ReferenceSample {
    let mut r = pose_reference(t);
    r.q_d[3] = 0.4 * (0.5 * t).sin();
    r.qdot_d[3] = 0.2 * (0.5 * t).cos();
    r.qddot_d[3] = -0.1 * (0.5 * t).sin();
    r.q_d[4] = -0.3 * (0.4 * t).cos();
    r.qdot_d[4] = 0.12 * (0.4 * t).sin();
    r.qddot_d[4] = 0.048 * (0.4 * t).cos();
    r
}

/// Filtered arm reference with derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmReference {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    pub qddot: [f64; 2],
}

impl ArmReference {
    pub fn hold(q: [f64; 2]) -> Self {
        ArmReference {
            q,
            qdot: [0.0; 2],
            qddot: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FilterError {
    #[error("filter time constant must be strictly positive, got {0}")]
    BadTimeConstant(f64),
}

/// First-order low-pass filter that turns the piecewise-smooth allocation
/// outputs into differentiable arm references. Velocity and acceleration
/// come from backward differences of the filtered signal; on the first
/// sample both derivatives are zero.
#[derive(Debug, Clone)]
pub struct ArmRefFilter {
    time_constant: f64,
    state: Option<Inner>,
}

#[derive(Debug, Clone, Copy)]
struct Inner {
    value: [f64; 2],
    rate: [f64; 2],
}

impl ArmRefFilter {
    pub fn new(time_constant: f64) -> Result<Self, FilterError> {
        if !(time_constant > 0.0) {
            return Err(FilterError::BadTimeConstant(time_constant));
        }
        Ok(ArmRefFilter {
            time_constant,
            state: None,
        })
    }

    /// A filter pre-seeded at `value` with zero derivatives, used to break
    /// the algebraic loop at the first control step.
    pub fn seeded(time_constant: f64, value: [f64; 2]) -> Result<Self, FilterError> {
        let mut f = ArmRefFilter::new(time_constant)?;
        f.state = Some(Inner {
            value,
            rate: [0.0; 2],
        });
        Ok(f)
    }

    pub fn time_constant(&self) -> f64 {
        self.time_constant
    }

    /// Advances the filter by one sample of the raw reference and returns
    /// the filtered reference with derivatives.
    pub fn update(&mut self, raw: [f64; 2], h: f64) -> ArmReference {
        debug_assert!(h > 0.0);
        match self.state {
            None => {
                self.state = Some(Inner {
                    value: raw,
                    rate: [0.0; 2],
                });
                ArmReference::hold(raw)
            }
            Some(prev) => {
                // Exact discretization of tc * xdot = u - x over one step.
                let alpha = 1.0 - (-h / self.time_constant).exp();
                let mut value = [0.0; 2];
                let mut rate = [0.0; 2];
                let mut accel = [0.0; 2];
                for i in 0..2 {
                    value[i] = prev.value[i] + alpha * (raw[i] - prev.value[i]);
                    rate[i] = (value[i] - prev.value[i]) / h;
                    accel[i] = (rate[i] - prev.rate[i]) / h;
                }
                self.state = Some(Inner { value, rate });
                ArmReference {
                    q: value,
                    qdot: rate,
                    qddot: accel,
                }
            }
        }
    }
}

/// Lyapunov function `V = 0.5 r^T D(q) r + e^T Lambda K e` and the combined
/// error `r` it is built from.
pub fn lyapunov_value(
    state: &GenState,
    reference: &ReferenceSample,
    gains: &Gains,
    p: &PhysicalParams,
    cfg: &KernelConfig,
) -> (f64, Vec5) {
    let e = state.q - reference.q_d;
    let v = reference.qdot_d - gains.lambda.component_mul(&e);
    let r = state.qdot - v;
    let d = dynamics::mass_matrix(&state.q, p, cfg);
    let lam_k = gains.lambda.component_mul(&gains.k);
    let value = 0.5 * r.dot(&(d * r)) + e.component_mul(&lam_k).dot(&e);
    (value, r)
}

/// Guaranteed exponential decay rate of the Lyapunov function:
/// `rho = lambda_min(Q) / max_q lambda_max(P(q))` with
/// `Q = [[K, K Lambda], [K Lambda, 2 Lambda K Lambda]]` and
/// `P(q) = blockdiag(D(q)/2, Lambda K)`.
pub fn decay_rate_bound(
    gains: &Gains,
    p: &PhysicalParams,
    q_samples: &[Vec5],
    cfg: &KernelConfig,
) -> f64 {
    assert!(!q_samples.is_empty(), "need at least one configuration sample");
    // Q decouples into per-coordinate 2x2 blocks [[k, k l], [k l, 2 k l^2]]
    // because K and Lambda are diagonal.
    let mut q_min = f64::INFINITY;
    for i in 0..5 {
        let (k, l) = (gains.k[i], gains.lambda[i]);
        let tr = k * (1.0 + 2.0 * l * l);
        let det = k * k * l * l;
        let lo = 0.5 * (tr - (tr * tr - 4.0 * det).sqrt());
        q_min = q_min.min(lo);
    }

    let mut p_max: f64 = gains
        .k
        .component_mul(&gains.lambda)
        .iter()
        .fold(0.0, |a, &b| a.max(b));
    for q in q_samples {
        let d = dynamics::mass_matrix(q, p, cfg);
        let eig = nalgebra::linalg::SymmetricEigen::new(d);
        p_max = p_max.max(0.5 * eig.eigenvalues.max());
    }
    q_min / p_max
}

/// Diagonal matrix view of a gain vector, occasionally handy in tests.
pub fn diag(v: &Vec5) -> Mat5 {
    Mat5::from_diagonal(v)
}
