//! The 5-DOF rigid-body-plus-flexible-arms model: inertia, Coriolis, and
//! gravity terms, forward dynamics, energies, and arc-tip kinematics.
//!
//! Generalized coordinates are `q = (x_v, z_v, theta, q_l, q_r)`: inertial
//! body position, pitch, and the left/right arm curvature angles. The model
//! is assembled from the curvature shape functions in [`crate::kernels`];
//! every matrix entry is finite for all curvatures, including `q_i = 0`.

use crate::kernels::{self, KernelConfig, KernelKind};
use crate::{Mat5, Vec2, Vec5};

/// Generalized force vector `(tau_x, tau_z, tau_theta, tau_l, tau_r)`:
/// inertial-frame forces on the body, pitch torque, and the two arm tendon
/// torques.
pub type ControlVector = Vec5;

/// Masses, inertias, and geometry of the vehicle.
///
/// `theta1()..theta6()` expose the grouped parameters the model is written
/// in; `rho1()..rho5()` are the same quantities scaled by `theta3`, used by
/// the positive-definiteness margin checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Body mass (kg).
    pub m: f64,
    /// Left rotor mass (kg), lumped at the arm tip.
    pub m_l: f64,
    /// Right rotor mass (kg), lumped at the arm tip.
    pub m_r: f64,
    /// Body pitch inertia (kg m^2).
    pub i_body: f64,
    /// Left arm inertia (kg m^2).
    pub i_l: f64,
    /// Right arm inertia (kg m^2).
    pub i_r: f64,
    /// Left arm length (m).
    pub l_l: f64,
    /// Right arm length (m).
    pub l_r: f64,
    /// Half length of the rigid frame (m). Enters the tip positions only;
    /// constant offsets drop out of the dynamics.
    pub epsilon: f64,
    /// Gravitational acceleration (m/s^2). Zero is allowed so conservative
    /// scenarios can be simulated.
    pub g: f64,
}

impl Default for PhysicalParams {
    /// The stock simulation parameter set.
    fn default() -> Self {
        PhysicalParams {
            m: 5.0,
            m_l: 1.0,
            m_r: 1.0,
            i_body: 1.0,
            i_l: 0.1,
            i_r: 0.1,
            l_l: 0.5,
            l_r: 0.5,
            epsilon: 0.0,
            g: 9.8,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParamError {
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error(
        "inertia matrix loses positive definiteness: total mass {lhs} must exceed \
         theta3^2/(l_l*theta3 + 4*theta5) = {rhs}"
    )]
    ArmCouplingTooStiff { lhs: f64, rhs: f64 },
    #[error(
        "inertia matrix determinant margin violated at straight arms: {lhs} must exceed {rhs}"
    )]
    DeterminantMargin { lhs: f64, rhs: f64 },
}

impl PhysicalParams {
    pub fn theta1(&self) -> f64 {
        self.m + self.m_l + self.m_r
    }
    pub fn theta2(&self) -> f64 {
        self.i_body
    }
    pub fn theta3(&self) -> f64 {
        self.l_l * self.m_l
    }
    pub fn theta4(&self) -> f64 {
        self.l_r * self.m_r
    }
    pub fn theta5(&self) -> f64 {
        self.i_l
    }
    pub fn theta6(&self) -> f64 {
        self.i_r
    }
    pub fn rho1(&self) -> f64 {
        self.theta1() / self.theta3()
    }
    pub fn rho2(&self) -> f64 {
        self.theta2() / self.theta3()
    }
    pub fn rho3(&self) -> f64 {
        self.theta5() / self.theta3()
    }
    pub fn rho4(&self) -> f64 {
        self.theta4() / self.theta3()
    }
    pub fn rho5(&self) -> f64 {
        self.theta6() / self.theta3()
    }

    /// Checks positivity of every physical quantity plus the two inertia
    /// positive-definiteness margins. The controller's stability guarantee
    /// rests on the inertia matrix being positive definite, so violations
    /// are hard errors.
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("m", self.m),
            ("m_l", self.m_l),
            ("m_r", self.m_r),
            ("I", self.i_body),
            ("I_l", self.i_l),
            ("I_r", self.i_r),
            ("l_l", self.l_l),
            ("l_r", self.l_r),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(ParamError::NonPositive { name, value });
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(ParamError::Negative {
                name: "epsilon",
                value: self.epsilon,
            });
        }
        if !(self.g >= 0.0) {
            return Err(ParamError::Negative {
                name: "g",
                value: self.g,
            });
        }

        // Leading 4x4 minor: theta1 > theta3^2 / (l_l theta3 + 4 theta5).
        let rhs = self.theta3().powi(2) / (self.l_l * self.theta3() + 4.0 * self.theta5());
        if !(self.theta1() > rhs) {
            return Err(ParamError::ArmCouplingTooStiff {
                lhs: self.theta1(),
                rhs,
            });
        }

        // Full determinant at the straight-arm worst case.
        let (r1, r3, r4, r5) = (self.rho1(), self.rho3(), self.rho4(), self.rho5());
        let (ll, lr) = (self.l_l, self.l_r);
        let lhs = 4.0 * r3 * r1 * r4 * lr + 16.0 * r3 * r1 * r5 + ll * r1 * r4 * lr
            + 4.0 * r1 * r5 * ll;
        let rhs = r4 * lr + 4.0 * r5 + 4.0 * r3 * r4 * r4 + ll * r4 * r4;
        if !(lhs > rhs) {
            return Err(ParamError::DeterminantMargin { lhs, rhs });
        }
        Ok(())
    }
}

/// Generalized coordinates and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenState {
    pub q: Vec5,
    pub qdot: Vec5,
}

impl GenState {
    pub fn new(q: Vec5, qdot: Vec5) -> Self {
        GenState { q, qdot }
    }

    pub fn at_rest(q: Vec5) -> Self {
        GenState {
            q,
            qdot: Vec5::zeros(),
        }
    }

    /// Whether both curvature angles lie in `[-pi, pi]`. Excursions are
    /// legal states (soft warning territory), so this is a query rather
    /// than a validation error.
    pub fn curvatures_within_bounds(&self) -> bool {
        self.q[3].abs() <= std::f64::consts::PI && self.q[4].abs() <= std::f64::consts::PI
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|x| x.is_finite()) && self.qdot.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum DynamicsError {
    #[error("inertia matrix is not positive definite at q_l={q_l}, q_r={q_r}")]
    NotPositiveDefinite { q_l: f64, q_r: f64 },
    #[error("inertia matrix ill-conditioned (condition estimate {cond:e} > 1e12)")]
    IllConditioned { cond: f64 },
}

/// Inertia matrix `D(q)`, symmetric by construction.
pub fn mass_matrix(q: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> Mat5 {
    let (ql, qr) = (q[3], q[4]);
    let d1 = kernels::eval(KernelKind::D1, ql, cfg);
    let d2 = kernels::eval(KernelKind::D2, ql, cfg);
    let d3 = kernels::eval(KernelKind::D3, qr, cfg);
    let d4 = kernels::eval(KernelKind::D4, qr, cfg);
    let d5 = kernels::eval(KernelKind::D5, ql, cfg);
    let d6 = kernels::eval(KernelKind::D6, qr, cfg);

    let mut d = Mat5::zeros();
    d[(0, 0)] = p.theta1();
    d[(1, 1)] = p.theta1();
    d[(2, 2)] = p.theta2();
    let d14 = p.theta3() * d1;
    let d15 = p.theta4() * d3;
    let d24 = p.theta3() * d2;
    let d25 = p.theta4() * d4;
    d[(0, 3)] = d14;
    d[(3, 0)] = d14;
    d[(0, 4)] = d15;
    d[(4, 0)] = d15;
    d[(1, 3)] = d24;
    d[(3, 1)] = d24;
    d[(1, 4)] = d25;
    d[(4, 1)] = d25;
    d[(3, 3)] = p.l_l * p.theta3() * d5 + p.theta5();
    d[(4, 4)] = p.l_r * p.theta4() * d6 + p.theta6();
    d
}

/// Inertia matrix assembled from the entrywise closed forms (the
/// term-by-term `d_mn` expressions), used to cross-validate the grouped
/// form above. Outside the switch radius this is an independent algebraic
/// route; inside it delegates to the same kernels.
pub fn mass_matrix_expanded(q: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> Mat5 {
    let raw = |ql: f64, l: f64, m: f64| -> (f64, f64, f64) {
        if ql.abs() >= cfg.delta {
            let (s, c) = (ql.sin(), ql.cos());
            let dx = -l * m * (c / ql - s / (ql * ql));
            let dz = -l * m * (1.0 / (ql * ql) - c / (ql * ql) - s / ql);
            let q2 = ql * ql;
            let q3 = q2 * ql;
            let q4 = q2 * q2;
            let dd = l * l * m * (1.0 / q2 + 2.0 / q4 - 2.0 * c / q4 - 2.0 * s / q3);
            (dx, dz, dd)
        } else {
            (
                l * m * kernels::eval(KernelKind::D1, ql, cfg),
                l * m * kernels::eval(KernelKind::D2, ql, cfg),
                l * l * m * kernels::eval(KernelKind::D5, ql, cfg),
            )
        }
    };

    let (d14, d24, dl) = raw(q[3], p.l_l, p.m_l);
    let (d15n, d25, dr) = raw(q[4], p.l_r, p.m_r);
    let d15 = -d15n; // sign flips for the right arm x-coupling

    let mut d = Mat5::zeros();
    d[(0, 0)] = p.m + p.m_l + p.m_r;
    d[(1, 1)] = p.m + p.m_l + p.m_r;
    d[(2, 2)] = p.i_body;
    d[(0, 3)] = d14;
    d[(3, 0)] = d14;
    d[(0, 4)] = d15;
    d[(4, 0)] = d15;
    d[(1, 3)] = d24;
    d[(3, 1)] = d24;
    d[(1, 4)] = d25;
    d[(4, 1)] = d25;
    d[(3, 3)] = dl + p.i_l;
    d[(4, 4)] = dr + p.i_r;
    d
}

/// Coriolis matrix `C(q, qdot)` in Christoffel form. Together with
/// [`mass_matrix_dot`] it satisfies the skew-symmetry of `Ddot - 2C`.
pub fn coriolis_matrix(q: &Vec5, qdot: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> Mat5 {
    let (ql, qr) = (q[3], q[4]);
    let (vl, vr) = (qdot[3], qdot[4]);
    let c1 = kernels::eval(KernelKind::C1, ql, cfg);
    let c2 = kernels::eval(KernelKind::C2, ql, cfg);
    let c3 = kernels::eval(KernelKind::C3, qr, cfg);
    let c4 = kernels::eval(KernelKind::C4, qr, cfg);
    let c5 = kernels::eval(KernelKind::C5, ql, cfg);
    let c6 = kernels::eval(KernelKind::C6, qr, cfg);

    let mut c = Mat5::zeros();
    c[(0, 3)] = p.theta3() * c1 * vl;
    c[(0, 4)] = -p.theta4() * c3 * vr;
    c[(1, 3)] = p.theta3() * c2 * vl;
    c[(1, 4)] = p.theta4() * c4 * vr;
    c[(3, 3)] = -2.0 * p.l_l * p.theta3() * c5 * vl;
    c[(4, 4)] = -2.0 * p.l_r * p.theta4() * c6 * vr;
    c
}

/// Coriolis matrix from the term-by-term simplification (the `c_mn`
/// expressions), used only as a cross-validation route for the Christoffel
/// form. Same switching behavior as [`mass_matrix_expanded`].
pub fn coriolis_matrix_expanded(
    q: &Vec5,
    qdot: &Vec5,
    p: &PhysicalParams,
    cfg: &KernelConfig,
) -> Mat5 {
    // Returns the three bracketed sums for one arm: the x-row, z-row, and
    // diagonal factors (without l*m scaling and without qdot).
    let brackets = |qa: f64| -> (f64, f64, f64) {
        if qa.abs() >= cfg.delta {
            let (s, c) = (qa.sin(), qa.cos());
            let q2 = qa * qa;
            let q3 = q2 * qa;
            let q4 = q2 * q2;
            let q5 = q4 * qa;
            let bx = (qa * s + c) / q2 + (qa * c - 2.0 * s) / q3;
            let bz = 2.0 / q3 - (qa * s + 2.0 * c) / q3 + (qa * c - s) / q2;
            let bd = -1.0 / q3 - 4.0 / q5 + (qa * s + 4.0 * c) / q5 - (qa * c - 3.0 * s) / q4;
            (bx, bz, bd)
        } else {
            (
                kernels::eval(KernelKind::C1, qa, cfg),
                kernels::eval(KernelKind::C2, qa, cfg),
                -2.0 * kernels::eval(KernelKind::C5, qa, cfg),
            )
        }
    };

    let (bxl, bzl, bdl) = brackets(q[3]);
    let (bxr, bzr, bdr) = brackets(q[4]);
    let (vl, vr) = (qdot[3], qdot[4]);

    let mut c = Mat5::zeros();
    c[(0, 3)] = p.l_l * p.m_l * bxl * vl;
    c[(0, 4)] = -p.l_r * p.m_r * bxr * vr;
    c[(1, 3)] = p.l_l * p.m_l * bzl * vl;
    c[(1, 4)] = p.l_r * p.m_r * bzr * vr;
    c[(3, 3)] = p.l_l * p.l_l * p.m_l * bdl * vl;
    c[(4, 4)] = p.l_r * p.l_r * p.m_r * bdr * vr;
    c
}

/// Gravity vector `g(q)`.
pub fn gravity_vector(q: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> Vec5 {
    let gl = kernels::eval(KernelKind::Grav, q[3], cfg);
    let gr = kernels::eval(KernelKind::Grav, q[4], cfg);
    Vec5::new(
        0.0,
        p.g * p.theta1(),
        0.0,
        p.g * p.theta3() * gl,
        p.g * p.theta4() * gr,
    )
}

/// Analytic time derivative of the inertia matrix along `(q, qdot)`.
///
/// Valid wherever the kernels are differentiable; inside the switch radius
/// in constant-limit mode the true derivative of the frozen matrix is zero,
/// so derivative-based checks sample `|q_i| >= delta`.
pub fn mass_matrix_dot(q: &Vec5, qdot: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> Mat5 {
    let (ql, qr) = (q[3], q[4]);
    let (vl, vr) = (qdot[3], qdot[4]);
    let c1 = kernels::eval(KernelKind::C1, ql, cfg);
    let c2 = kernels::eval(KernelKind::C2, ql, cfg);
    let c3 = kernels::eval(KernelKind::C3, qr, cfg);
    let c4 = kernels::eval(KernelKind::C4, qr, cfg);
    let c5 = kernels::eval(KernelKind::C5, ql, cfg);
    let c6 = kernels::eval(KernelKind::C6, qr, cfg);

    let mut m = Mat5::zeros();
    let d14 = p.theta3() * c1 * vl;
    let d15 = -p.theta4() * c3 * vr;
    let d24 = p.theta3() * c2 * vl;
    let d25 = p.theta4() * c4 * vr;
    m[(0, 3)] = d14;
    m[(3, 0)] = d14;
    m[(0, 4)] = d15;
    m[(4, 0)] = d15;
    m[(1, 3)] = d24;
    m[(3, 1)] = d24;
    m[(1, 4)] = d25;
    m[(4, 1)] = d25;
    m[(3, 3)] = -4.0 * p.l_l * p.theta3() * c5 * vl;
    m[(4, 4)] = -4.0 * p.l_r * p.theta4() * c6 * vr;
    m
}

/// Solves `D(q) qddot = tau - C(q, qdot) qdot - g(q)` for the generalized
/// accelerations via Cholesky factorization (the inertia matrix is
/// symmetric positive definite for valid parameters).
pub fn forward_dynamics(
    state: &GenState,
    tau: &ControlVector,
    p: &PhysicalParams,
    cfg: &KernelConfig,
) -> Result<Vec5, DynamicsError> {
    let d = mass_matrix(&state.q, p, cfg);
    let rhs = tau
        - coriolis_matrix(&state.q, &state.qdot, p, cfg) * state.qdot
        - gravity_vector(&state.q, p, cfg);
    let chol = nalgebra::linalg::Cholesky::new(d).ok_or(DynamicsError::NotPositiveDefinite {
        q_l: state.q[3],
        q_r: state.q[4],
    })?;
    // Lower bound on the 2-norm condition number from the factor diagonal;
    // triggering it means parameter validation was bypassed.
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..5 {
        lo = lo.min(l[(i, i)]);
        hi = hi.max(l[(i, i)]);
    }
    let cond = (hi / lo).powi(2);
    if cond > 1e12 {
        return Err(DynamicsError::IllConditioned { cond });
    }
    Ok(chol.solve(&rhs))
}

/// Kinetic energy `0.5 qdot^T D(q) qdot`.
pub fn kinetic_energy(state: &GenState, p: &PhysicalParams, cfg: &KernelConfig) -> f64 {
    let d = mass_matrix(&state.q, p, cfg);
    0.5 * state.qdot.dot(&(d * state.qdot))
}

/// Potential energy of the body and both tip masses.
pub fn potential_energy(q: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> f64 {
    let z = q[1];
    let hl = p.l_l * kernels::eval(KernelKind::Bend, q[3], cfg);
    let hr = p.l_r * kernels::eval(KernelKind::Bend, q[4], cfg);
    p.m * p.g * z + p.m_l * p.g * (z + hl) + p.m_r * p.g * (z + hr)
}

/// Total mechanical energy `H = K + P`.
pub fn total_energy(state: &GenState, p: &PhysicalParams, cfg: &KernelConfig) -> f64 {
    kinetic_energy(state, p, cfg) + potential_energy(&state.q, p, cfg)
}

/// Inertial positions of the body and of the two arc tips.
pub fn tip_positions(q: &Vec5, p: &PhysicalParams, cfg: &KernelConfig) -> (Vec2, Vec2, Vec2) {
    let (x, z) = (q[0], q[1]);
    let sl = kernels::eval(KernelKind::Sinc, q[3], cfg);
    let bl = kernels::eval(KernelKind::Bend, q[3], cfg);
    let sr = kernels::eval(KernelKind::Sinc, q[4], cfg);
    let br = kernels::eval(KernelKind::Bend, q[4], cfg);
    let pv = Vec2::new(x, z);
    let pl = Vec2::new(x - p.epsilon - p.l_l * sl, z + p.l_l * bl);
    let pr = Vec2::new(x + p.epsilon + p.l_r * sr, z + p.l_r * br);
    (pv, pl, pr)
}

/// Inertial velocities of the body and of the two arc tips.
pub fn tip_velocities(state: &GenState, p: &PhysicalParams, cfg: &KernelConfig) -> (Vec2, Vec2, Vec2) {
    let (xd, zd) = (state.qdot[0], state.qdot[1]);
    let (vl, vr) = (state.qdot[3], state.qdot[4]);
    let d1 = kernels::eval(KernelKind::D1, state.q[3], cfg);
    let gl = kernels::eval(KernelKind::Grav, state.q[3], cfg);
    let d3 = kernels::eval(KernelKind::D3, state.q[4], cfg);
    let gr = kernels::eval(KernelKind::Grav, state.q[4], cfg);
    let pv = Vec2::new(xd, zd);
    let pl = Vec2::new(xd + p.l_l * d1 * vl, zd + p.l_l * gl * vl);
    let pr = Vec2::new(xd + p.l_r * d3 * vr, zd + p.l_r * gr * vr);
    (pv, pl, pr)
}
