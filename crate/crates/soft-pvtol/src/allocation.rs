//! Control allocation: mapping commanded generalized forces to motor
//! thrusts and desired arm curvatures.
//!
//! The commanded body forces `(tau_x, tau_z)` are rotated into the body
//! frame, giving virtual inputs `(vx, vz)`; together with the pitch torque
//! they determine the four actuator values `(T_l, T_r, q_l_d, q_r_d)`
//! through a nonlinear fixed-point system built from the pseudoinverse of
//! the thrust map under the small-arc approximation `sin(q)/q ~ cos(q/2)`.
//! The system is solved by damped Newton iteration with a
//! finite-difference Jacobian, falling back to direct fixed-point sweeps
//! when a Newton step fails to reduce the residual.

use crate::dynamics::PhysicalParams;
use crate::kernels::{self, KernelConfig, KernelKind};
use nalgebra::{Matrix4, Vector4};

/// A commanded wrench `(tau_x, tau_z, tau_theta)` plus the current pitch
/// used to rotate the force into the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchCommand {
    pub tau_x: f64,
    pub tau_z: f64,
    pub tau_theta: f64,
    pub theta: f64,
}

/// Converged actuator values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationSolution {
    /// Left motor thrust (N), nonnegative.
    pub t_l: f64,
    /// Right motor thrust (N), nonnegative.
    pub t_r: f64,
    /// Desired left curvature (rad), inside (-pi/2, pi/2).
    pub q_l_d: f64,
    /// Desired right curvature (rad), inside (-pi/2, pi/2).
    pub q_r_d: f64,
    /// Max-norm of the fixed-point defect at the returned solution.
    pub residual_norm: f64,
    /// Newton/fixed-point iterations performed.
    pub iterations: u32,
    /// True when either thrust exceeds the configured limit. The solution
    /// is flagged, never clipped.
    pub saturated: bool,
}

impl AllocationSolution {
    pub fn as_array(&self) -> [f64; 4] {
        [self.t_l, self.t_r, self.q_l_d, self.q_r_d]
    }
}

/// Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Cold-start iterate `(T_l, T_r, q_l_d, q_r_d)`.
    pub initial_guess: [f64; 4],
    /// Convergence threshold on the residual max-norm.
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Initial Newton step scale in (0, 1].
    pub damping: f64,
    /// Thrust level above which solutions are flagged as saturated (N).
    pub thrust_limit: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            initial_guess: [20.0, 10.0, 0.4, -0.2],
            tolerance: 1e-10,
            max_iterations: 50,
            damping: 1.0,
            thrust_limit: 200.0,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SolverSettingsError {
    #[error("solver tolerance must be strictly positive, got {0}")]
    BadTolerance(f64),
    #[error("solver max_iterations must be at least 1")]
    BadMaxIterations,
    #[error("solver damping must lie in (0, 1], got {0}")]
    BadDamping(f64),
    #[error("solver thrust limit must be strictly positive, got {0}")]
    BadThrustLimit(f64),
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverSettingsError> {
        if !(self.tolerance > 0.0) {
            return Err(SolverSettingsError::BadTolerance(self.tolerance));
        }
        if self.max_iterations < 1 {
            return Err(SolverSettingsError::BadMaxIterations);
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverSettingsError::BadDamping(self.damping));
        }
        if !(self.thrust_limit > 0.0) {
            return Err(SolverSettingsError::BadThrustLimit(self.thrust_limit));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum AllocationError {
    #[error("allocation did not converge: residual {residual_norm:e} after {iterations} iterations")]
    NonConvergence { residual_norm: f64, iterations: u32 },
    #[error("infeasible command: {reason}")]
    Infeasible { reason: &'static str },
}

/// Rotates the commanded inertial forces into the body frame:
/// `vx = tau_x cos(theta) + tau_z sin(theta)`,
/// `vz = -tau_x sin(theta) + tau_z cos(theta)`.
pub fn to_body_virtual(cmd: &WrenchCommand) -> (f64, f64) {
    let (s, c) = cmd.theta.sin_cos();
    (
        cmd.tau_x * c + cmd.tau_z * s,
        -cmd.tau_x * s + cmd.tau_z * c,
    )
}

/// Exact thrust-to-wrench map: body virtual forces from the thrust
/// components along the bent arms, pitch torque through the true arc moment
/// arm `l sin(q)/q`, and rotation of the force pair into the inertial
/// frame.
pub fn exact_forward_map(
    t_l: f64,
    t_r: f64,
    q_l: f64,
    q_r: f64,
    theta: f64,
    p: &PhysicalParams,
    cfg: &KernelConfig,
) -> (f64, f64, f64) {
    let vx = -t_r * q_r.sin() + t_l * q_l.sin();
    let vz = t_r * q_r.cos() + t_l * q_l.cos();
    let tau_theta = p.l_r * t_r * q_r.cos() * kernels::eval(KernelKind::Sinc, q_r, cfg)
        - p.l_l * t_l * q_l.cos() * kernels::eval(KernelKind::Sinc, q_l, cfg);
    let (s, c) = theta.sin_cos();
    (c * vx - s * vz, s * vx + c * vz, tau_theta)
}

/// Same map with the moment arm approximated by `l cos(q/2)`; this is the
/// form the allocation inverts, so a converged solution reproduces the
/// commanded wrench exactly under this map.
pub fn approx_forward_map(
    t_l: f64,
    t_r: f64,
    q_l: f64,
    q_r: f64,
    theta: f64,
    p: &PhysicalParams,
) -> (f64, f64, f64) {
    let vx = -t_r * q_r.sin() + t_l * q_l.sin();
    let vz = t_r * q_r.cos() + t_l * q_l.cos();
    let tau_theta =
        p.l_r * t_r * q_r.cos() * (0.5 * q_r).cos() - p.l_l * t_l * q_l.cos() * (0.5 * q_l).cos();
    let (s, c) = theta.sin_cos();
    (c * vx - s * vz, s * vx + c * vz, tau_theta)
}

/// Pseudoinverse of the approximate thrust map: returns
/// `v = (T_r sin q_r, T_r cos q_r, T_l sin q_l, T_l cos q_l)` realizing the
/// body-frame command `(vx, vz, tau_theta)` at the given curvatures.
/// Well defined at `q_l = q_r = 0`; fails only when both arms fold to
/// `|q| = pi` and the combined moment arm vanishes.
pub fn pinv_map(
    vx: f64,
    vz: f64,
    tau_theta: f64,
    q_l: f64,
    q_r: f64,
    p: &PhysicalParams,
) -> Result<[f64; 4], AllocationError> {
    let cl = p.l_l * (0.5 * q_l).cos();
    let cr = p.l_r * (0.5 * q_r).cos();
    let s = cl + cr;
    if !(s.abs() > 1e-12) {
        return Err(AllocationError::Infeasible {
            reason: "combined moment arm vanishes (both curvatures at +/- pi)",
        });
    }
    Ok([
        -0.5 * vx,
        (cl * vz + tau_theta) / s,
        0.5 * vx,
        (cr * vz - tau_theta) / s,
    ])
}

/// Right-hand side of the fixed-point system: the thrust magnitudes and
/// arctangent curvature angles implied by the current iterate.
fn fixed_point_rhs(x: &[f64; 4], vx: f64, vz: f64, tau_theta: f64, p: &PhysicalParams) -> [f64; 4] {
    let (q_l, q_r) = (x[2], x[3]);
    let cl = p.l_l * (0.5 * q_l).cos();
    let cr = p.l_r * (0.5 * q_r).cos();
    let s = cl + cr;
    let num_l = cr * vz - tau_theta;
    let num_r = cl * vz + tau_theta;
    let half_vx = 0.5 * vx;
    [
        (half_vx * half_vx + (num_l / s) * (num_l / s)).sqrt(),
        (half_vx * half_vx + (num_r / s) * (num_r / s)).sqrt(),
        (vx * s / (2.0 * num_l)).atan(),
        (-vx * s / (2.0 * num_r)).atan(),
    ]
}

/// Fixed-point defect `f(x) = x - rhs(x)` whose root is the allocation
/// solution.
pub fn residual(
    x: &[f64; 4],
    vx: f64,
    vz: f64,
    tau_theta: f64,
    p: &PhysicalParams,
) -> [f64; 4] {
    let r = fixed_point_rhs(x, vx, vz, tau_theta, p);
    [x[0] - r[0], x[1] - r[1], x[2] - r[2], x[3] - r[3]]
}

fn norm_inf(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Solves the allocation system starting from the configured cold guess.
pub fn solve(
    vx: f64,
    vz: f64,
    tau_theta: f64,
    p: &PhysicalParams,
    settings: &SolverSettings,
) -> Result<AllocationSolution, AllocationError> {
    solve_with_guess(vx, vz, tau_theta, p, settings, settings.initial_guess)
}

/// Solves the allocation system from an explicit starting iterate
/// (used for warm starts from the previous step's solution). Deterministic:
/// identical inputs produce bit-identical outputs.
pub fn solve_with_guess(
    vx: f64,
    vz: f64,
    tau_theta: f64,
    p: &PhysicalParams,
    settings: &SolverSettings,
    guess: [f64; 4],
) -> Result<AllocationSolution, AllocationError> {
    const FD_STEP: f64 = 1e-7;
    let res = |x: &[f64; 4]| residual(x, vx, vz, tau_theta, p);

    let mut x = guess;
    let mut f = res(&x);
    let mut iterations = 0u32;

    loop {
        if !f.iter().all(|v| v.is_finite()) {
            return Err(AllocationError::Infeasible {
                reason: "fixed-point system evaluated to a non-finite value",
            });
        }
        let fnorm = norm_inf(&f);
        if fnorm <= settings.tolerance {
            let saturated = x[0] > settings.thrust_limit || x[1] > settings.thrust_limit;
            return Ok(AllocationSolution {
                t_l: x[0].max(0.0),
                t_r: x[1].max(0.0),
                q_l_d: x[2],
                q_r_d: x[3],
                residual_norm: fnorm,
                iterations,
                saturated,
            });
        }
        if iterations >= settings.max_iterations {
            return Err(AllocationError::NonConvergence {
                residual_norm: fnorm,
                iterations,
            });
        }
        iterations += 1;

        // Central finite-difference Jacobian of the defect.
        let mut jac = Matrix4::zeros();
        for j in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            let fp = res(&xp);
            let fm = res(&xm);
            for i in 0..4 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
            }
        }

        let newton = jac
            .lu()
            .solve(&Vector4::new(f[0], f[1], f[2], f[3]));

        let mut advanced = false;
        if let Some(dx) = newton {
            let mut alpha = settings.damping;
            for _ in 0..5 {
                let trial = [
                    x[0] - alpha * dx[0],
                    x[1] - alpha * dx[1],
                    x[2] - alpha * dx[2],
                    x[3] - alpha * dx[3],
                ];
                let ft = res(&trial);
                if ft.iter().all(|v| v.is_finite()) && norm_inf(&ft) < fnorm {
                    x = trial;
                    f = ft;
                    advanced = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !advanced {
            // Newton stalled: take one direct fixed-point sweep.
            x = fixed_point_rhs(&x, vx, vz, tau_theta, p);
            f = res(&x);
        }
    }
}
