//! Hover linearization and continuous-time LQR synthesis.
//!
//! Around hover the rotational dynamics reduce to three independent double
//! integrators on `x = [φ, φ̇, θ, θ̇, ψ, ψ̇]` driven by `u = [τφ, τθ, τψ]`.
//! The gain `K = R⁻¹BᵀP` comes from the stabilizing solution of
//!
//! ```text
//! AᵀP + PA − PBR⁻¹BᵀP + Q = 0
//! ```
//!
//! solved per axis with Newton–Kleinman iteration: each step solves a
//! Lyapunov equation for the current closed loop and updates the gain.

use nalgebra::{DMatrix, Matrix6, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, QuadParams, RigidBodyState};
use crate::error::{Error, Result};

/// Riccati residual bound accepted by [`solve_lqr`].
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Closed-loop eigenvalues must satisfy `Re λ < −HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-6;

/// Diagonal state and input weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrWeights {
    /// `(φ, φ̇, θ, θ̇, ψ, ψ̇)` weights.
    pub q_diag: [f64; 6],
    /// `(τφ, τθ, τψ)` weights.
    pub r_diag: [f64; 3],
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q_diag: [5.0, 0.1, 5.0, 0.1, 1.0, 0.05],
            r_diag: [0.01; 3],
        }
    }
}

impl LqrWeights {
    pub fn validate(&self) -> Result<()> {
        if self.q_diag.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::Lqr("Q weights must be finite and non-negative".into()));
        }
        if self.q_diag.chunks(2).any(|pair| pair.iter().all(|q| *q == 0.0)) {
            return Err(Error::Lqr("each axis needs a positive Q weight".into()));
        }
        if self.r_diag.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Lqr("R weights must be positive".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            q_diag: self.q_diag.map(|q| q * c),
            r_diag: self.r_diag.map(|r| r * c),
        }
    }
}

/// Linear model `ẋ = Ax + Bu` of the attitude subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix6<f64>,
    pub b: SMatrix<f64, 6, 3>,
}

/// State-feedback gain, `u = −Kx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMatrix(pub SMatrix<f64, 3, 6>);

impl GainMatrix {
    pub fn matrix(&self) -> &SMatrix<f64, 3, 6> {
        &self.0
    }
}

/// Gain together with the Riccati solution that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub gain: GainMatrix,
    pub riccati: Matrix6<f64>,
    /// Frobenius norm of the Riccati residual.
    pub residual: f64,
    /// Largest real part among the closed-loop eigenvalues.
    pub max_real_eigenvalue: f64,
}

/// Linearization about hover: gyroscopic cross terms vanish at zero rates.
pub fn linearize_hover(params: &QuadParams) -> LinearModel {
    let mut a = Matrix6::zeros();
    let mut b = SMatrix::<f64, 6, 3>::zeros();
    for axis in 0..3 {
        a[(2 * axis, 2 * axis + 1)] = 1.0;
        b[(2 * axis + 1, axis)] = 1.0 / params.inertia_diag[axis];
    }
    LinearModel { a, b }
}

/// Result of a dense CARE solve.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Lqr("R is singular".into()))?;
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    Ok(res.norm())
}

/// Solves `AclᵀP + P·Acl = −C` through its Kronecker form.
fn solve_lyapunov(acl: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = acl.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = acl.transpose();
    // column-major vec: vec(AᵀP) = (I ⊗ Aᵀ) vec P, vec(PA) = (Aᵀ ⊗ I) vec P
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, (-c).as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Lqr("closed loop has an eigenvalue pair summing to zero".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Newton–Kleinman iteration for the continuous algebraic Riccati equation,
/// started from a stabilizing gain `k0`.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: &DMatrix<f64>,
) -> Result<CareSolution> {
    const MAX_ITER: usize = 200;
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Lqr("R must be symmetric positive definite".into()))?;
    if max_real_eigenvalue(&(a - b * k0)) >= 0.0 {
        return Err(Error::Lqr("initial gain does not stabilize the plant".into()));
    }
    let mut k = k0.clone();
    let mut p = DMatrix::zeros(a.nrows(), a.ncols());
    let mut iterations = 0;
    let mut prev_step = f64::INFINITY;
    while iterations < MAX_ITER {
        iterations += 1;
        let acl = a - b * &k;
        let c = q + k.transpose() * r * &k;
        p = solve_lyapunov(&acl, &c)?;
        let k_next = r_chol.solve(&(b.transpose() * &p));
        let step = (&k_next - &k).norm();
        k = k_next;
        // quadratic convergence stalls at round-off; stop once steps stop shrinking
        if step <= 1e-15 * (1.0 + k.norm()) || (step >= prev_step && step < 1e-9 * (1.0 + k.norm())) {
            break;
        }
        prev_step = step;
    }
    let residual = care_residual(a, b, q, r, &p)?;
    Ok(CareSolution {
        p,
        k,
        residual,
        iterations,
    })
}

/// Stabilizing start for a controllable single-input 2-state block, by
/// Ackermann placement of a double pole at `−ω`.
fn initial_block_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let omega = 1.0 + a.norm();
    let ctrb = DMatrix::from_columns(&[b.column(0).into_owned(), (a * b).column(0).into_owned()]);
    let ctrb_inv = ctrb
        .try_inverse()
        .ok_or_else(|| Error::Lqr("attitude axis is not controllable".into()))?;
    let eye = DMatrix::<f64>::identity(2, 2);
    let char_poly = a * a + a * (2.0 * omega) + eye * (omega * omega);
    let last = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    Ok(last * ctrb_inv * char_poly)
}

/// LQR gain for the hover attitude model, solving the three decoupled axes
/// independently and checking the assembled 6-state residual.
pub fn solve_lqr(model: &LinearModel, weights: &LqrWeights) -> Result<LqrSolution> {
    weights.validate()?;
    for row in 0..6 {
        for col in 0..6 {
            if row / 2 != col / 2 && model.a[(row, col)] != 0.0 {
                return Err(Error::Lqr("A is not block-decoupled by axis".into()));
            }
        }
        for input in 0..3 {
            if row / 2 != input && model.b[(row, input)] != 0.0 {
                return Err(Error::Lqr("B couples axes".into()));
            }
        }
    }

    let mut k_full = SMatrix::<f64, 3, 6>::zeros();
    let mut p_full = Matrix6::zeros();
    for axis in 0..3 {
        let o = 2 * axis;
        let a = DMatrix::from_fn(2, 2, |i, j| model.a[(o + i, o + j)]);
        let b = DMatrix::from_fn(2, 1, |i, _| model.b[(o + i, axis)]);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.q_diag[o..o + 2]));
        let r = DMatrix::from_element(1, 1, weights.r_diag[axis]);
        let k0 = initial_block_gain(&a, &b)?;
        let sol = solve_care(&a, &b, &q, &r, &k0)?;
        for j in 0..2 {
            k_full[(axis, o + j)] = sol.k[(0, j)];
            for i in 0..2 {
                p_full[(o + i, o + j)] = sol.p[(i, j)];
            }
        }
    }

    let a = DMatrix::from_fn(6, 6, |i, j| model.a[(i, j)]);
    let b = DMatrix::from_fn(6, 3, |i, j| model.b[(i, j)]);
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.q_diag));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.r_diag));
    let p = DMatrix::from_fn(6, 6, |i, j| p_full[(i, j)]);
    let residual = care_residual(&a, &b, &q, &r, &p)?;
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::Lqr(format!("Riccati residual {residual:e} exceeds {RESIDUAL_TOL:e}")));
    }
    let k = DMatrix::from_fn(3, 6, |i, j| k_full[(i, j)]);
    let max_re = max_real_eigenvalue(&(a - b * k));
    if !(max_re < -HURWITZ_MARGIN) {
        return Err(Error::Lqr(format!("closed loop not Hurwitz (max Re λ = {max_re:e})")));
    }
    Ok(LqrSolution {
        gain: GainMatrix(k_full),
        riccati: p_full,
        residual,
        max_real_eigenvalue: max_re,
    })
}

/// Regulation error state `[e_φ, −φ̇, e_θ, −θ̇, e_ψ, −ψ̇]`.
pub fn regulation_error(state: &RigidBodyState, setpoint: &Vector3<f64>) -> SMatrix<f64, 6, 1> {
    let mut x = SMatrix::<f64, 6, 1>::zeros();
    for axis in 0..3 {
        x[2 * axis] = wrap_angle(setpoint[axis] - state.attitude[axis]);
        x[2 * axis + 1] = -state.attitude_rate[axis];
    }
    x
}

/// `u = −Kx` with `x` the deviation from the setpoint, i.e. `u = K·x_err`.
pub fn lqr_attitude(state: &RigidBodyState, setpoint: &Vector3<f64>, gain: &GainMatrix) -> Vector3<f64> {
    gain.0 * regulation_error(state, setpoint)
}

/// Roll/pitch gain for the spinning-vehicle model, state `[φ, φ̇, θ, θ̇]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinGain {
    pub k: SMatrix<f64, 2, 4>,
    pub yaw_rate: f64,
}

/// Roll/pitch dynamics linearized about level attitude at a steady yaw
/// rate `Ω`. The gyroscopic terms couple the two rates:
///
/// ```text
/// φ̈ = τφ/Ix − (Iy − Iz)/Ix · Ω θ̇
/// θ̈ = τθ/Iy − (Iz − Ix)/Iy · Ω φ̇
/// ```
pub fn linearize_spinning(params: &QuadParams, yaw_rate: f64) -> (SMatrix<f64, 4, 4>, SMatrix<f64, 4, 2>) {
    let [ix, iy, iz] = params.inertia_diag;
    let mut a = SMatrix::<f64, 4, 4>::zeros();
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(1, 3)] = -(iy - iz) / ix * yaw_rate;
    a[(3, 1)] = -(iz - ix) / iy * yaw_rate;
    let mut b = SMatrix::<f64, 4, 2>::zeros();
    b[(1, 0)] = 1.0 / ix;
    b[(3, 1)] = 1.0 / iy;
    (a, b)
}

/// LQR on [`linearize_spinning`] with the roll and pitch entries of
/// `weights`. `warm` seeds the iteration; the hover gain is the fallback
/// start, which stabilizes every yaw rate because the coupling is lossless.
pub fn solve_spin_lqr(
    params: &QuadParams,
    weights: &LqrWeights,
    yaw_rate: f64,
    warm: Option<&SpinGain>,
) -> Result<SpinGain> {
    weights.validate()?;
    let (a, b) = linearize_spinning(params, yaw_rate);
    let a = DMatrix::from_fn(4, 4, |i, j| a[(i, j)]);
    let b = DMatrix::from_fn(4, 2, |i, j| b[(i, j)]);
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.q_diag[0..4]));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&weights.r_diag[0..2]));
    let hover = solve_lqr(&linearize_hover(params), weights)?.gain.0;
    let hover_k0 = DMatrix::from_fn(2, 4, |i, j| hover[(i, j)]);
    let sol = match warm {
        Some(w) => solve_care(&a, &b, &q, &r, &DMatrix::from_fn(2, 4, |i, j| w.k[(i, j)]))
            .or_else(|_| solve_care(&a, &b, &q, &r, &hover_k0))?,
        None => solve_care(&a, &b, &q, &r, &hover_k0)?,
    };
    if !(sol.residual <= RESIDUAL_TOL * (1.0 + sol.p.norm())) {
        return Err(Error::Lqr(format!("spin Riccati residual {:e}", sol.residual)));
    }
    Ok(SpinGain {
        k: SMatrix::from_fn(|i, j| sol.k[(i, j)]),
        yaw_rate,
    })
}

/// Roll/pitch torques tracking a tilt that is fixed in the world frame
/// while the vehicle spins at yaw rate `Ω`.
///
/// In heading coordinates such a tilt rotates backwards at `Ω`, so the
/// reference carries rates `φ̇ = Ωθ_d`, `θ̇ = −Ωφ_d`. The feed-forward
/// torque covers the part of that motion the gyroscopic coupling does not
/// supply by itself (zero when `Iz − Iy = Ix` and `Iz − Ix = Iy`).
pub fn spin_tilt_attitude(state: &RigidBodyState, tilt: (f64, f64), gain: &SpinGain, params: &QuadParams) -> (f64, f64) {
    let [ix, iy, iz] = params.inertia_diag;
    let w = state.attitude_rate.z;
    let (phi_d, theta_d) = tilt;
    let err = SMatrix::<f64, 4, 1>::new(
        wrap_angle(state.attitude.x - phi_d),
        state.attitude_rate.x - w * theta_d,
        wrap_angle(state.attitude.y - theta_d),
        state.attitude_rate.y + w * phi_d,
    );
    let u = -gain.k * err;
    let k1 = (iz - iy) / ix;
    let k2 = (iz - ix) / iy;
    let ff_phi = ix * (1.0 - k1) * (-w * w * phi_d);
    let ff_theta = iy * (1.0 - k2) * (-w * w * theta_d);
    (u[0] + ff_phi, u[1] + ff_theta)
}
