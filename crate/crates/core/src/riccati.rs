//! Low-gain continuous algebraic Riccati equation
//!
//! ```text
//! A^T P + P A - P B B^T P + eps I = 0
//! ```
//!
//! solved through the stable invariant subspace of the Hamiltonian
//! `[[A, -B B^T], [-eps I, -A^T]]` (ordered complex Schur form), followed by a
//! Newton–Kleinman correction.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::model::AgentModel;

/// Smallest low-gain parameter accepted; smaller requests are raised to it.
pub const EPSILON_FLOOR: f64 = 1e-12;
/// Condition number of the subspace basis beyond which the solve is refused.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CareSolution {
    /// Effective low-gain parameter (after clamping to [`EPSILON_FLOOR`]).
    pub epsilon: f64,
    #[serde(with = "linalg::rows")]
    pub p: Mat,
    /// Frobenius norm of the Riccati residual at `p`.
    pub residual_norm: f64,
}

/// Frobenius norm of `A^T P + P A - P B B^T P + eps I`.
pub fn residual(model: &AgentModel, epsilon: f64, p: &Mat) -> f64 {
    residual_matrix(model.a(), &model.bbt(), epsilon, p).norm()
}

fn residual_matrix(a: &Mat, bbt: &Mat, epsilon: f64, p: &Mat) -> Mat {
    let n = a.nrows();
    a.transpose() * p + p * a - p * bbt * p + Mat::identity(n, n) * epsilon
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of an upper-triangular `t`,
/// updating the unitary factor `q` so that `q t q^H` is unchanged.
fn swap_schur_pair(t: &mut CMat, q: &mut CMat, k: usize) {
    let a = t[(k, k)];
    let b = t[(k, k + 1)];
    let c = t[(k + 1, k + 1)];
    // eigenvector of the 2x2 block for eigenvalue c
    let x0 = b;
    let x1 = c - a;
    let norm = (x0.norm_sqr() + x1.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    let (g1, g2) = (x0 / norm, x1 / norm);
    // unitary with first column (g1, g2)
    let g = [[g1, -g2.conj()], [g2, g1.conj()]];

    let dim = t.ncols();
    for col in 0..dim {
        let (u, v) = (t[(k, col)], t[(k + 1, col)]);
        t[(k, col)] = g[0][0].conj() * u + g[1][0].conj() * v;
        t[(k + 1, col)] = g[0][1].conj() * u + g[1][1].conj() * v;
    }
    for row in 0..dim {
        let (u, v) = (t[(row, k)], t[(row, k + 1)]);
        t[(row, k)] = u * g[0][0] + v * g[1][0];
        t[(row, k + 1)] = u * g[0][1] + v * g[1][1];
    }
    for row in 0..q.nrows() {
        let (u, v) = (q[(row, k)], q[(row, k + 1)]);
        q[(row, k)] = u * g[0][0] + v * g[1][0];
        q[(row, k + 1)] = u * g[0][1] + v * g[1][1];
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

/// Reorders a complex Schur form so that eigenvalues with negative real part
/// occupy the leading block. Returns how many there are.
fn order_stable_first(t: &mut CMat, q: &mut CMat) -> usize {
    let dim = t.ncols();
    loop {
        let mut swapped = false;
        for k in 0..dim.saturating_sub(1) {
            if t[(k, k)].re >= 0.0 && t[(k + 1, k + 1)].re < 0.0 {
                swap_schur_pair(t, q, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    (0..dim).filter(|&k| t[(k, k)].re < 0.0).count()
}

fn schur_solution(a: &Mat, bbt: &Mat, epsilon: f64) -> Result<Mat> {
    let n = a.nrows();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-bbt));
    h.view_mut((n, 0), (n, n)).copy_from(&(Mat::identity(n, n) * -epsilon));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let (mut q, mut t) = linalg::complex_schur(linalg::to_complex(&h))?;
    let stable = order_stable_first(&mut t, &mut q);
    if stable != n {
        return Err(Error::numerical(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {n} \
             (eigenvalues on or near the imaginary axis)"
        )));
    }
    let u1 = q.view((0, 0), (n, n)).clone_owned();
    let u2 = q.view((n, 0), (n, n)).clone_owned();
    let (smin, smax) = linalg::sigma_range_c(&u1);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_BASIS_CONDITION {
        return Err(Error::numerical(format!(
            "stable subspace basis is ill-conditioned (cond = {cond:.3e} > {MAX_BASIS_CONDITION:.0e})"
        )));
    }
    // P U1 = U2  <=>  U1^T P^T = U2^T
    let pt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| Error::numerical("stable subspace basis is singular"))?;
    let p = pt.transpose().map(|z| z.re);
    Ok((&p + p.transpose()) * 0.5)
}

/// One Newton–Kleinman step: solves
/// `(A - BB^T P)^T X + X (A - BB^T P) + eps I + P BB^T P = 0`.
fn newton_step(a: &Mat, bbt: &Mat, epsilon: f64, p: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let ak = a - bbt * p;
    let q = Mat::identity(n, n) * epsilon + p * bbt * p;
    linalg::lyapunov(&ak, &q)
}

/// Stabilizing solution of the low-gain Riccati equation.
pub fn solve_care(model: &AgentModel, epsilon: f64) -> Result<CareSolution> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid(format!(
            "low-gain parameter must be positive, got {epsilon}"
        )));
    }
    let epsilon = epsilon.max(EPSILON_FLOOR);
    let a = model.a();
    let bbt = model.bbt();

    let mut p = schur_solution(a, &bbt, epsilon)?;
    let mut res = residual_matrix(a, &bbt, epsilon, &p).norm();
    if let Ok(refined) = newton_step(a, &bbt, epsilon, &p) {
        let refined_res = residual_matrix(a, &bbt, epsilon, &refined).norm();
        if refined_res <= res {
            p = refined;
            res = refined_res;
        }
    }

    let p_norm = linalg::spectral_norm(&p);
    if res > 1e-8 * (1.0 + p_norm * p_norm) {
        return Err(Error::numerical(format!(
            "Riccati residual {res:.3e} exceeds tolerance at eps = {epsilon:.3e}"
        )));
    }
    let min_eig = nalgebra::SymmetricEigen::new(p.clone())
        .eigenvalues
        .min();
    if min_eig <= 0.0 {
        return Err(Error::numerical(format!(
            "Riccati solution is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }
    if !linalg::is_hurwitz(&(a - &bbt * &p))? {
        return Err(Error::numerical("A - BB^T P is not Hurwitz"));
    }
    Ok(CareSolution {
        epsilon,
        p,
        residual_norm: res,
    })
}
