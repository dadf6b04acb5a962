use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use super::observer::{default_observer_poles, design_observer_gain, observer_gain_by_riccati};
use super::{CouplingMode, ProtocolParams};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{self, AgentModel};
use crate::riccati::{self, CareSolution};

/// Default relative margin of `rho` over its lower bound.
pub const RHO_MARGIN: f64 = 0.01;
/// The single-agent delay margin must exceed `tau_bar` by this fraction for
/// the delay-margin criterion to accept an epsilon.
pub const DELAY_MARGIN_SLACK: f64 = 0.01;
/// Decades tried by [`select_epsilon`]: `1, 1e-1, ..., 1e-12`.
const EPSILON_DECADES: i32 = 12;
/// Frequency samples used for the high-frequency floor `mu`.
const MU_GRID_POINTS: usize = 2000;
/// Phase samples of the delay-margin scan.
const PHASE_SCAN_POINTS: usize = 2048;

/// `rho = (1 + margin) * max(1, 1 / cos(tau_bar * omega_max))`.
pub fn design_rho(omega_max: f64, tau_bar: f64, margin: f64) -> Result<f64> {
    if !(omega_max.is_finite() && omega_max >= 0.0) {
        return Err(Error::invalid(format!("omega_max must be >= 0, got {omega_max}")));
    }
    if !(tau_bar.is_finite() && tau_bar >= 0.0) {
        return Err(Error::invalid(format!("tau_bar must be >= 0, got {tau_bar}")));
    }
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::invalid(format!("rho margin must be > 0, got {margin}")));
    }
    let phase = tau_bar * omega_max;
    if phase >= FRAC_PI_2 {
        return Err(Error::Unsolvable(format!(
            "tau_bar * omega_max = {tau_bar} * {omega_max} = {phase:.6} violates \
             tau_bar * omega_max < pi/2 = {FRAC_PI_2:.6}"
        )));
    }
    Ok((1.0 + margin) * (1.0 / phase.cos()).max(1.0))
}

/// Largest `theta >= 0` with `rho cos(tau_bar w) > 1` for all `|w| < omega_max + theta`.
///
/// With `tau_bar = 0` every frequency qualifies and `theta` is capped at
/// `||A|| + 1`, which empties the band where `mu` is measured.
pub fn theta_for(rho: f64, tau_bar: f64, omega_max: f64, a_norm: f64) -> f64 {
    if tau_bar == 0.0 {
        return a_norm + 1.0;
    }
    if rho <= 1.0 {
        return 0.0;
    }
    ((1.0 / rho).acos() / tau_bar - omega_max).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonCriterion {
    /// `||rho B B^T P|| <= mu / 2`.
    NormBound,
    /// The single-agent loop `x' = A x - rho B B^T P x(t - tau)` keeps every
    /// root off the imaginary axis for all `tau` in `[0, tau_bar]`.
    DelayMargin,
    /// Supplied by the caller.
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSelection {
    pub epsilon: f64,
    pub care: CareSolution,
    pub theta: f64,
    pub mu: f64,
    pub omega_bar: f64,
    /// `||rho B B^T P||`.
    pub gain_norm: f64,
    /// Smallest delay destabilizing the single-agent loop (`inf` if none).
    pub delay_margin: f64,
    pub criterion: EpsilonCriterion,
}

/// Upper end of the frequency band that needs numerical treatment:
/// `max(||A|| + 1, omega_max + theta)`.
pub(crate) fn omega_bar(a_norm: f64, omega_max: f64, theta: f64) -> f64 {
    (a_norm + 1.0).max(omega_max + theta)
}

/// Minimum of `sigma_min(jwI - A)` over `omega_max + theta <= w <= omega_bar`,
/// capped at 1.
fn high_frequency_floor(a: &Mat, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 1.0;
    }
    let n = a.nrows();
    let a_c = linalg::to_complex(a);
    let mut mu: f64 = 1.0;
    for i in 0..MU_GRID_POINTS {
        let w = lo + (hi - lo) * i as f64 / (MU_GRID_POINTS - 1) as f64;
        let m = linalg::CMat::identity(n, n) * Complex64::new(0.0, w) - &a_c;
        mu = mu.min(linalg::sigma_min_c(&m));
    }
    mu
}

fn count_unstable(a_c: &linalg::CMat, k_c: &linalg::CMat, rho: f64, phi: f64) -> Result<(usize, Vec<Complex64>)> {
    let z = Complex64::from_polar(rho, phi);
    let m = a_c - k_c * z;
    let eigs = linalg::complex_eigenvalues(&m)?;
    Ok((eigs.iter().filter(|e| e.re > 0.0).count(), eigs))
}

/// Delay margin of `x' = A x - rho K x(t - tau)`.
///
/// Returns the smallest `tau >= 0` at which a characteristic root reaches the
/// imaginary axis, `0` if `A - rho K` is not Hurwitz, and `inf` when no
/// crossing exists. Crossings are located by scanning the phase `phi` of
/// `z = e^{-j w tau}` and tracking the number of eigenvalues of
/// `A - rho z K` in the open right half plane.
pub fn delay_margin(a: &Mat, k: &Mat, rho: f64) -> Result<f64> {
    if !linalg::is_hurwitz(&(a - k * rho))? {
        return Ok(0.0);
    }
    let a_c = linalg::to_complex(a);
    let k_c = linalg::to_complex(k);
    let phis: Vec<f64> = (0..=PHASE_SCAN_POINTS)
        .map(|i| 2.0 * PI * i as f64 / PHASE_SCAN_POINTS as f64)
        .collect();
    let counts: Vec<usize> = phis
        .iter()
        .map(|&phi| count_unstable(&a_c, &k_c, rho, phi).map(|(c, _)| c))
        .collect::<Result<_>>()?;

    let mut margin = f64::INFINITY;
    for i in 0..PHASE_SCAN_POINTS {
        if counts[i] == counts[i + 1] {
            continue;
        }
        let (mut lo, mut hi) = (phis[i], phis[i + 1]);
        let c_lo = counts[i];
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if count_unstable(&a_c, &k_c, rho, mid)?.0 == c_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let phi = 0.5 * (lo + hi);
        let (_, eigs) = count_unstable(&a_c, &k_c, rho, phi)?;
        let Some(root) = eigs
            .iter()
            .min_by(|x, y| x.re.abs().total_cmp(&y.re.abs()))
        else {
            continue;
        };
        let w = root.im;
        if w.abs() < 1e-12 {
            continue;
        }
        // jw is a root for z = e^{j phi} = e^{-j w tau}
        let tau = if w > 0.0 {
            (2.0 * PI - phi).rem_euclid(2.0 * PI) / w
        } else {
            phi.rem_euclid(2.0 * PI) / w.abs()
        };
        margin = margin.min(tau);
    }
    Ok(margin)
}

/// Chooses the low-gain parameter by decades, following the frequency-split
/// construction: `theta` from `rho`, the floor `mu` of `sigma_min(jwI - A)` on
/// `omega_max + theta <= |w| <= omega_bar`, then the first decade where either
/// `||rho B B^T P|| <= mu / 2` or the single-agent delay margin exceeds
/// `tau_bar`.
pub fn select_epsilon(
    model: &AgentModel,
    rho: f64,
    tau_bar: f64,
    omega_max: f64,
) -> Result<EpsilonSelection> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let a = model.a();
    let a_norm = linalg::spectral_norm(a);
    let theta = theta_for(rho, tau_bar, omega_max, a_norm);
    let w_bar = omega_bar(a_norm, omega_max, theta);
    let mu = high_frequency_floor(a, omega_max + theta, w_bar);

    let mut tried = Vec::new();
    for k in 0..=EPSILON_DECADES {
        let eps = 10f64.powi(-k);
        let care = riccati::solve_care(model, eps)?;
        let gain = model.bbt() * &care.p * rho;
        let gain_norm = linalg::spectral_norm(&gain);
        let dm = delay_margin(a, &gain, 1.0)?;
        let criterion = if gain_norm <= mu / 2.0 {
            Some(EpsilonCriterion::NormBound)
        } else if dm > tau_bar * (1.0 + DELAY_MARGIN_SLACK) {
            Some(EpsilonCriterion::DelayMargin)
        } else {
            None
        };
        if let Some(criterion) = criterion {
            return Ok(EpsilonSelection {
                epsilon: care.epsilon,
                care,
                theta,
                mu,
                omega_bar: w_bar,
                gain_norm,
                delay_margin: dm,
                criterion,
            });
        }
        tried.push(format!("eps={eps:.0e}: gain {gain_norm:.3e}, delay margin {dm:.4}"));
    }
    Err(Error::Unsolvable(format!(
        "no epsilon down to {:.0e} meets ||rho BB^T P|| <= mu/2 = {:.3e} or delay margin > {tau_bar}; \
         theta = {theta:.4e}; tried [{}]",
        riccati::EPSILON_FLOOR,
        mu / 2.0,
        tried.join("; ")
    )))
}

/// Caller-controlled parts of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    /// Forced coupling mode; by default full-state iff `C = I`.
    pub coupling: Option<CouplingMode>,
    pub rho: Option<f64>,
    pub rho_margin: f64,
    pub epsilon: Option<f64>,
    pub k: Option<Mat>,
    pub desired_poles: Option<Vec<Complex64>>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            coupling: None,
            rho: None,
            rho_margin: RHO_MARGIN,
            epsilon: None,
            k: None,
            desired_poles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub params: ProtocolParams,
    pub selection: EpsilonSelection,
    pub omega_max: f64,
}

/// Designs the protocol from the agent model and the delay bound alone.
pub fn design(model: &AgentModel, tau_bar: f64, opts: &DesignOptions) -> Result<Design> {
    model::validate(model)?.into_result()?;
    if !(tau_bar.is_finite() && tau_bar >= 0.0) {
        return Err(Error::invalid(format!("tau_bar must be >= 0, got {tau_bar}")));
    }
    let omega_max = model::omega_max(model.a())?;

    let rho = match opts.rho {
        None => design_rho(omega_max, tau_bar, opts.rho_margin)?,
        Some(rho) => {
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::invalid(format!("rho override must be positive, got {rho}")));
            }
            let phase = tau_bar * omega_max;
            if phase >= FRAC_PI_2 {
                return Err(Error::Unsolvable(format!(
                    "tau_bar * omega_max = {phase:.6} violates tau_bar * omega_max < pi/2"
                )));
            }
            if rho * phase.cos() < 1.0 {
                return Err(Error::Unsolvable(format!(
                    "rho override {rho} is below 1/cos(tau_bar * omega_max) = {:.6}",
                    1.0 / phase.cos()
                )));
            }
            rho
        }
    };

    let selection = match opts.epsilon {
        None => select_epsilon(model, rho, tau_bar, omega_max)?,
        Some(eps) => {
            if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
                return Err(Error::invalid(format!("epsilon override must lie in (0, 1], got {eps}")));
            }
            let care = riccati::solve_care(model, eps)?;
            let a = model.a();
            let a_norm = linalg::spectral_norm(a);
            let theta = theta_for(rho, tau_bar, omega_max, a_norm);
            let w_bar = omega_bar(a_norm, omega_max, theta);
            let mu = high_frequency_floor(a, omega_max + theta, w_bar);
            let gain = model.bbt() * &care.p * rho;
            EpsilonSelection {
                epsilon: care.epsilon,
                theta,
                mu,
                omega_bar: w_bar,
                gain_norm: linalg::spectral_norm(&gain),
                delay_margin: delay_margin(a, &gain, 1.0)?,
                criterion: EpsilonCriterion::Override,
                care,
            }
        }
    };

    let coupling = opts.coupling.unwrap_or(if model.has_full_state_output() {
        CouplingMode::FullState
    } else {
        CouplingMode::PartialState
    });

    let k = match coupling {
        CouplingMode::FullState => None,
        CouplingMode::PartialState => Some(observer_gain(model, opts)?),
    };

    Ok(Design {
        params: ProtocolParams {
            rho,
            epsilon: selection.epsilon,
            p: selection.care.p.clone(),
            k,
            tau_bar,
            coupling,
        },
        selection,
        omega_max,
    })
}

fn observer_gain(model: &AgentModel, opts: &DesignOptions) -> Result<Mat> {
    let (n, q) = (model.n(), model.q());
    if let Some(k) = &opts.k {
        if k.shape() != (n, q) {
            return Err(Error::invalid(format!(
                "observer gain K must be {n}x{q}, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        let closed = model.a() - k * model.c();
        if !linalg::is_hurwitz(&closed)? {
            return Err(Error::invalid("observer gain K does not make A - KC Hurwitz"));
        }
        return Ok(k.clone());
    }
    match &opts.desired_poles {
        Some(poles) => design_observer_gain(model, poles),
        None => design_observer_gain(model, &default_observer_poles(n))
            .or_else(|_| observer_gain_by_riccati(model)),
    }
}
