use num_complex::Complex64;
use serde::Serialize;

use super::design::{delay_margin, omega_bar, theta_for};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::model::{self, AgentModel};

/// Sampling of the `(w, tau)` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrequencyGrid {
    /// Points on `[-omega_bar, omega_bar]`.
    pub omega_points: usize,
    /// Points on `[0, tau_bar]`.
    pub tau_points: usize,
    /// `sigma_min` at or below this value fails the check.
    pub threshold: f64,
    /// Polish the best grid cells with a local simplex search.
    pub refine: bool,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            omega_points: 2001,
            tau_points: 50,
            threshold: 1e-10,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    /// Smallest `sigma_min(jwI - A + rho e^{-jw tau} B B^T P)` found.
    pub min_sigma: f64,
    pub argmin_omega: f64,
    pub argmin_tau: f64,
    /// Minimum over the raw grid, before refinement.
    pub grid_min_sigma: f64,
    pub omega_bar: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Smallest delay at which the single-agent loop gains an axis root.
    pub delay_margin: f64,
    pub grid: FrequencyGrid,
}

struct Sweep {
    a: CMat,
    f: CMat,
    eye: CMat,
}

impl Sweep {
    fn sigma(&self, w: f64, tau: f64) -> f64 {
        let jw = Complex64::new(0.0, w);
        let phase = Complex64::from_polar(1.0, -w * tau);
        let m = &self.eye * jw - &self.a + &self.f * phase;
        linalg::sigma_min_c(&m)
    }
}

/// Frequency-domain certificate for the delay condition
/// `det(jwI - A + rho e^{-jw tau} B B^T P) != 0` over `|w| <= omega_bar`,
/// `0 <= tau <= tau_bar`. Report only; never fails on a violated condition.
pub fn verify_frequency_condition(
    model: &AgentModel,
    p: &Mat,
    rho: f64,
    tau_bar: f64,
    grid: &FrequencyGrid,
) -> Result<MarginReport> {
    let n = model.n();
    if p.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "P must be {n}x{n}, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    if !(tau_bar.is_finite() && tau_bar >= 0.0) || !rho.is_finite() {
        return Err(Error::invalid("tau_bar and rho must be finite, tau_bar >= 0"));
    }
    if grid.omega_points < 2 || grid.tau_points < 1 {
        return Err(Error::invalid("frequency grid needs >= 2 omega and >= 1 tau points"));
    }
    let a = model.a();
    let a_norm = linalg::spectral_norm(a);
    let w_max = model::omega_max(a)?;
    let w_bar = omega_bar(a_norm, w_max, theta_for(rho, tau_bar, w_max, a_norm));
    let f = model.bbt() * p * rho;
    let sweep = Sweep {
        a: linalg::to_complex(a),
        f: linalg::to_complex(&f),
        eye: CMat::identity(n, n),
    };

    let d_w = 2.0 * w_bar / (grid.omega_points - 1) as f64;
    let d_tau = if grid.tau_points > 1 {
        tau_bar / (grid.tau_points - 1) as f64
    } else {
        0.0
    };
    // best point of every tau row
    let mut rows: Vec<(f64, f64, f64)> = (0..grid.tau_points)
        .map(|it| {
            let tau = d_tau * it as f64;
            (0..grid.omega_points)
                .map(|iw| {
                    let w = -w_bar + d_w * iw as f64;
                    (sweep.sigma(w, tau), w, tau)
                })
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .expect("non-empty omega grid")
        })
        .collect();
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (grid_min, mut best_w, mut best_tau) = rows[0];
    let mut best = grid_min;

    if grid.refine {
        let bounds = ([-w_bar, 0.0], [w_bar, tau_bar]);
        for &(_, w0, tau0) in rows.iter().take(8) {
            let (val, x) = nelder_mead(
                |x| sweep.sigma(x[0], x[1]),
                [w0, tau0],
                [d_w, d_tau.max(1e-3 * tau_bar)],
                bounds,
            );
            if val < best {
                best = val;
                best_w = x[0];
                best_tau = x[1];
            }
        }
    }

    Ok(MarginReport {
        min_sigma: best,
        argmin_omega: best_w,
        argmin_tau: best_tau,
        grid_min_sigma: grid_min,
        omega_bar: w_bar,
        threshold: grid.threshold,
        passed: best > grid.threshold,
        delay_margin: delay_margin(a, &f, 1.0)?,
        grid: *grid,
    })
}

/// Minimizes `f` over a box starting from `x0` with initial steps `step`.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    x0: [f64; 2],
    step: [f64; 2],
    (lo, hi): ([f64; 2], [f64; 2]),
) -> (f64, [f64; 2]) {
    let clamp = |x: [f64; 2]| [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])];
    let eval = |x: [f64; 2]| {
        let x = clamp(x);
        (f(x), x)
    };
    let mut simplex = [
        eval(x0),
        eval([x0[0] + step[0], x0[1]]),
        eval([x0[0], x0[1] + step[1]]),
    ];
    let lin = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for _ in 0..400 {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spread = (simplex[2].0 - simplex[0].0).abs();
        if spread <= 1e-16 * (1.0 + simplex[0].0.abs()) {
            break;
        }
        let centroid = lin(simplex[0].1, simplex[1].1, 0.5);
        let worst = simplex[2];
        let reflected = eval(lin(centroid, worst.1, -1.0));
        if reflected.0 < simplex[0].0 {
            let expanded = eval(lin(centroid, worst.1, -2.0));
            simplex[2] = if expanded.0 < reflected.0 { expanded } else { reflected };
        } else if reflected.0 < simplex[1].0 {
            simplex[2] = reflected;
        } else {
            let contracted = eval(lin(centroid, worst.1, 0.5));
            if contracted.0 < worst.0 {
                simplex[2] = contracted;
            } else {
                let best = simplex[0].1;
                simplex[1] = eval(lin(best, simplex[1].1, 0.5));
                simplex[2] = eval(lin(best, simplex[2].1, 0.5));
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    simplex[0]
}
