//! Fixed-step integration of linear multi-delay systems
//!
//! ```text
//! z'(t) = A0 z(t) + sum_d Ad z(t - tau_d),    z(t) = phi(t) for t <= 0
//! ```
//!
//! with classical Runge–Kutta steps and cubic Hermite dense output for the
//! delayed lookups.

mod history;

pub use history::{BlockHistory, HistoryBuffer, InitialHistory, Knot, Vector};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::protocol::StateLayout;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTerm {
    pub tau: f64,
    pub a: Mat,
}

impl DelayTerm {
    pub fn new(tau: f64, a: Mat) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::invalid(format!("delay must be finite and >= 0, got {tau}")));
        }
        Ok(Self { tau, a })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDde {
    a0: Mat,
    terms: Vec<DelayTerm>,
}

impl LinearDde {
    pub fn new(a0: Mat, terms: Vec<DelayTerm>) -> Result<Self> {
        let dim = a0.nrows();
        if !a0.is_square() || dim == 0 {
            return Err(Error::invalid("A0 must be square and non-empty"));
        }
        for d in &terms {
            if d.a.shape() != (dim, dim) {
                return Err(Error::invalid(format!(
                    "delay matrix for tau = {} is {}x{}, expected {dim}x{dim}",
                    d.tau,
                    d.a.nrows(),
                    d.a.ncols()
                )));
            }
        }
        Ok(Self { a0, terms })
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn a0(&self) -> &Mat {
        &self.a0
    }

    pub fn terms(&self) -> &[DelayTerm] {
        &self.terms
    }

    pub fn max_delay(&self) -> f64 {
        self.terms.iter().map(|d| d.tau).fold(0.0, f64::max)
    }

    pub fn min_positive_delay(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|d| d.tau)
            .filter(|&t| t > 0.0)
            .min_by(f64::total_cmp)
    }

    /// `A0 + sum_d Ad`.
    pub fn delay_free_matrix(&self) -> Mat {
        self.terms.iter().fold(self.a0.clone(), |acc, d| acc + &d.a)
    }

    /// Largest step accepted by [`integrate`]: a quarter of the shortest
    /// positive delay, or `None` when every delay is zero.
    pub fn max_step(&self) -> Option<f64> {
        self.min_positive_delay().map(|t| t / 4.0)
    }
}

/// Sampled solution, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub layout: Option<StateLayout>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.states.last()
    }
}

struct Rhs<'a> {
    dde: &'a LinearDde,
}

impl Rhs<'_> {
    /// `A0 z + sum_d Ad z(t - tau_d)`; zero delays use the stage state itself.
    fn eval(&self, t: f64, z: &Vector, history: &HistoryBuffer) -> Result<Vector> {
        let mut out = Vector::zeros(z.len());
        out.gemv(1.0, &self.dde.a0, z, 0.0);
        for d in &self.dde.terms {
            if d.tau == 0.0 {
                out.gemv(1.0, &d.a, z, 1.0);
            } else {
                let zd = history.eval(t - d.tau)?;
                out.gemv(1.0, &d.a, &zd, 1.0);
            }
        }
        Ok(out)
    }
}

/// Integrates from `t = 0` to `t_max` with step `h`, recording every step.
///
/// The last step is shortened so the trajectory ends exactly at `t_max`.
/// Requires `h <= min positive delay / 4` so that every delayed lookup of a
/// stage falls into already completed history.
pub fn integrate(dde: &LinearDde, initial: &InitialHistory, h: f64, t_max: f64) -> Result<Trajectory> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
    }
    if let Some(bound) = dde.max_step() {
        if h > bound * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "step size {h} exceeds min positive delay / 4 = {bound}"
            )));
        }
    }
    if initial.dim() != dde.dim() {
        return Err(Error::invalid(format!(
            "initial history has dimension {}, system has {}",
            initial.dim(),
            dde.dim()
        )));
    }

    let rhs = Rhs { dde };
    let depth = dde.max_delay();
    let mut history = HistoryBuffer::new(initial.clone(), depth);
    let z0 = initial.eval(0.0)?;
    let dz0 = rhs.eval(0.0, &z0, &history)?;
    history.push(Knot {
        t: 0.0,
        z: z0.clone(),
        dz: dz0.clone(),
    })?;

    let steps = (t_max / h - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(z0.clone());

    let (mut t, mut z, mut k1) = (0.0, z0, dz0);
    for step in 1..=steps {
        let t_next = if step == steps { t_max } else { step as f64 * h };
        let dt = t_next - t;
        let half = t + 0.5 * dt;
        let k2 = rhs.eval(half, &(&z + &k1 * (0.5 * dt)), &history)?;
        let k3 = rhs.eval(half, &(&z + &k2 * (0.5 * dt)), &history)?;
        let k4 = rhs.eval(t_next, &(&z + &k3 * dt), &history)?;
        let z_next = &z + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (dt / 6.0);
        if z_next.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!(
                "state became non-finite at t = {t_next}"
            )));
        }
        let dz_next = rhs.eval(t_next, &z_next, &history)?;
        history.push(Knot {
            t: t_next,
            z: z_next.clone(),
            dz: dz_next.clone(),
        })?;
        history.prune(t_next);

        times.push(t_next);
        states.push(z_next.clone());
        t = t_next;
        z = z_next;
        k1 = dz_next;
    }

    Ok(Trajectory {
        times,
        states,
        layout: None,
    })
}
