use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// One point of a piecewise cubic Hermite curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub t: f64,
    pub z: Vector,
    pub dz: Vector,
}

fn hermite(k0: &Knot, k1: &Knot, t: f64) -> Vector {
    let h = k1.t - k0.t;
    let s = (t - k0.t) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    &k0.z * h00 + &k0.dz * (h10 * h) + &k1.z * h01 + &k1.dz * (h11 * h)
}

/// Locates `t` among strictly increasing knots and interpolates.
fn eval_knots<'a>(len: usize, t: f64, get: impl Fn(usize) -> &'a Knot) -> Option<Vector> {
    if len == 0 {
        return None;
    }
    let (first, last) = (get(0), get(len - 1));
    if t < first.t || t > last.t {
        return None;
    }
    // first knot with knot.t >= t
    let (mut lo, mut hi) = (0usize, len - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if get(mid).t < t {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let k1 = get(lo);
    if k1.t == t || lo == 0 {
        return Some(k1.z.clone());
    }
    Some(hermite(get(lo - 1), k1, t))
}

/// Initial function of one state block on `[-tau_max, 0]`.
#[derive(Clone)]
pub enum BlockHistory {
    Constant(Vector),
    /// Cubic Hermite through the given knots; they must cover `[-tau_max, 0]`.
    Knots(Vec<Knot>),
    Function(Arc<dyn Fn(f64) -> Vector + Send + Sync>),
}

impl fmt::Debug for BlockHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockHistory::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            BlockHistory::Knots(k) => f.debug_tuple("Knots").field(&k.len()).finish(),
            BlockHistory::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl BlockHistory {
    /// Hermite knots from samples, with derivatives estimated by finite
    /// differences (central in the interior, one-sided at the ends).
    pub fn from_samples(times: &[f64], values: &[Vector]) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::invalid(
                "sampled history needs at least two (time, value) pairs of equal count",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("history sample times must be strictly increasing"));
        }
        let last = times.len() - 1;
        let knots = (0..=last)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    i if i == last => (last - 1, last),
                    i => (i - 1, i + 1),
                };
                let dz = (&values[b] - &values[a]) / (times[b] - times[a]);
                Knot {
                    t: times[i],
                    z: values[i].clone(),
                    dz,
                }
            })
            .collect();
        Ok(BlockHistory::Knots(knots))
    }

    fn dim(&self) -> Option<usize> {
        match self {
            BlockHistory::Constant(v) => Some(v.len()),
            BlockHistory::Knots(k) => k.first().map(|k| k.z.len()),
            BlockHistory::Function(_) => None,
        }
    }

    fn eval(&self, t: f64) -> Result<Vector> {
        match self {
            BlockHistory::Constant(v) => Ok(v.clone()),
            BlockHistory::Knots(k) => eval_knots(k.len(), t, |i| &k[i])
                .ok_or_else(|| Error::invalid(format!("history knots do not cover t = {t}"))),
            BlockHistory::Function(f) => Ok(f(t)),
        }
    }
}

/// Initial function of the full state, assembled from contiguous blocks.
#[derive(Debug, Clone)]
pub struct InitialHistory {
    dim: usize,
    blocks: Vec<(usize, usize, BlockHistory)>,
}

impl InitialHistory {
    /// `phi(t) = z0` for all `t <= 0`.
    pub fn constant(z0: Vector) -> Self {
        let dim = z0.len();
        Self {
            dim,
            blocks: vec![(0, dim, BlockHistory::Constant(z0))],
        }
    }

    /// Blocks given as `(offset, length, history)`; together they must tile
    /// `0..dim` exactly.
    pub fn from_blocks(dim: usize, mut blocks: Vec<(usize, usize, BlockHistory)>) -> Result<Self> {
        blocks.sort_by_key(|b| b.0);
        let mut next = 0;
        for (offset, len, h) in &blocks {
            if *offset != next {
                return Err(Error::invalid(format!(
                    "initial history blocks leave a gap or overlap at index {next}"
                )));
            }
            if let Some(d) = h.dim() {
                if d != *len {
                    return Err(Error::invalid(format!(
                        "initial history block at {offset} has dimension {d}, expected {len}"
                    )));
                }
            }
            next += len;
        }
        if next != dim {
            return Err(Error::invalid(format!(
                "initial history covers {next} of {dim} states"
            )));
        }
        Ok(Self { dim, blocks })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `phi(t)` for `t <= 0`.
    pub fn eval(&self, t: f64) -> Result<Vector> {
        let mut out = Vector::zeros(self.dim);
        for (offset, len, h) in &self.blocks {
            let v = h.eval(t)?;
            if v.len() != *len {
                return Err(Error::invalid(format!(
                    "initial history block at {offset} returned {} values, expected {len}",
                    v.len()
                )));
            }
            out.rows_mut(*offset, *len).copy_from(&v);
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("initial history is not finite at t = {t}")));
        }
        Ok(out)
    }

    /// Linear combination `alpha * self + beta * other` over the same blocks.
    pub fn combine(&self, alpha: f64, other: &InitialHistory, beta: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::invalid("cannot combine histories of different dimension"));
        }
        let (a, b) = (self.clone(), other.clone());
        let f = move |t: f64| {
            let x = a.eval(t).unwrap_or_else(|_| Vector::from_element(a.dim, f64::NAN));
            let y = b.eval(t).unwrap_or_else(|_| Vector::from_element(b.dim, f64::NAN));
            x * alpha + y * beta
        };
        Ok(Self {
            dim: self.dim,
            blocks: vec![(0, self.dim, BlockHistory::Function(Arc::new(f)))],
        })
    }
}

/// Solution history: the initial function for `t < 0` and Hermite knots of the
/// computed solution from `t = 0` on. Knots older than the longest delay plus
/// one segment are dropped as the solution advances.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    initial: InitialHistory,
    depth: f64,
    knots: VecDeque<Knot>,
}

impl HistoryBuffer {
    pub fn new(initial: InitialHistory, depth: f64) -> Self {
        Self {
            initial,
            depth,
            knots: VecDeque::new(),
        }
    }

    /// Appends a knot; times must be strictly increasing.
    pub fn push(&mut self, knot: Knot) -> Result<()> {
        if let Some(last) = self.knots.back() {
            if !(knot.t > last.t) {
                return Err(Error::invalid(format!(
                    "knot at t = {} does not follow t = {}",
                    knot.t, last.t
                )));
            }
        }
        self.knots.push_back(knot);
        Ok(())
    }

    /// Drops knots no longer reachable by a lookup at `t_now - depth`.
    pub fn prune(&mut self, t_now: f64) {
        let oldest_needed = t_now - self.depth;
        while self.knots.len() > 2 && self.knots[1].t <= oldest_needed {
            self.knots.pop_front();
        }
    }

    pub fn knots(&self) -> impl Iterator<Item = &Knot> {
        self.knots.iter()
    }

    pub fn latest(&self) -> Option<&Knot> {
        self.knots.back()
    }

    /// Earliest time that can be evaluated.
    pub fn span_start(&self) -> f64 {
        match self.knots.front() {
            Some(k) if k.t > 0.0 => k.t,
            _ => -self.depth,
        }
    }

    /// Value at `t`. Never extrapolates past the latest knot or before the
    /// retained span.
    pub fn eval(&self, t: f64) -> Result<Vector> {
        let end = self.knots.back().map_or(0.0, |k| k.t);
        let slack = 1e-12 * (1.0 + self.depth.abs());
        if !(t >= self.span_start() - slack && t <= end) {
            return Err(Error::invalid(format!(
                "history query at t = {t} outside [{}, {end}]",
                self.span_start()
            )));
        }
        if t < 0.0 || self.knots.is_empty() {
            return self.initial.eval(t.min(0.0));
        }
        let len = self.knots.len();
        eval_knots(len, t, |i| &self.knots[i])
            .ok_or_else(|| Error::invalid(format!("history query at t = {t} fell between pruned knots")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(t: f64) -> (f64, f64) {
        (0.5 * t * t * t - t * t + 3.0 * t - 1.0, 1.5 * t * t - 2.0 * t + 3.0)
    }

    fn cubic_buffer() -> HistoryBuffer {
        let mut buf = HistoryBuffer::new(InitialHistory::constant(Vector::from_element(1, -1.0)), 1.0);
        for i in 0..=10 {
            let t = 0.3 * i as f64;
            let (z, dz) = cubic(t);
            buf.push(Knot {
                t,
                z: Vector::from_element(1, z),
                dz: Vector::from_element(1, dz),
            })
            .unwrap();
        }
        buf
    }

    #[test]
    fn exact_at_knots() {
        let buf = cubic_buffer();
        for k in buf.knots() {
            assert_eq!(buf.eval(k.t).unwrap(), k.z);
        }
    }

    #[test]
    fn reproduces_cubics() {
        let buf = cubic_buffer();
        for i in 0..10 {
            let t = 0.3 * i as f64 + 0.15;
            let got = buf.eval(t).unwrap()[0];
            assert!((got - cubic(t).0).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn never_extrapolates() {
        let buf = cubic_buffer();
        assert!(buf.eval(3.0 + 1e-9).is_err());
        assert!(buf.eval(-1.5).is_err());
        assert_eq!(buf.eval(-1.0).unwrap()[0], -1.0);
    }

    #[test]
    fn pruning_keeps_one_segment_past_depth() {
        let mut buf = cubic_buffer();
        buf.prune(3.0);
        let first = buf.knots().next().unwrap().t;
        assert!(first <= 2.0 && first > 2.0 - 0.3 - 1e-12, "{first}");
        assert!(buf.eval(2.0).is_ok());
        assert!(buf.eval(first - 0.01).is_err());
    }

    #[test]
    fn blocks_must_tile() {
        let c = |v: f64, n| BlockHistory::Constant(Vector::from_element(n, v));
        assert!(InitialHistory::from_blocks(3, vec![(0, 2, c(1.0, 2)), (2, 1, c(2.0, 1))]).is_ok());
        assert!(InitialHistory::from_blocks(3, vec![(0, 2, c(1.0, 2))]).is_err());
        assert!(InitialHistory::from_blocks(3, vec![(0, 2, c(1.0, 2)), (1, 2, c(2.0, 2))]).is_err());
        assert!(InitialHistory::from_blocks(2, vec![(0, 2, c(1.0, 3))]).is_err());
    }

    #[test]
    fn sampled_history_interpolates_lines_exactly() {
        let times = [-2.0, -1.0, -0.5, 0.0];
        let values: Vec<Vector> = times.iter().map(|t| Vector::from_element(1, 2.0 * t + 1.0)).collect();
        let h = BlockHistory::from_samples(&times, &values).unwrap();
        let init = InitialHistory::from_blocks(1, vec![(0, 1, h)]).unwrap();
        assert!((init.eval(-1.7).unwrap()[0] - (-2.4)).abs() < 1e-14);
    }
}
