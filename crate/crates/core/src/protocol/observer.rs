use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::AgentModel;
use crate::riccati;

/// `{-1, -2, ..., -n}`.
pub fn default_observer_poles(n: usize) -> Vec<Complex64> {
    (1..=n).map(|k| Complex64::new(-(k as f64), 0.0)).collect()
}

fn check_poles(poles: &[Complex64], n: usize) -> Result<()> {
    if poles.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} observer poles, got {}",
            poles.len()
        )));
    }
    if let Some(p) = poles.iter().find(|p| !(p.re < 0.0) || !p.im.is_finite()) {
        return Err(Error::invalid(format!(
            "observer pole {p} is not in the open left half plane"
        )));
    }
    // conjugate closure, matched greedily
    let mut unmatched: Vec<Complex64> = poles.iter().copied().filter(|p| p.im != 0.0).collect();
    while let Some(p) = unmatched.pop() {
        let tol = 1e-12 * (1.0 + p.norm());
        match unmatched.iter().position(|q| (q - p.conj()).norm() <= tol) {
            Some(i) => {
                unmatched.swap_remove(i);
            }
            None => {
                return Err(Error::invalid(format!(
                    "observer poles are not closed under conjugation ({p} has no partner)"
                )))
            }
        }
    }
    Ok(())
}

/// `[c; c A; ...; c A^(n-1)]` for a single output row `c`.
fn observability_matrix(a: &Mat, c: &Mat) -> Mat {
    let n = a.nrows();
    let mut o = Mat::zeros(n, n);
    let mut row = c.clone();
    for k in 0..n {
        o.row_mut(k).copy_from(&row.row(0));
        row = &row * a;
    }
    o
}

fn condition(m: &Mat) -> f64 {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Output combinations tried for multi-output placement: each output alone,
/// all outputs summed, and a few fixed mixed weightings.
fn candidate_combinations(q: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for i in 0..q {
        let mut v = Mat::zeros(q, 1);
        v[(i, 0)] = 1.0;
        out.push(v);
    }
    if q > 1 {
        out.push(Mat::from_element(q, 1, 1.0));
        for s in 1..=4u32 {
            out.push(Mat::from_fn(q, 1, |i, _| {
                let x = ((i as u32 + 1) * (2 * s + 1)) as f64;
                (x * 0.618_033_988_749_895).fract() + 0.5
            }));
        }
    }
    out
}

/// Observer gain `K` with `eig(A - KC)` at the requested poles.
///
/// Single output uses Ackermann's formula `K = p(A) O^-1 e_n`. With several
/// outputs the outputs are first combined into one, `c = v^T C`, choosing the
/// weighting whose observability matrix is best conditioned, and `K = k v^T`.
pub fn design_observer_gain(model: &AgentModel, poles: &[Complex64]) -> Result<Mat> {
    let (a, c) = (model.a(), model.c());
    let n = model.n();
    check_poles(poles, n)?;

    let best = candidate_combinations(model.q())
        .into_iter()
        .map(|v| {
            let cv = v.transpose() * c;
            let o = observability_matrix(a, &cv);
            (condition(&o), v, o)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .ok_or_else(|| Error::invalid("model has no outputs"))?;
    let (cond, v, o) = best;
    if !(cond < 1e12) {
        return Err(Error::invalid(format!(
            "(C, A) is not observable through any single output combination \
             (condition {cond:.3e}); poles cannot be placed"
        )));
    }

    let mut e_n = Mat::zeros(n, 1);
    e_n[(n - 1, 0)] = 1.0;
    let o_inv_en = o
        .lu()
        .solve(&e_n)
        .ok_or_else(|| Error::numerical("observability matrix is singular"))?;
    let coeffs = linalg::poly_from_roots(poles);
    let k = linalg::matrix_polynomial(&coeffs, a) * o_inv_en * v.transpose();

    if !linalg::is_hurwitz(&(a - &k * c))? {
        return Err(Error::numerical("pole placement produced a non-Hurwitz A - KC"));
    }
    Ok(k)
}

/// Observer gain `K = P C^T` from the dual Riccati equation
/// `A P + P A^T - P C^T C P + I = 0`. Works whenever `(C, A)` is detectable,
/// including when some stable modes are unobservable.
pub fn observer_gain_by_riccati(model: &AgentModel) -> Result<Mat> {
    let dual = AgentModel::new(
        model.a().transpose(),
        model.c().transpose(),
        model.b().transpose(),
    )?;
    let sol = riccati::solve_care(&dual, 1.0)?;
    Ok(&sol.p * model.c().transpose())
}
