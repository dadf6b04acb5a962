//! Agent (and exosystem) model `x' = A x + B u`, `y = C x`.
//!
//! The exosystem shares `(A, C)` with the agents, so there is no separate type
//! for it. Validation checks stabilizability of `(A, B)`, detectability of
//! `(C, A)` and that the spectrum of `A` lies in the closed left half plane.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cluster_eigenvalues, EigenCluster, Mat};

/// Relative tolerance deciding whether an eigenvalue sits on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-8;
/// Relative singular-value threshold of the PBH rank test.
pub const RANK_TOL: f64 = 1e-8;
/// Rank decisions with `sigma_min / sigma_max` inside
/// `[RANK_TOL / AMBIGUITY_FACTOR, RANK_TOL * AMBIGUITY_FACTOR]` are flagged.
const AMBIGUITY_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    #[serde(with = "linalg::rows")]
    a: Mat,
    #[serde(with = "linalg::rows")]
    b: Mat,
    #[serde(with = "linalg::rows")]
    c: Mat,
}

impl AgentModel {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::invalid(format!(
                "B must have {n} rows and at least one column, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::invalid(format!(
                "C must have {n} columns and at least one row, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model matrices contain NaN/Inf"));
        }
        Ok(Self { a, b, c })
    }

    pub fn from_rows(a: &[&[f64]], b: &[&[f64]], c: &[&[f64]]) -> Result<Self> {
        let conv = |rows: &[&[f64]]| -> Result<Mat> {
            let owned: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
            linalg::rows::from_rows(&owned).map_err(Error::InvalidInput)
        };
        Self::new(conv(a)?, conv(b)?, conv(c)?)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    /// True when `C` is exactly the identity (full-state coupling).
    pub fn has_full_state_output(&self) -> bool {
        self.c.is_square() && self.c == DMatrix::identity(self.n(), self.n())
    }

    /// `B B^T`, used throughout the protocol.
    pub fn bbt(&self) -> Mat {
        &self.b * self.b.transpose()
    }

    /// Applies the similarity `(T A T^-1, T B, C T^-1)`.
    pub fn transformed(&self, t: &Mat) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("similarity transform is singular"))?;
        Self::new(t * &self.a * &t_inv, t * &self.b, &self.c * &t_inv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub stabilizable: Check,
    pub detectable: Check,
    pub closed_left_half_plane: Check,
    /// Rank decisions that fell close to the threshold.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// The model may be used for protocol design.
    pub fn usable(&self) -> bool {
        self.stabilizable.passed && self.detectable.passed && self.closed_left_half_plane.passed
    }

    pub fn failures(&self) -> Vec<String> {
        [
            ("stabilizability", &self.stabilizable),
            ("detectability", &self.detectable),
            ("closed-left-half-plane spectrum", &self.closed_left_half_plane),
        ]
        .iter()
        .filter(|(_, c)| !c.passed)
        .map(|(name, c)| format!("{name}: {}", c.detail))
        .collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.usable() {
            Ok(self)
        } else {
            Err(Error::invalid(format!(
                "model fails assumptions: {}",
                self.failures().join("; ")
            )))
        }
    }
}

fn axis_tolerance(a: &Mat) -> f64 {
    AXIS_TOL * (1.0 + linalg::spectral_norm(a))
}

fn spectrum_clusters(a: &Mat) -> Result<Vec<EigenCluster>> {
    let eigs = linalg::eigenvalues(a)?;
    Ok(cluster_eigenvalues(&eigs, 1.0 + linalg::spectral_norm(a)))
}

enum RankVerdict {
    Full,
    Deficient,
}

/// PBH rank decision for `[lambda I - A, X]` (or its dual), returning the
/// verdict and an optional ambiguity warning.
fn pbh_rank(pencil: &linalg::CMat, full_rank: usize) -> (RankVerdict, f64, Option<String>) {
    let sv = pencil.singular_values();
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let smax = sorted[0];
    let smin = sorted.get(full_rank - 1).copied().unwrap_or(0.0);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    let warning = (RANK_TOL / AMBIGUITY_FACTOR..=RANK_TOL * AMBIGUITY_FACTOR).contains(&ratio)
        .then(|| format!("rank decision ambiguous: sigma_min/sigma_max = {ratio:.3e}"));
    let verdict = if ratio >= RANK_TOL {
        RankVerdict::Full
    } else {
        RankVerdict::Deficient
    };
    (verdict, ratio, warning)
}

/// Checks the standing assumptions on `(A, B, C)`.
pub fn validate(model: &AgentModel) -> Result<ValidationReport> {
    let a = model.a();
    let n = model.n();
    let tol = axis_tolerance(a);
    let clusters = spectrum_clusters(a)?;
    let mut warnings = Vec::new();

    let unstable: Vec<Complex64> = clusters
        .iter()
        .filter(|c| c.center.re > tol)
        .map(|c| c.center)
        .collect();
    let closed_left_half_plane = if unstable.is_empty() {
        Check {
            passed: true,
            detail: "all eigenvalues have Re <= 0".into(),
        }
    } else {
        Check {
            passed: false,
            detail: format!("eigenvalues with Re > 0: {unstable:?}"),
        }
    };

    let a_c = linalg::to_complex(a);
    let b_c = linalg::to_complex(model.b());
    let c_c = linalg::to_complex(model.c());
    let mut stab_fail = Vec::new();
    let mut det_fail = Vec::new();
    for cl in clusters.iter().filter(|c| c.center.re >= -tol) {
        let lam = cl.center;
        let shifted = linalg::CMat::identity(n, n) * lam - &a_c;

        let mut ctrl = linalg::CMat::zeros(n, n + model.m());
        ctrl.view_mut((0, 0), (n, n)).copy_from(&shifted);
        ctrl.view_mut((0, n), (n, model.m())).copy_from(&b_c);
        let (verdict, ratio, warn) = pbh_rank(&ctrl, n);
        if let Some(w) = warn {
            warnings.push(format!("stabilizability at {lam}: {w}"));
        }
        if let RankVerdict::Deficient = verdict {
            stab_fail.push(format!("{lam} (ratio {ratio:.2e})"));
        }

        let mut obs = linalg::CMat::zeros(n + model.q(), n);
        obs.view_mut((0, 0), (n, n)).copy_from(&shifted);
        obs.view_mut((n, 0), (model.q(), n)).copy_from(&c_c);
        let (verdict, ratio, warn) = pbh_rank(&obs, n);
        if let Some(w) = warn {
            warnings.push(format!("detectability at {lam}: {w}"));
        }
        if let RankVerdict::Deficient = verdict {
            det_fail.push(format!("{lam} (ratio {ratio:.2e})"));
        }
    }

    let check = |fails: Vec<String>, what: &str| {
        if fails.is_empty() {
            Check {
                passed: true,
                detail: format!("PBH rank full at every eigenvalue with Re >= 0 ({what})"),
            }
        } else {
            Check {
                passed: false,
                detail: format!("PBH rank deficient ({what}) at {}", fails.join(", ")),
            }
        }
    };

    Ok(ValidationReport {
        stabilizable: check(stab_fail, "[A - lambda I, B]"),
        detectable: check(det_fail, "[A - lambda I; C]"),
        closed_left_half_plane,
        warnings,
    })
}

/// Largest frequency `w >= 0` with `det(jwI - A) = 0`; zero when `A` is Hurwitz.
pub fn omega_max(a: &Mat) -> Result<f64> {
    if !a.is_square() || a.is_empty() {
        return Err(Error::invalid("omega_max needs a non-empty square matrix"));
    }
    let tol = axis_tolerance(a);
    let clusters = spectrum_clusters(a)?;
    if let Some(bad) = clusters.iter().find(|c| c.center.re > tol) {
        return Err(Error::invalid(format!(
            "A has an eigenvalue {} in the open right half plane",
            bad.center
        )));
    }
    Ok(clusters
        .iter()
        .filter(|c| c.center.re.abs() <= tol)
        .map(|c| c.center.im.abs())
        .fold(0.0, f64::max))
}

/// True when every eigenvalue cluster of `A` lies strictly left of the axis
/// tolerance band.
pub fn is_hurwitz_model(a: &Mat) -> Result<bool> {
    let tol = axis_tolerance(a);
    Ok(spectrum_clusters(a)?.iter().all(|c| c.center.re < -tol))
}
