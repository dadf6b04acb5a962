//! Dense linear-algebra helpers shared by the design and analysis modules.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

const SCHUR_MAX_SWEEPS: usize = 10_000;

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn sigma_min_c(m: &CMat) -> f64 {
    m.singular_values().min()
}

pub fn sigma_range_c(m: &CMat) -> (f64, f64) {
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("eigenvalues of a non-square matrix"));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("matrix contains NaN/Inf"));
    }
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_SWEEPS) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    complex_eigenvalues(&to_complex(m))
}

/// Deterministic orthogonal matrix used to break up structured inputs on
/// which the QR iteration stalls (e.g. exact nilpotent chains).
fn scrambling_basis(n: usize, seed: usize) -> Mat {
    let g = Mat::from_fn(n, n, |i, j| {
        let k = (i * 31 + j * 17 + seed * 101 + 1) as f64;
        (k * 0.754_877_666_246_692_7).fract() - 0.5
    });
    g.qr().q()
}

/// Complex Schur decomposition `m = Q T Q^H` with `T` upper triangular.
///
/// The unshifted QR iteration in nalgebra can stall on structured inputs
/// (spectra symmetric about the origin, exact nilpotent chains). On failure
/// the decomposition is retried on `m + sI` and on orthogonally similar
/// copies `G m G^T`, both of which leave the Schur vectors recoverable.
pub fn complex_schur(m: CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    let attempt = |m: CMat| {
        Schur::try_new(m, f64::EPSILON, SCHUR_MAX_SWEEPS).map(|schur| {
            let (q, mut t) = schur.unpack();
            for j in 0..t.ncols() {
                for i in (j + 1)..t.nrows() {
                    t[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
            (q, t)
        })
    };
    if let Some(qt) = attempt(m.clone()) {
        return Ok(qt);
    }
    let scale = m.norm().max(1.0);
    let eye = CMat::identity(n, n);
    for seed in 0..4 {
        let shift = Complex64::new(
            ((seed as f64 + 1.0) * 0.754_877_666_246_692_7).fract() + 0.25,
            ((seed as f64 + 1.0) * 0.569_840_290_998_053_3).fract() - 0.5,
        ) * scale;
        if let Some((q, t)) = attempt(&m + &eye * shift) {
            return Ok((q, t - &eye * shift));
        }
        let g = to_complex(&scrambling_basis(n, seed));
        if let Some((q, t)) = attempt(&g * &m * g.adjoint() + &eye * shift) {
            // m = G^H (Q T Q^H) G
            return Ok((g.adjoint() * q, t - &eye * shift));
        }
    }
    Err(Error::numerical("Schur iteration did not converge"))
}

pub fn complex_eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let (_, t) = complex_schur(m.clone())?;
    Ok(t.diagonal().iter().copied().collect())
}

pub fn max_real_part(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &Mat) -> Result<bool> {
    Ok(max_real_part(&eigenvalues(m)?) < 0.0)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Solves `A^T X + X A + Q = 0` for symmetric `Q` through the Kronecker form.
pub fn lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    let op = kron(&eye, &a.transpose()) + kron(&a.transpose(), &eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|x| -x));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("Lyapunov operator is singular"))?;
    let x = Mat::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// A group of eigenvalues that are numerically indistinguishable from one
/// eigenvalue of the given multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCluster {
    pub center: Complex64,
    pub multiplicity: usize,
}

/// Groups eigenvalues so that a perturbed Jordan block is reported as one
/// cluster with an accurate centroid.
///
/// A Jordan block of size `k` perturbed by `delta` spreads its eigenvalues on
/// a circle of radius `~(delta * scale^(k-1))^(1/k)`. Clusters are accepted
/// largest-first: at each candidate size `k` the single-linkage components at
/// that radius with at least `k` members become clusters.
pub fn cluster_eigenvalues(eigs: &[Complex64], scale: f64) -> Vec<EigenCluster> {
    let n = eigs.len();
    let scale = scale.max(1.0);
    let delta = 1e3 * f64::EPSILON * scale;
    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();

    for k in (2..=n).rev() {
        let radius = 2.0 * (delta * scale.powi(k as i32 - 1)).powf(1.0 / k as f64);
        let free: Vec<usize> = (0..n).filter(|&i| !assigned[i]).collect();
        if free.len() < k {
            continue;
        }
        // union-find over the free eigenvalues
        let mut parent: Vec<usize> = (0..free.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut c = i;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for a in 0..free.len() {
            for b in (a + 1)..free.len() {
                if (eigs[free[a]] - eigs[free[b]]).norm() <= radius {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (a, &idx) in free.iter().enumerate() {
            let r = find(&mut parent, a);
            groups.entry(r).or_default().push(idx);
        }
        for members in groups.values().filter(|g| g.len() >= k) {
            let sum: Complex64 = members.iter().map(|&i| eigs[i]).sum();
            for &i in members {
                assigned[i] = true;
            }
            clusters.push(EigenCluster {
                center: sum / members.len() as f64,
                multiplicity: members.len(),
            });
        }
    }
    for i in (0..n).filter(|&i| !assigned[i]) {
        clusters.push(EigenCluster {
            center: eigs[i],
            multiplicity: 1,
        });
    }
    clusters
}

/// Characteristic-polynomial coefficients `[1, c1, ..., cn]` of the monic
/// polynomial whose roots are `roots` (conjugate-closed, so the result is real).
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| c.re).collect()
}

/// Evaluates `p(M) = M^n + c1 M^(n-1) + ... + cn I` by Horner's rule.
pub fn matrix_polynomial(coeffs: &[f64], m: &Mat) -> Mat {
    let n = m.nrows();
    let mut acc = Mat::zeros(n, n);
    for &c in coeffs {
        acc = &acc * m + Mat::identity(n, n) * c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_shape_and_entries() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = Mat::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(0, 2)], 2.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(1, 0)], 0.0);
    }

    #[test]
    fn lyapunov_scalar() {
        // 2 a x + q = 0
        let a = Mat::from_element(1, 1, -2.0);
        let q = Mat::from_element(1, 1, 1.0);
        let x = lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn jordan_block_clusters_to_one() {
        let mut a = Mat::zeros(3, 3);
        a[(0, 1)] = 1.0;
        a[(1, 2)] = 1.0;
        // perturb the corner to split the triple eigenvalue
        a[(2, 0)] = 1e-14;
        let eigs = eigenvalues(&a).unwrap();
        let clusters = cluster_eigenvalues(&eigs, 2.0);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].multiplicity, 3);
        assert!(clusters[0].center.norm() < 1e-12);
    }

    #[test]
    fn distinct_eigenvalues_stay_separate() {
        let eigs = [
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
        ];
        assert_eq!(cluster_eigenvalues(&eigs, 2.0).len(), 3);
    }

    #[test]
    fn poly_from_roots_matches_expansion() {
        let roots: Vec<_> = [-1.0, -2.0, -3.0]
            .iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect();
        assert_eq!(poly_from_roots(&roots), vec![1.0, 6.0, 11.0, 6.0]);
    }
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows {
    use super::Mat;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != nc) {
            return Err(format!("row {i} has {} entries, expected {nc}", r.len()));
        }
        Ok(Mat::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
            match Option::<Vec<Vec<f64>>>::deserialize(d)? {
                Some(rows) => from_rows(&rows).map(Some).map_err(D::Error::custom),
                None => Ok(None),
            }
        }
    }
}
