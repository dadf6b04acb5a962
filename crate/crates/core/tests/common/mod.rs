#![allow(dead_code)]

use std::path::PathBuf;

use delaysync::dde::{DelayTerm, LinearDde};
use delaysync::harness::{self, Scenario};
use delaysync::linalg::{self, Mat};
use delaysync::protocol::ProtocolParams;
use delaysync::AgentModel;
use delaysync::Topology;

pub fn triple_integrator(full_state: bool) -> AgentModel {
    let c: &[&[f64]] = if full_state {
        &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]
    } else {
        &[&[1.0, 0.0, 0.0]]
    };
    AgentModel::from_rows(
        &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]],
        &[&[0.0], &[0.0], &[1.0]],
        c,
    )
    .unwrap()
}

pub fn oscillator() -> AgentModel {
    AgentModel::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]], &[&[0.0], &[1.0]], &[&[1.0, 0.0]]).unwrap()
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

pub fn load(name: &str) -> Scenario {
    harness::load_scenario(scenario_path(name)).unwrap()
}

/// Exact solution of `z' = -z(t - 1)`, `z = 1` on `[-1, 0]`, by the method of
/// steps: `z(t) = sum_{k=0}^{floor(t)+1} (-1)^k (t - k + 1)^k / k!`.
pub fn exact_unit_delay(t: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 0..=(t.floor() as i64 + 1) {
        if k > 0 {
            fact *= k as f64;
        }
        let base = t - k as f64 + 1.0;
        if base < 0.0 {
            break;
        }
        sum += (-1f64).powi(k as i32) * base.powi(k as i32) / fact;
    }
    sum
}

/// Places `block` at block position `(r, c)` of an `n`-blocked matrix.
pub fn put(m: &mut Mat, n: usize, r: usize, c: usize, block: &Mat) {
    let mut v = m.view_mut((r * n, c * n), (n, n));
    v += block;
}

/// Error-coordinate system of the full-state loop, state `(xt, e)`:
///
/// ```text
/// xt' = (I (x) A) xt - (I (x) F) xt(t - tau) + (I (x) F) e(t - tau)
/// e'  = (I (x) A - Lbar (x) I) e
/// ```
///
/// and of the partial-state loop, state `(xt, ebar, e)`:
///
/// ```text
/// xt'   = (I (x) A) xt - (I (x) F) xt(t - tau) + (I (x) F) e(t - tau)
/// ebar' = (I (x) (A - KC)) ebar
/// e'    = (I (x) A - Lbar (x) I) e + ebar
/// ```
pub fn reduced_system(
    model: &AgentModel,
    topology: &Topology,
    params: &ProtocolParams,
    delays: &[f64],
) -> LinearDde {
    let n = model.n();
    let agents = topology.num_agents();
    let partial = params.k.is_some();
    let blocks = if partial { 3 * agents } else { 2 * agents };
    let dim = blocks * n;
    let a = model.a();
    let f = model.b() * model.b().transpose() * &params.p * params.rho;
    let lbar = topology.expanded_laplacian().lbar;
    let eye = Mat::identity(n, n);
    let e_block = if partial { 2 * agents } else { agents };

    let mut a0 = Mat::zeros(dim, dim);
    let mut taus: Vec<f64> = delays.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut ad: Vec<Mat> = taus.iter().map(|_| Mat::zeros(dim, dim)).collect();

    for i in 0..agents {
        let d = taus.iter().position(|&t| t == delays[i]).unwrap();
        put(&mut a0, n, i, i, a);
        put(&mut ad[d], n, i, i, &-&f);
        put(&mut ad[d], n, i, e_block + i, &f);

        put(&mut a0, n, e_block + i, e_block + i, a);
        for j in 0..agents {
            put(&mut a0, n, e_block + i, e_block + j, &(&eye * -lbar[(i, j)]));
        }
        if let Some(k) = &params.k {
            let eb = agents + i;
            put(&mut a0, n, eb, eb, &(a - k * model.c()));
            put(&mut a0, n, e_block + i, eb, &eye);
        }
    }
    let terms = taus
        .into_iter()
        .zip(ad)
        .map(|(t, m)| DelayTerm::new(t, m).unwrap())
        .collect();
    LinearDde::new(a0, terms).unwrap()
}

/// Linear map from absolute coordinates `(x, chi [, xhat], x_r)` to the
/// error coordinates of [`reduced_system`].
pub fn to_reduced(topology: &Topology, n: usize, partial: bool) -> Mat {
    let agents = topology.num_agents();
    let abs_blocks = if partial { 3 * agents + 1 } else { 2 * agents + 1 };
    let red_blocks = if partial { 3 * agents } else { 2 * agents };
    let exo = abs_blocks - 1;
    let eye = Mat::identity(n, n);
    let lbar = topology.expanded_laplacian().lbar;
    let e_block = if partial { 2 * agents } else { agents };
    let mut t = Mat::zeros(red_blocks * n, abs_blocks * n);
    for i in 0..agents {
        // xt_i = x_i - x_r
        put(&mut t, n, i, i, &eye);
        put(&mut t, n, i, exo, &-&eye);
        // e_i = xt_i - chi_i
        put(&mut t, n, e_block + i, i, &eye);
        put(&mut t, n, e_block + i, exo, &-&eye);
        put(&mut t, n, e_block + i, agents + i, &-&eye);
        if partial {
            // ebar_i = sum_j lbar_ij xt_j - xhat_i
            for j in 0..agents {
                let l = lbar[(i, j)];
                put(&mut t, n, agents + i, j, &(&eye * l));
                put(&mut t, n, agents + i, exo, &(&eye * -l));
            }
            put(&mut t, n, agents + i, 2 * agents + i, &-&eye);
        }
    }
    t
}

pub fn max_abs(m: impl IntoIterator<Item = f64>) -> f64 {
    m.into_iter().map(f64::abs).fold(0.0, f64::max)
}

pub fn spectral_abscissa(m: &Mat) -> f64 {
    linalg::max_real_part(&linalg::eigenvalues(m).unwrap())
}

/// Delay-free closed loop written out block by block from the agent,
/// protocol and exosystem equations, in the ordering of `layout`.
pub fn summed_absolute_system(
    model: &AgentModel,
    topology: &Topology,
    params: &ProtocolParams,
    layout: &delaysync::protocol::StateLayout,
) -> Mat {
    use delaysync::protocol::BlockKind::{Chi, Exo, Xhat, X};
    let n = model.n();
    let agents = topology.num_agents();
    let a = model.a();
    let f = model.b() * model.b().transpose() * &params.p * params.rho;
    let lbar = topology.expanded_laplacian().lbar;
    let iota = topology.iota();
    let eye = Mat::identity(n, n);
    let mut m = Mat::zeros(layout.dim(), layout.dim());
    let mut put = |r: usize, c: usize, blk: &Mat| {
        let mut v = m.view_mut((r, c), (n, n));
        v += blk;
    };
    let xr = layout.offset(Exo, 0);
    put(xr, xr, a);
    for i in 0..agents {
        let (x, chi) = (layout.offset(X, i), layout.offset(Chi, i));
        put(x, x, a);
        put(x, chi, &-&f);
        put(chi, chi, &(a - &f));
        match &params.k {
            None => {
                for j in 0..agents {
                    let l = lbar[(i, j)];
                    put(chi, layout.offset(X, j), &(&eye * l));
                    put(chi, layout.offset(Chi, j), &(&eye * -l));
                }
                put(chi, xr, &(&eye * -iota[i]));
            }
            Some(k) => {
                let xh = layout.offset(Xhat, i);
                let kc = k * model.c();
                put(chi, xh, &eye);
                put(xh, xh, &(a - &kc));
                put(xh, xr, &(&kc * -iota[i]));
                for j in 0..agents {
                    let l = lbar[(i, j)];
                    put(chi, layout.offset(Chi, j), &(&eye * -l));
                    put(xh, layout.offset(X, j), &(&kc * l));
                    put(xh, layout.offset(Chi, j), &(&f * -l));
                }
            }
        }
    }
    m
}

/// Classical fixed-step RK4 for `z' = M z`, sampled every step.
pub fn rk4(m: &Mat, z0: &delaysync::dde::Vector, h: f64, steps: usize) -> Vec<delaysync::dde::Vector> {
    let mut out = vec![z0.clone()];
    let mut z = z0.clone();
    for _ in 0..steps {
        let k1 = m * &z;
        let k2 = m * (&z + &k1 * (h / 2.0));
        let k3 = m * (&z + &k2 * (h / 2.0));
        let k4 = m * (&z + &k3 * h);
        z = &z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(z.clone());
    }
    out
}
