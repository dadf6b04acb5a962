use serde::Serialize;

use super::{CouplingMode, ProtocolParams};
use crate::dde::{self, DelayTerm, InitialHistory, LinearDde, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::AgentModel;
use crate::topology::Topology;

/// Largest closed-loop state dimension `build_closed_loop` will assemble.
pub const MAX_STATE_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Agent state `x_i`.
    X,
    /// Protocol state `chi_i`.
    Chi,
    /// Observer state `xhat_i`.
    Xhat,
    /// Exosystem state `x_r`.
    Exo,
}

impl BlockKind {
    fn prefix(self) -> &'static str {
        match self {
            BlockKind::X => "x",
            BlockKind::Chi => "chi",
            BlockKind::Xhat => "xhat",
            BlockKind::Exo => "xr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub kind: BlockKind,
    /// Zero-based agent index; `None` for the exosystem.
    pub agent: Option<usize>,
    pub offset: usize,
}

/// Position of every `n`-dimensional block inside the stacked state
/// `(x_1..x_N, chi_1..chi_N [, xhat_1..xhat_N] [, x_r])`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateLayout {
    n: usize,
    agents: usize,
    has_observer: bool,
    has_exo: bool,
}

impl StateLayout {
    pub fn new(n: usize, agents: usize, has_observer: bool, has_exo: bool) -> Self {
        Self {
            n,
            agents,
            has_observer,
            has_exo,
        }
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn num_agents(&self) -> usize {
        self.agents
    }

    pub fn has_observer(&self) -> bool {
        self.has_observer
    }

    pub fn has_exo(&self) -> bool {
        self.has_exo
    }

    pub fn dim(&self) -> usize {
        let per_agent = if self.has_observer { 3 } else { 2 };
        self.n * (per_agent * self.agents + usize::from(self.has_exo))
    }

    /// Offset of agent block `i`, or of the exosystem when `kind` is `Exo`.
    ///
    /// # Panics
    /// If the block is not part of this layout.
    pub fn offset(&self, kind: BlockKind, agent: usize) -> usize {
        let n_agents = self.agents;
        let slot = match kind {
            BlockKind::X => agent,
            BlockKind::Chi => n_agents + agent,
            BlockKind::Xhat => {
                assert!(self.has_observer, "layout has no observer blocks");
                2 * n_agents + agent
            }
            BlockKind::Exo => {
                assert!(self.has_exo, "layout has no exosystem block");
                return self.dim() - self.n;
            }
        };
        assert!(agent < n_agents, "agent {agent} out of range");
        slot * self.n
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut kinds = vec![BlockKind::X, BlockKind::Chi];
        if self.has_observer {
            kinds.push(BlockKind::Xhat);
        }
        let mut out = Vec::new();
        for kind in kinds {
            for i in 0..self.agents {
                out.push(Block {
                    kind,
                    agent: Some(i),
                    offset: self.offset(kind, i),
                });
            }
        }
        if self.has_exo {
            out.push(Block {
                kind: BlockKind::Exo,
                agent: None,
                offset: self.offset(BlockKind::Exo, 0),
            });
        }
        out
    }

    /// Column names in state order: `x{i}_{k}`, `chi{i}_{k}`, `xhat{i}_{k}`,
    /// `xr_{k}`, all one-based.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for b in self.blocks() {
            for k in 1..=self.n {
                names.push(match b.agent {
                    Some(i) => format!("{}{}_{k}", b.kind.prefix(), i + 1),
                    None => format!("{}_{k}", b.kind.prefix()),
                });
            }
        }
        names
    }
}

/// Linear multi-delay closed loop of a concrete network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem {
    dde: LinearDde,
    layout: StateLayout,
}

impl ClosedLoopSystem {
    pub fn dde(&self) -> &LinearDde {
        &self.dde
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn a0(&self) -> &Mat {
        self.dde.a0()
    }

    pub fn delay_terms(&self) -> &[DelayTerm] {
        self.dde.terms()
    }

    /// `A0 + sum_d Ad`, the dynamics with every delay set to zero.
    pub fn delay_free_matrix(&self) -> Mat {
        self.dde.delay_free_matrix()
    }

    /// Integrates the loop; the trajectory carries this system's layout.
    pub fn simulate(&self, initial: &InitialHistory, h: f64, t_max: f64) -> Result<Trajectory> {
        let mut traj = dde::integrate(&self.dde, initial, h, t_max)?;
        traj.layout = Some(self.layout.clone());
        Ok(traj)
    }

    /// The delay-free matrix with the exosystem rows and columns removed.
    pub fn delay_free_without_exo(&self) -> Mat {
        let full = self.delay_free_matrix();
        if !self.layout.has_exo {
            return full;
        }
        let keep = self.layout.dim() - self.layout.n;
        full.view((0, 0), (keep, keep)).clone_owned()
    }
}

/// Assembles the closed loop in absolute coordinates.
///
/// With `F = rho B B^T P` and `Lbar = L + diag(iota)`:
///
/// ```text
/// x_i'    = A x_i - F chi_i(t - tau_i)
/// chi_i'  = A chi_i - F chi_i(t - tau_i) + sum_j lbar_ij (x_j - chi_j) - iota_i x_r          (full)
/// xhat_i' = (A - KC) xhat_i + KC (sum_j lbar_ij x_j - iota_i x_r) - sum_j lbar_ij F chi_j(t - tau_j)
/// chi_i'  = A chi_i - F chi_i(t - tau_i) + xhat_i - sum_j lbar_ij chi_j                      (partial)
/// x_r'    = A x_r
/// ```
///
/// The partial-state observer equation is the expansion of the transmitted
/// quantities `K zeta_i`, `B Phi_i` and `iota_i B u_i(t - tau_i)`. Without the
/// exosystem every `x_r` term is dropped.
pub fn build_closed_loop(
    model: &AgentModel,
    topology: &Topology,
    params: &ProtocolParams,
    delays: &[f64],
    include_exo: bool,
) -> Result<ClosedLoopSystem> {
    let n = model.n();
    let agents = topology.num_agents();
    if delays.len() != agents {
        return Err(Error::invalid(format!(
            "{} delays given for {agents} agents",
            delays.len()
        )));
    }
    if let Some((i, tau)) = delays
        .iter()
        .enumerate()
        .find(|(_, &t)| !(t.is_finite() && t >= 0.0 && t <= params.tau_bar))
    {
        return Err(Error::invalid(format!(
            "delay tau_{} = {tau} outside [0, {}]",
            i + 1,
            params.tau_bar
        )));
    }
    if !topology.check_membership() {
        return Err(Error::invalid(
            "some agent is not reachable from the root set",
        ));
    }
    if params.p.shape() != (n, n) {
        return Err(Error::invalid(format!("P must be {n}x{n}")));
    }
    let observer = params.coupling == CouplingMode::PartialState;
    let k = match (&params.k, observer) {
        (Some(k), true) if k.shape() == (n, model.q()) => Some(k),
        (_, true) => {
            return Err(Error::invalid(format!(
                "partial-state coupling needs an {n}x{} observer gain K",
                model.q()
            )))
        }
        (_, false) => None,
    };
    let per_agent = if observer { 3 } else { 2 };
    let dim = agents
        .checked_mul(per_agent)
        .and_then(|s| s.checked_add(usize::from(include_exo)))
        .and_then(|s| s.checked_mul(n));
    let dim = match dim {
        Some(d) if d <= MAX_STATE_DIM => d,
        _ => {
            return Err(Error::invalid(format!(
                "closed-loop state for {agents} agents of order {n} exceeds {MAX_STATE_DIM}"
            )))
        }
    };
    let layout = StateLayout::new(n, agents, observer, include_exo);
    debug_assert_eq!(layout.dim(), dim);

    let a = model.a();
    let f = params.delayed_gain(model.b());
    let lbar = topology.expanded_laplacian().lbar;
    let iota = topology.iota();
    let eye = Mat::identity(n, n);

    let mut a0 = Mat::zeros(dim, dim);
    let put = |m: &mut Mat, r: usize, c: usize, blk: &Mat| {
        let mut v = m.view_mut((r, c), (n, n));
        v += blk;
    };

    // distinct delays, ascending
    let mut taus: Vec<f64> = delays.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut ad: Vec<Mat> = taus.iter().map(|_| Mat::zeros(dim, dim)).collect();
    let slot = |tau: f64| taus.iter().position(|&t| t == tau).expect("delay listed");

    for i in 0..agents {
        let xi = layout.offset(BlockKind::X, i);
        let ci = layout.offset(BlockKind::Chi, i);
        let di = slot(delays[i]);

        put(&mut a0, xi, xi, a);
        put(&mut ad[di], xi, ci, &-&f);

        put(&mut a0, ci, ci, a);
        put(&mut ad[di], ci, ci, &-&f);
        for j in 0..agents {
            let l = lbar[(i, j)];
            if l == 0.0 {
                continue;
            }
            let cj = layout.offset(BlockKind::Chi, j);
            put(&mut a0, ci, cj, &(&eye * -l));
            if !observer {
                put(&mut a0, ci, layout.offset(BlockKind::X, j), &(&eye * l));
            }
        }
        if include_exo && !observer && iota[i] != 0.0 {
            put(&mut a0, ci, layout.offset(BlockKind::Exo, 0), &(&eye * -iota[i]));
        }

        if let Some(k) = k {
            let hi = layout.offset(BlockKind::Xhat, i);
            let kc = k * model.c();
            put(&mut a0, ci, hi, &eye);
            put(&mut a0, hi, hi, &(a - &kc));
            for j in 0..agents {
                let l = lbar[(i, j)];
                if l == 0.0 {
                    continue;
                }
                put(&mut a0, hi, layout.offset(BlockKind::X, j), &(&kc * l));
                let cj = layout.offset(BlockKind::Chi, j);
                put(&mut ad[slot(delays[j])], hi, cj, &(&f * -l));
            }
            if include_exo && iota[i] != 0.0 {
                put(&mut a0, hi, layout.offset(BlockKind::Exo, 0), &(&kc * -iota[i]));
            }
        }
    }
    if include_exo {
        let r = layout.offset(BlockKind::Exo, 0);
        put(&mut a0, r, r, a);
    }

    let terms = taus
        .into_iter()
        .zip(ad)
        .map(|(tau, a)| DelayTerm::new(tau, a))
        .collect::<Result<Vec<_>>>()?;
    let system = ClosedLoopSystem {
        dde: LinearDde::new(a0, terms)?,
        layout,
    };

    // Without the exosystem the delay-free loop is block triangular in the
    // error coordinates and Hurwitz whenever the inputs are admissible.
    if !linalg::is_hurwitz(&system.delay_free_without_exo())? {
        return Err(Error::Unsolvable(
            "the delay-free closed loop is not asymptotically stable".into(),
        ));
    }
    Ok(system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn triple() -> AgentModel {
        AgentModel::from_rows(
            &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]],
            &[&[0.0], &[0.0], &[1.0]],
            &[&[1.0, 0.0, 0.0]],
        )
        .unwrap()
    }

    fn params(model: &AgentModel, coupling: CouplingMode) -> ProtocolParams {
        let care = crate::riccati::solve_care(model, 1e-2).unwrap();
        ProtocolParams {
            rho: 1.01,
            epsilon: 1e-2,
            p: care.p,
            k: Some(Mat::from_column_slice(3, 1, &[6.0, 11.0, 6.0])),
            tau_bar: 4.0,
            coupling,
        }
    }

    #[test]
    fn layout_offsets_and_names() {
        let l = StateLayout::new(2, 3, true, true);
        assert_eq!(l.dim(), 2 * 10);
        assert_eq!(l.offset(BlockKind::Chi, 0), 6);
        assert_eq!(l.offset(BlockKind::Xhat, 2), 16);
        assert_eq!(l.offset(BlockKind::Exo, 0), 18);
        let names = l.column_names();
        assert_eq!(names[0], "x1_1");
        assert_eq!(names[7], "chi1_2");
        assert_eq!(names[19], "xr_2");
        assert_eq!(names.len(), l.dim());
    }

    #[test]
    fn single_agent_full_state() {
        let m = triple();
        let p = params(&m, CouplingMode::FullState);
        let t = Topology::new(Mat::zeros(1, 1), [0]).unwrap();
        let sys = build_closed_loop(&m, &t, &p, &[1.5], true).unwrap();
        assert_eq!(sys.state_dim(), 9);
        assert_eq!(sys.delay_terms().len(), 1);
        let f = p.delayed_gain(m.b());
        let ad = &sys.delay_terms()[0].a;
        assert_eq!(ad.view((0, 3), (3, 3)).clone_owned(), -&f);
        assert_eq!(ad.view((3, 3), (3, 3)).clone_owned(), -&f);
        let chi_chi = sys.a0().view((3, 3), (3, 3)).clone_owned();
        assert_eq!(chi_chi, m.a() - Mat::identity(3, 3));
        assert_eq!(sys.a0().view((3, 6), (3, 3)).clone_owned(), -Mat::identity(3, 3));
    }

    #[test]
    fn path_graph_has_one_term_per_delay() {
        let m = triple();
        let p = params(&m, CouplingMode::FullState);
        let sys = build_closed_loop(&m, &Topology::path(3).unwrap(), &p, &[1.0, 2.0, 3.0], true)
            .unwrap();
        let taus: Vec<f64> = sys.delay_terms().iter().map(|d| d.tau).collect();
        assert_eq!(taus, vec![1.0, 2.0, 3.0]);
        let shared =
            build_closed_loop(&m, &Topology::path(3).unwrap(), &p, &[2.0, 1.0, 2.0], true).unwrap();
        assert_eq!(shared.delay_terms().len(), 2);
    }

    #[test]
    fn rejects_out_of_range_delay() {
        let m = triple();
        let p = params(&m, CouplingMode::FullState);
        let t = Topology::path(2).unwrap();
        assert!(build_closed_loop(&m, &t, &p, &[1.0, 4.5], true).is_err());
        assert!(build_closed_loop(&m, &t, &p, &[1.0], true).is_err());
        assert!(build_closed_loop(&m, &t, &p, &[-0.1, 1.0], true).is_err());
    }

    #[test]
    fn rejects_unreachable_agent() {
        let m = triple();
        let p = params(&m, CouplingMode::FullState);
        let t = Topology::new(Mat::zeros(2, 2), [0]).unwrap();
        assert!(build_closed_loop(&m, &t, &p, &[1.0, 1.0], true).is_err());
    }

    /// Greedy nearest matching; defective eigenvalues are only accurate to
    /// roughly the cube root of machine precision, hence the loose tolerance.
    fn spectrum_matches(got: Vec<Complex64>, want: Vec<Complex64>) {
        assert_eq!(got.len(), want.len());
        let mut pool = want;
        for g in got {
            let (idx, dist) = pool
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (g - w).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert!(dist < 1e-3, "{g} unmatched (nearest {})", pool[idx]);
            pool.swap_remove(idx);
        }
    }

    #[test]
    fn delay_free_spectrum_splits_into_blocks() {
        let m = triple();
        // distinct Lbar eigenvalues 1, 2, 3 keep the spectrum well separated
        let top = Topology::from_edges(3, &[(0, 1, 2.0), (1, 2, 3.0)], [0]).unwrap();
        let lbar = top.expanded_laplacian().lbar;
        let eye_n = Mat::identity(3, 3);
        let eye_agents = Mat::identity(3, 3);
        for coupling in [CouplingMode::FullState, CouplingMode::PartialState] {
            let p = params(&m, coupling);
            let sys = build_closed_loop(&m, &top, &p, &[0.0; 3], false).unwrap();
            let got = linalg::eigenvalues(&sys.delay_free_matrix()).unwrap();

            let closed = m.a() - p.delayed_gain(m.b());
            let coupled = linalg::kron(&eye_agents, m.a()) - linalg::kron(&lbar, &eye_n);
            let mut want = Vec::new();
            for _ in 0..3 {
                want.extend(linalg::eigenvalues(&closed).unwrap());
            }
            want.extend(linalg::eigenvalues(&coupled).unwrap());
            if coupling == CouplingMode::PartialState {
                let obs = m.a() - p.k.as_ref().unwrap() * m.c();
                for _ in 0..3 {
                    want.extend(linalg::eigenvalues(&obs).unwrap());
                }
            }
            spectrum_matches(got, want);
        }
    }
}
