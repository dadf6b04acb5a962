//! Representative communication graphs for the four example networks.
//!
//! Only node counts, root sets and delays of the examples are known; the edge
//! sets below are stand-ins chosen so that each graph exercises a different
//! structure (chain, tree, two roots without a spanning tree, cycle).

use crate::error::Result;
use crate::topology::Topology;

/// Delay bound shared by all example networks.
pub const CASE_TAU_BAR: f64 = 4.0;

/// Node count of each example network, in order.
pub const CASE_SIZES: [usize; 4] = [3, 6, 10, 5];

/// Delays of the examples, one entry per agent.
pub fn case_delays(case: usize) -> Option<Vec<f64>> {
    let d: &[f64] = match case {
        1 => &[1.0, 2.0, 3.0],
        2 => &[1.0, 2.0, 3.0, 2.0, 3.0, 1.5],
        3 => &[1.0, 2.0, 3.0, 2.0, 3.0, 1.5, 0.5, 0.7, 4.0, 2.5],
        4 => &[1.0, 2.0, 3.0, 2.0, 3.0],
        _ => return None,
    };
    Some(d.to_vec())
}

/// One-based `(from, to)` edges and roots.
pub type EdgeList = (Vec<(usize, usize)>, Vec<usize>);

/// Edges and roots of example `case`.
pub fn case_edges(case: usize) -> Option<EdgeList> {
    let (edges, roots): (&[(usize, usize)], &[usize]) = match case {
        1 => (&[(1, 2), (2, 3)], &[1]),
        2 => (&[(1, 2), (2, 3), (1, 4), (4, 5), (5, 6)], &[1]),
        3 => (
            &[
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 1),
                (6, 7),
                (7, 8),
                (8, 9),
                (9, 10),
                (3, 8),
            ],
            &[1, 6],
        ),
        4 => (&[(1, 2), (2, 3), (3, 4), (4, 5), (5, 3), (2, 5)], &[1]),
        _ => return None,
    };
    Some((edges.to_vec(), roots.to_vec()))
}

/// Unit-weight topology of example `case` (1 to 4).
pub fn case_topology(case: usize) -> Option<Result<Topology>> {
    let (edges, roots) = case_edges(case)?;
    let n = CASE_SIZES[case - 1];
    let zero_based: Vec<_> = edges.iter().map(|&(f, t)| (f - 1, t - 1, 1.0)).collect();
    Some(Topology::from_edges(n, &zero_based, roots.iter().map(|r| r - 1)))
}

/// Example topology with `n` agents if there is one, else the directed path.
pub fn topology_for_size(n: usize) -> Result<Topology> {
    match CASE_SIZES.iter().position(|&s| s == n) {
        Some(k) => case_topology(k + 1).expect("listed case"),
        None => Topology::path(n),
    }
}
