//! Support-digraph analysis: irreducibility and period.

use std::collections::VecDeque;

use serde::Serialize;

use crate::matrix::NonNegMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphAnalysis {
    pub irreducible: bool,
    /// Period of the communicating class of state 0 (the whole state space
    /// when irreducible). A class without any cycle reports 1.
    pub period: usize,
    /// `(from, to)` such that `to` cannot be reached from `from`.
    pub scc_witness: Option<(usize, usize)>,
}

fn bfs_levels(n: usize, root: usize, adj: impl Fn(usize) -> Vec<usize>) -> Vec<Option<usize>> {
    let mut level = vec![None; n];
    level[root] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for v in adj(u) {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn analyze_graph(b: &NonNegMatrix) -> GraphAnalysis {
    let n = b.n();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in b.entries() {
        reverse[j].push(i);
    }

    let forward = bfs_levels(n, 0, |u| b.row(u).iter().map(|&(j, _)| j).collect());
    let backward = bfs_levels(n, 0, |u| reverse[u].clone());

    let scc_witness = forward
        .iter()
        .position(Option::is_none)
        .map(|y| (0, y))
        .or_else(|| backward.iter().position(Option::is_none).map(|x| (x, 0)));

    // gcd of level(u) + 1 - level(v) over support edges inside the class of 0
    let in_class = |s: usize| forward[s].is_some() && backward[s].is_some();
    let mut g = 0usize;
    for (u, v, _) in b.entries() {
        if in_class(u) && in_class(v) {
            let lu = forward[u].unwrap() as i64;
            let lv = forward[v].unwrap() as i64;
            g = gcd(g, (lu + 1 - lv).unsigned_abs() as usize);
        }
    }

    GraphAnalysis {
        irreducible: scc_witness.is_none(),
        period: g.max(1),
        scc_witness,
    }
}

/// True when the support digraph has no directed cycle, i.e. the matrix is
/// nilpotent and its spectral radius is exactly zero.
pub fn is_acyclic(m: &NonNegMatrix) -> bool {
    let n = m.n();
    let mut indegree = vec![0usize; n];
    for (_, j, _) in m.entries() {
        indegree[j] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut removed = 0;
    while let Some(u) = queue.pop() {
        removed += 1;
        for &(v, _) in m.row(u) {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push(v);
            }
        }
    }
    removed == n
}
