//! Fill-reducing orderings.
//!
//! [`minimum_degree`] is an approximate minimum degree ordering on the
//! quotient graph: eliminated nodes become elements, elements adjacent to a
//! pivot are absorbed into the new element, and degrees are replaced by the
//! usual AMD upper bound computed from `|Le \ Lp|` set differences. Nodes
//! with very high degree are pulled out up front and ordered last, which is
//! also where callers can pin nodes they want eliminated at the end.

use std::collections::BTreeSet;

use super::SparseSymmetric;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Identity permutation.
    Natural,
    /// Approximate minimum degree.
    #[default]
    MinimumDegree,
    /// Approximate minimum degree on all nodes except `trailing`, which are
    /// placed last in the given order.
    MinimumDegreeTrailing(Vec<usize>),
    /// A caller-supplied permutation (`perm[k]` = original index of pivot k).
    Given(Vec<usize>),
}

impl Ordering {
    pub(crate) fn permutation(&self, pattern: &SparseSymmetric) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..pattern.dim()).collect(),
            Ordering::MinimumDegree => minimum_degree(&pattern.adjacency(), &[]),
            Ordering::MinimumDegreeTrailing(tr) => minimum_degree(&pattern.adjacency(), tr),
            Ordering::Given(p) => p.clone(),
        }
    }
}

const VAR: u8 = 0;
const ELEMENT: u8 = 1;
const ABSORBED: u8 = 2;
const EXCLUDED: u8 = 3;

/// Approximate minimum degree ordering of a symmetric adjacency structure.
///
/// `adj[i]` lists the neighbours of `i` (no self loops needed). Nodes in
/// `trailing` are excluded from elimination and appended at the end in the
/// order given. Returns `perm` with `perm[k]` the original index of the
/// k-th pivot.
pub fn minimum_degree(adj: &[Vec<usize>], trailing: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut status = vec![VAR; n];
    for &t in trailing {
        status[t] = EXCLUDED;
    }

    // Dense rows would make every element list quadratic; order them last.
    let dense_threshold = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let mut dense: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        if status[i] == VAR && adj[i].len() > dense_threshold {
            status[i] = EXCLUDED;
            dense.push((adj[i].len(), i));
        }
    }
    dense.sort_unstable();

    let mut avars: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if status[i] != VAR {
                return Vec::new();
            }
            let mut a: Vec<usize> = adj[i]
                .iter()
                .copied()
                .filter(|&j| j != i && status[j] == VAR)
                .collect();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let mut aelems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut evars: Vec<Vec<usize>> = vec![Vec::new(); n];

    let mut degree: Vec<usize> = avars.iter().map(Vec::len).collect();
    let mut heap: BTreeSet<(usize, usize)> = (0..n)
        .filter(|&i| status[i] == VAR)
        .map(|i| (degree[i], i))
        .collect();
    let mut remaining = heap.len();

    let mut mark = vec![usize::MAX; n];
    let mut wstamp = vec![usize::MAX; n];
    let mut w = vec![0usize; n];
    let mut perm = Vec::with_capacity(n);

    let mut step = 0usize;
    while let Some((_, p)) = heap.pop_first() {
        perm.push(p);
        remaining -= 1;

        // New element Lp = (Ap ∪ ⋃ Le) \ {p}; elements of p are absorbed.
        let mut lp: Vec<usize> = Vec::new();
        mark[p] = step;
        for &v in &avars[p] {
            if status[v] == VAR && mark[v] != step {
                mark[v] = step;
                lp.push(v);
            }
        }
        let pelems = std::mem::take(&mut aelems[p]);
        for e in pelems {
            if status[e] != ELEMENT {
                continue;
            }
            for &v in &evars[e] {
                if status[v] == VAR && mark[v] != step {
                    mark[v] = step;
                    lp.push(v);
                }
            }
            status[e] = ABSORBED;
            evars[e] = Vec::new();
        }
        avars[p] = Vec::new();
        status[p] = ELEMENT;

        for &i in &lp {
            aelems[i].retain(|&e| status[e] == ELEMENT);
            aelems[i].push(p);
            avars[i].retain(|&v| status[v] == VAR && mark[v] != step);
        }

        // |Le \ Lp| for every element touching Lp.
        for &i in &lp {
            for &e in &aelems[i] {
                if e == p {
                    continue;
                }
                if wstamp[e] != step {
                    wstamp[e] = step;
                    w[e] = evars[e].len();
                }
                w[e] -= 1;
            }
        }

        let lp_len = lp.len();
        for &i in &lp {
            let mut ext = 0usize;
            for &e in &aelems[i] {
                if e == p || status[e] != ELEMENT {
                    continue;
                }
                if w[e] == 0 {
                    // e ⊆ Lp: aggressive absorption.
                    status[e] = ABSORBED;
                    evars[e] = Vec::new();
                } else {
                    ext += w[e];
                }
            }
            aelems[i].retain(|&e| status[e] == ELEMENT);
            let bound = avars[i].len() + (lp_len - 1) + ext;
            let d = bound
                .min(remaining.saturating_sub(1))
                .min(degree[i] + lp_len - 1);
            heap.remove(&(degree[i], i));
            degree[i] = d;
            heap.insert((d, i));
        }
        evars[p] = lp;
        step += 1;
    }

    perm.extend(dense.into_iter().map(|(_, i)| i));
    perm.extend_from_slice(trailing);
    perm
}
