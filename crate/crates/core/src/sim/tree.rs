//! Kingman coalescent genealogies.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Rooted binary tree. Leaves are nodes `0..n`, internal nodes `n..2n−1` in
/// order of creation; the root is the last node. Times are ages (leaves at 0)
/// in coalescent units.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescentTree {
    n_leaves: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Option<(usize, usize)>>,
    time: Vec<f64>,
}

impl CoalescentTree {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_nodes(&self) -> usize {
        self.time.len()
    }

    pub fn root(&self) -> usize {
        self.time.len() - 1
    }

    pub fn time(&self, node: usize) -> f64 {
        self.time[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        self.children[node]
    }

    pub fn height(&self) -> f64 {
        self.time[self.root()]
    }

    /// Length of the branch above `node` (0 for the root).
    pub fn branch_length(&self, node: usize) -> f64 {
        self.parent[node].map_or(0.0, |p| self.time[p] - self.time[node])
    }

    pub fn total_length(&self) -> f64 {
        (0..self.n_nodes()).map(|v| self.branch_length(v)).sum()
    }

    /// Nodes on the path from the root down to `node`, root first.
    pub fn path_from_root(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut v = node;
        while let Some(p) = self.parent[v] {
            path.push(p);
            v = p;
        }
        path.reverse();
        path
    }
}

/// Samples a Kingman n-coalescent: with k lineages, the next merger comes after
/// an Exp(k(k−1)/2) wait and joins a uniformly chosen pair.
///
/// # Panics
/// If `n < 2`.
pub fn simulate_coalescent_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CoalescentTree {
    assert!(n >= 2, "a coalescent tree needs at least two leaves");
    let total = 2 * n - 1;
    let mut parent = vec![None; total];
    let mut children = vec![None; total];
    let mut time = vec![0.0; total];
    let mut active: Vec<usize> = (0..n).collect();
    let mut t = 0.0;
    for node in n..total {
        let k = active.len() as f64;
        t += Exp::new(k * (k - 1.0) / 2.0).expect("positive rate").sample(rng);
        let i = rng.random_range(0..active.len());
        let a = active.swap_remove(i);
        let j = rng.random_range(0..active.len());
        let b = active.swap_remove(j);
        parent[a] = Some(node);
        parent[b] = Some(node);
        children[node] = Some((a.min(b), a.max(b)));
        time[node] = t;
        active.push(node);
    }
    CoalescentTree { n_leaves: n, parent, children, time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn structure() {
        let mut rng = stream_rng(1, 0);
        let t = simulate_coalescent_tree(6, &mut rng);
        assert_eq!(t.n_leaves(), 6);
        assert_eq!(t.n_nodes(), 11);
        assert_eq!(t.parent(t.root()), None);
        for v in 0..t.root() {
            let p = t.parent(v).unwrap();
            assert!(t.time(p) > t.time(v));
        }
        for leaf in 0..6 {
            assert_eq!(t.time(leaf), 0.0);
            assert_eq!(t.path_from_root(leaf)[0], t.root());
        }
    }
}
