//! Static kd-tree over the length-`n` prefixes of a [`SequenceSample`],
//! answering closed-ball queries under `d_{n,p}`.

use crate::dynamics::{Norm, SequenceSample};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u32, value: f64, left: u32, right: u32 },
}

pub(crate) struct KdTree<'a> {
    sample: &'a SequenceSample,
    n: usize,
    perm: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn build(sample: &'a SequenceSample, n: usize) -> Self {
        assert!(n >= 1 && n <= sample.n());
        assert!(sample.len() < u32::MAX as usize);
        let mut tree = Self { sample, n, perm: (0..sample.len() as u32).collect(), nodes: Vec::new() };
        let len = tree.perm.len();
        tree.build_range(0, len);
        tree
    }

    #[inline]
    fn point(&self, i: u32) -> &[f64] {
        self.sample.prefix(i as usize, self.n)
    }

    fn build_range(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start: start as u32, end: end as u32 });
            return id;
        }
        // Split on the coordinate of largest spread.
        let mut lo = vec![f64::INFINITY; self.n];
        let mut hi = vec![f64::NEG_INFINITY; self.n];
        for &i in &self.perm[start..end] {
            for (d, v) in self.point(i).iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        let (dim, spread) = (0..self.n).map(|d| (d, hi[d] - lo[d])).fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        if spread <= 0.0 {
            self.nodes.push(Node::Leaf { start: start as u32, end: end as u32 });
            return id;
        }
        let mid = start + (end - start) / 2;
        let sample = self.sample;
        let n = self.n;
        self.perm[start..end].select_nth_unstable_by(mid - start, |a, b| {
            let va = sample.prefix(*a as usize, n)[dim];
            let vb = sample.prefix(*b as usize, n)[dim];
            va.total_cmp(&vb)
        });
        let value = self.point(self.perm[mid])[dim];
        self.nodes.push(Node::Split { dim: dim as u32, value, left: 0, right: 0 });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id as usize] = Node::Split { dim: dim as u32, value, left, right };
        id
    }

    /// Call `visit(j)` for every entry `j` with `d_{n,p}(q, x_j) ≤ r`.
    pub(crate) fn for_each_within(&self, q: &[f64], r: f64, norm: Norm, mut visit: impl FnMut(usize)) {
        let threshold = norm.threshold(self.n, r);
        match norm {
            Norm::Inf => self.query_inf(0, q, threshold, &mut visit),
            _ => {
                let mut off = vec![0.0; self.n];
                self.query_p(0, q, threshold, norm, &mut off, 0.0, &mut visit);
            }
        }
    }

    fn scan_leaf(&self, start: u32, end: u32, q: &[f64], threshold: f64, norm: Norm, visit: &mut impl FnMut(usize)) {
        for &j in &self.perm[start as usize..end as usize] {
            if norm.within(q, self.point(j), threshold) {
                visit(j as usize);
            }
        }
    }

    fn query_inf(&self, node: u32, q: &[f64], r: f64, visit: &mut impl FnMut(usize)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => self.scan_leaf(start, end, q, r, Norm::Inf, visit),
            Node::Split { dim, value, left, right } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.query_inf(near, q, r, visit);
                if diff.abs() <= r {
                    self.query_inf(far, q, r, visit);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn query_p(&self, node: u32, q: &[f64], threshold: f64, norm: Norm, off: &mut [f64], dist: f64, visit: &mut impl FnMut(usize)) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => self.scan_leaf(start, end, q, threshold, norm, visit),
            Node::Split { dim, value, left, right } => {
                let d = dim as usize;
                let diff = q[d] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.query_p(near, q, threshold, norm, off, dist, visit);
                let old = off[d];
                let far_dist = dist - norm.term(old) + norm.term(diff);
                if far_dist <= threshold {
                    off[d] = diff.abs();
                    self.query_p(far, q, threshold, norm, off, far_dist, visit);
                    off[d] = old;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn ball_queries_match_brute_force() {
        let mut rng = rng::stream(3, "kdtree", &[]);
        let seqs: Vec<Vec<f64>> = (0..800).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let sample = SequenceSample::from_sequences("t", seqs).unwrap();
        for n in [1, 3, 6] {
            let tree = KdTree::build(&sample, n);
            for norm in [Norm::L1, Norm::L2, Norm::P(3.0), Norm::Inf] {
                for qi in [0usize, 17, 399] {
                    let q = sample.prefix(qi, n);
                    for r in [0.05, 0.2, 0.5] {
                        let mut got = vec![];
                        tree.for_each_within(q, r, norm, |j| got.push(j));
                        got.sort_unstable();
                        let want: Vec<usize> = (0..sample.len())
                            .filter(|&j| crate::dynamics::pseudo_metric(q, sample.prefix(j, n), norm).unwrap() <= r * (1.0 + 1e-12))
                            .collect();
                        assert_eq!(got, want, "n={n} norm={norm} r={r}");
                    }
                }
            }
        }
    }
}
