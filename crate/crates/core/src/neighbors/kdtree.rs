//! Exact k-nearest-neighbor search tree.
//!
//! Returns the k smallest candidates under the same total order the brute
//! backend uses: (distance, tie key, index). Subtrees are pruned only when
//! every point in them is strictly farther than the current k-th candidate,
//! so equal-distance candidates still compete on their tie keys and both
//! backends agree exactly.

use std::collections::BinaryHeap;

use crate::dataset::Dataset;
use crate::neighbors::{sq_dist, Candidate};

const LEAF_SIZE: usize = 16;

enum Node {
    Split {
        axis: usize,
        value: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

pub(crate) struct KdTree {
    nodes: Vec<Node>,
    ids: Vec<u32>,
    root: u32,
}

impl KdTree {
    pub fn build(data: &Dataset) -> Self {
        let n = data.len();
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        let root = build_node(data, &mut ids, 0, &mut nodes);
        Self { nodes, ids, root }
    }

    /// The k best candidates in ascending order.
    pub fn knn(
        &self,
        data: &Dataset,
        query: &[f64],
        k: usize,
        exclude: Option<u32>,
        key: &dyn Fn(u32, f64) -> u64,
    ) -> Vec<Candidate> {
        debug_assert!(k <= data.len() - usize::from(exclude.is_some()));
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.visit(self.root, data, query, k, exclude, key, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &self,
        node: u32,
        data: &Dataset,
        query: &[f64],
        k: usize,
        exclude: Option<u32>,
        key: &dyn Fn(u32, f64) -> u64,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &idx in &self.ids[start as usize..end as usize] {
                    if Some(idx) == exclude {
                        continue;
                    }
                    let d2 = sq_dist(query, data.point(idx as usize));
                    let cand = Candidate {
                        d2,
                        key: key(idx, d2),
                        idx,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap nonempty") {
                        *heap.peek_mut().expect("heap nonempty") = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.visit(near, data, query, k, exclude, key, heap);
                // <= keeps far-side candidates tied on distance in play
                if heap.len() < k
                    || delta * delta <= heap.peek().expect("heap full").d2
                {
                    self.visit(far, data, query, k, exclude, key, heap);
                }
            }
        }
    }
}

/// Recursively build over a subrange of `ids`; `offset` is the subrange's
/// position in the final array, which leaves reference by range.
fn build_node(data: &Dataset, ids: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let len = ids.len();
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + len) as u32,
        });
        return (nodes.len() - 1) as u32;
    }

    // split on the axis with the widest spread
    let d = data.dim();
    let mut best_axis = 0;
    let mut best_spread = f64::NEG_INFINITY;
    for axis in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &id in ids.iter() {
            let v = data.point(id as usize)[axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = axis;
        }
    }

    let mid = len / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        data.point(a as usize)[best_axis]
            .total_cmp(&data.point(b as usize)[best_axis])
            .then(a.cmp(&b))
    });
    let split_value = data.point(ids[mid] as usize)[best_axis];

    let (left_ids, right_ids) = ids.split_at_mut(mid);
    let left = build_node(data, left_ids, offset, nodes);
    let right = build_node(data, right_ids, offset + mid, nodes);
    nodes.push(Node::Split {
        axis: best_axis,
        value: split_value,
        left,
        right,
    });
    (nodes.len() - 1) as u32
}
