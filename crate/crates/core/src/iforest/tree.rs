use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{expected_path_c, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        count: usize,
        depth: usize,
    },
}

/// A single isolation tree stored as an arena; node 0 is the root.
///
/// Instances with `x[feature] < value` go left, the rest go right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<Node>,
    max_depth: usize,
}

/// `ceil(log2(sample_size))`, the height limit for a tree grown on
/// `sample_size` instances.
pub fn height_limit(sample_size: usize) -> usize {
    if sample_size <= 1 {
        0
    } else {
        (usize::BITS - (sample_size - 1).leading_zeros()) as usize
    }
}

impl IsolationTree {
    /// Grows a tree over the rows of `data` listed in `sample`.
    ///
    /// Each internal node picks a feature uniformly among those with a usable
    /// range inside the node, then a split uniformly on the open interval
    /// `(min, max)`. Growth stops at one instance, at all-duplicate nodes, or
    /// at `max_depth`.
    pub fn build<R: Rng + ?Sized>(
        data: &FeatureMatrix,
        sample: &[usize],
        rng: &mut R,
        max_depth: usize,
    ) -> Self {
        assert!(!sample.is_empty(), "cannot grow a tree on an empty sample");
        let mut tree = IsolationTree {
            nodes: Vec::with_capacity(2 * sample.len()),
            max_depth,
        };
        let mut rows = sample.to_vec();
        tree.grow(data, &mut rows, 0, rng);
        tree
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        data: &FeatureMatrix,
        rows: &mut [usize],
        depth: usize,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            count: rows.len(),
            depth,
        };
        if rows.len() <= 1 || depth >= self.max_depth {
            self.nodes.push(leaf);
            return id;
        }

        let mut splittable: Vec<(usize, f64, f64)> = Vec::new();
        for f in 0..data.n_cols() {
            let (lo, hi) = rows
                .iter()
                .map(|&r| data.get(r, f))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            // Need at least one representable value strictly inside (lo, hi).
            let mid = lo + (hi - lo) / 2.0;
            if mid > lo && mid < hi {
                splittable.push((f, lo, hi));
            }
        }
        if splittable.is_empty() {
            self.nodes.push(leaf);
            return id;
        }

        let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
        let value = draw_open(rng, lo, hi);

        // In-place partition: [0, k) goes left.
        let mut k = 0;
        for i in 0..rows.len() {
            if data.get(rows[i], feature) < value {
                rows.swap(i, k);
                k += 1;
            }
        }
        debug_assert!(k > 0 && k < rows.len());

        self.nodes.push(Node::Split {
            feature,
            value,
            left: usize::MAX,
            right: usize::MAX,
        });
        let (left_rows, right_rows) = rows.split_at_mut(k);
        let left = self.grow(data, left_rows, depth + 1, rng);
        let right = self.grow(data, right_rows, depth + 1, rng);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// The leaf `x` routes to.
    pub fn leaf_for(&self, x: &[f64]) -> (usize, usize) {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => id = if x[feature] < value { left } else { right },
                Node::Leaf { count, depth } => return (count, depth),
            }
        }
    }

    /// Depth of the leaf reached by `x` plus `c(count)` for the instances
    /// that were never separated inside that leaf.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let (count, depth) = self.leaf_for(x);
        depth as f64 + expected_path_c(count)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { count, depth } => Some((count, depth)),
            Node::Split { .. } => None,
        })
    }
}

/// Uniform draw on the open interval `(lo, hi)`. The caller guarantees the
/// interval holds at least one representable value.
fn draw_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    for _ in 0..64 {
        let v = rng.random_range(lo..hi);
        if v > lo && v < hi {
            return v;
        }
    }
    lo + (hi - lo) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iforest::C_2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn height_limits() {
        assert_eq!(height_limit(1), 0);
        assert_eq!(height_limit(2), 1);
        assert_eq!(height_limit(3), 2);
        assert_eq!(height_limit(256), 8);
        assert_eq!(height_limit(257), 9);
    }

    #[test]
    fn single_instance_is_a_root_leaf() {
        let data = matrix(&[&[1.0], &[2.0]]);
        let tree = IsolationTree::build(&data, &[0], &mut ChaCha8Rng::seed_from_u64(1), 8);
        assert_eq!(tree.nodes(), &[Node::Leaf { count: 1, depth: 0 }]);
    }

    #[test]
    fn two_points_split_once() {
        let data = matrix(&[&[1.0], &[2.0]]);
        for seed in 0..20 {
            let tree =
                IsolationTree::build(&data, &[0, 1], &mut ChaCha8Rng::seed_from_u64(seed), 1);
            let nodes = tree.nodes();
            assert_eq!(nodes.len(), 3);
            match nodes[0] {
                Node::Split { value, .. } => assert!(value > 1.0 && value < 2.0),
                _ => panic!("root must split"),
            }
            assert_eq!(tree.leaves().collect::<Vec<_>>(), vec![(1, 1), (1, 1)]);
        }
    }

    #[test]
    fn identical_points_do_not_split() {
        let data = matrix(&[&[3.0, 1.0], &[3.0, 1.0], &[3.0, 1.0], &[3.0, 1.0]]);
        let tree = IsolationTree::build(&data, &[0, 1, 2, 3], &mut ChaCha8Rng::seed_from_u64(1), 2);
        assert_eq!(tree.nodes(), &[Node::Leaf { count: 4, depth: 0 }]);
        assert_eq!(tree.path_length(&[3.0, 1.0]), expected_path_c(4));
    }

    #[test]
    fn zero_range_feature_is_skipped() {
        // Feature 0 is constant; every split must use feature 1.
        let data = matrix(&[&[5.0, 1.0], &[5.0, 2.0], &[5.0, 3.0], &[5.0, 4.0]]);
        let tree = IsolationTree::build(&data, &[0, 1, 2, 3], &mut ChaCha8Rng::seed_from_u64(9), 2);
        for n in tree.nodes() {
            if let Node::Split { feature, .. } = n {
                assert_eq!(*feature, 1);
            }
        }
    }

    #[test]
    fn path_length_adds_leaf_adjustment() {
        let tree = IsolationTree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    value: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { count: 1, depth: 1 },
                Node::Leaf { count: 2, depth: 1 },
            ],
            max_depth: 1,
        };
        assert_eq!(tree.path_length(&[0.0]), 1.0);
        assert!((tree.path_length(&[1.0]) - (1.0 + C_2)).abs() < 1e-15);
    }

    #[test]
    fn adjacent_floats_are_unsplittable() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let data = matrix(&[&[a], &[b]]);
        let tree = IsolationTree::build(&data, &[0, 1], &mut ChaCha8Rng::seed_from_u64(0), 4);
        assert_eq!(tree.nodes(), &[Node::Leaf { count: 2, depth: 0 }]);
    }
}
