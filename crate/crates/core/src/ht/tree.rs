use std::ops::Range;

/// One node of a dimension tree; its label is a contiguous mode range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub modes: Range<usize>,
    pub parent: Option<usize>,
    pub children: Option<(usize, usize)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary tree over the modes `0..m`, nodes stored in pre-order (root at 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionTree {
    nodes: Vec<TreeNode>,
    leaf_of_mode: Vec<usize>,
}

impl DimensionTree {
    /// Balanced tree: every node splits its modes into a first half of
    /// `ceil(len/2)` modes and the remaining second half.
    pub fn balanced(num_modes: usize) -> Self {
        assert!(num_modes >= 1, "a dimension tree needs at least one mode");
        let mut nodes = Vec::with_capacity(2 * num_modes - 1);
        build(&mut nodes, 0..num_modes, None);
        let mut leaf_of_mode = vec![0; num_modes];
        for (t, node) in nodes.iter().enumerate() {
            if node.is_leaf() {
                leaf_of_mode[node.modes.start] = t;
            }
        }
        Self {
            nodes,
            leaf_of_mode,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.leaf_of_mode.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, t: usize) -> &TreeNode {
        &self.nodes[t]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn leaf(&self, mode: usize) -> usize {
        self.leaf_of_mode[mode]
    }

    /// Node indices in post-order (children before parents).
    pub fn post_order(&self) -> impl Iterator<Item = usize> {
        // Pre-order reversed visits every child before its parent.
        (0..self.nodes.len()).rev()
    }
}

fn build(nodes: &mut Vec<TreeNode>, modes: Range<usize>, parent: Option<usize>) -> usize {
    let t = nodes.len();
    nodes.push(TreeNode {
        modes: modes.clone(),
        parent,
        children: None,
    });
    if modes.len() > 1 {
        let mid = modes.start + modes.len().div_ceil(2);
        let left = build(nodes, modes.start..mid, Some(t));
        let right = build(nodes, mid..modes.end, Some(t));
        nodes[t].children = Some((left, right));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_modes() {
        let tree = DimensionTree::balanced(4);
        assert_eq!(tree.num_nodes(), 7);
        let (l, r) = tree.node(0).children.unwrap();
        assert_eq!(tree.node(l).modes, 0..2);
        assert_eq!(tree.node(r).modes, 2..4);
        for mu in 0..4 {
            let leaf = tree.node(tree.leaf(mu));
            assert!(leaf.is_leaf());
            assert_eq!(leaf.modes, mu..mu + 1);
        }
    }

    #[test]
    fn single_mode() {
        let tree = DimensionTree::balanced(1);
        assert_eq!(tree.num_nodes(), 1);
        assert!(tree.node(0).is_leaf());
        assert_eq!(tree.leaf(0), 0);
    }

    #[test]
    fn three_modes_first_half_split() {
        let tree = DimensionTree::balanced(3);
        let (l, r) = tree.node(0).children.unwrap();
        assert_eq!(tree.node(l).modes, 0..2);
        assert_eq!(tree.node(r).modes, 2..3);
    }

    #[test]
    fn labels_are_disjoint_unions() {
        for m in 1..9 {
            let tree = DimensionTree::balanced(m);
            assert_eq!(tree.num_nodes(), 2 * m - 1);
            for node in tree.nodes() {
                if let Some((a, b)) = node.children {
                    assert_eq!(tree.node(a).modes.start, node.modes.start);
                    assert_eq!(tree.node(a).modes.end, tree.node(b).modes.start);
                    assert_eq!(tree.node(b).modes.end, node.modes.end);
                }
            }
        }
    }
}
