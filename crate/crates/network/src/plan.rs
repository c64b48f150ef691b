use std::collections::VecDeque;

use crate::FeederNetwork;

/// Leaf-to-root processing order. Edges are named by their child node; every
/// edge appears after all edges of the subtree below it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalPlan {
    pub order: Vec<usize>,
}

impl TraversalPlan {
    /// Edges as `(parent, child)` in processing order.
    pub fn edges<'a>(&'a self, net: &'a FeederNetwork) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.order.iter().map(move |&n| (net.parent(n).expect("non-root"), n))
    }
}

/// Reversed breadth-first order from the substation.
pub fn traversal_plan(net: &FeederNetwork) -> TraversalPlan {
    let mut bfs = Vec::with_capacity(net.edge_count());
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        for &c in net.children(n) {
            bfs.push(c);
            queue.push_back(c);
        }
    }
    bfs.reverse();
    TraversalPlan { order: bfs }
}
