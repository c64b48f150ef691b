use network::{traversal_plan, FeederNetwork, LoadModel};
use phasor_core::Complex;
use proptest::prelude::*;

fn random_tree(picks: &[usize]) -> FeederNetwork {
    // Node k + 1 attaches to an earlier node chosen by picks[k].
    let mut parents = vec![None];
    for (k, &p) in picks.iter().enumerate() {
        parents.push(Some(p % (k + 1)));
    }
    let load = LoadModel::new(vec![100.0], vec![0.95], vec![false]).unwrap();
    FeederNetwork::from_parents(&parents, &vec![Complex::new(0.02, 0.014); picks.len()], vec![load; picks.len()], 230.0)
        .unwrap()
}

proptest! {
    #[test]
    fn edges_are_nodes_minus_one(picks in prop::collection::vec(0usize..1000, 1..60)) {
        let net = random_tree(&picks);
        prop_assert_eq!(net.edges().count(), net.node_count() - 1);
        for n in 1..net.node_count() {
            let mut cur = n;
            let mut hops = 0;
            while let Some(p) = net.parent(cur) {
                cur = p;
                hops += 1;
                prop_assert!(hops <= net.node_count());
            }
            prop_assert_eq!(cur, 0);
        }
    }

    #[test]
    fn plan_visits_each_edge_once_after_its_subtree(picks in prop::collection::vec(0usize..1000, 1..60)) {
        let net = random_tree(&picks);
        let plan = traversal_plan(&net);
        let mut pos = vec![usize::MAX; net.node_count()];
        for (i, &e) in plan.order.iter().enumerate() {
            prop_assert_eq!(pos[e], usize::MAX);
            pos[e] = i;
        }
        prop_assert_eq!(plan.order.len(), net.edge_count());
        for n in 1..net.node_count() {
            for &c in net.children(n) {
                prop_assert!(pos[c] < pos[n]);
            }
        }
    }
}
