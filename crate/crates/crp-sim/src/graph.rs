//! Connectivity oracles computed directly from world geometry, kept
//! deliberately independent of the protocol code paths: plain adjacency
//! construction plus breadth-first search. Tests compare discovered
//! routes against these.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::{common_channels, in_range, NodeId, Role, World};

pub type Adjacency = BTreeMap<NodeId, BTreeSet<NodeId>>;

/// Data-plane adjacency among secondary users: mutual radio range and
/// at least one shared usable channel. This is the graph the baseline
/// protocol floods over.
pub fn node_adjacency(world: &World) -> Adjacency {
    let sus: Vec<&crate::model::Node> = world.secondaries().collect();
    let mut adj: Adjacency = sus.iter().map(|n| (n.id, BTreeSet::new())).collect();
    for (i, a) in sus.iter().enumerate() {
        for b in sus.iter().skip(i + 1) {
            if in_range(a, b) && !common_channels(a, b).is_empty() {
                adj.get_mut(&a.id).unwrap().insert(b.id);
                adj.get_mut(&b.id).unwrap().insert(a.id);
            }
        }
    }
    adj
}

/// Control-plane adjacency among cluster heads: mutual radio range over
/// the heads' current (possibly boosted) ranges. Head-to-head control
/// traffic is not channel-gated.
pub fn head_adjacency(world: &World) -> Adjacency {
    let heads: Vec<&crate::model::Node> = world
        .secondaries()
        .filter(|n| n.role == Role::ClusterHead)
        .collect();
    let mut adj: Adjacency = heads.iter().map(|n| (n.id, BTreeSet::new())).collect();
    for (i, a) in heads.iter().enumerate() {
        for b in heads.iter().skip(i + 1) {
            if in_range(a, b) {
                adj.get_mut(&a.id).unwrap().insert(b.id);
                adj.get_mut(&b.id).unwrap().insert(a.id);
            }
        }
    }
    adj
}

/// Fewest-edge distance from `src` to `dst` over `adj`, `None` when
/// unreachable. `src == dst` is distance 0.
pub fn bfs_hops(adj: &Adjacency, src: NodeId, dst: NodeId) -> Option<usize> {
    if src == dst {
        return adj.contains_key(&src).then_some(0);
    }
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
    dist.insert(src, 0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for &v in adj.get(&u).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(d + 1);
                if v == dst {
                    return Some(d + 1);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_scenario, SimConfig};

    fn n(id: u32) -> NodeId {
        NodeId(id)
    }

    fn adj_of(edges: &[(u32, u32)], nodes: &[u32]) -> Adjacency {
        let mut adj: Adjacency = nodes.iter().map(|&i| (n(i), BTreeSet::new())).collect();
        for &(a, b) in edges {
            adj.get_mut(&n(a)).unwrap().insert(n(b));
            adj.get_mut(&n(b)).unwrap().insert(n(a));
        }
        adj
    }

    #[test]
    fn bfs_finds_the_shortest_of_two_routes() {
        // 0-1-2-3 and the shortcut 0-4-3
        let adj = adj_of(&[(0, 1), (1, 2), (2, 3), (0, 4), (4, 3)], &[0, 1, 2, 3, 4]);
        assert_eq!(bfs_hops(&adj, n(0), n(3)), Some(2));
        assert_eq!(bfs_hops(&adj, n(0), n(2)), Some(2));
        assert_eq!(bfs_hops(&adj, n(0), n(0)), Some(0));
    }

    #[test]
    fn bfs_reports_disconnection() {
        let adj = adj_of(&[(0, 1)], &[0, 1, 2]);
        assert_eq!(bfs_hops(&adj, n(0), n(2)), None);
        assert_eq!(bfs_hops(&adj, n(9), n(0)), None); // unknown start
    }

    #[test]
    fn node_adjacency_is_symmetric_and_channel_gated() {
        let cfg = SimConfig {
            n_secondary: 25,
            n_primary: 5,
            seed: 11,
            ..SimConfig::default()
        };
        let world = generate_scenario(&cfg).unwrap();
        let adj = node_adjacency(&world);
        for (u, peers) in &adj {
            for v in peers {
                assert!(adj[v].contains(u), "{u} -> {v} missing the reverse edge");
                let (a, b) = (world.node(*u), world.node(*v));
                assert!(in_range(a, b));
                assert!(!common_channels(a, b).is_empty());
            }
        }
    }
}
