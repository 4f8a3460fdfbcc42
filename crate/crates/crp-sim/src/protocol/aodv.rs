//! Flat on-demand baseline: blind flooding with per-node duplicate
//! suppression, reply along the reversed node path of the first arrival.
//! Every link, broadcast or unicast, needs radio range plus a shared
//! usable channel.

use crate::model::{common_channels, in_range, NodeId};

use super::{has_repeats, AodvRreq, AodvRrep, DropReason, Message, Sim};

impl Sim {
    pub(crate) fn aodv_initiate(&mut self, src: NodeId, dst: NodeId) {
        if self
            .sources
            .get(&src)
            .is_some_and(|s| s.routes.contains_key(&dst))
        {
            return;
        }
        let key = self.open_pending(src, dst);
        self.aodv_state.entry(src).or_default().seen.insert(key);
        let receivers = self.aodv_neighbors(src);
        let rreq = AodvRreq {
            key,
            node_path: vec![src],
        };
        self.send_broadcast(src, receivers, Message::AodvRreq(rreq));
    }

    /// Secondary users currently reachable from `node`: in radio range
    /// with at least one common usable channel.
    fn aodv_neighbors(&self, node: NodeId) -> Vec<NodeId> {
        let a = self.world.node(node);
        self.world
            .secondaries()
            .filter(|b| b.id != node && in_range(a, b) && !common_channels(a, b).is_empty())
            .map(|b| b.id)
            .collect()
    }

    pub(crate) fn aodv_process_rreq(&mut self, node: NodeId, r: AodvRreq, from: NodeId) {
        let key = r.key;
        if self
            .aodv_state
            .get(&node)
            .is_some_and(|s| s.seen.contains(&key))
        {
            self.drop_msg(node, DropReason::Duplicate, Some(key));
            return;
        }
        if r.node_path.contains(&node) || has_repeats(&r.node_path) {
            self.drop_msg(node, DropReason::Loop, Some(key));
            return;
        }
        self.aodv_state.entry(node).or_default().seen.insert(key);
        let mut path = r.node_path;
        path.push(node);
        if node == key.dst {
            let rev: Vec<NodeId> = path.iter().rev().copied().collect();
            let next = rev[1];
            let rrep = AodvRrep {
                key,
                rev_path: rev,
                hop_index: 1,
            };
            self.send_unicast(node, next, Message::AodvRrep(rrep), true);
            return;
        }
        if path.len() > self.world.config.hmax {
            self.drop_msg(node, DropReason::HopCap, Some(key));
            return;
        }
        let receivers: Vec<NodeId> = self
            .aodv_neighbors(node)
            .into_iter()
            .filter(|&n| n != from)
            .collect();
        let rreq = AodvRreq {
            key,
            node_path: path,
        };
        self.send_broadcast(node, receivers, Message::AodvRreq(rreq));
    }

    pub(crate) fn aodv_process_rrep(&mut self, node: NodeId, r: AodvRrep) {
        if r.hop_index >= r.rev_path.len() || r.rev_path[r.hop_index] != node {
            self.drop_msg(node, DropReason::Misrouted, Some(r.key));
            return;
        }
        if r.hop_index == r.rev_path.len() - 1 {
            // node is the source
            let route: Vec<NodeId> = r.rev_path.iter().rev().copied().collect();
            self.install_route(r.key, Vec::new(), route);
            return;
        }
        let next = r.rev_path[r.hop_index + 1];
        let rrep = AodvRrep {
            hop_index: r.hop_index + 1,
            ..r
        };
        self.send_unicast(node, next, Message::AodvRrep(rrep), true);
    }
}
