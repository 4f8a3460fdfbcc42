//! Cluster-overlay route discovery and maintenance.
//!
//! Discovery: the source hands an Rreq to its cluster head; heads flood
//! it over the head overlay (forward-once per request); the
//! destination's head collects candidates for `tr` time units, picks the
//! shortest head path, and returns an Rrep along the reversed path. Each
//! intermediate head contributes one relay member, chosen by channel
//! compatibility and maximum throughput, so the installed node route is
//! channel-sound end to end.
//!
//! Maintenance: a moved source splices its route at the new head when
//! that head already lies on the old path; a failed relay is replaced
//! locally by its cluster head when an alternate exists. Everything else
//! degrades to rediscovery or a failure notice.

use std::collections::BTreeSet;

use rand::Rng;

use crate::clustering;
use crate::engine::SimTime;
use crate::model::{in_range, ChannelId, Node, NodeId, Role, World};
use crate::trace::Record;

use super::{
    has_repeats, Collector, DropReason, EventKind, InstalledRoute, Message, Rerr, RerrKind,
    RequestKey, RouteEntry, Rreq, Rrep, Sim, TimerTag,
};

/// Winner of a closed collection window: minimum head-hop count, ties by
/// earliest arrival, then lexicographically smallest path. Pure in the
/// candidate list: permuting it never changes the winner.
pub fn collect_and_select(candidates: &[(Rreq, SimTime)]) -> Rreq {
    let best = candidates
        .iter()
        .min_by(|a, b| {
            (a.0.ch_path.len(), a.1, &a.0.ch_path).cmp(&(b.0.ch_path.len(), b.1, &b.0.ch_path))
        })
        .expect("collector opened without a candidate");
    best.0.clone()
}

/// Relay choice at one intermediate head: among cluster members (the
/// head itself is eligible) that share at least one channel with the
/// previous route node, the maximum-throughput one, ties by lowest id.
pub fn select_intermediate_node(
    world: &World,
    members: &BTreeSet<NodeId>,
    prev_hop: &Node,
) -> Option<NodeId> {
    select_relay(world, members, &[&prev_hop.channels], &BTreeSet::new())
}

/// General form: the candidate must share a channel with every set in
/// `required` and must not appear in `exclude`.
pub(crate) fn select_relay(
    world: &World,
    members: &BTreeSet<NodeId>,
    required: &[&BTreeSet<ChannelId>],
    exclude: &BTreeSet<NodeId>,
) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for &m in members {
        if exclude.contains(&m) {
            continue;
        }
        let n = world.node(m);
        if required
            .iter()
            .any(|req| req.intersection(&n.channels).next().is_none())
        {
            continue;
        }
        // ascending id iteration: a later tie never displaces the holder
        if best.is_none_or(|(t, _)| n.throughput > t) {
            best = Some((n.throughput, m));
        }
    }
    best.map(|(_, id)| id)
}

fn build_node_route(r: &Rrep) -> Vec<NodeId> {
    let mut route = Vec::with_capacity(r.relay_nodes.len() + 2);
    route.push(r.key.src);
    route.extend(r.relay_nodes.iter().rev().copied());
    route.push(r.key.dst);
    route
}

/// Reverse walker path from `node` back to the source, used by failure
/// and update notices that retrace the reply direction.
fn walker_path(node: NodeId, src: NodeId) -> Vec<NodeId> {
    if node == src {
        vec![node]
    } else {
        vec![node, src]
    }
}

impl Sim {
    pub(crate) fn crp_initiate(&mut self, src: NodeId, dst: NodeId) {
        if self
            .sources
            .get(&src)
            .is_some_and(|s| s.routes.contains_key(&dst))
        {
            return; // a live route is cached: nothing to discover
        }
        let Some(head) = self.head_of(src) else {
            self.drop_msg(src, DropReason::Undecided, None);
            return;
        };
        let key = self.open_pending(src, dst);
        let rreq = Rreq {
            key,
            ch_path: Vec::new(),
            src_channels: self.world.node(src).channels.clone(),
        };
        if head == src {
            self.crp_process_rreq(src, rreq, src);
        } else {
            self.send_unicast(src, head, Message::Rreq(rreq), false);
        }
    }

    /// Head-side Rreq handling. Decision order: feed an open collection
    /// window (bypassing the duplicate gate so late candidates count),
    /// duplicate discard, loop discard, destination-side window open,
    /// hop cap, directed forward on a known route, overlay broadcast.
    pub(crate) fn crp_process_rreq(&mut self, node: NodeId, mut rreq: Rreq, from: NodeId) {
        let key = rreq.key;
        if !self.heads.contains_key(&node) {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        let collecting = self.heads[&node]
            .collectors
            .get(&key)
            .is_some_and(|c| !c.closed);
        if collecting {
            if rreq.ch_path.contains(&node) || has_repeats(&rreq.ch_path) {
                self.drop_msg(node, DropReason::Loop, Some(key));
                return;
            }
            rreq.ch_path.push(node);
            let now = self.queue.now();
            self.heads
                .get_mut(&node)
                .unwrap()
                .collectors
                .get_mut(&key)
                .unwrap()
                .candidates
                .push((rreq, now));
            return;
        }
        if self.heads[&node].seen.contains(&key) {
            self.drop_msg(node, DropReason::Duplicate, Some(key));
            return;
        }
        if rreq.ch_path.contains(&node) || has_repeats(&rreq.ch_path) {
            self.drop_msg(node, DropReason::Loop, Some(key));
            return;
        }
        rreq.ch_path.push(node);
        self.heads.get_mut(&node).unwrap().seen.insert(key);
        let cid = self.world.node(node).cluster.expect("head is clustered");
        if key.dst == node || self.clusters[&cid].members.contains(&key.dst) {
            let now = self.queue.now();
            let expiry = now.after(self.world.config.tr);
            self.heads.get_mut(&node).unwrap().collectors.insert(
                key,
                Collector {
                    first_arrival: now,
                    tr_expiry: expiry,
                    candidates: vec![(rreq, now)],
                    closed: false,
                },
            );
            self.queue.schedule(
                expiry,
                EventKind::Timer {
                    node,
                    tag: TimerTag::TrExpiry(key),
                },
            );
            return;
        }
        if rreq.ch_path.len() > self.world.config.hmax {
            self.drop_msg(node, DropReason::HopCap, Some(key));
            return;
        }
        if let Some(next_hop) = self.heads[&node].routing.get(&key.dst).map(|e| e.next_hop_head) {
            self.send_unicast(node, next_hop, Message::Rreq(rreq), false);
            return;
        }
        let receivers: Vec<NodeId> = self.heads[&node]
            .neighbors
            .keys()
            .filter(|&&h| h != from)
            .copied()
            .collect();
        self.send_broadcast(node, receivers, Message::Rreq(rreq));
    }

    /// TR expiry at the destination head: select the winner and start
    /// the reply walk.
    pub(crate) fn crp_close_collector(&mut self, node: NodeId, key: RequestKey) {
        let (winner, n_candidates) = {
            let Some(st) = self.heads.get_mut(&node) else {
                return;
            };
            let Some(col) = st.collectors.get_mut(&key) else {
                return;
            };
            if col.closed {
                return;
            }
            col.closed = true;
            (collect_and_select(&col.candidates), col.candidates.len())
        };
        self.trace.push(Record::Select {
            t: self.queue.now(),
            node,
            key,
            path: winner.ch_path.clone(),
            candidates: n_candidates,
        });
        let rrep = Rrep {
            key,
            ch_path: winner.ch_path.iter().rev().copied().collect(),
            hop_index: 0,
            relay_nodes: Vec::new(),
            prev_channels: self.world.node(key.dst).channels.clone(),
            src_channels: winner.src_channels,
        };
        self.crp_continue_rrep(node, rrep);
    }

    pub(crate) fn crp_process_rrep(&mut self, node: NodeId, r: Rrep) {
        if r.hop_index >= r.ch_path.len() {
            // final head-to-member delivery
            if node == r.key.src {
                let fwd: Vec<NodeId> = r.ch_path.iter().rev().copied().collect();
                let route = build_node_route(&r);
                self.install_route(r.key, fwd, route);
            } else {
                self.drop_msg(node, DropReason::Misrouted, Some(r.key));
            }
            return;
        }
        if r.ch_path[r.hop_index] != node || !self.heads.contains_key(&node) {
            self.drop_msg(node, DropReason::Misrouted, Some(r.key));
            return;
        }
        self.crp_continue_rrep(node, r);
    }

    /// Work of the head currently holding the reply: endpoint handling
    /// at the source head, one relay selection at intermediates, then
    /// one unicast hop onward.
    fn crp_continue_rrep(&mut self, node: NodeId, mut r: Rrep) {
        let len = r.ch_path.len();
        debug_assert_eq!(r.ch_path[r.hop_index], node, "reply strayed off its path");
        if r.hop_index == len - 1 {
            self.crp_finish_rrep(node, r);
            return;
        }
        if r.hop_index > 0 {
            let mut required: Vec<&BTreeSet<ChannelId>> = vec![&r.prev_channels];
            if r.hop_index == len - 2 {
                // the relay picked here will sit next to the source
                required.push(&r.src_channels);
            }
            let cid = self.world.node(node).cluster.expect("head is clustered");
            let members = &self.clusters[&cid].members;
            let mut exclude: BTreeSet<NodeId> = r.relay_nodes.iter().copied().collect();
            exclude.insert(r.key.src);
            exclude.insert(r.key.dst);
            match select_relay(&self.world, members, &required, &exclude) {
                Some(relay) => {
                    r.relay_nodes.push(relay);
                    r.prev_channels = self.world.node(relay).channels.clone();
                }
                None => {
                    self.drop_msg(node, DropReason::NoRelay, Some(r.key));
                    let mut back: Vec<NodeId> = r.ch_path[r.hop_index..].to_vec();
                    if *back.last().unwrap() != r.key.src {
                        back.push(r.key.src);
                    }
                    self.crp_walk_fail(r.key, DropReason::NoRelay, false, back);
                    return;
                }
            }
        }
        let next = r.ch_path[r.hop_index + 1];
        r.hop_index += 1;
        // a lost hop here cannot be reported around the broken edge; the
        // source's deadline timer is the backstop
        self.send_unicast(node, next, Message::Rrep(r), false);
    }

    /// Source-side endpoint: learn the head path, validate the two-node
    /// case, and hand the route to the source.
    fn crp_finish_rrep(&mut self, node: NodeId, r: Rrep) {
        let key = r.key;
        let fwd: Vec<NodeId> = r.ch_path.iter().rev().copied().collect();
        if r.relay_nodes.is_empty()
            && r.src_channels.intersection(&r.prev_channels).next().is_none()
        {
            // relay-free route: source and destination must share a channel
            self.drop_msg(node, DropReason::ChannelMismatch, Some(key));
            self.crp_walk_fail(
                key,
                DropReason::ChannelMismatch,
                false,
                walker_path(node, key.src),
            );
            return;
        }
        if fwd.len() >= 2 {
            let entry = RouteEntry {
                next_hop_head: fwd[1],
                full_head_path: fwd[1..].to_vec(),
                learned_at: self.queue.now(),
            };
            self.heads
                .get_mut(&node)
                .unwrap()
                .routing
                .insert(key.dst, entry);
        }
        if key.src == node {
            let route = build_node_route(&r);
            self.install_route(key, fwd, route);
        } else {
            let mut out = r;
            out.hop_index = out.ch_path.len();
            self.send_unicast(node, key.src, Message::Rrep(out), false);
        }
    }

    // ---- failure and update walkers ----

    /// Starts a failure notice at `path[0]`, walking it to the source.
    fn crp_walk_fail(
        &mut self,
        key: RequestKey,
        reason: DropReason,
        rediscover: bool,
        path: Vec<NodeId>,
    ) {
        debug_assert_eq!(*path.last().unwrap(), key.src);
        if path.len() == 1 {
            self.crp_fail_at_source(key, reason, rediscover);
            return;
        }
        let from = path[0];
        let to = path[1];
        let msg = Message::RouteFail {
            key,
            reason,
            rediscover,
            rev_path: path,
            hop_index: 1,
        };
        self.send_unicast(from, to, msg, false);
    }

    fn crp_walk_update(
        &mut self,
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
        path: Vec<NodeId>,
    ) {
        debug_assert_eq!(*path.last().unwrap(), key.src);
        if path.len() == 1 {
            self.crp_apply_route_update(path[0], key, head_path, node_route);
            return;
        }
        let from = path[0];
        let to = path[1];
        let msg = Message::RouteUpdate {
            key,
            head_path,
            node_route,
            rev_path: path,
            hop_index: 1,
        };
        self.send_unicast(from, to, msg, false);
    }

    pub(crate) fn crp_process_route_fail(
        &mut self,
        node: NodeId,
        key: RequestKey,
        reason: DropReason,
        rediscover: bool,
        rev_path: Vec<NodeId>,
        hop_index: usize,
    ) {
        if hop_index >= rev_path.len() || rev_path[hop_index] != node {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        // heads on the notice path forget the dead route
        if let Some(st) = self.heads.get_mut(&node) {
            st.routing.remove(&key.dst);
        }
        if hop_index == rev_path.len() - 1 {
            self.crp_fail_at_source(key, reason, rediscover);
            return;
        }
        let to = rev_path[hop_index + 1];
        let msg = Message::RouteFail {
            key,
            reason,
            rediscover,
            rev_path,
            hop_index: hop_index + 1,
        };
        self.send_unicast(node, to, msg, false);
    }

    fn crp_fail_at_source(&mut self, key: RequestKey, reason: DropReason, rediscover: bool) {
        let _ = reason;
        if let Some(st) = self.sources.get_mut(&key.src) {
            st.routes.remove(&key.dst);
            if let Some(p) = st.pending.get_mut(&key) {
                p.done = true;
            }
        }
        if rediscover {
            self.crp_initiate(key.src, key.dst);
        }
    }

    pub(crate) fn crp_process_route_update(
        &mut self,
        node: NodeId,
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
        rev_path: Vec<NodeId>,
        hop_index: usize,
    ) {
        if hop_index >= rev_path.len() || rev_path[hop_index] != node {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        if hop_index == rev_path.len() - 1 {
            self.crp_apply_route_update(node, key, head_path, node_route);
            return;
        }
        let to = rev_path[hop_index + 1];
        let msg = Message::RouteUpdate {
            key,
            head_path,
            node_route,
            rev_path,
            hop_index: hop_index + 1,
        };
        self.send_unicast(node, to, msg, false);
    }

    fn crp_apply_route_update(
        &mut self,
        node: NodeId,
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
    ) {
        if node != key.src {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        let now = self.queue.now();
        self.sources.entry(key.src).or_default().routes.insert(
            key.dst,
            InstalledRoute {
                key,
                head_path: head_path.clone(),
                node_route: node_route.clone(),
                installed_at: now,
            },
        );
        self.trace.push(Record::Install {
            t: now,
            src: key.src,
            key,
            head_path,
            node_route,
        });
    }

    // ---- maintenance ----

    /// Cluster upkeep after a node moved. Members that lost radio
    /// contact with their head rejoin by ranked triggered-hello delay; a
    /// source that lands under a different head re-anchors each of its
    /// routes there.
    pub(crate) fn crp_after_move(&mut self, node: NodeId) {
        if self.world.node(node).role == Role::ClusterHead {
            return;
        }
        let Some(current) = self.world.node(node).cluster else {
            return;
        };
        let head = self.clusters[&current].head;
        if in_range(self.world.node(node), self.world.node(head)) {
            return;
        }
        let link_delay = self.world.config.link_delay;
        let rng = &mut self.hello_rng;
        let samples = clustering::gather_hello_samples(&self.world, node, &self.clusters, |_| {
            link_delay + rng.random_range(0.0..=0.1)
        });
        let Some(newc) = clustering::knn_join(&samples, self.world.config.knn_k) else {
            return; // out of everyone's reach; routes die by timeout on use
        };
        if newc == current {
            return;
        }
        self.move_membership(node, current, newc);
        let new_head = self.clusters[&newc].head;
        let held: Vec<(RequestKey, Vec<NodeId>, Vec<NodeId>)> = self
            .sources
            .get(&node)
            .map(|s| {
                s.routes
                    .values()
                    .map(|r| (r.key, r.head_path.clone(), r.node_route.clone()))
                    .collect()
            })
            .unwrap_or_default();
        for (key, head_path, node_route) in held {
            let rerr = Rerr {
                reporter: node,
                affected: key,
                broken_hop: None,
                kind: RerrKind::SourceMoved {
                    old_head_path: head_path,
                    old_node_route: node_route,
                },
            };
            if new_head == node {
                self.crp_process_rerr(node, rerr);
            } else {
                self.send_unicast(node, new_head, Message::Rerr(rerr), false);
            }
        }
    }

    pub(crate) fn crp_process_rerr(&mut self, node: NodeId, e: Rerr) {
        let Rerr {
            reporter,
            affected: key,
            broken_hop,
            kind,
        } = e;
        if !self.heads.contains_key(&node) {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        match kind {
            RerrKind::SourceMoved {
                old_head_path,
                old_node_route,
            } => self.crp_splice_moved_source(node, key, &old_head_path, &old_node_route),
            RerrKind::LinkFailure {
                failed,
                head_path,
                node_route,
            } => {
                if self.head_of(failed) == Some(node) {
                    self.crp_repair_link(node, key, failed, head_path, node_route);
                } else if let Some(fh) = self.head_of(failed) {
                    let fwd = Rerr {
                        reporter,
                        affected: key,
                        broken_hop,
                        kind: RerrKind::LinkFailure {
                            failed,
                            head_path,
                            node_route,
                        },
                    };
                    self.send_unicast(node, fh, Message::Rerr(fwd), false);
                } else {
                    self.drop_msg(node, DropReason::Misrouted, Some(key));
                }
            }
        }
    }

    /// The moved source's new head: on the old head path, cut the route
    /// prefix and keep the tail; otherwise order a fresh discovery.
    fn crp_splice_moved_source(
        &mut self,
        node: NodeId,
        key: RequestKey,
        old_head_path: &[NodeId],
        old_node_route: &[NodeId],
    ) {
        let src = key.src;
        let Some(j) = old_head_path.iter().position(|&h| h == node) else {
            self.crp_walk_fail(key, DropReason::Misrouted, true, walker_path(node, src));
            return;
        };
        let keep_from = (j + 1).min(old_node_route.len() - 1);
        let mut new_route = Vec::with_capacity(old_node_route.len() - keep_from + 1);
        new_route.push(src);
        new_route.extend_from_slice(&old_node_route[keep_from..]);
        let src_ch = &self.world.node(src).channels;
        let next_ch = &self.world.node(new_route[1]).channels;
        if src_ch.intersection(next_ch).next().is_none() {
            self.drop_msg(node, DropReason::ChannelMismatch, Some(key));
            self.crp_walk_fail(
                key,
                DropReason::ChannelMismatch,
                true,
                walker_path(node, src),
            );
            return;
        }
        let new_heads: Vec<NodeId> = old_head_path[j..].to_vec();
        if new_heads.len() >= 2 {
            let entry = RouteEntry {
                next_hop_head: new_heads[1],
                full_head_path: new_heads[1..].to_vec(),
                learned_at: self.queue.now(),
            };
            self.heads
                .get_mut(&node)
                .unwrap()
                .routing
                .insert(key.dst, entry);
        }
        self.crp_walk_update(key, new_heads, new_route, walker_path(node, src));
    }

    /// Repair at the failed relay's head: swap in the best alternate
    /// member compatible with both route neighbours, or give up and let
    /// the source rediscover.
    fn crp_repair_link(
        &mut self,
        node: NodeId,
        key: RequestKey,
        failed: NodeId,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
    ) {
        let back: Vec<NodeId> = {
            let mut p: Vec<NodeId> = match head_path.iter().position(|&h| h == node) {
                Some(i) => head_path[..=i].iter().rev().copied().collect(),
                None => vec![node],
            };
            if *p.last().unwrap() != key.src {
                p.push(key.src);
            }
            p
        };
        if failed == key.dst {
            self.drop_msg(node, DropReason::DestinationLost, Some(key));
            self.crp_walk_fail(key, DropReason::DestinationLost, false, back);
            return;
        }
        let Some(idx) = node_route.iter().position(|&n| n == failed) else {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        };
        if idx == 0 || idx + 1 >= node_route.len() {
            self.drop_msg(node, DropReason::Misrouted, Some(key));
            return;
        }
        let prev_ch = self.world.node(node_route[idx - 1]).channels.clone();
        let next_ch = self.world.node(node_route[idx + 1]).channels.clone();
        let cid = self.world.node(node).cluster.expect("head is clustered");
        let members = &self.clusters[&cid].members;
        let exclude: BTreeSet<NodeId> = node_route.iter().copied().collect();
        let required = [&prev_ch, &next_ch];
        match select_relay(&self.world, members, &required, &exclude) {
            Some(alternate) => {
                let mut new_route = node_route;
                new_route[idx] = alternate;
                self.crp_walk_update(key, head_path, new_route, back);
            }
            None => {
                self.drop_msg(node, DropReason::NoRelay, Some(key));
                self.crp_walk_fail(key, DropReason::NoRelay, true, back);
            }
        }
    }

    /// Scripted detection that `reporter` lost its route hop to
    /// `failed`: raise the Rerr chain reporter → own head → failed's
    /// head.
    pub(crate) fn crp_handle_link_failure(&mut self, reporter: NodeId, failed: NodeId) {
        let mut found: Option<(RequestKey, Vec<NodeId>, Vec<NodeId>)> = None;
        'outer: for st in self.sources.values() {
            for r in st.routes.values() {
                if r.node_route
                    .windows(2)
                    .any(|w| w[0] == reporter && w[1] == failed)
                {
                    found = Some((r.key, r.head_path.clone(), r.node_route.clone()));
                    break 'outer;
                }
            }
        }
        let Some((key, head_path, node_route)) = found else {
            self.drop_msg(reporter, DropReason::Misrouted, None);
            return;
        };
        let rerr = Rerr {
            reporter,
            affected: key,
            broken_hop: Some((reporter, failed)),
            kind: RerrKind::LinkFailure {
                failed,
                head_path,
                node_route,
            },
        };
        match self.head_of(reporter) {
            Some(h) if h == reporter => self.crp_process_rerr(reporter, rerr),
            Some(h) => {
                self.send_unicast(reporter, h, Message::Rerr(rerr), false);
            }
            None => self.drop_msg(reporter, DropReason::Undecided, Some(key)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{assign, chset, quiet_config, su, world};
    use super::super::ProtocolKind;
    use super::*;
    use crate::model::Position;
    use crate::trace::SendTarget;

    fn n(id: u32) -> NodeId {
        NodeId(id)
    }

    fn ids(raw: &[u32]) -> Vec<NodeId> {
        raw.iter().map(|&i| n(i)).collect()
    }

    /// Two adjacent clusters: head n0 with member n1 (source side),
    /// head n2 with member n3 (destination side). Heads share channel 1.
    fn two_cluster() -> Sim {
        let w = world(
            quiet_config(),
            vec![
                assign(su(0, 0.0, 0.0, &[0, 1], 0.9, 10.0, 400.0), 0, true),
                assign(su(1, 0.0, 50.0, &[0, 1], 0.5, 50.0, 400.0), 0, false),
                assign(su(2, 300.0, 0.0, &[1, 2], 0.9, 10.0, 400.0), 1, true),
                assign(su(3, 300.0, 50.0, &[1, 2], 0.5, 70.0, 400.0), 1, false),
            ],
        );
        Sim::from_preformed(w, ProtocolKind::Crp).unwrap()
    }

    /// Same layout with neighbor tables already refreshed.
    fn two_cluster_warmed() -> Sim {
        let mut sim = two_cluster();
        sim.run_until(SimTime::ZERO);
        sim
    }

    /// Three clusters in a line. Heads (range 350) only reach adjacent
    /// heads; members (range 200) only reach their own neighborhood.
    /// Cluster 1 holds two relay candidates, n3 (throughput 70) and n4
    /// (throughput 50).
    fn line3_nodes() -> Vec<crate::model::Node> {
        vec![
            assign(su(0, 0.0, 0.0, &[0, 1], 0.9, 10.0, 350.0), 0, true),
            assign(su(1, 0.0, 60.0, &[0, 1], 0.5, 50.0, 200.0), 0, false),
            assign(su(2, 300.0, 0.0, &[1, 2], 0.9, 10.0, 350.0), 1, true),
            assign(su(3, 300.0, 60.0, &[1, 2], 0.5, 70.0, 200.0), 1, false),
            assign(su(4, 300.0, 120.0, &[1, 2], 0.5, 50.0, 200.0), 1, false),
            assign(su(5, 600.0, 0.0, &[2, 3], 0.9, 10.0, 350.0), 2, true),
            assign(su(6, 600.0, 60.0, &[1, 2], 0.5, 30.0, 200.0), 2, false),
        ]
    }

    fn line3() -> Sim {
        let mut cfg = quiet_config();
        cfg.radio_range = 350.0;
        let w = world(cfg, line3_nodes());
        Sim::from_preformed(w, ProtocolKind::Crp).unwrap()
    }

    fn rreq_sends_after(sim: &Sim, t0: f64) -> Vec<NodeId> {
        sim.trace
            .sends()
            .filter(|(t, _, _, m)| m.kind() == "rreq" && t.0 > t0)
            .map(|(_, from, _, _)| *from)
            .collect()
    }

    fn route_of(sim: &Sim, src: u32, dst: u32) -> InstalledRoute {
        sim.installed_route(n(src), n(dst))
            .expect("route installed")
            .clone()
    }

    // ---- winner selection ----

    fn cand(path: &[u32], t: f64) -> (Rreq, SimTime) {
        let key = RequestKey {
            src: n(90),
            dst: n(91),
            request_id: 0,
        };
        (
            Rreq {
                key,
                ch_path: ids(path),
                src_channels: BTreeSet::new(),
            },
            SimTime(t),
        )
    }

    #[test]
    fn single_candidate_wins() {
        let c = [cand(&[4, 5], 3.0)];
        assert_eq!(collect_and_select(&c).ch_path, ids(&[4, 5]));
    }

    #[test]
    fn fewer_hops_beat_earlier_arrival() {
        let c = [cand(&[1, 2, 3], 0.5), cand(&[4, 5], 2.0)];
        assert_eq!(collect_and_select(&c).ch_path, ids(&[4, 5]));
    }

    #[test]
    fn equal_hops_fall_back_to_arrival_order() {
        let c = [cand(&[7, 8], 1.0), cand(&[4, 5], 2.0)];
        assert_eq!(collect_and_select(&c).ch_path, ids(&[7, 8]));
    }

    #[test]
    fn full_ties_break_lexicographically() {
        let c = [cand(&[7, 8], 1.0), cand(&[4, 5], 1.0)];
        assert_eq!(collect_and_select(&c).ch_path, ids(&[4, 5]));
    }

    #[test]
    fn winner_ignores_candidate_order() {
        let mut c = vec![
            cand(&[1, 2, 3], 0.0),
            cand(&[6, 5], 1.5),
            cand(&[4, 5], 1.5),
            cand(&[9, 8], 2.0),
        ];
        let baseline = collect_and_select(&c).ch_path;
        c.reverse();
        assert_eq!(collect_and_select(&c).ch_path, baseline);
        c.swap(0, 2);
        assert_eq!(collect_and_select(&c).ch_path, baseline);
    }

    // ---- relay choice ----

    #[test]
    fn relay_needs_a_shared_channel_and_max_throughput() {
        let w = world(
            quiet_config(),
            vec![
                su(0, 0.0, 0.0, &[2, 3], 0.5, 10.0, 400.0),
                su(1, 10.0, 0.0, &[1, 2], 0.5, 80.0, 400.0),
                su(2, 20.0, 0.0, &[2, 3], 0.5, 20.0, 400.0),
            ],
        );
        let members: BTreeSet<NodeId> = ids(&[0, 1, 2]).into_iter().collect();
        let prev = su(9, 0.0, 0.0, &[0, 1], 0.5, 1.0, 400.0);
        // only n1 hears the previous hop's channels
        assert_eq!(select_intermediate_node(&w, &members, &prev), Some(n(1)));
    }

    #[test]
    fn relay_picks_higher_throughput_among_compatible() {
        let w = world(
            quiet_config(),
            vec![
                su(0, 0.0, 0.0, &[1], 0.5, 3.0, 400.0),
                su(1, 10.0, 0.0, &[1], 0.5, 7.0, 400.0),
            ],
        );
        let members: BTreeSet<NodeId> = ids(&[0, 1]).into_iter().collect();
        let prev = su(9, 0.0, 0.0, &[1], 0.5, 1.0, 400.0);
        assert_eq!(select_intermediate_node(&w, &members, &prev), Some(n(1)));
    }

    #[test]
    fn relay_throughput_ties_break_to_lowest_id() {
        let w = world(
            quiet_config(),
            vec![
                su(0, 0.0, 0.0, &[1], 0.5, 50.0, 400.0),
                su(1, 10.0, 0.0, &[1], 0.5, 50.0, 400.0),
            ],
        );
        let members: BTreeSet<NodeId> = ids(&[0, 1]).into_iter().collect();
        let prev = su(9, 0.0, 0.0, &[1], 0.5, 1.0, 400.0);
        assert_eq!(select_intermediate_node(&w, &members, &prev), Some(n(0)));
    }

    #[test]
    fn no_compatible_member_yields_no_relay() {
        let w = world(
            quiet_config(),
            vec![
                su(0, 0.0, 0.0, &[2, 3], 0.5, 50.0, 400.0),
                su(1, 10.0, 0.0, &[3], 0.5, 60.0, 400.0),
            ],
        );
        let members: BTreeSet<NodeId> = ids(&[0, 1]).into_iter().collect();
        let prev = su(9, 0.0, 0.0, &[0, 1], 0.5, 1.0, 400.0);
        assert_eq!(select_intermediate_node(&w, &members, &prev), None);
    }

    #[test]
    fn excluded_nodes_never_relay() {
        let w = world(
            quiet_config(),
            vec![
                su(0, 0.0, 0.0, &[1], 0.5, 90.0, 400.0),
                su(1, 10.0, 0.0, &[1], 0.5, 10.0, 400.0),
            ],
        );
        let members: BTreeSet<NodeId> = ids(&[0, 1]).into_iter().collect();
        let exclude: BTreeSet<NodeId> = ids(&[0]).into_iter().collect();
        let req = chset(&[1]);
        assert_eq!(select_relay(&w, &members, &[&req], &exclude), Some(n(1)));
    }

    // ---- discovery over the overlay ----

    #[test]
    fn relay_free_discovery_between_adjacent_clusters() {
        let mut sim = two_cluster();
        sim.start_discovery(n(1), n(3), SimTime::ZERO);
        sim.run();
        let r = route_of(&sim, 1, 3);
        assert_eq!(r.head_path, ids(&[0, 2]));
        assert_eq!(r.node_route, ids(&[1, 3]));
        assert_eq!(sim.metrics.rreq_count, 2); // member hand-off + one flood hop
        assert_eq!(sim.metrics.rrep_count, 2);
        assert_eq!(sim.metrics.routing_delay, Some(5.0));
        assert!(sim.metrics.success);
    }

    #[test]
    fn source_head_skips_the_member_hop() {
        let mut sim = two_cluster();
        sim.start_discovery(n(0), n(3), SimTime::ZERO);
        sim.run();
        let r = route_of(&sim, 0, 3);
        assert_eq!(r.node_route, ids(&[0, 3]));
        assert_eq!(sim.metrics.rreq_count, 1);
        assert_eq!(sim.metrics.rrep_count, 1);
        assert_eq!(sim.metrics.routing_delay, Some(3.0));
    }

    #[test]
    fn relayed_discovery_across_three_clusters() {
        let mut sim = line3();
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.run();
        let r = route_of(&sim, 1, 6);
        assert_eq!(r.head_path, ids(&[0, 2, 5]));
        // the middle cluster contributes its best compatible member
        assert_eq!(r.node_route, ids(&[1, 3, 6]));
        assert_eq!(sim.metrics.rreq_count, 3);
        assert_eq!(sim.metrics.rrep_count, 3);
        assert_eq!(sim.metrics.routing_delay, Some(7.0));
        // the reply retraces the head path in reverse
        let rrep_hops: Vec<(NodeId, NodeId)> = sim
            .trace
            .sends()
            .filter(|(_, _, _, m)| m.kind() == "rrep")
            .map(|(_, from, target, _)| match target {
                SendTarget::Unicast(to) => (*from, *to),
                SendTarget::Broadcast(_) => panic!("replies are unicast"),
            })
            .collect();
        assert_eq!(rrep_hops, vec![(n(5), n(2)), (n(2), n(0)), (n(0), n(1))]);
        // source head cached the overlay route
        let entry = &sim.heads[&n(0)].routing[&n(6)];
        assert_eq!(entry.next_hop_head, n(2));
        assert_eq!(entry.full_head_path, ids(&[2, 5]));
    }

    #[test]
    fn cached_route_suppresses_rediscovery() {
        let mut sim = two_cluster();
        sim.start_discovery(n(1), n(3), SimTime::ZERO);
        sim.run();
        let sent = sim.metrics.rreq_count;
        sim.set_horizon(SimTime(50.0));
        sim.start_discovery(n(1), n(3), SimTime(30.0));
        sim.run();
        assert_eq!(sim.metrics.rreq_count, sent);
        assert_eq!(sim.sources[&n(1)].pending.len(), 1);
    }

    #[test]
    fn unclustered_source_refuses_to_discover() {
        let mut sim = two_cluster();
        sim.world.node_mut(n(1)).cluster = None;
        sim.world.node_mut(n(1)).role = Role::Undecided;
        sim.crp_initiate(n(1), n(3));
        assert_eq!(sim.drop_count(n(1), DropReason::Undecided), 1);
        assert!(sim.sources.is_empty());
        assert_eq!(sim.metrics.rreq_count, 0);
    }

    // ---- request handling at a head ----

    fn test_key(sim: &mut Sim) -> RequestKey {
        sim.open_pending(n(1), n(3))
    }

    fn rreq_with(key: RequestKey, path: &[u32]) -> Rreq {
        Rreq {
            key,
            ch_path: ids(path),
            src_channels: chset(&[0, 1]),
        }
    }

    #[test]
    fn duplicate_requests_drop_at_the_gate() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.heads.get_mut(&n(0)).unwrap().seen.insert(key);
        sim.crp_process_rreq(n(0), rreq_with(key, &[]), n(1));
        assert_eq!(sim.drop_count(n(0), DropReason::Duplicate), 1);
        assert_eq!(sim.metrics.rreq_count, 0);
    }

    #[test]
    fn looping_requests_drop() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.crp_process_rreq(n(0), rreq_with(key, &[0]), n(2));
        assert_eq!(sim.drop_count(n(0), DropReason::Loop), 1);
        // a path with an internal repeat is equally malformed
        sim.crp_process_rreq(n(0), rreq_with(key, &[2, 2]), n(2));
        assert_eq!(sim.drop_count(n(0), DropReason::Loop), 2);
        assert_eq!(sim.metrics.rreq_count, 0);
    }

    #[test]
    fn hop_cap_applies_before_any_forwarding() {
        let mut sim = two_cluster_warmed();
        sim.world.config.hmax = 1;
        let key = test_key(&mut sim);
        // a known overlay route may not stretch the request past the cap
        sim.heads.get_mut(&n(0)).unwrap().routing.insert(
            n(3),
            RouteEntry {
                next_hop_head: n(2),
                full_head_path: vec![n(2)],
                learned_at: SimTime::ZERO,
            },
        );
        sim.crp_process_rreq(n(0), rreq_with(key, &[2]), n(2));
        assert_eq!(sim.drop_count(n(0), DropReason::HopCap), 1);
        assert_eq!(sim.metrics.rreq_count, 0);
    }

    #[test]
    fn known_overlay_route_forwards_directed() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.heads.get_mut(&n(0)).unwrap().routing.insert(
            n(3),
            RouteEntry {
                next_hop_head: n(2),
                full_head_path: vec![n(2)],
                learned_at: SimTime::ZERO,
            },
        );
        sim.crp_process_rreq(n(0), rreq_with(key, &[]), n(1));
        assert_eq!(sim.metrics.rreq_count, 1);
        let (_, _, target, _) = sim
            .trace
            .sends()
            .find(|(_, _, _, m)| m.kind() == "rreq")
            .unwrap();
        assert_eq!(*target, SendTarget::Unicast(n(2)));
    }

    #[test]
    fn overlay_broadcast_excludes_the_sender() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        // n0's only overlay neighbor is n2, the sender: nobody hears it,
        // but the transmission still counts
        sim.crp_process_rreq(n(0), rreq_with(key, &[2]), n(2));
        assert_eq!(sim.metrics.rreq_count, 1);
        let (_, _, target, _) = sim
            .trace
            .sends()
            .find(|(_, _, _, m)| m.kind() == "rreq")
            .unwrap();
        assert_eq!(*target, SendTarget::Broadcast(Vec::new()));
    }

    #[test]
    fn open_window_keeps_late_candidates() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.crp_process_rreq(n(2), rreq_with(key, &[0]), n(0));
        sim.crp_process_rreq(n(2), rreq_with(key, &[0]), n(0));
        let col = &sim.heads[&n(2)].collectors[&key];
        assert_eq!(col.candidates.len(), 2);
        assert!(!col.closed);
        assert_eq!(sim.drop_count(n(2), DropReason::Duplicate), 0);
        sim.run_until(SimTime(30.0));
        // the window closed, picked a winner, and the route came back
        assert_eq!(route_of(&sim, 1, 3).node_route, ids(&[1, 3]));
        assert!(sim.metrics.success);
        // copies arriving after the close hit the ordinary duplicate gate
        sim.crp_process_rreq(n(2), rreq_with(key, &[0]), n(0));
        assert_eq!(sim.drop_count(n(2), DropReason::Duplicate), 1);
    }

    #[test]
    fn request_to_non_head_is_misrouted() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.crp_process_rreq(n(3), rreq_with(key, &[0]), n(0));
        assert_eq!(sim.drop_count(n(3), DropReason::Misrouted), 1);
    }

    // ---- reply walk edge cases ----

    #[test]
    fn member_delivery_at_wrong_node_is_misrouted() {
        let mut sim = two_cluster_warmed();
        let key = RequestKey {
            src: n(1),
            dst: n(3),
            request_id: 0,
        };
        let r = Rrep {
            key,
            ch_path: ids(&[2, 0]),
            hop_index: 2,
            relay_nodes: vec![],
            prev_channels: chset(&[1, 2]),
            src_channels: chset(&[0, 1]),
        };
        sim.crp_process_rrep(n(3), r);
        assert_eq!(sim.drop_count(n(3), DropReason::Misrouted), 1);
    }

    #[test]
    fn relay_free_route_requires_a_shared_end_channel() {
        let mut sim = two_cluster();
        // destination loses the shared channel with the source
        sim.world.node_mut(n(3)).channels = chset(&[2]);
        sim.start_discovery(n(1), n(3), SimTime::ZERO);
        sim.run();
        assert_eq!(sim.drop_count(n(0), DropReason::ChannelMismatch), 1);
        assert!(sim.installed_route(n(1), n(3)).is_none());
        assert!(!sim.metrics.success);
        assert_eq!(sim.metrics.routing_delay, None);
    }

    #[test]
    fn reply_without_any_relay_candidate_reports_failure() {
        let mut sim = line3();
        // strip the middle cluster of every member compatible with the
        // source: n2 keeps only channel 2, n3/n4 move off both ends
        sim.world.node_mut(n(2)).channels = chset(&[2]);
        sim.world.node_mut(n(3)).channels = chset(&[2]);
        sim.world.node_mut(n(4)).channels = chset(&[2]);
        // the source now shares nothing with cluster 1, and the reply
        // dies there rather than installing an unusable route
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.run();
        assert_eq!(sim.drop_count(n(2), DropReason::NoRelay), 1);
        assert!(sim.installed_route(n(1), n(6)).is_none());
        assert!(!sim.metrics.success);
    }

    // ---- discovery bookkeeping ----

    #[test]
    fn missed_deadline_counts_as_timeout() {
        // break the overlay: the far cluster is unreachable
        let mut sim = two_cluster();
        sim.world.node_mut(n(2)).pos = Position::new(5000.0, 0.0);
        sim.world.node_mut(n(3)).pos = Position::new(5000.0, 50.0);
        sim.start_discovery(n(1), n(3), SimTime::ZERO);
        sim.run();
        assert!(!sim.metrics.success);
        assert_eq!(sim.metrics.routing_delay, None);
        assert_eq!(sim.drop_count(n(1), DropReason::Timeout), 1);
        // the member hand-off and the empty flood both counted
        assert_eq!(sim.metrics.rreq_count, 2);
    }

    #[test]
    fn reply_after_deadline_is_refused() {
        let mut sim = two_cluster();
        sim.start_discovery(n(1), n(3), SimTime::ZERO);
        sim.run_until(SimTime(4.5));
        let key = sim.measured().unwrap();
        sim.sources.get_mut(&n(1)).unwrap().pending.get_mut(&key).unwrap().deadline =
            SimTime(4.0);
        sim.run();
        assert_eq!(sim.drop_count(n(1), DropReason::LateReply), 1);
        assert_eq!(sim.drop_count(n(1), DropReason::Timeout), 0);
        assert!(!sim.metrics.success);
        assert!(sim.installed_route(n(1), n(3)).is_none());
    }

    #[test]
    fn lost_transmissions_still_count() {
        let mut sim = two_cluster_warmed();
        let key = test_key(&mut sim);
        sim.world.node_mut(n(2)).pos = Position::new(5000.0, 0.0);
        let ok = sim.send_unicast(n(0), n(2), Message::Rreq(rreq_with(key, &[0])), false);
        assert!(!ok);
        assert_eq!(sim.metrics.rreq_count, 1);
        assert_eq!(sim.drop_count(n(0), DropReason::OutOfRange), 1);
        // channel-gated sends fail on disjoint sets even in range
        sim.world.node_mut(n(3)).channels = chset(&[3]);
        let r = Rrep {
            key,
            ch_path: ids(&[2, 0]),
            hop_index: 2,
            relay_nodes: vec![],
            prev_channels: chset(&[1, 2]),
            src_channels: chset(&[0, 1]),
        };
        let ok = sim.send_unicast(n(0), n(3), Message::Rrep(r), true);
        assert!(!ok);
        assert_eq!(sim.metrics.rrep_count, 1);
        assert_eq!(sim.drop_count(n(0), DropReason::NoChannel), 1);
    }

    #[test]
    fn broadcast_holdoff_is_shared_by_all_receivers() {
        let mut cfg = quiet_config();
        cfg.broadcast_jitter = 2.0;
        let w = world(
            cfg,
            vec![
                assign(su(0, 0.0, 0.0, &[0, 1], 0.9, 10.0, 400.0), 0, true),
                assign(su(1, 0.0, 50.0, &[0, 1], 0.5, 50.0, 400.0), 0, false),
                assign(su(2, 300.0, 0.0, &[1, 2], 0.9, 10.0, 400.0), 1, true),
                assign(su(3, 300.0, 50.0, &[1, 2], 0.5, 70.0, 400.0), 1, false),
            ],
        );
        let mut sim = Sim::from_preformed(w, ProtocolKind::Crp).unwrap();
        sim.run_until(SimTime::ZERO); // consume the initial hello refresh
        let key = RequestKey {
            src: n(1),
            dst: n(3),
            request_id: 0,
        };
        sim.send_broadcast(n(0), vec![n(1), n(2)], Message::Rreq(rreq_with(key, &[0])));
        // hold-off bound is per receiver: 2 receivers x 2.0 + link delay
        let a = sim.queue.pop_if_at_most(SimTime(5.0)).unwrap();
        let b = sim.queue.pop_if_at_most(SimTime(5.0)).unwrap();
        assert_eq!(a.at, b.at);
        assert!(a.at >= SimTime(1.0)); // link delay is the floor
        assert_eq!(sim.metrics.rreq_count, 1);
    }

    // ---- maintenance: source movement ----

    #[test]
    fn source_moving_onto_its_own_path_splices_without_rediscovery() {
        let mut sim = line3();
        sim.set_horizon(SimTime(40.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.scripted_move(n(1), Position::new(300.0, 100.0), SimTime(10.0));
        sim.run();
        // the source landed in the middle cluster, already on the path:
        // the route prefix is cut and nothing is re-flooded
        let r = route_of(&sim, 1, 6);
        assert_eq!(r.head_path, ids(&[2, 5]));
        assert_eq!(r.node_route, ids(&[1, 6]));
        assert_eq!(sim.world.node(n(1)).cluster, Some(crate::model::ClusterId(1)));
        assert!(rreq_sends_after(&sim, 9.0).is_empty());
        assert_eq!(sim.sources[&n(1)].pending.len(), 1);
        // the new anchor head learned the truncated overlay route
        assert_eq!(sim.heads[&n(2)].routing[&n(6)].next_hop_head, n(5));
    }

    #[test]
    fn source_moving_off_path_rediscovers_exactly_once() {
        // the line plus a fourth cluster north of the source, reachable
        // from head n0 only and off the installed path
        let mut cfg = quiet_config();
        cfg.radio_range = 350.0;
        let mut nodes = line3_nodes();
        nodes.push(assign(su(7, 0.0, 300.0, &[0, 1], 0.9, 10.0, 350.0), 3, true));
        nodes.push(assign(su(8, 0.0, 240.0, &[0, 1], 0.5, 20.0, 200.0), 3, false));
        let w = world(cfg, nodes);
        let mut sim = Sim::from_preformed(w, ProtocolKind::Crp).unwrap();
        sim.set_horizon(SimTime(60.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.scripted_move(n(1), Position::new(0.0, 360.0), SimTime(10.0));
        sim.run();
        // exactly one fresh request left the source after the move
        assert_eq!(rreq_sends_after(&sim, 10.0).first(), Some(&n(1)));
        assert_eq!(
            rreq_sends_after(&sim, 10.0)
                .iter()
                .filter(|&&f| f == n(1))
                .count(),
            1
        );
        let r = route_of(&sim, 1, 6);
        assert_eq!(r.key.request_id, 1);
        assert_eq!(r.head_path, ids(&[7, 0, 2, 5]));
        // the emptied source cluster lends its head as the last relay
        assert_eq!(r.node_route, ids(&[1, 0, 3, 6]));
    }

    #[test]
    fn splice_without_a_shared_channel_rediscovers_instead_of_lying() {
        let mut sim = line3();
        sim.set_horizon(SimTime(60.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.run_until(SimTime(9.0));
        assert_eq!(route_of(&sim, 1, 6).node_route, ids(&[1, 3, 6]));
        // the destination drops to channel 2 just before the source
        // lands in its relay's cluster: the spliced two-node route would
        // be unusable, so the splice is refused and a rediscovery goes
        // out instead (which here also finds no usable relay-free route
        // and reports failure rather than installing one)
        sim.world.node_mut(n(6)).channels = chset(&[2]);
        sim.scripted_move(n(1), Position::new(300.0, 100.0), SimTime(10.0));
        sim.run();
        // one mismatch at the splice, one at the rediscovered reply
        assert_eq!(sim.drop_count(n(2), DropReason::ChannelMismatch), 2);
        assert!(sim.installed_route(n(1), n(6)).is_none());
        let from_src: Vec<NodeId> = rreq_sends_after(&sim, 10.0)
            .into_iter()
            .filter(|&f| f == n(1))
            .collect();
        assert_eq!(from_src.len(), 1);
        // both discoveries are closed out; nothing dangles
        assert!(sim.sources[&n(1)].pending.values().all(|p| p.done));
    }

    // ---- maintenance: link failure ----

    #[test]
    fn failed_relay_is_replaced_locally() {
        let mut sim = line3();
        sim.set_horizon(SimTime(40.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.scripted_link_failure(n(1), n(3), SimTime(10.0));
        sim.run();
        // the relay's head swapped in the alternate member; no flood
        let r = route_of(&sim, 1, 6);
        assert_eq!(r.node_route, ids(&[1, 4, 6]));
        assert_eq!(r.head_path, ids(&[0, 2, 5]));
        assert!(rreq_sends_after(&sim, 10.0).is_empty());
        assert_eq!(sim.metrics.rreq_count, 3);
        // the measured discovery's numbers are untouched by repair
        assert_eq!(sim.metrics.routing_delay, Some(7.0));
    }

    #[test]
    fn repair_without_alternates_triggers_rediscovery() {
        let mut sim = line3();
        // only n3 can relay: the head lacks the source's channels and n4
        // shares nothing with either route end
        sim.world.node_mut(n(2)).channels = chset(&[2]);
        sim.world.node_mut(n(4)).channels = chset(&[3]);
        sim.set_horizon(SimTime(60.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.run_until(SimTime(9.0));
        assert_eq!(route_of(&sim, 1, 6).node_route, ids(&[1, 3, 6]));
        sim.scripted_link_failure(n(1), n(3), SimTime(10.0));
        sim.run();
        assert_eq!(sim.drop_count(n(2), DropReason::NoRelay), 1);
        // the source flooded once more and reinstalled the same relay
        assert_eq!(
            rreq_sends_after(&sim, 10.0)
                .iter()
                .filter(|&&f| f == n(1))
                .count(),
            1
        );
        let r = route_of(&sim, 1, 6);
        assert_eq!(r.key.request_id, 1);
        assert_eq!(r.node_route, ids(&[1, 3, 6]));
    }

    #[test]
    fn losing_the_destination_kills_the_route_for_good() {
        let mut sim = line3();
        sim.set_horizon(SimTime(40.0));
        sim.start_discovery(n(1), n(6), SimTime::ZERO);
        sim.scripted_link_failure(n(3), n(6), SimTime(10.0));
        sim.run();
        assert_eq!(sim.drop_count(n(5), DropReason::DestinationLost), 1);
        assert!(sim.installed_route(n(1), n(6)).is_none());
        assert!(rreq_sends_after(&sim, 10.0).is_empty());
        // heads along the notice path forgot the stale overlay entry
        assert!(!sim.heads[&n(0)].routing.contains_key(&n(6)));
    }

    // ---- head resignation ----

    #[test]
    fn resignation_promotes_the_remaining_member() {
        let mut sim = two_cluster();
        let outcome = sim.trigger_resign(n(2));
        assert_eq!(outcome, clustering::Resignation::NewHead(n(3)));
        assert_eq!(sim.world.node(n(2)).role, Role::Member);
        assert_eq!(sim.world.node(n(3)).role, Role::ClusterHead);
        assert_eq!(sim.clusters[&crate::model::ClusterId(1)].head, n(3));
        assert!(!sim.heads.contains_key(&n(2)));
        assert!(sim.heads.contains_key(&n(3)));
    }

    #[test]
    fn lone_head_refuses_to_resign() {
        let w = world(
            quiet_config(),
            vec![assign(su(0, 0.0, 0.0, &[0, 1], 0.9, 10.0, 400.0), 0, true)],
        );
        let mut sim = Sim::from_preformed(w, ProtocolKind::Crp).unwrap();
        let outcome = sim.trigger_resign(n(0));
        assert_eq!(outcome, clustering::Resignation::Refused);
        assert_eq!(sim.world.node(n(0)).role, Role::ClusterHead);
    }
}
