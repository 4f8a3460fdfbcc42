//! Protocol driver: shared control-message types, per-node protocol
//! state, the event dispatch loop, and the transmission helpers both
//! routing protocols build on.
//!
//! One [`Sim`] owns one run. All state mutation happens on the single
//! event loop, so a run is a pure function of (world, protocol, seed).

pub mod aodv;
pub mod crp;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{self, Cluster};
use crate::engine::{EventQueue, SimTime};
use crate::error::ConfigError;
use crate::model::{
    common_channels, in_range, stream_rng, streams, ChannelId, ClusterId, NodeId, Position, Role,
    World,
};
use crate::trace::{MsgSummary, Record, SendTarget, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Crp,
    Aodv,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProtocolKind::Crp => write!(f, "crp"),
            ProtocolKind::Aodv => write!(f, "aodv"),
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "crp" => Ok(ProtocolKind::Crp),
            "aodv" => Ok(ProtocolKind::Aodv),
            other => Err(ConfigError::field(
                "protocol",
                format!("unknown protocol {:?}, expected crp or aodv", other),
            )),
        }
    }
}

/// Identity of one discovery attempt: source, destination, and the
/// source's per-run request counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub request_id: u32,
}

impl std::fmt::Display for RequestKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}>{}#{}", self.src, self.dst, self.request_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    Duplicate,
    HopCap,
    Loop,
    OutOfRange,
    NoChannel,
    NoRelay,
    ChannelMismatch,
    LateReply,
    Timeout,
    Undecided,
    Misrouted,
    DestinationLost,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DropReason::Duplicate => "duplicate",
            DropReason::HopCap => "hop-cap",
            DropReason::Loop => "loop",
            DropReason::OutOfRange => "out-of-range",
            DropReason::NoChannel => "no-channel",
            DropReason::NoRelay => "no-relay",
            DropReason::ChannelMismatch => "channel-mismatch",
            DropReason::LateReply => "late-reply",
            DropReason::Timeout => "timeout",
            DropReason::Undecided => "undecided",
            DropReason::Misrouted => "misrouted",
            DropReason::DestinationLost => "destination-lost",
        };
        f.write_str(s)
    }
}

/// Route request carried over the cluster-head overlay. `ch_path` lists
/// every head traversed so far, source head first; the source's usable
/// channel set rides along so the head nearest the source can pick a
/// relay the source can actually talk to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rreq {
    pub key: RequestKey,
    pub ch_path: Vec<NodeId>,
    pub src_channels: BTreeSet<ChannelId>,
}

impl Rreq {
    pub fn hops(&self) -> usize {
        self.ch_path.len()
    }
}

/// Route reply walking the reversed winning head path. Each intermediate
/// head appends one relay; `prev_channels` tracks the channel set of the
/// most recently fixed route node on the destination side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rrep {
    pub key: RequestKey,
    /// Reversed head sequence: destination head first, source head last.
    pub ch_path: Vec<NodeId>,
    /// Position of the node currently holding the reply.
    pub hop_index: usize,
    pub relay_nodes: Vec<NodeId>,
    pub prev_channels: BTreeSet<ChannelId>,
    pub src_channels: BTreeSet<ChannelId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RerrKind {
    /// The source changed clusters while holding a route; the new head
    /// decides between splicing and rediscovery.
    SourceMoved {
        old_head_path: Vec<NodeId>,
        old_node_route: Vec<NodeId>,
    },
    /// A route node lost its next hop; forwarded to the failed node's
    /// head for local repair.
    LinkFailure {
        failed: NodeId,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rerr {
    pub reporter: NodeId,
    pub affected: RequestKey,
    pub broken_hop: Option<(NodeId, NodeId)>,
    pub kind: RerrKind,
}

/// Baseline route request flooded node-by-node. `node_path` includes the
/// source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AodvRreq {
    pub key: RequestKey,
    pub node_path: Vec<NodeId>,
}

impl AodvRreq {
    pub fn hops(&self) -> usize {
        self.node_path.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AodvRrep {
    pub key: RequestKey,
    /// Reversed node path: destination first, source last.
    pub rev_path: Vec<NodeId>,
    pub hop_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    /// Patched or truncated route propagated back to the source along
    /// `rev_path`.
    RouteUpdate {
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
        rev_path: Vec<NodeId>,
        hop_index: usize,
    },
    /// Discovery or repair failed; walks `rev_path` to the source.
    RouteFail {
        key: RequestKey,
        reason: DropReason,
        rediscover: bool,
        rev_path: Vec<NodeId>,
        hop_index: usize,
    },
    CheckForNewClusterHead {
        from: NodeId,
    },
    AodvRreq(AodvRreq),
    AodvRrep(AodvRrep),
}

impl Message {
    fn summary(&self) -> MsgSummary {
        match self {
            Message::Rreq(r) => MsgSummary::Rreq {
                key: r.key,
                path: r.ch_path.clone(),
            },
            Message::Rrep(r) => MsgSummary::Rrep {
                key: r.key,
                rev_path: r.ch_path.clone(),
                relays: r.relay_nodes.clone(),
            },
            Message::Rerr(e) => MsgSummary::Rerr {
                key: e.affected,
                detail: match &e.kind {
                    RerrKind::SourceMoved { .. } => "source-moved".into(),
                    RerrKind::LinkFailure { failed, .. } => format!("link-failure {}", failed),
                },
            },
            Message::RouteUpdate { key, node_route, .. } => MsgSummary::RouteUpdate {
                key: *key,
                route: node_route.clone(),
            },
            Message::RouteFail { key, .. } => MsgSummary::RouteFail { key: *key },
            Message::CheckForNewClusterHead { .. } => MsgSummary::HeadCheck,
            Message::AodvRreq(r) => MsgSummary::Rreq {
                key: r.key,
                path: r.node_path.clone(),
            },
            Message::AodvRrep(r) => MsgSummary::Rrep {
                key: r.key,
                rev_path: r.rev_path.clone(),
                relays: Vec::new(),
            },
        }
    }

    fn counts_as_rreq(&self) -> bool {
        matches!(self, Message::Rreq(_) | Message::AodvRreq(_))
    }

    fn counts_as_rrep(&self) -> bool {
        matches!(self, Message::Rrep(_) | Message::AodvRrep(_))
    }
}

#[derive(Debug, Clone)]
pub enum TimerTag {
    /// Destination-side collection window close.
    TrExpiry(RequestKey),
    /// Source-side discovery deadline.
    Deadline(RequestKey),
}

#[derive(Debug, Clone)]
pub enum EventKind {
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: Message,
    },
    Timer {
        node: NodeId,
        tag: TimerTag,
    },
    HelloTick,
    Move {
        node: NodeId,
        to: Position,
    },
    PuToggle,
    StartDiscovery {
        src: NodeId,
        dst: NodeId,
    },
    /// Scripted detection of a lost next hop on an active route.
    LinkFailure {
        reporter: NodeId,
        failed: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub channels: BTreeSet<ChannelId>,
    pub last_heard: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop_head: NodeId,
    /// Remaining head path toward the destination; first element is
    /// `next_hop_head`.
    pub full_head_path: Vec<NodeId>,
    pub learned_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct Collector {
    pub first_arrival: SimTime,
    pub tr_expiry: SimTime,
    pub candidates: Vec<(Rreq, SimTime)>,
    pub closed: bool,
}

/// Per-cluster-head protocol state.
#[derive(Debug, Clone, Default)]
pub struct HeadState {
    pub neighbors: BTreeMap<NodeId, NeighborEntry>,
    pub routing: BTreeMap<NodeId, RouteEntry>,
    pub seen: BTreeSet<RequestKey>,
    pub collectors: BTreeMap<RequestKey, Collector>,
}

/// Baseline per-node state: forward-once bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct AodvNodeState {
    pub seen: BTreeSet<RequestKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstalledRoute {
    pub key: RequestKey,
    /// Head sequence source-side first; empty for the baseline.
    pub head_path: Vec<NodeId>,
    /// Full data path: source, relays, destination.
    pub node_route: Vec<NodeId>,
    pub installed_at: SimTime,
}

#[derive(Debug, Clone)]
pub struct PendingDiscovery {
    pub started: SimTime,
    pub deadline: SimTime,
    pub done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SourceState {
    pub next_request_id: u32,
    pub pending: BTreeMap<RequestKey, PendingDiscovery>,
    pub routes: BTreeMap<NodeId, InstalledRoute>,
}

/// The four reported metrics of one run. `routing_delay` is present
/// exactly when the measured discovery succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rreq_count: u64,
    pub rrep_count: u64,
    pub routing_delay: Option<f64>,
    pub success: bool,
}

/// One simulation run: world, protocol state, event queue, trace.
pub struct Sim {
    pub world: World,
    pub clusters: BTreeMap<ClusterId, Cluster>,
    pub queue: EventQueue<EventKind>,
    pub trace: Trace,
    pub metrics: RunMetrics,
    pub heads: BTreeMap<NodeId, HeadState>,
    pub aodv_state: BTreeMap<NodeId, AodvNodeState>,
    pub sources: BTreeMap<NodeId, SourceState>,
    pub drops: BTreeMap<(NodeId, DropReason), u64>,
    protocol: ProtocolKind,
    horizon: SimTime,
    /// Key of the first discovery; drives RunMetrics success/delay.
    measured: Option<RequestKey>,
    bcast_rng: ChaCha8Rng,
    hello_rng: ChaCha8Rng,
    mobility_rng: ChaCha8Rng,
    pu_rng: ChaCha8Rng,
    waypoints: BTreeMap<NodeId, Position>,
}

impl Sim {
    /// Builds a run over a generated world. For the cluster protocol
    /// this performs the full formation pass: K-means partition, head
    /// election (heads gain the control-plane range boost), and a
    /// delay-ranked rejoin for members out of their head's reach.
    pub fn new(world: World, protocol: ProtocolKind) -> Result<Sim, ConfigError> {
        world.check_consistency()?;
        let seed = world.config.seed;
        let deadline_span =
            world.config.tr + 2.0 * world.config.link_delay * world.config.hmax as f64;
        let mut sim = Sim {
            world,
            clusters: BTreeMap::new(),
            queue: EventQueue::new(),
            trace: Trace::default(),
            metrics: RunMetrics::default(),
            heads: BTreeMap::new(),
            aodv_state: BTreeMap::new(),
            sources: BTreeMap::new(),
            drops: BTreeMap::new(),
            protocol,
            horizon: SimTime(deadline_span + 1.0),
            measured: None,
            bcast_rng: stream_rng(seed, streams::BCAST_JITTER),
            hello_rng: stream_rng(seed, streams::HELLO_JITTER),
            mobility_rng: stream_rng(seed, streams::MOBILITY),
            pu_rng: stream_rng(seed, streams::PU_ACTIVITY),
            waypoints: BTreeMap::new(),
        };
        if protocol == ProtocolKind::Crp {
            sim.form_clusters()?;
            sim.queue.schedule(SimTime::ZERO, EventKind::HelloTick);
        }
        if sim.world.config.mobility {
            let sus: Vec<NodeId> = sim.world.secondaries().map(|n| n.id).collect();
            for id in sus {
                sim.schedule_waypoint_step(id);
            }
        }
        if sim.world.config.pu_epoch > 0.0 {
            let epoch = sim.world.config.pu_epoch;
            sim.queue
                .schedule(SimTime(epoch), EventKind::PuToggle);
        }
        Ok(sim)
    }

    /// Builds a run over a world whose roles and cluster assignments are
    /// already set (imported fixtures). No re-election, no range boost.
    pub fn from_preformed(world: World, protocol: ProtocolKind) -> Result<Sim, ConfigError> {
        world.check_consistency()?;
        let mut clusters: BTreeMap<ClusterId, Cluster> = BTreeMap::new();
        for node in world.secondaries() {
            let Some(cid) = node.cluster else {
                return Err(ConfigError::field(
                    "world",
                    format!("{} has no cluster assignment", node.id),
                ));
            };
            let c = clusters.entry(cid).or_insert(Cluster {
                id: cid,
                head: node.id,
                members: BTreeSet::new(),
            });
            c.members.insert(node.id);
            if node.role == Role::ClusterHead {
                c.head = node.id;
            }
        }
        for c in clusters.values() {
            let heads = c
                .members
                .iter()
                .filter(|m| world.node(**m).role == Role::ClusterHead)
                .count();
            if heads != 1 {
                return Err(ConfigError::field(
                    "world",
                    format!("{} has {} heads, expected exactly 1", c.id, heads),
                ));
            }
        }
        let mut sim = Sim::new_unclustered(world, protocol)?;
        sim.clusters = clusters;
        for (&_, c) in &sim.clusters {
            sim.heads.insert(c.head, HeadState::default());
        }
        if protocol == ProtocolKind::Crp {
            sim.queue.schedule(SimTime::ZERO, EventKind::HelloTick);
        }
        Ok(sim)
    }

    fn new_unclustered(world: World, protocol: ProtocolKind) -> Result<Sim, ConfigError> {
        world.check_consistency()?;
        let seed = world.config.seed;
        let deadline_span =
            world.config.tr + 2.0 * world.config.link_delay * world.config.hmax as f64;
        Ok(Sim {
            world,
            clusters: BTreeMap::new(),
            queue: EventQueue::new(),
            trace: Trace::default(),
            metrics: RunMetrics::default(),
            heads: BTreeMap::new(),
            aodv_state: BTreeMap::new(),
            sources: BTreeMap::new(),
            drops: BTreeMap::new(),
            protocol,
            horizon: SimTime(deadline_span + 1.0),
            measured: None,
            bcast_rng: stream_rng(seed, streams::BCAST_JITTER),
            hello_rng: stream_rng(seed, streams::HELLO_JITTER),
            mobility_rng: stream_rng(seed, streams::MOBILITY),
            pu_rng: stream_rng(seed, streams::PU_ACTIVITY),
            waypoints: BTreeMap::new(),
        })
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.protocol
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    /// Extends the run horizon (multi-phase scenarios).
    pub fn set_horizon(&mut self, t: SimTime) {
        self.horizon = t;
    }

    pub fn drop_count(&self, node: NodeId, reason: DropReason) -> u64 {
        self.drops.get(&(node, reason)).copied().unwrap_or(0)
    }

    /// Key of the discovery the run's metrics are bound to (the first
    /// one initiated).
    pub fn measured(&self) -> Option<RequestKey> {
        self.measured
    }

    pub fn head_of(&self, node: NodeId) -> Option<NodeId> {
        let cid = self.world.node(node).cluster?;
        self.clusters.get(&cid).map(|c| c.head)
    }

    pub fn installed_route(&self, src: NodeId, dst: NodeId) -> Option<&InstalledRoute> {
        self.sources.get(&src)?.routes.get(&dst)
    }

    /// K-means partition, election, boost, and the out-of-reach rejoin.
    fn form_clusters(&mut self) -> Result<(), ConfigError> {
        let cfg = self.world.config.clone();
        let points: Vec<(NodeId, Position)> =
            self.world.secondaries().map(|n| (n.id, n.pos)).collect();
        if points.is_empty() {
            return Ok(());
        }
        let k = cfg.effective_kmeans_k().min(points.len());
        let mut rng = stream_rng(cfg.seed, streams::CLUSTERING);
        let groups = clustering::kmeans_partition(&points, k, &mut rng)?;
        for (i, group) in groups.iter().enumerate() {
            let cid = ClusterId(i as u32);
            let members: BTreeSet<NodeId> = group.iter().copied().collect();
            let head = clustering::elect_cluster_head(&members, &self.world);
            for &m in &members {
                let n = self.world.node_mut(m);
                n.cluster = Some(cid);
                n.role = if m == head {
                    Role::ClusterHead
                } else {
                    Role::Member
                };
            }
            self.world.node_mut(head).radio_range = cfg.radio_range * cfg.head_range_boost;
            self.heads.insert(head, HeadState::default());
            self.clusters.insert(cid, Cluster { id: cid, head, members });
        }
        // Members whose elected head ended up out of radio reach look
        // for a reachable cluster instead, ranked by triggered-hello
        // delay. A member that hears no usable cluster at all promotes
        // itself to a singleton head rather than staying stranded.
        let link_delay = cfg.link_delay;
        let member_ids: Vec<NodeId> = self
            .world
            .secondaries()
            .filter(|n| n.role == Role::Member)
            .map(|n| n.id)
            .collect();
        for u in member_ids {
            let current = self.world.node(u).cluster.expect("member has a cluster");
            let head = self.clusters[&current].head;
            if in_range(self.world.node(u), self.world.node(head)) {
                continue;
            }
            let rng = &mut self.hello_rng;
            let samples = clustering::gather_hello_samples(&self.world, u, &self.clusters, |_| {
                link_delay + rng.random_range(0.0..=0.1)
            });
            match clustering::knn_join(&samples, cfg.knn_k) {
                Some(newc) => {
                    if newc != current {
                        self.move_membership(u, current, newc);
                    }
                }
                None => self.promote_to_singleton_head(u, current),
            }
        }
        Ok(())
    }

    /// Splits `node` out of `from` as the head of a fresh singleton
    /// cluster, with the control-plane range boost.
    fn promote_to_singleton_head(&mut self, node: NodeId, from: ClusterId) {
        let cid = ClusterId(
            self.clusters
                .last_key_value()
                .map(|(c, _)| c.0 + 1)
                .unwrap_or(0),
        );
        self.clusters
            .get_mut(&from)
            .expect("source cluster exists")
            .members
            .remove(&node);
        self.clusters.insert(
            cid,
            Cluster {
                id: cid,
                head: node,
                members: [node].into(),
            },
        );
        let cfg_range = self.world.config.radio_range * self.world.config.head_range_boost;
        let n = self.world.node_mut(node);
        n.cluster = Some(cid);
        n.role = Role::ClusterHead;
        n.radio_range = cfg_range;
        self.heads.insert(node, HeadState::default());
    }

    fn move_membership(&mut self, node: NodeId, from: ClusterId, to: ClusterId) {
        self.clusters
            .get_mut(&from)
            .expect("source cluster exists")
            .members
            .remove(&node);
        self.clusters
            .get_mut(&to)
            .expect("target cluster exists")
            .members
            .insert(node);
        self.world.node_mut(node).cluster = Some(to);
    }

    /// Queues a discovery attempt.
    pub fn start_discovery(&mut self, src: NodeId, dst: NodeId, at: SimTime) {
        assert_ne!(src, dst, "source and destination must differ");
        self.queue
            .schedule(at, EventKind::StartDiscovery { src, dst });
    }

    /// Schedules a scripted node move.
    pub fn scripted_move(&mut self, node: NodeId, to: Position, at: SimTime) {
        self.queue.schedule(at, EventKind::Move { node, to });
    }

    /// Schedules a scripted link-failure detection: `reporter` is on an
    /// active route and has lost `failed`, its next hop.
    pub fn scripted_link_failure(&mut self, reporter: NodeId, failed: NodeId, at: SimTime) {
        self.queue
            .schedule(at, EventKind::LinkFailure { reporter, failed });
    }

    pub fn run(&mut self) {
        let limit = self.horizon;
        self.run_until(limit);
    }

    /// Processes events in (time, seq) order up to and including `limit`.
    pub fn run_until(&mut self, limit: SimTime) {
        while let Some(ev) = self.queue.pop_if_at_most(limit) {
            let (node, desc) = describe_event(&ev.kind);
            self.trace.push(Record::Event {
                t: ev.at,
                seq: ev.seq,
                node,
                desc,
            });
            self.handle(ev.kind);
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Deliver { from, to, msg } => self.handle_deliver(from, to, msg),
            EventKind::Timer { node, tag } => match tag {
                TimerTag::TrExpiry(key) => self.crp_close_collector(node, key),
                TimerTag::Deadline(key) => self.finalize_deadline(node, key),
            },
            EventKind::HelloTick => self.crp_hello_tick(),
            EventKind::Move { node, to } => self.apply_move(node, to),
            EventKind::PuToggle => self.apply_pu_toggle(),
            EventKind::StartDiscovery { src, dst } => match self.protocol {
                ProtocolKind::Crp => self.crp_initiate(src, dst),
                ProtocolKind::Aodv => self.aodv_initiate(src, dst),
            },
            EventKind::LinkFailure { reporter, failed } => {
                self.crp_handle_link_failure(reporter, failed)
            }
        }
    }

    fn handle_deliver(&mut self, from: NodeId, to: NodeId, msg: Message) {
        match msg {
            Message::Rreq(r) => self.crp_process_rreq(to, r, from),
            Message::Rrep(r) => self.crp_process_rrep(to, r),
            Message::Rerr(e) => self.crp_process_rerr(to, e),
            Message::RouteUpdate {
                key,
                head_path,
                node_route,
                rev_path,
                hop_index,
            } => self.crp_process_route_update(to, key, head_path, node_route, rev_path, hop_index),
            Message::RouteFail {
                key,
                reason,
                rediscover,
                rev_path,
                hop_index,
            } => self.crp_process_route_fail(to, key, reason, rediscover, rev_path, hop_index),
            Message::CheckForNewClusterHead { .. } => {}
            Message::AodvRreq(r) => self.aodv_process_rreq(to, r, from),
            Message::AodvRrep(r) => self.aodv_process_rrep(to, r),
        }
    }

    // ---- transmission helpers ----

    fn count_tx(&mut self, msg: &Message) {
        if msg.counts_as_rreq() {
            self.metrics.rreq_count += 1;
        } else if msg.counts_as_rrep() {
            self.metrics.rrep_count += 1;
        }
    }

    pub(crate) fn drop_msg(&mut self, node: NodeId, reason: DropReason, key: Option<RequestKey>) {
        *self.drops.entry((node, reason)).or_insert(0) += 1;
        self.trace.push(Record::Drop {
            t: self.queue.now(),
            node,
            reason,
            key,
        });
    }

    /// One unicast transmission. Counted at the attempt; delivery needs
    /// radio range and, when `require_channel`, a shared usable channel.
    /// Returns false when the transmission is lost.
    pub(crate) fn send_unicast(
        &mut self,
        from: NodeId,
        to: NodeId,
        msg: Message,
        require_channel: bool,
    ) -> bool {
        self.count_tx(&msg);
        self.trace.push(Record::Send {
            t: self.queue.now(),
            from,
            target: SendTarget::Unicast(to),
            msg: msg.summary(),
        });
        let key = message_key(&msg);
        let a = self.world.node(from);
        let b = self.world.node(to);
        if !in_range(a, b) {
            self.drop_msg(from, DropReason::OutOfRange, key);
            return false;
        }
        if require_channel && common_channels(a, b).is_empty() {
            self.drop_msg(from, DropReason::NoChannel, key);
            return false;
        }
        let at = self.queue.now().after(self.world.config.link_delay);
        self.queue.schedule(at, EventKind::Deliver { from, to, msg });
        true
    }

    /// One broadcast transmission heard by every receiver after a shared
    /// contention hold-off. Counts once regardless of fan-out. The
    /// hold-off bound scales with the receiver count, so flooding a
    /// dense neighbourhood is slower per hop than forwarding over a
    /// sparse overlay.
    pub(crate) fn send_broadcast(&mut self, from: NodeId, receivers: Vec<NodeId>, msg: Message) {
        self.count_tx(&msg);
        let cap = self.world.config.broadcast_jitter * receivers.len() as f64;
        let jitter = if cap > 0.0 {
            self.bcast_rng.random_range(0.0..=cap)
        } else {
            0.0
        };
        self.trace.push(Record::Send {
            t: self.queue.now(),
            from,
            target: SendTarget::Broadcast(receivers.clone()),
            msg: msg.summary(),
        });
        let at = self
            .queue
            .now()
            .after(jitter + self.world.config.link_delay);
        for to in receivers {
            self.queue.schedule(
                at,
                EventKind::Deliver {
                    from,
                    to,
                    msg: msg.clone(),
                },
            );
        }
    }

    // ---- shared discovery bookkeeping ----

    pub(crate) fn open_pending(&mut self, src: NodeId, dst: NodeId) -> RequestKey {
        let now = self.queue.now();
        let cfg = &self.world.config;
        let deadline = now.after(cfg.tr + 2.0 * cfg.link_delay * cfg.hmax as f64);
        let state = self.sources.entry(src).or_default();
        let key = RequestKey {
            src,
            dst,
            request_id: state.next_request_id,
        };
        state.next_request_id += 1;
        state.pending.insert(
            key,
            PendingDiscovery {
                started: now,
                deadline,
                done: false,
            },
        );
        if self.measured.is_none() {
            self.measured = Some(key);
        }
        self.queue.schedule(
            deadline,
            EventKind::Timer {
                node: src,
                tag: TimerTag::Deadline(key),
            },
        );
        key
    }

    fn finalize_deadline(&mut self, node: NodeId, key: RequestKey) {
        let Some(state) = self.sources.get_mut(&node) else {
            return;
        };
        let Some(pending) = state.pending.get_mut(&key) else {
            return;
        };
        if !pending.done {
            pending.done = true;
            self.drop_msg(node, DropReason::Timeout, Some(key));
        }
    }

    /// Records a route at the source and closes the pending discovery.
    pub(crate) fn install_route(
        &mut self,
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
    ) {
        let now = self.queue.now();
        let state = self.sources.entry(key.src).or_default();
        let on_time = match state.pending.get_mut(&key) {
            Some(p) if !p.done => {
                p.done = true;
                now <= p.deadline
            }
            _ => false,
        };
        if !on_time {
            self.drop_msg(key.src, DropReason::LateReply, Some(key));
            return;
        }
        let started = state.pending[&key].started;
        state.routes.insert(
            key.dst,
            InstalledRoute {
                key,
                head_path: head_path.clone(),
                node_route: node_route.clone(),
                installed_at: now,
            },
        );
        if self.measured == Some(key) {
            self.metrics.success = true;
            self.metrics.routing_delay = Some(now.0 - started.0);
        }
        self.trace.push(Record::Install {
            t: now,
            src: key.src,
            key,
            head_path,
            node_route,
        });
    }

    // ---- environment dynamics ----

    fn apply_move(&mut self, node: NodeId, to: Position) {
        self.world.node_mut(node).pos = to;
        self.world.refresh_su_channels();
        if self.protocol == ProtocolKind::Crp {
            self.crp_after_move(node);
        }
        if self.world.config.mobility && self.world.node(node).is_secondary() {
            self.schedule_waypoint_step(node);
        }
    }

    /// Random waypoint at unit-time step granularity: walk toward the
    /// current target at `move_speed`, drawing a new target on arrival.
    fn schedule_waypoint_step(&mut self, node: NodeId) {
        let now = self.queue.now();
        let next_at = now.after(1.0);
        if next_at > self.horizon {
            return;
        }
        let cfg_side = self.world.config.area_side;
        let speed = self.world.config.move_speed;
        let pos = self.world.node(node).pos;
        let target = match self.waypoints.get(&node) {
            Some(&t) if pos.distance(&t) > 1e-9 => t,
            _ => {
                let t = Position::new(
                    self.mobility_rng.random_range(0.0..=cfg_side),
                    self.mobility_rng.random_range(0.0..=cfg_side),
                );
                self.waypoints.insert(node, t);
                t
            }
        };
        let dist = pos.distance(&target);
        let step = speed * 1.0;
        let next = if dist <= step {
            target
        } else {
            Position::new(
                pos.x + (target.x - pos.x) / dist * step,
                pos.y + (target.y - pos.y) / dist * step,
            )
        };
        self.queue
            .schedule(next_at, EventKind::Move { node, to: next });
    }

    fn apply_pu_toggle(&mut self) {
        let rate = self.world.config.pu_activity_rate;
        let ids: Vec<NodeId> = self.world.primaries().map(|n| n.id).collect();
        for id in ids {
            let active = self.pu_rng.random_bool(rate);
            self.world.node_mut(id).pu_active = active;
        }
        self.world.refresh_su_channels();
        let next = self.queue.now().after(self.world.config.pu_epoch);
        if next <= self.horizon {
            self.queue.schedule(next, EventKind::PuToggle);
        }
    }

    // ---- cluster upkeep ----

    /// Refreshes every head's neighbor table from current geometry and
    /// evicts entries not heard for three hello periods.
    fn crp_hello_tick(&mut self) {
        let now = self.queue.now();
        let period = self.world.config.hello_period;
        let head_ids: Vec<NodeId> = self.heads.keys().copied().collect();
        for &h in &head_ids {
            for &g in &head_ids {
                if g == h {
                    continue;
                }
                if in_range(self.world.node(h), self.world.node(g)) {
                    let channels = common_channels(self.world.node(h), self.world.node(g));
                    self.heads.get_mut(&h).unwrap().neighbors.insert(
                        g,
                        NeighborEntry {
                            channels,
                            last_heard: now,
                        },
                    );
                }
            }
            self.heads
                .get_mut(&h)
                .unwrap()
                .neighbors
                .retain(|_, e| now.0 - e.last_heard.0 < 3.0 * period);
        }
        let next = now.after(period);
        if next <= self.horizon {
            self.queue.schedule(next, EventKind::HelloTick);
        }
    }

    /// Demotes a head and promotes the best remaining member; the new
    /// head starts with fresh tables.
    pub fn trigger_resign(&mut self, head: NodeId) -> clustering::Resignation {
        let cid = self
            .world
            .node(head)
            .cluster
            .expect("head belongs to a cluster");
        let cluster = self.clusters[&cid].clone();
        assert_eq!(cluster.head, head, "resignation from a non-head");
        let outcome = clustering::resign_head(&cluster, &self.world);
        if let clustering::Resignation::NewHead(new_head) = outcome {
            let members: Vec<NodeId> = cluster
                .members
                .iter()
                .filter(|&&m| m != head)
                .copied()
                .collect();
            self.trace.push(Record::Send {
                t: self.queue.now(),
                from: head,
                target: SendTarget::Broadcast(members),
                msg: MsgSummary::HeadCheck,
            });
            let base = self.world.config.radio_range;
            let boost = self.world.config.head_range_boost;
            {
                let old = self.world.node_mut(head);
                old.role = Role::Member;
                old.radio_range = base;
            }
            {
                let new = self.world.node_mut(new_head);
                new.role = Role::ClusterHead;
                new.radio_range = base * boost;
            }
            self.clusters.get_mut(&cid).unwrap().head = new_head;
            self.heads.remove(&head);
            self.heads.insert(new_head, HeadState::default());
        }
        outcome
    }
}

fn message_key(msg: &Message) -> Option<RequestKey> {
    match msg {
        Message::Rreq(r) => Some(r.key),
        Message::Rrep(r) => Some(r.key),
        Message::Rerr(e) => Some(e.affected),
        Message::RouteUpdate { key, .. } | Message::RouteFail { key, .. } => Some(*key),
        Message::CheckForNewClusterHead { .. } => None,
        Message::AodvRreq(r) => Some(r.key),
        Message::AodvRrep(r) => Some(r.key),
    }
}

fn describe_event(kind: &EventKind) -> (Option<NodeId>, String) {
    match kind {
        EventKind::Deliver { from, to, msg } => (
            Some(*to),
            format!(
                "deliver {} {} from {}",
                msg.summary().kind(),
                message_key(msg)
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| "-".into()),
                from
            ),
        ),
        EventKind::Timer { node, tag } => (
            Some(*node),
            match tag {
                TimerTag::TrExpiry(k) => format!("timer tr-expiry {}", k),
                TimerTag::Deadline(k) => format!("timer deadline {}", k),
            },
        ),
        EventKind::HelloTick => (None, "hello-tick".into()),
        EventKind::Move { node, to } => {
            (Some(*node), format!("move to ({},{})", to.x, to.y))
        }
        EventKind::PuToggle => (None, "pu-toggle".into()),
        EventKind::StartDiscovery { src, dst } => {
            (Some(*src), format!("start-discovery dst={}", dst))
        }
        EventKind::LinkFailure { reporter, failed } => {
            (Some(*reporter), format!("link-failure next-hop={}", failed))
        }
    }
}

/// True when the id sequence contains a repeated entry.
pub(crate) fn has_repeats(path: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    path.iter().any(|n| !seen.insert(*n))
}
