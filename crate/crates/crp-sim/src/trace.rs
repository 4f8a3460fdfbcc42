//! Structured run trace: every processed event, transmission attempt,
//! drop, route selection, and route installation. Tests assert protocol
//! invariants over these records; the CLI can render them as one
//! tab-separated line each for golden-file comparison.

use crate::engine::SimTime;
use crate::model::NodeId;
use crate::protocol::{DropReason, RequestKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendTarget {
    Unicast(NodeId),
    /// One transmission heard by every listed receiver.
    Broadcast(Vec<NodeId>),
}

/// Compact view of a transmitted message, enough to check path
/// invariants without replaying the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MsgSummary {
    Rreq {
        key: RequestKey,
        /// Head path for the cluster protocol, node path for the
        /// baseline. Empty on the member-to-head initial send.
        path: Vec<NodeId>,
    },
    Rrep {
        key: RequestKey,
        /// Reversed path the reply walks, destination side first.
        rev_path: Vec<NodeId>,
        relays: Vec<NodeId>,
    },
    Rerr {
        key: RequestKey,
        detail: String,
    },
    RouteUpdate {
        key: RequestKey,
        route: Vec<NodeId>,
    },
    RouteFail {
        key: RequestKey,
    },
    HeadCheck,
}

impl MsgSummary {
    pub fn kind(&self) -> &'static str {
        match self {
            MsgSummary::Rreq { .. } => "rreq",
            MsgSummary::Rrep { .. } => "rrep",
            MsgSummary::Rerr { .. } => "rerr",
            MsgSummary::RouteUpdate { .. } => "route-update",
            MsgSummary::RouteFail { .. } => "route-fail",
            MsgSummary::HeadCheck => "head-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    /// One per processed event, in pop order.
    Event {
        t: SimTime,
        seq: u64,
        node: Option<NodeId>,
        desc: String,
    },
    /// One per transmission attempt (a broadcast is a single record).
    Send {
        t: SimTime,
        from: NodeId,
        target: SendTarget,
        msg: MsgSummary,
    },
    Drop {
        t: SimTime,
        node: NodeId,
        reason: DropReason,
        key: Option<RequestKey>,
    },
    /// Destination-side route selection at collection-window close.
    Select {
        t: SimTime,
        node: NodeId,
        key: RequestKey,
        path: Vec<NodeId>,
        candidates: usize,
    },
    /// Route accepted at the source.
    Install {
        t: SimTime,
        src: NodeId,
        key: RequestKey,
        head_path: Vec<NodeId>,
        node_route: Vec<NodeId>,
    },
}

fn fmt_ids(ids: &[NodeId]) -> String {
    let parts: Vec<String> = ids.iter().map(|n| n.to_string()).collect();
    format!("[{}]", parts.join(";"))
}

impl Record {
    pub fn to_line(&self) -> String {
        match self {
            Record::Event { t, seq, node, desc } => {
                let n = node.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
                format!("{}\t{}\tevent\t{}\t{}", t, seq, n, desc)
            }
            Record::Send { t, from, target, msg } => {
                let to = match target {
                    SendTarget::Unicast(n) => n.to_string(),
                    SendTarget::Broadcast(rs) => format!("bcast{}", fmt_ids(rs)),
                };
                let detail = match msg {
                    MsgSummary::Rreq { key, path } => format!("{} path={}", key, fmt_ids(path)),
                    MsgSummary::Rrep {
                        key,
                        rev_path,
                        relays,
                    } => format!("{} rev={} relays={}", key, fmt_ids(rev_path), fmt_ids(relays)),
                    MsgSummary::Rerr { key, detail } => format!("{} {}", key, detail),
                    MsgSummary::RouteUpdate { key, route } => {
                        format!("{} route={}", key, fmt_ids(route))
                    }
                    MsgSummary::RouteFail { key } => key.to_string(),
                    MsgSummary::HeadCheck => String::new(),
                };
                format!("{}\t-\tsend\t{}\t{} to={} {}", t, from, msg.kind(), to, detail)
            }
            Record::Drop { t, node, reason, key } => {
                let k = key.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
                format!("{}\t-\tdrop\t{}\t{} {}", t, node, reason, k)
            }
            Record::Select {
                t,
                node,
                key,
                path,
                candidates,
            } => format!(
                "{}\t-\tselect\t{}\t{} path={} candidates={}",
                t,
                node,
                key,
                fmt_ids(path),
                candidates
            ),
            Record::Install {
                t,
                src,
                key,
                head_path,
                node_route,
            } => format!(
                "{}\t-\tinstall\t{}\t{} heads={} route={}",
                t,
                src,
                key,
                fmt_ids(head_path),
                fmt_ids(node_route)
            ),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Trace {
    pub records: Vec<Record>,
}

impl Trace {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }

    /// All transmission records, in send order.
    pub fn sends(&self) -> impl Iterator<Item = (&SimTime, &NodeId, &SendTarget, &MsgSummary)> {
        self.records.iter().filter_map(|r| match r {
            Record::Send { t, from, target, msg } => Some((t, from, target, msg)),
            _ => None,
        })
    }

    pub fn installs(&self) -> impl Iterator<Item = &Record> {
        self.records
            .iter()
            .filter(|r| matches!(r, Record::Install { .. }))
    }
}
