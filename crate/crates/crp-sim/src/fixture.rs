//! A hand-built four-cluster topology: the worked example of the guide
//! and a regression anchor for the full discovery walk.
//!
//! Eight secondary users labelled SU1 to SU8 form four clusters. SU1
//! (cluster 0, head SU2) discovers a route to SU8 (cluster 2, head
//! SU4). The head overlay is SU2-SU3, SU3-SU4, SU2-SU7, SU3-SU7, so
//! the request floods through four head transmissions, SU7 and SU3
//! each swallow one duplicate, and the reply walks SU4, SU3, SU2
//! picking SU5 as the relay inside cluster 1.

use std::str::FromStr;

use crate::error::ConfigError;
use crate::model::{ChannelId, ClusterId, NodeId, Position, World};

pub const FOUR_CLUSTER_JSON: &str = include_str!("../assets/four_cluster.json");

/// The pristine four-cluster world.
pub fn four_cluster() -> World {
    serde_json::from_str(FOUR_CLUSTER_JSON).expect("embedded fixture parses")
}

/// Source of the fixture's discovery episode (SU1).
pub const SRC: NodeId = NodeId(0);
/// Destination of the fixture's discovery episode (SU8).
pub const DST: NodeId = NodeId(7);

/// Scripted perturbations of the base topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// The unmodified topology: route SU1-SU5-SU8 over heads
    /// SU2-SU3-SU4.
    #[default]
    Standard,
    /// SU5 loses every channel it shares with the source, so the reply
    /// walk finds no usable relay in cluster 1 and the discovery fails.
    NoRelay,
    /// SU8 has wandered into cluster 1 next to SU3 and shares a channel
    /// with SU1, so the two-head route needs no relay at all.
    MovedDestination,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Standard, Variant::NoRelay, Variant::MovedDestination];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::NoRelay => "no-relay",
            Variant::MovedDestination => "moved-dst",
        }
    }
}

impl FromStr for Variant {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "standard" => Ok(Variant::Standard),
            "no-relay" => Ok(Variant::NoRelay),
            "moved-dst" => Ok(Variant::MovedDestination),
            other => Err(ConfigError::field(
                "variant",
                format!(
                    "unknown variant {:?}, expected standard, no-relay, or moved-dst",
                    other
                ),
            )),
        }
    }
}

/// The four-cluster world with `variant` applied.
pub fn four_cluster_variant(variant: Variant) -> World {
    let mut world = four_cluster();
    match variant {
        Variant::Standard => {}
        Variant::NoRelay => {
            // SU5 keeps cluster-1 compatibility but nothing the source
            // can hear.
            let su5 = world.node_mut(NodeId(4));
            su5.channels = [ChannelId(2), ChannelId(3)].into_iter().collect();
        }
        Variant::MovedDestination => {
            let su8 = world.node_mut(DST);
            su8.pos = Position::new(450.0, 420.0);
            su8.cluster = Some(ClusterId(1));
            su8.channels = [ChannelId(1), ChannelId(2)].into_iter().collect();
        }
    }
    world
}
