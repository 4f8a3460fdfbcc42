//! Cluster formation for the secondary users: seeded K-means over
//! positions, energy-based head election, and the delay-ranked
//! K-nearest-neighbour join rule used by nodes that arrive later or end
//! up out of their head's reach.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::ConfigError;
use crate::model::{in_range, ClusterId, NodeId, Position, Role, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: ClusterId,
    pub head: NodeId,
    /// Includes the head.
    pub members: BTreeSet<NodeId>,
}

/// One triggered-hello response observed by a joining node. Delay ranks
/// stand in for indirect distance.
#[derive(Debug, Clone, PartialEq)]
pub struct HelloSample {
    pub responder: NodeId,
    pub responder_cluster: ClusterId,
    pub delay: f64,
}

/// Lloyd's algorithm over node positions with seeded centroid init
/// (k nodes sampled without replacement). Runs until assignments
/// stabilize or 100 iterations. Empty clusters are repaired by stealing
/// the farthest point of the largest cluster. Returns k member lists,
/// some possibly in any order of size; every input node appears exactly
/// once.
pub fn kmeans_partition(
    points: &[(NodeId, Position)],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<NodeId>>, ConfigError> {
    if k == 0 {
        return Err(ConfigError::field("kmeans_k", "must be at least 1"));
    }
    if k > points.len() {
        return Err(ConfigError::field(
            "kmeans_k",
            format!("k={} exceeds population {}", k, points.len()),
        ));
    }
    let mut centroids: Vec<Position> = sample(rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].1)
        .collect();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..100 {
        let next: Vec<usize> = points
            .iter()
            .map(|(_, p)| nearest_centroid(p, &centroids))
            .collect();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in next.iter().enumerate() {
            buckets[c].push(i);
        }
        repair_empty_clusters(points, &mut buckets, &centroids);
        let mut repaired = vec![usize::MAX; points.len()];
        for (c, bucket) in buckets.iter().enumerate() {
            for &i in bucket {
                repaired[i] = c;
            }
        }
        let stable = repaired == assignment;
        assignment = repaired;
        for (c, bucket) in buckets.iter().enumerate() {
            if !bucket.is_empty() {
                centroids[c] = mean_position(points, bucket);
            }
        }
        let wcss = wcss_value(points, &assignment, &centroids);
        debug_assert!(
            wcss <= prev_wcss + 1e-9,
            "within-cluster sum of squares rose: {} -> {}",
            prev_wcss,
            wcss
        );
        prev_wcss = wcss;
        if stable {
            break;
        }
    }
    let mut out = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        out[c].push(points[i].0);
    }
    Ok(out)
}

fn nearest_centroid(p: &Position, centroids: &[Position]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = p.distance(c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn repair_empty_clusters(
    points: &[(NodeId, Position)],
    buckets: &mut [Vec<usize>],
    centroids: &[Position],
) {
    for empty in 0..buckets.len() {
        if !buckets[empty].is_empty() {
            continue;
        }
        let donor = buckets
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| a.len().cmp(&b.len()).then(bi.cmp(ai)))
            .map(|(i, _)| i)
            .expect("at least one cluster");
        if buckets[donor].len() <= 1 {
            continue;
        }
        let donor_centroid = centroids[donor];
        let (pos_in_bucket, _) = buckets[donor]
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                points[a]
                    .1
                    .distance(&donor_centroid)
                    .total_cmp(&points[b].1.distance(&donor_centroid))
                    .then(points[b].0.cmp(&points[a].0))
            })
            .expect("donor non-empty");
        let stolen = buckets[donor].remove(pos_in_bucket);
        buckets[empty].push(stolen);
    }
}

fn mean_position(points: &[(NodeId, Position)], bucket: &[usize]) -> Position {
    let n = bucket.len() as f64;
    let (sx, sy) = bucket.iter().fold((0.0, 0.0), |(sx, sy), &i| {
        (sx + points[i].1.x, sy + points[i].1.y)
    });
    Position::new(sx / n, sy / n)
}

fn wcss_value(points: &[(NodeId, Position)], assignment: &[usize], centroids: &[Position]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|((_, p), &c)| {
            let d = p.distance(&centroids[c]);
            d * d
        })
        .sum()
}

/// Head election: maximum energy, ties broken by lowest id. Panics on an
/// empty member set (a structural impossibility once clusters exist).
pub fn elect_cluster_head(members: &BTreeSet<NodeId>, world: &World) -> NodeId {
    assert!(!members.is_empty(), "election over an empty cluster");
    let mut best = *members.iter().next().unwrap();
    for &m in members.iter().skip(1) {
        if world.node(m).energy > world.node(best).energy {
            best = m;
        }
    }
    best
}

/// Delay-ranked join: take the k smallest-delay samples (all of them if
/// fewer), join the majority cluster among them; a majority tie resolves
/// to the cluster of the single minimum-delay sample. Returns None when
/// there are no samples (isolated node keeps retrying on the hello
/// cadence).
pub fn knn_join(samples: &[HelloSample], k: usize) -> Option<ClusterId> {
    if samples.is_empty() {
        return None;
    }
    let mut ranked: Vec<&HelloSample> = samples.iter().collect();
    ranked.sort_by(|a, b| a.delay.total_cmp(&b.delay).then(a.responder.cmp(&b.responder)));
    ranked.truncate(k.max(1));
    let mut votes: BTreeMap<ClusterId, usize> = BTreeMap::new();
    for s in &ranked {
        *votes.entry(s.responder_cluster).or_insert(0) += 1;
    }
    let top = *votes.values().max().unwrap();
    let winners: Vec<ClusterId> = votes
        .iter()
        .filter(|(_, &v)| v == top)
        .map(|(&c, _)| c)
        .collect();
    if winners.len() == 1 {
        Some(winners[0])
    } else {
        Some(ranked[0].responder_cluster)
    }
}

/// Outcome of a resignation attempt. A singleton cluster has no
/// successor, so the head stays in office.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resignation {
    NewHead(NodeId),
    Refused,
}

/// Demotes `head` and elects the best remaining member. The caller owns
/// table reinitialization and the member-facing announcement.
pub fn resign_head(cluster: &Cluster, world: &World) -> Resignation {
    let mut rest = cluster.members.clone();
    rest.remove(&cluster.head);
    if rest.is_empty() {
        return Resignation::Refused;
    }
    Resignation::NewHead(elect_cluster_head(&rest, world))
}

/// Builds the triggered-hello sample list a joining node would observe:
/// every in-range clustered secondary user responds, provided its own
/// head is also within the joiner's reach (a cluster whose head cannot
/// be heard is not a usable home). `delay_of` supplies the per-response
/// delay draw.
pub fn gather_hello_samples(
    world: &World,
    joiner: NodeId,
    clusters: &BTreeMap<ClusterId, Cluster>,
    mut delay_of: impl FnMut(NodeId) -> f64,
) -> Vec<HelloSample> {
    let u = world.node(joiner);
    let mut samples = Vec::new();
    for v in world.secondaries() {
        if v.id == joiner || v.role == Role::Undecided {
            continue;
        }
        let Some(cid) = v.cluster else { continue };
        if !in_range(u, v) {
            continue;
        }
        let head = clusters[&cid].head;
        if !in_range(u, world.node(head)) {
            continue;
        }
        samples.push(HelloSample {
            responder: v.id,
            responder_cluster: cid,
            delay: delay_of(v.id),
        });
    }
    samples
}

/// Structured text dump of the cluster assignment, one line per cluster,
/// head flagged with `*`.
pub fn dump_clusters(clusters: &BTreeMap<ClusterId, Cluster>) -> String {
    let mut out = String::new();
    for c in clusters.values() {
        let members: Vec<String> = c
            .members
            .iter()
            .map(|m| {
                if *m == c.head {
                    format!("{}*", m)
                } else {
                    m.to_string()
                }
            })
            .collect();
        out.push_str(&format!("{}: {}\n", c.id, members.join(",")));
    }
    out
}
