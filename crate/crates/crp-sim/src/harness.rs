//! Sweep harness: one discovery episode per (population, protocol,
//! seed) cell, seed-averaged aggregation, and the comparison report
//! the experiment write-up is built from.
//!
//! Both protocols run over the identical world and the identical
//! source/destination pair at equal seeds, so every per-cell difference
//! is attributable to the protocol alone.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{generate_scenario, stream_rng, streams, NodeId, SimConfig, World};
use crate::protocol::{ProtocolKind, RunMetrics, Sim};
use rand::Rng;

/// Populations below this carry no overhead expectation: a handful of
/// clusters over a handful of nodes behaves like plain flooding, and
/// the request-count comparison only becomes meaningful once the
/// population supports a real overlay.
pub const OVERHEAD_TREND_MIN_POPULATION: usize = 40;

/// Scales `base` to a total population of `n_cr` users: a fixed
/// fraction (rounded) become primaries, the rest secondaries.
pub fn population_config(base: &SimConfig, n_cr: usize, seed: u64) -> SimConfig {
    let n_primary = (n_cr as f64 * base.pu_fraction).round() as usize;
    SimConfig {
        n_primary,
        n_secondary: n_cr - n_primary,
        seed,
        ..base.clone()
    }
}

/// Draws a distinct source/destination pair of secondary users from the
/// traffic stream of `seed`. `None` when fewer than two exist.
pub fn draw_traffic_pair(world: &World, seed: u64) -> Option<(NodeId, NodeId)> {
    let sus: Vec<NodeId> = world.secondaries().map(|n| n.id).collect();
    if sus.len() < 2 {
        return None;
    }
    let mut rng = stream_rng(seed, streams::TRAFFIC);
    let i = rng.random_range(0..sus.len());
    let j = loop {
        let j = rng.random_range(0..sus.len());
        if j != i {
            break j;
        }
    };
    Some((sus[i], sus[j]))
}

/// One finished episode, with the full simulator state kept for trace
/// inspection.
pub struct SingleRun {
    pub sim: Sim,
    pub src: NodeId,
    pub dst: NodeId,
}

/// Builds a fresh world for `(config, seed)`, draws the traffic pair,
/// and runs one discovery episode to the deadline horizon.
pub fn run_single(
    base: &SimConfig,
    protocol: ProtocolKind,
    seed: u64,
) -> Result<SingleRun, ConfigError> {
    let cfg = SimConfig {
        seed,
        ..base.clone()
    };
    let world = generate_scenario(&cfg)?;
    let (src, dst) = draw_traffic_pair(&world, seed).ok_or_else(|| {
        ConfigError::field("n_secondary", "need at least two secondary users")
    })?;
    let mut sim = Sim::new(world, protocol)?;
    sim.start_discovery(src, dst, crate::engine::SimTime::ZERO);
    sim.run();
    Ok(SingleRun { sim, src, dst })
}

/// One row of the per-run results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_cr: usize,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Seed-averaged aggregate of one (population, protocol) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_cr: usize,
    pub protocol: ProtocolKind,
    pub mean_rreq: f64,
    pub mean_rrep: f64,
    /// Averaged over successful runs only; absent when none succeeded.
    pub mean_delay: Option<f64>,
    pub success_rate: f64,
    pub n_seeds: usize,
}

pub struct SweepResult {
    pub runs: Vec<RunRecord>,
    pub points: Vec<SweepPoint>,
}

/// Runs the full grid. Cells execute in (n_cr, protocol, seed) order
/// and the aggregation is a deterministic fold in the same order, so
/// the output is a pure function of the inputs.
pub fn run_sweep(
    base: &SimConfig,
    n_crs: &[usize],
    seeds: &[u64],
    protocols: &[ProtocolKind],
) -> Result<SweepResult, ConfigError> {
    if seeds.is_empty() {
        return Err(ConfigError::field("seeds", "need at least one seed"));
    }
    if n_crs.is_empty() {
        return Err(ConfigError::field("ncr", "need at least one population size"));
    }
    let mut runs = Vec::with_capacity(n_crs.len() * protocols.len() * seeds.len());
    for &n_cr in n_crs {
        for &protocol in protocols {
            for &seed in seeds {
                let cfg = population_config(base, n_cr, seed);
                cfg.validate()?;
                let run = run_single(&cfg, protocol, seed)?;
                runs.push(RunRecord {
                    n_cr,
                    protocol,
                    seed,
                    metrics: run.sim.metrics,
                });
            }
        }
    }
    let points = aggregate(&runs);
    Ok(SweepResult { runs, points })
}

/// Exact-arithmetic aggregation of per-run rows into sweep points, in
/// first-appearance order of (n_cr, protocol). Re-running it over a
/// dumped per-run table reproduces the published aggregates.
pub fn aggregate(runs: &[RunRecord]) -> Vec<SweepPoint> {
    let mut order: Vec<(usize, ProtocolKind)> = Vec::new();
    for r in runs {
        if !order.contains(&(r.n_cr, r.protocol)) {
            order.push((r.n_cr, r.protocol));
        }
    }
    order
        .into_iter()
        .map(|(n_cr, protocol)| {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.n_cr == n_cr && r.protocol == protocol)
                .collect();
            let n = cell.len();
            let mean_rreq =
                cell.iter().map(|r| r.metrics.rreq_count as f64).sum::<f64>() / n as f64;
            let mean_rrep =
                cell.iter().map(|r| r.metrics.rrep_count as f64).sum::<f64>() / n as f64;
            let delays: Vec<f64> = cell.iter().filter_map(|r| r.metrics.routing_delay).collect();
            let mean_delay = if delays.is_empty() {
                None
            } else {
                Some(delays.iter().sum::<f64>() / delays.len() as f64)
            };
            let successes = cell.iter().filter(|r| r.metrics.success).count();
            SweepPoint {
                n_cr,
                protocol,
                mean_rreq,
                mean_rrep,
                mean_delay,
                success_rate: successes as f64 / n as f64,
                n_seeds: n,
            }
        })
        .collect()
}

// ---- table rendering ----

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|d| d.to_string()).unwrap_or_default()
}

/// Per-run table: `n_cr,protocol,seed,rreq,rrep,delay,success`.
pub fn per_run_csv(runs: &[RunRecord]) -> String {
    let mut out = String::from("n_cr,protocol,seed,rreq,rrep,delay,success\n");
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n_cr,
            r.protocol,
            r.seed,
            r.metrics.rreq_count,
            r.metrics.rrep_count,
            fmt_opt(r.metrics.routing_delay),
            r.metrics.success
        )
        .unwrap();
    }
    out
}

/// Aggregated table: `n_cr,protocol,mean_rreq,mean_rrep,mean_delay,success_rate`.
pub fn aggregated_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("n_cr,protocol,mean_rreq,mean_rrep,mean_delay,success_rate\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.n_cr,
            p.protocol,
            p.mean_rreq,
            p.mean_rrep,
            fmt_opt(p.mean_delay),
            p.success_rate
        )
        .unwrap();
    }
    out
}

/// The four reported series, one value column per protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Rreq,
    Rrep,
    Delay,
    Success,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rreq, Metric::Rrep, Metric::Delay, Metric::Success];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rreq => "rreq",
            Metric::Rrep => "rrep",
            Metric::Delay => "delay",
            Metric::Success => "success",
        }
    }

    pub fn of(self, p: &SweepPoint) -> Option<f64> {
        match self {
            Metric::Rreq => Some(p.mean_rreq),
            Metric::Rrep => Some(p.mean_rrep),
            Metric::Delay => p.mean_delay,
            Metric::Success => Some(p.success_rate),
        }
    }
}

fn point_of(points: &[SweepPoint], n_cr: usize, protocol: ProtocolKind) -> Option<&SweepPoint> {
    points
        .iter()
        .find(|p| p.n_cr == n_cr && p.protocol == protocol)
}

/// One plottable series file: `n_cr,crp,aodv`.
pub fn figure_series_csv(points: &[SweepPoint], metric: Metric) -> String {
    let mut grid: Vec<usize> = points.iter().map(|p| p.n_cr).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut out = String::from("n_cr,crp,aodv\n");
    for n_cr in grid {
        let get = |proto| {
            point_of(points, n_cr, proto)
                .and_then(|p| metric.of(p))
                .map(|v| v.to_string())
                .unwrap_or_default()
        };
        writeln!(
            out,
            "{},{},{}",
            n_cr,
            get(ProtocolKind::Crp),
            get(ProtocolKind::Aodv)
        )
        .unwrap();
    }
    out
}

// ---- comparison report ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendStatus {
    Pass,
    Fail,
    /// Not enough grid to evaluate (single point, missing protocol,
    /// or a cell with no successful runs where a delay is needed).
    Insufficient,
}

impl std::fmt::Display for TrendStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrendStatus::Pass => "pass",
            TrendStatus::Fail => "FAIL",
            TrendStatus::Insufficient => "insufficient points",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trend {
    pub name: &'static str,
    pub status: TrendStatus,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct TrendReport {
    /// Populations both protocols were evaluated on, ascending.
    pub grid: Vec<usize>,
    pub trends: Vec<Trend>,
}

impl TrendReport {
    pub fn all_pass(&self) -> bool {
        self.trends.iter().all(|t| t.status == TrendStatus::Pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.trends {
            writeln!(out, "{:<18} {:<20} {}", t.name, t.status.to_string(), t.detail).unwrap();
        }
        out
    }
}

struct Cells<'a> {
    grid: Vec<usize>,
    points: &'a [SweepPoint],
}

impl Cells<'_> {
    fn crp(&self, n: usize) -> &SweepPoint {
        point_of(self.points, n, ProtocolKind::Crp).expect("grid checked")
    }
    fn aodv(&self, n: usize) -> &SweepPoint {
        point_of(self.points, n, ProtocolKind::Aodv).expect("grid checked")
    }
}

fn fmt_series(cells: &Cells, f: impl Fn(&SweepPoint) -> String) -> String {
    cells
        .grid
        .iter()
        .map(|&n| format!("{}:{}/{}", n, f(cells.crp(n)), f(cells.aodv(n))))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Evaluates the four comparative trends over a sweep. Populations
/// present for only one protocol make the grids mismatched: that is
/// reported and no verdict is produced.
pub fn compare(points: &[SweepPoint], link_delay: f64) -> TrendReport {
    let mut grid: Vec<usize> = points.iter().map(|p| p.n_cr).collect();
    grid.sort_unstable();
    grid.dedup();
    let mismatched: Vec<usize> = grid
        .iter()
        .copied()
        .filter(|&n| {
            point_of(points, n, ProtocolKind::Crp).is_none()
                || point_of(points, n, ProtocolKind::Aodv).is_none()
        })
        .collect();
    if !mismatched.is_empty() {
        let detail = format!(
            "populations {:?} were not run for both protocols",
            mismatched
        );
        return TrendReport {
            grid,
            trends: ["request-overhead", "reply-overhead", "routing-delay", "success-rate"]
                .iter()
                .map(|name| Trend {
                    name,
                    status: TrendStatus::Insufficient,
                    detail: detail.clone(),
                })
                .collect(),
        };
    }
    let cells = Cells {
        grid: grid.clone(),
        points,
    };
    let trends = vec![
        request_overhead_trend(&cells),
        reply_overhead_trend(&cells),
        routing_delay_trend(&cells, link_delay),
        success_rate_trend(&cells),
    ];
    TrendReport { grid, trends }
}

/// Fewer requests than the baseline at every meaningful population,
/// with the gap widening as the network grows.
fn request_overhead_trend(cells: &Cells) -> Trend {
    let name = "request-overhead";
    let detail = fmt_series(cells, |p| format!("{:.1}", p.mean_rreq));
    let eval: Vec<usize> = cells
        .grid
        .iter()
        .copied()
        .filter(|&n| n >= OVERHEAD_TREND_MIN_POPULATION)
        .collect();
    if eval.len() < 2 {
        return Trend {
            name,
            status: TrendStatus::Insufficient,
            detail: format!(
                "need at least two populations of {} or more users; {}",
                OVERHEAD_TREND_MIN_POPULATION, detail
            ),
        };
    }
    let lower_everywhere = eval
        .iter()
        .all(|&n| cells.crp(n).mean_rreq < cells.aodv(n).mean_rreq);
    let gap = |n: usize| cells.aodv(n).mean_rreq - cells.crp(n).mean_rreq;
    let first = *eval.first().unwrap();
    let last = *eval.last().unwrap();
    let growing = gap(last) > gap(first);
    Trend {
        name,
        status: if lower_everywhere && growing {
            TrendStatus::Pass
        } else {
            TrendStatus::Fail
        },
        detail: format!(
            "{}; gap {:.1} at {} vs {:.1} at {}",
            detail,
            gap(first),
            first,
            gap(last),
            last
        ),
    }
}

/// Never more replies than the baseline, strictly fewer at the top of
/// the grid.
fn reply_overhead_trend(cells: &Cells) -> Trend {
    let name = "reply-overhead";
    let detail = fmt_series(cells, |p| format!("{:.1}", p.mean_rrep));
    let le_everywhere = cells
        .grid
        .iter()
        .all(|&n| cells.crp(n).mean_rrep <= cells.aodv(n).mean_rrep);
    let last = *cells.grid.last().unwrap();
    let strict_at_top = cells.crp(last).mean_rrep < cells.aodv(last).mean_rrep;
    Trend {
        name,
        status: if le_everywhere && strict_at_top {
            TrendStatus::Pass
        } else {
            TrendStatus::Fail
        },
        detail,
    }
}

/// Faster route establishment at every population; neither series may
/// fall by more than one link delay per grid step (flat or growing
/// series within transmission noise).
fn routing_delay_trend(cells: &Cells, link_delay: f64) -> Trend {
    let name = "routing-delay";
    let detail = fmt_series(cells, |p| {
        p.mean_delay.map(|d| format!("{:.1}", d)).unwrap_or_else(|| "-".into())
    });
    let missing = cells.grid.iter().any(|&n| {
        cells.crp(n).mean_delay.is_none() || cells.aodv(n).mean_delay.is_none()
    });
    if missing {
        return Trend {
            name,
            status: TrendStatus::Insufficient,
            detail: format!("a cell has no successful run to take a delay from; {}", detail),
        };
    }
    let faster_everywhere = cells
        .grid
        .iter()
        .all(|&n| cells.crp(n).mean_delay.unwrap() < cells.aodv(n).mean_delay.unwrap());
    let steady = |series: Vec<f64>| {
        series
            .windows(2)
            .all(|w| w[1] >= w[0] - link_delay)
    };
    let crp_steady = steady(cells.grid.iter().map(|&n| cells.crp(n).mean_delay.unwrap()).collect());
    let aodv_steady =
        steady(cells.grid.iter().map(|&n| cells.aodv(n).mean_delay.unwrap()).collect());
    Trend {
        name,
        status: if faster_everywhere && crp_steady && aodv_steady {
            TrendStatus::Pass
        } else {
            TrendStatus::Fail
        },
        detail,
    }
}

/// At least the baseline's success everywhere, a gap that does not
/// shrink across the meaningful range, and near-total success at the
/// top of the grid.
fn success_rate_trend(cells: &Cells) -> Trend {
    let name = "success-rate";
    let detail = fmt_series(cells, |p| format!("{:.2}", p.success_rate));
    let ge_everywhere = cells
        .grid
        .iter()
        .all(|&n| cells.crp(n).success_rate >= cells.aodv(n).success_rate);
    let gap = |n: usize| cells.crp(n).success_rate - cells.aodv(n).success_rate;
    let eval: Vec<usize> = cells
        .grid
        .iter()
        .copied()
        .filter(|&n| n >= OVERHEAD_TREND_MIN_POPULATION)
        .collect();
    let (growing, gap_note) = match (eval.first(), eval.last()) {
        (Some(&first), Some(&last)) if first != last => (
            gap(last) >= gap(first),
            format!("; gap {:.2} at {} vs {:.2} at {}", gap(first), first, gap(last), last),
        ),
        _ => (true, String::new()),
    };
    let last = *cells.grid.last().unwrap();
    let near_total = cells.crp(last).success_rate >= 0.9;
    Trend {
        name,
        status: if ge_everywhere && growing && near_total {
            TrendStatus::Pass
        } else {
            TrendStatus::Fail
        },
        detail: format!("{}{}", detail, gap_note),
    }
}
