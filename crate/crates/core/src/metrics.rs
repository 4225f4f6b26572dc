//! Evaluation metrics: bandwidth-loss fractions under congestion, weighted
//! percentile loss across failure scenarios, the load-dependent delay sum,
//! router state estimates, and the aggregated result report.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::demand::DemandMatrix;
use crate::topology::Topology;

/// One scenario's outcome for loss accounting: the utilization it produced,
/// its probability weight, and the loss fraction of every positive-demand
/// flow.
#[derive(Debug, Clone, Serialize)]
pub struct LossRecord {
    pub mlu: f64,
    pub weight: f64,
    pub flows: Vec<((usize, usize), f64)>,
}

/// Loss fraction caused by utilization `mlu`: zero up to full utilization,
/// then the overflow share `1 - 1/mlu`.
pub fn loss_fraction(mlu: f64) -> f64 {
    if mlu <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / mlu
    }
}

/// Applies [`loss_fraction`] uniformly to every positive-demand flow:
/// congestion scales all flows through the bottleneck alike.
pub fn scenario_loss(mlu: f64, weight: f64, dm: &DemandMatrix) -> LossRecord {
    assert!(mlu >= 0.0, "utilization is nonnegative");
    let loss = loss_fraction(mlu);
    let mut flows = Vec::new();
    for s in 0..dm.n() {
        for d in 0..dm.n() {
            if s != d && dm.get(s, d) > 0.0 {
                flows.push(((s, d), loss));
            }
        }
    }
    LossRecord { mlu, weight, flows }
}

/// Slack when comparing accumulated weights against beta, absorbing f64
/// rounding in weight sums.
const WEIGHT_EPS: f64 = 1e-12;

/// Worst per-flow percentile loss: for each flow, sort its losses ascending
/// and take the smallest value whose cumulative scenario weight strictly
/// exceeds `beta`; return the maximum over flows.
///
/// A flow absent from a record (no demand there) loses nothing in that
/// scenario.
pub fn perc_loss(records: &[LossRecord], beta: f64) -> f64 {
    assert!(!records.is_empty(), "perc_loss needs at least one record");
    assert!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    let flows: BTreeSet<(usize, usize)> = records
        .iter()
        .flat_map(|r| r.flows.iter().map(|(f, _)| *f))
        .collect();
    let mut worst = 0.0_f64;
    for flow in flows {
        let mut losses: Vec<(f64, f64)> = records
            .iter()
            .map(|r| {
                let loss = r
                    .flows
                    .iter()
                    .find(|(f, _)| *f == flow)
                    .map(|(_, l)| *l)
                    .unwrap_or(0.0);
                (loss, r.weight)
            })
            .collect();
        losses.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut cum = 0.0;
        let mut flow_loss = losses.last().unwrap().0;
        for (loss, weight) in losses {
            cum += weight;
            if cum > beta + WEIGHT_EPS {
                flow_loss = loss;
                break;
            }
        }
        worst = worst.max(flow_loss);
    }
    worst
}

/// Sum of per-link delay terms, with loads clamped just below capacity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DelayReport {
    pub omega: f64,
    /// Some link hit the clamp (its true load reached 99.9% of capacity).
    pub saturated: bool,
}

/// Delay sum `omega = sum_e l / (C - l)` with each load clamped to
/// `0.999 * C` so saturated links contribute a large finite term instead of
/// a singularity.
pub fn avg_delay(loads: &[f64], t: &Topology) -> DelayReport {
    assert_eq!(loads.len(), t.num_edges(), "one load per link");
    let mut omega = 0.0;
    let mut saturated = false;
    for (e, &load) in loads.iter().enumerate() {
        let cap = t.edge(e).capacity;
        let clamp = 0.999 * cap;
        let l = if load >= clamp {
            saturated = true;
            clamp
        } else {
            load
        };
        omega += l / (cap - l);
    }
    DelayReport { omega, saturated }
}

/// Forwarding-state footprint of one router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StateEstimate {
    pub rule_entries: u64,
    pub rule_bytes: u64,
    pub path_table_entries: u64,
    pub path_table_bytes: u64,
}

/// State for a router in an `n`-node network with degree `d`, `m` paths per
/// destination, and `l` segments per path: `m * (n - 1)` forwarding rules
/// plus `m * d` backup entries, 8 bytes each; the path table keeps one entry
/// per rule at 16 bytes per segment.
pub fn router_state(n: u64, d: u64, m: u64, l: u64) -> StateEstimate {
    assert!(n >= 2 && d >= 1 && m >= 1 && l >= 1, "arguments must be positive");
    let rule_entries = m * (n - 1) + m * d;
    StateEstimate {
        rule_entries,
        rule_bytes: 8 * rule_entries,
        path_table_entries: rule_entries,
        path_table_bytes: rule_entries * l * 16,
    }
}

/// One evaluated (traffic matrix, scenario, strategy) cell of the final
/// report.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub topology: String,
    pub regime: String,
    pub tm_index: usize,
    pub scenario_id: usize,
    pub mlu: f64,
    pub normalized_mlu: f64,
    pub loss: f64,
    pub delay: f64,
}

/// Renders rows as CSV with a fixed header; f64 fields print in Rust's
/// shortest round-trip form, so equal inputs give byte-equal files.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out =
        String::from("topology,regime,tm_index,scenario_id,mlu,normalized_mlu,loss,delay\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.topology,
            r.regime,
            r.tm_index,
            r.scenario_id,
            r.mlu,
            r.normalized_mlu,
            r.loss,
            r.delay
        ));
    }
    out
}

/// Mean and upper-percentile digest of one metric.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricDigest {
    pub mean: f64,
    pub p99: f64,
}

fn digest(values: &mut Vec<f64>) -> MetricDigest {
    if values.is_empty() {
        return MetricDigest { mean: 0.0, p99: 0.0 };
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let rank = (0.99 * values.len() as f64).ceil() as usize;
    let p99 = values[rank.clamp(1, values.len()) - 1];
    MetricDigest { mean, p99 }
}

/// Digest of all rows sharing one regime label.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeSummary {
    pub regime: String,
    pub rows: usize,
    pub mlu: MetricDigest,
    pub normalized_mlu: MetricDigest,
    pub loss: MetricDigest,
    pub delay: MetricDigest,
}

/// Groups rows by regime (in first-appearance order) and digests each
/// metric.
pub fn summarize(rows: &[ResultRow]) -> Vec<RegimeSummary> {
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.regime) {
            order.push(r.regime.clone());
        }
    }
    order
        .into_iter()
        .map(|regime| {
            let picked: Vec<&ResultRow> = rows.iter().filter(|r| r.regime == regime).collect();
            let mut mlu: Vec<f64> = picked.iter().map(|r| r.mlu).collect();
            let mut norm: Vec<f64> = picked.iter().map(|r| r.normalized_mlu).collect();
            let mut loss: Vec<f64> = picked.iter().map(|r| r.loss).collect();
            let mut delay: Vec<f64> = picked.iter().map(|r| r.delay).collect();
            RegimeSummary {
                regime,
                rows: picked.len(),
                mlu: digest(&mut mlu),
                normalized_mlu: digest(&mut norm),
                loss: digest(&mut loss),
                delay: digest(&mut delay),
            }
        })
        .collect()
}
