//! Aggregation of a finished run and its CSV/JSON renderings.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{MetricsRecord, TxStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Successful transactions per second.
    pub throughput: f64,
    /// Latencies in seconds, over confirmed transactions.
    pub latency_mean: f64,
    pub latency_p50: f64,
    pub latency_p95: f64,
    pub latency_p99: f64,
    pub submitted: u64,
    pub confirmed: u64,
    pub succeeded: u64,
    pub failed: u64,
    pub rejected: u64,
    pub unconfirmed: u64,
    pub reverted: u64,
    pub fork_ratio: f64,
    pub blocks_total: u64,
    pub blocks_main: u64,
    pub fork_delta: u64,
    /// Confirmed blocks per second over the run.
    pub blocks_per_second: f64,
    pub max_queue: u64,
    pub duration_s: f64,
    pub aborted: Option<String>,
}

/// Nearest-rank percentile of an ascending slice; `q` in (0, 1].
pub fn percentile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn secs(ticks: u64) -> f64 {
    ticks as f64 / 1000.0
}

pub fn compute_metrics(rec: &MetricsRecord) -> Summary {
    let duration = rec.end_tick - rec.start_tick;
    let mut latencies: Vec<u64> = Vec::new();
    let (mut ok, mut failed, mut rejected, mut unconfirmed) = (0u64, 0u64, 0u64, 0u64);
    for t in &rec.txs {
        match t.status {
            TxStatus::Ok => ok += 1,
            TxStatus::Failed => failed += 1,
            TxStatus::Rejected => rejected += 1,
            TxStatus::Unconfirmed | TxStatus::Pending => unconfirmed += 1,
        }
        if let Some(c) = t.confirm_tick {
            latencies.push(c - t.submit_tick);
        }
    }
    latencies.sort_unstable();
    let mean = if latencies.is_empty() {
        0.0
    } else {
        secs(latencies.iter().sum::<u64>()) / latencies.len() as f64
    };
    let pct = |q| percentile(&latencies, q).map_or(0.0, secs);
    let gap = rec.blocks.last().map(|b| b.gap);
    let first_h = rec.blocks.first().map_or(0, |b| b.height);
    let last_h = rec.blocks.last().map_or(0, |b| b.height);
    let per_s = |n: u64| {
        if duration == 0 {
            0.0
        } else {
            n as f64 / secs(duration)
        }
    };
    Summary {
        throughput: per_s(ok),
        latency_mean: mean,
        latency_p50: pct(0.50),
        latency_p95: pct(0.95),
        latency_p99: pct(0.99),
        submitted: rec.txs.len() as u64,
        confirmed: ok + failed,
        succeeded: ok,
        failed,
        rejected,
        unconfirmed,
        reverted: rec.reverted,
        fork_ratio: gap.map_or(1.0, |g| g.ratio),
        blocks_total: gap.map_or(0, |g| g.total_blocks),
        blocks_main: gap.map_or(0, |g| g.main_branch_blocks),
        fork_delta: gap.map_or(0, |g| g.delta()),
        blocks_per_second: per_s(last_h.saturating_sub(first_h)),
        max_queue: rec.queue.iter().map(|(_, l)| *l as u64).max().unwrap_or(0),
        duration_s: secs(duration),
        aborted: rec.aborted.clone(),
    }
}

pub fn write_txs_csv<W: Write>(rec: &MetricsRecord, mut w: W) -> io::Result<()> {
    writeln!(w, "tx_id,submit_tick,confirm_tick,status")?;
    for t in &rec.txs {
        let c = t.confirm_tick.map(|c| c.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", t.id, t.submit_tick, c, t.status.name())?;
    }
    Ok(())
}

pub fn write_queue_csv<W: Write>(rec: &MetricsRecord, mut w: W) -> io::Result<()> {
    writeln!(w, "tick,length")?;
    for (t, l) in &rec.queue {
        writeln!(w, "{t},{l}")?;
    }
    Ok(())
}

pub fn write_blocks_csv<W: Write>(rec: &MetricsRecord, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "tick,confirmed_height,blocks_total,blocks_main,fork_delta,fork_ratio"
    )?;
    for b in &rec.blocks {
        writeln!(
            w,
            "{},{},{},{},{},{:.6}",
            b.tick,
            b.height,
            b.gap.total_blocks,
            b.gap.main_branch_blocks,
            b.gap.delta(),
            b.gap.ratio
        )?;
    }
    Ok(())
}

/// Least-squares slope of queue length against tick, over samples with
/// `tick >= from`.
pub fn queue_slope(rec: &MetricsRecord, from: u64) -> f64 {
    let pts: Vec<(f64, f64)> = rec
        .queue
        .iter()
        .filter(|(t, _)| *t >= from)
        .map(|(t, l)| (*t as f64, *l as f64))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
