//! Serializes session results into analysis-ready artifacts: trajectory and
//! sentiment CSVs, a market-change JSONL stream, a trade time series, and
//! the regression-rebased trajectory projection.
//!
//! Every writer is a pure function of the record it is given — timestamps
//! derive from simulated time plus a configured epoch, never the wall clock.

use crate::exchange::{EventKind, JournalEvent, Side};
use crate::orchestrator::BeliefSeries;
use crate::race::RaceRecord;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// 2021-01-01T00:00:00Z, the default simulation epoch for stream timestamps.
pub const DEFAULT_EPOCH_MS: u64 = 1_609_459_200_000;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("rebasing needs at least 2 recorded instants, got {0}")]
    TooFewInstants(usize),
}

fn write_row<W: Write>(out: &mut W, t: f64, values: &[f64]) -> io::Result<()> {
    write!(out, "{t:.3}")?;
    for v in values {
        write!(out, ",{v:.3}")?;
    }
    writeln!(out)
}

/// Space-time CSV: header `t,<name>,...`, one row per recorded instant,
/// distances in metres at 3 decimal places. Finished competitors repeat the
/// track length, as recorded.
pub fn write_trajectories<W: Write>(record: &RaceRecord, out: &mut W) -> Result<(), DatagenError> {
    writeln!(out, "t,{}", record.competitor_names.join(","))?;
    for (row, positions) in record.positions.iter().enumerate() {
        write_row(out, row as f64 * record.config.tick_seconds, positions)?;
    }
    Ok(())
}

/// A pooled linear fit of distance against time and what remains of each
/// competitor's trajectory once the fit is subtracted. Subtracting one
/// shared line per instant preserves the competitors' ordering, so the
/// uppermost residual trace is the current leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebasedSeries {
    pub intercept: f64,
    pub slope: f64,
    pub tick_seconds: f64,
    /// `residuals[c][row] = positions[row][c] - (intercept + slope * t_row)`.
    pub residuals: Vec<Vec<f64>>,
}

impl RebasedSeries {
    pub fn rows(&self) -> usize {
        self.residuals.first().map_or(0, Vec::len)
    }

    /// The recorded position, recovered by adding the fit back.
    pub fn restore(&self, competitor: usize, row: usize) -> f64 {
        self.residuals[competitor][row] + self.intercept + self.slope * (row as f64 * self.tick_seconds)
    }

    /// Competitor with the uppermost residual trace at `row`: the leader.
    pub fn argmax_at(&self, row: usize) -> usize {
        (0..self.residuals.len())
            .max_by(|&a, &b| self.residuals[a][row].total_cmp(&self.residuals[b][row]))
            .expect("at least one competitor")
    }
}

/// Least-squares line over the pooled (t, d) points of every competitor,
/// and per-competitor residuals from it.
pub fn rebase(record: &RaceRecord) -> Result<RebasedSeries, DatagenError> {
    let rows = record.positions.len();
    if rows < 2 {
        return Err(DatagenError::TooFewInstants(rows));
    }
    let n = record.competitor_names.len();
    let dt = record.config.tick_seconds;
    let points = (rows * n) as f64;
    let mut sum_t = 0.0;
    let mut sum_d = 0.0;
    for (row, positions) in record.positions.iter().enumerate() {
        sum_t += row as f64 * dt * n as f64;
        sum_d += positions.iter().sum::<f64>();
    }
    let mean_t = sum_t / points;
    let mean_d = sum_d / points;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (row, positions) in record.positions.iter().enumerate() {
        let t = row as f64 * dt - mean_t;
        var += t * t * n as f64;
        cov += t * positions.iter().map(|d| d - mean_d).sum::<f64>();
    }
    let slope = cov / var;
    let intercept = mean_d - slope * mean_t;
    let residuals = (0..n)
        .map(|c| {
            record
                .positions
                .iter()
                .enumerate()
                .map(|(row, positions)| positions[c] - (intercept + slope * (row as f64 * dt)))
                .collect()
        })
        .collect();
    Ok(RebasedSeries { intercept, slope, tick_seconds: dt, residuals })
}

/// Rebased residuals as CSV in the same shape as [`write_trajectories`].
pub fn write_rebased<W: Write>(series: &RebasedSeries, names: &[String], out: &mut W) -> Result<(), DatagenError> {
    writeln!(out, "t,{}", names.join(","))?;
    let mut row_values = vec![0.0; series.residuals.len()];
    for row in 0..series.rows() {
        for (c, values) in series.residuals.iter().enumerate() {
            row_values[c] = values[row];
        }
        write_row(out, row as f64 * series.tick_seconds, &row_values)?;
    }
    Ok(())
}

/// One record inside a market-change message: a ladder level's new absolute
/// aggregate, a trade, or a phase marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rt")]
pub enum ChangeRecord {
    #[serde(rename = "ladder")]
    Ladder { id: usize, side: char, odds: f64, unmatched_c: i64 },
    #[serde(rename = "trade")]
    Trade { id: usize, odds: f64, matched_c: i64 },
    #[serde(rename = "phase")]
    Phase { phase: String },
}

/// One line of the stream: all changes from one simulated instant. `pt` is
/// milliseconds since the Unix epoch (simulation epoch + simulated ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketChangeMessage {
    pub op: String,
    pub pt: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<StreamMeta>,
    pub mc: Vec<ChangeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub schema: String,
    pub competitors: usize,
}

fn side_char(side: Side) -> char {
    match side {
        Side::Back => 'B',
        Side::Lay => 'L',
    }
}

fn phase_label(kind: &EventKind) -> Option<String> {
    match kind {
        EventKind::PhaseChange { phase, .. } => Some(format!("{phase:?}")),
        EventKind::Settle { winner, .. } => Some(format!("Settled:{winner}")),
        _ => None,
    }
}

/// Serializes a journal as newline-delimited market-change messages: a
/// metadata header, then one message per simulated instant that produced
/// events. Ladder records carry absolute aggregates, so replaying the
/// stream onto an empty book reproduces the final ladders exactly.
pub fn write_market_stream<W: Write>(
    journal: &[JournalEvent],
    competitors: usize,
    epoch_ms: u64,
    out: &mut W,
) -> Result<(), DatagenError> {
    let mut emit = |msg: &MarketChangeMessage| -> Result<(), DatagenError> {
        let line = serde_json::to_string(msg).expect("stream message serializes");
        writeln!(out, "{line}")?;
        Ok(())
    };
    emit(&MarketChangeMessage {
        op: "mcm".into(),
        pt: epoch_ms,
        meta: Some(StreamMeta { schema: "bbe-stream-1".into(), competitors }),
        mc: Vec::new(),
    })?;

    let mut batch_start = 0;
    while batch_start < journal.len() {
        let time_ms = journal[batch_start].time_ms;
        let batch_end = batch_start + journal[batch_start..].iter().take_while(|e| e.time_ms == time_ms).count();
        let mut mc = Vec::new();
        for event in &journal[batch_start..batch_end] {
            if let EventKind::Submit { fills, .. } = &event.kind {
                for fill in fills {
                    mc.push(ChangeRecord::Trade {
                        id: fill.competitor,
                        odds: fill.odds.value(),
                        matched_c: fill.stake.cents(),
                    });
                }
            }
            if let Some(phase) = phase_label(&event.kind) {
                mc.push(ChangeRecord::Phase { phase });
            }
            for delta in &event.ladder {
                mc.push(ChangeRecord::Ladder {
                    id: delta.competitor,
                    side: side_char(delta.side),
                    odds: delta.odds.value(),
                    unmatched_c: delta.unmatched.cents(),
                });
            }
        }
        emit(&MarketChangeMessage { op: "mcm".into(), pt: epoch_ms + time_ms, meta: None, mc })?;
        batch_start = batch_end;
    }
    Ok(())
}

/// Replays a stream's ladder records onto an empty book: last write per
/// (competitor, side, odds) wins, zero aggregates drop the level. Odds are
/// keyed by bit pattern, which round-trips exactly through JSON.
pub fn replay_stream(stream: &str) -> Result<std::collections::BTreeMap<(usize, char, u64), i64>, serde_json::Error> {
    let mut book = std::collections::BTreeMap::new();
    for line in stream.lines() {
        let msg: MarketChangeMessage = serde_json::from_str(line)?;
        for record in msg.mc {
            if let ChangeRecord::Ladder { id, side, odds, unmatched_c } = record {
                if unmatched_c == 0 {
                    book.remove(&(id, side, odds.to_bits()));
                } else {
                    book.insert((id, side, odds.to_bits()), unmatched_c);
                }
            }
        }
    }
    Ok(book)
}

/// Trade time series CSV: every fill in simulated order with a running
/// matched total per competitor.
pub fn write_trades<W: Write>(journal: &[JournalEvent], competitors: usize, out: &mut W) -> Result<(), DatagenError> {
    writeln!(out, "t,competitor,odds,matched_c,cum_matched_c")?;
    let mut cumulative = vec![0i64; competitors];
    for event in journal {
        if let EventKind::Submit { fills, .. } = &event.kind {
            for fill in fills {
                cumulative[fill.competitor] += fill.stake.cents();
                writeln!(
                    out,
                    "{:.3},{},{},{},{}",
                    event.time_ms as f64 / 1000.0,
                    fill.competitor,
                    fill.odds.value(),
                    fill.stake.cents(),
                    cumulative[fill.competitor],
                )?;
            }
        }
    }
    Ok(())
}

/// Rounds a probability vector to hundredths of a percent that sum to
/// exactly 10000, largest remainders first.
fn percent_units(probs: &[f64]) -> Vec<i64> {
    let mut units: Vec<i64> = probs.iter().map(|p| (p * 10_000.0).floor() as i64).collect();
    let leftover = 10_000 - units.iter().sum::<i64>();
    let mut by_remainder: Vec<usize> = (0..probs.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = probs[a] * 10_000.0 - probs[a].mul_add(10_000.0, 0.0).floor();
        let rb = probs[b] * 10_000.0 - probs[b].mul_add(10_000.0, 0.0).floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in 0..leftover.max(0) as usize {
        units[by_remainder[i % probs.len()]] += 1;
    }
    units
}

/// Per-bettor belief series as CSV percentages: header
/// `bettor_id,t,<name>,...`; every row sums to exactly 100.00.
pub fn write_sentiment<W: Write>(series: &[BeliefSeries], names: &[String], out: &mut W) -> Result<(), DatagenError> {
    writeln!(out, "bettor_id,t,{}", names.join(","))?;
    for bettor in series {
        for estimate in &bettor.estimates {
            write!(out, "{},{:.3}", bettor.bettor_id, estimate.snapshot_seconds)?;
            for units in percent_units(&estimate.probs) {
                write!(out, ",{}.{:02}", units / 100, units % 100)?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
