//! The market journal: a write-ahead log of everything that changed state.
//!
//! Each submit, effective cancel, phase change and settlement appends exactly
//! one event carrying the ladder cells it touched (with their new aggregates)
//! and the balance/escrow deltas it applied per account. Replaying the deltas
//! against fresh accounts reproduces final balances exactly; replaying the
//! ladder deltas reproduces final book depth. Downstream writers consume the
//! journal without knowing anything about matching internals.

use super::{MatchedBet, Phase, Side};
use crate::ladder::OddsTick;
use crate::money::Money;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// New aggregate unmatched stake of one ladder cell after the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderDelta {
    pub competitor: usize,
    pub side: Side,
    pub odds: OddsTick,
    pub unmatched: Money,
}

/// Balance/escrow change of one account caused by the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountDelta {
    pub bettor_id: u32,
    pub balance: Money,
    pub escrow: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum EventKind {
    Submit {
        order_id: u64,
        bettor_id: u32,
        competitor: usize,
        side: Side,
        odds: OddsTick,
        stake: Money,
        fills: Vec<MatchedBet>,
        rested: Money,
    },
    Cancel {
        order_id: u64,
        bettor_id: u32,
        competitor: usize,
        side: Side,
        odds: OddsTick,
        amount: Money,
    },
    PhaseChange {
        phase: Phase,
        affected_orders: u32,
    },
    Settle {
        winner: usize,
        commission: Money,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub seq: u64,
    pub time_ms: u64,
    pub kind: EventKind,
    pub ladder: Vec<LadderDelta>,
    pub accounts: Vec<AccountDelta>,
    /// Commission taken by the exchange in this event.
    pub pot_delta: Money,
}

impl JournalEvent {
    /// Sum of all money movement in the event; zero by conservation.
    pub fn net_flow(&self) -> Money {
        self.accounts.iter().map(|d| d.balance + d.escrow).sum::<Money>() + self.pot_delta
    }
}

/// Replays account deltas over initial (balance, escrow) pairs, returning the
/// final pairs and the commission pot.
pub fn replay_accounts(
    initial: &BTreeMap<u32, Money>,
    journal: &[JournalEvent],
) -> (BTreeMap<u32, (Money, Money)>, Money) {
    let mut accounts: BTreeMap<u32, (Money, Money)> =
        initial.iter().map(|(&id, &bal)| (id, (bal, Money::ZERO))).collect();
    let mut pot = Money::ZERO;
    for event in journal {
        for delta in &event.accounts {
            let entry = accounts.entry(delta.bettor_id).or_insert((Money::ZERO, Money::ZERO));
            entry.0 += delta.balance;
            entry.1 += delta.escrow;
        }
        pot += event.pot_delta;
    }
    (accounts, pot)
}

/// Replays ladder deltas into final per-cell aggregates keyed by
/// (competitor, side, tick index); zero cells are dropped.
pub fn replay_ladders(journal: &[JournalEvent]) -> BTreeMap<(usize, Side, usize), Money> {
    let mut cells = BTreeMap::new();
    for event in journal {
        for delta in &event.ladder {
            let key = (delta.competitor, delta.side, delta.odds.index());
            if delta.unmatched.is_zero() {
                cells.remove(&key);
            } else {
                cells.insert(key, delta.unmatched);
            }
        }
    }
    cells
}
