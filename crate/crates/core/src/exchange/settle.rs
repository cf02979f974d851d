//! Market settlement: pays out every matched bet against the race winner and
//! charges commission on per-bettor net winnings.

use super::journal::{AccountDelta, EventKind, JournalEvent};
use super::{Accounts, ExchangeError, MarketBook, Phase};
use crate::money::Money;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettorSettlement {
    pub bettor_id: u32,
    /// Pre-commission net result of the market, may be negative.
    pub net: Money,
    /// Fee charged; zero unless net is positive.
    pub commission: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub winner: usize,
    pub per_bettor: Vec<BettorSettlement>,
    pub commission_total: Money,
    /// Sub-unit residue swept to the pot by payout rounding. Liability
    /// allocation makes every payout exact, so this is always zero; reported
    /// so conservation audits need no special case.
    pub rounding_remainder: Money,
}

/// Settles a closed market. For each matched bet on the winner the backer
/// collects the bet's allocated liability from the layer's escrow plus their
/// own stake back; on any other competitor the layer collects the backer's
/// stake and their liability escrow is released. Commission is then floored
/// from each bettor's positive net at `commission_rate` (a fraction,
/// resolved to basis points). All escrow drains to zero.
pub fn settle(
    book: &mut MarketBook,
    accounts: &mut Accounts,
    winner: usize,
    commission_rate: f64,
    time_ms: u64,
) -> Result<SettlementReport, ExchangeError> {
    if book.is_settled() {
        return Err(ExchangeError::AlreadySettled);
    }
    if book.phase != Phase::Closed {
        return Err(ExchangeError::WrongPhase(book.phase));
    }
    if winner >= book.n_competitors() {
        return Err(ExchangeError::UnknownCompetitor(winner));
    }
    if !(0.0..=1.0).contains(&commission_rate) || !commission_rate.is_finite() {
        return Err(ExchangeError::BadCommission(commission_rate));
    }
    let bps = (commission_rate * 10_000.0).round() as i64;

    // Per bettor: funds leaving escrow, funds landing in balance, and the
    // pre-commission net. Winner bet moves the liability layer -> backer;
    // loser bet moves the stake backer -> layer.
    let mut escrow_out: BTreeMap<u32, Money> = BTreeMap::new();
    let mut balance_in: BTreeMap<u32, Money> = BTreeMap::new();
    let mut net: BTreeMap<u32, Money> = BTreeMap::new();
    for bet in book.matched_bets() {
        if bet.competitor == winner {
            *escrow_out.entry(bet.back_bettor).or_default() += bet.stake;
            *balance_in.entry(bet.back_bettor).or_default() += bet.stake + bet.liability;
            *escrow_out.entry(bet.lay_bettor).or_default() += bet.liability;
            *net.entry(bet.back_bettor).or_default() += bet.liability;
            *net.entry(bet.lay_bettor).or_default() -= bet.liability;
        } else {
            *escrow_out.entry(bet.back_bettor).or_default() += bet.stake;
            *escrow_out.entry(bet.lay_bettor).or_default() += bet.liability;
            *balance_in.entry(bet.lay_bettor).or_default() += bet.liability + bet.stake;
            *net.entry(bet.back_bettor).or_default() -= bet.stake;
            *net.entry(bet.lay_bettor).or_default() += bet.stake;
        }
    }

    let mut per_bettor = Vec::with_capacity(net.len());
    let mut commission_total = Money::ZERO;
    let mut deltas = Vec::with_capacity(net.len());
    for (&bettor_id, &bettor_net) in &net {
        let fee = if bettor_net > Money::ZERO { bettor_net.mul_div_floor(bps, 10_000) } else { Money::ZERO };
        commission_total += fee;
        per_bettor.push(BettorSettlement { bettor_id, net: bettor_net, commission: fee });

        let out = escrow_out.get(&bettor_id).copied().unwrap_or(Money::ZERO);
        let inflow = balance_in.get(&bettor_id).copied().unwrap_or(Money::ZERO) - fee;
        let account = accounts.get_mut(bettor_id)?;
        account.escrow -= out;
        account.balance += inflow;
        debug_assert!(account.escrow >= Money::ZERO && account.balance >= Money::ZERO);
        deltas.push(AccountDelta { bettor_id, balance: inflow, escrow: -out });
    }
    debug_assert!(accounts.iter().all(|a| a.escrow.is_zero()), "settlement must drain all escrow");

    book.push_settle_event(JournalEvent {
        seq: book.next_journal_seq(),
        time_ms,
        kind: EventKind::Settle { winner, commission: commission_total },
        ladder: Vec::new(),
        accounts: deltas,
        pot_delta: commission_total,
    });
    book.mark_settled();

    Ok(SettlementReport { winner, per_bettor, commission_total, rounding_remainder: Money::ZERO })
}
