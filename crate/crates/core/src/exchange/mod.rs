//! Win-market betting exchange for a single race.
//!
//! Orders are back (betting the competitor wins) or lay (betting it does
//! not). The book keeps, per competitor and side, FIFO queues per odds tick.
//! Matching is best-price-then-arrival with partial fills and executes at the
//! resting order's odds: an incoming back at X consumes lays at odds >= X
//! from the highest down, an incoming lay at Y consumes backs at odds <= Y
//! from the lowest up. A config flag restricts matching to exact-odds ticks
//! instead. Funds back an order before it is accepted: the full stake for a
//! back, stake * (odds - 1) rounded up for a lay, held in escrow until the
//! order dies or the market settles.

mod journal;
mod settle;
mod views;

pub use journal::{replay_accounts, replay_ladders, AccountDelta, EventKind, JournalEvent, LadderDelta};
pub use settle::{settle, BettorSettlement, SettlementReport};
pub use views::{favourite_odds, grid_view, ladder_view, GridRow, GridView, LadderCell};

use crate::ladder::OddsTick;
use crate::money::Money;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Back,
    Lay,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Back => Side::Lay,
            Side::Lay => Side::Back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Open,
    PartFilled,
    Filled,
    Cancelled,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreRace,
    InPlay,
    Closed,
}

/// Exact-odds matching honours only the incoming order's own tick; crossing
/// (the default) lets marketable orders trade through better prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Crossing,
    Strict,
}

impl Default for MatchMode {
    fn default() -> Self {
        MatchMode::Crossing
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    #[error("market is closed to new orders")]
    MarketClosed,
    #[error("stake must be positive")]
    ZeroStake,
    #[error("insufficient funds: need {needed} but only {available} is free")]
    InsufficientFunds { needed: Money, available: Money },
}

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("order rejected: {0}")]
    Rejected(RejectReason),
    #[error("unknown order id {0}")]
    UnknownOrder(u64),
    #[error("competitor index {0} is outside the field")]
    UnknownCompetitor(usize),
    #[error("bettor {0} has no account")]
    UnknownBettor(u32),
    #[error("operation illegal in phase {0:?}")]
    WrongPhase(Phase),
    #[error("market already settled")]
    AlreadySettled,
    #[error("commission rate must lie in [0, 1], got {0}")]
    BadCommission(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: u64,
    pub bettor_id: u32,
    pub competitor: usize,
    pub side: Side,
    pub odds: OddsTick,
    pub stake: Money,
    pub arrival_seq: u64,
    pub arrival_time_ms: u64,
    pub unmatched: Money,
    pub status: OrderStatus,
}

/// One matched back/lay pair (or pair fragment under partial fills).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedBet {
    pub back_order_id: u64,
    pub lay_order_id: u64,
    pub back_bettor: u32,
    pub lay_bettor: u32,
    pub competitor: usize,
    /// The resting order's odds at match time.
    pub odds: OddsTick,
    pub stake: Money,
    /// What the layer owes the backer if the competitor wins. Allocated at
    /// match time so that all fills of one resting lay sum exactly to the
    /// escrow held when it rested; each allocation is within one minor unit
    /// of stake * (odds - 1).
    pub liability: Money,
    pub time_ms: u64,
}

/// stake * (odds - 1), rounded up to the next minor unit.
pub fn lay_liability(stake: Money, odds: OddsTick) -> Money {
    stake.mul_div_ceil(odds.centi() - 100, 100)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub bettor_id: u32,
    /// Free funds.
    pub balance: Money,
    /// Funds held against open orders and matched positions.
    pub escrow: Money,
}

impl Account {
    fn hold(&mut self, amount: Money) {
        assert!(amount >= Money::ZERO && self.balance >= amount, "hold exceeds balance");
        self.balance -= amount;
        self.escrow += amount;
    }

    fn release(&mut self, amount: Money) {
        assert!(amount >= Money::ZERO && self.escrow >= amount, "release exceeds escrow");
        self.escrow -= amount;
        self.balance += amount;
    }
}

/// All bettor accounts of one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounts {
    map: BTreeMap<u32, Account>,
}

impl Accounts {
    pub fn new() -> Self {
        Accounts::default()
    }

    pub fn open(&mut self, bettor_id: u32, initial_balance: Money) {
        assert!(initial_balance >= Money::ZERO);
        let prev = self.map.insert(bettor_id, Account { bettor_id, balance: initial_balance, escrow: Money::ZERO });
        assert!(prev.is_none(), "account {bettor_id} opened twice");
    }

    pub fn get(&self, bettor_id: u32) -> Option<&Account> {
        self.map.get(&bettor_id)
    }

    fn get_mut(&mut self, bettor_id: u32) -> Result<&mut Account, ExchangeError> {
        self.map.get_mut(&bettor_id).ok_or(ExchangeError::UnknownBettor(bettor_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Account> {
        self.map.values()
    }

    /// Balances plus escrow across all accounts; with the commission pot this
    /// is invariant under every market operation.
    pub fn total_funds(&self) -> Money {
        self.map.values().map(|a| a.balance + a.escrow).sum()
    }
}

/// One price level: arrival-ordered queue of order ids plus the cached sum of
/// their unmatched stakes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Level {
    queue: VecDeque<u64>,
    aggregate: Money,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct CompetitorBook {
    /// Keyed by ladder tick index.
    back: BTreeMap<usize, Level>,
    lay: BTreeMap<usize, Level>,
}

impl CompetitorBook {
    fn side(&self, side: Side) -> &BTreeMap<usize, Level> {
        match side {
            Side::Back => &self.back,
            Side::Lay => &self.lay,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<usize, Level> {
        match side {
            Side::Back => &mut self.back,
            Side::Lay => &mut self.lay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub bettor_id: u32,
    pub competitor: usize,
    pub side: Side,
    pub odds: OddsTick,
    pub stake: Money,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionReport {
    pub order_id: u64,
    pub matches: Vec<MatchedBet>,
    pub resting_unmatched: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketBook {
    n_competitors: usize,
    mode: MatchMode,
    pub phase: Phase,
    settled: bool,
    orders: BTreeMap<u64, Order>,
    ladders: Vec<CompetitorBook>,
    matched: Vec<MatchedBet>,
    last_traded: Vec<Option<OddsTick>>,
    journal: Vec<JournalEvent>,
    next_order_id: u64,
    next_seq: u64,
}

impl MarketBook {
    pub fn new(n_competitors: usize, mode: MatchMode) -> Self {
        assert!(n_competitors > 0);
        MarketBook {
            n_competitors,
            mode,
            phase: Phase::PreRace,
            settled: false,
            orders: BTreeMap::new(),
            ladders: vec![CompetitorBook::default(); n_competitors],
            matched: Vec::new(),
            last_traded: vec![None; n_competitors],
            journal: Vec::new(),
            next_order_id: 1,
            next_seq: 1,
        }
    }

    pub fn n_competitors(&self) -> usize {
        self.n_competitors
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn is_settled(&self) -> bool {
        self.settled
    }

    pub fn order(&self, order_id: u64) -> Option<&Order> {
        self.orders.get(&order_id)
    }

    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.orders.values()
    }

    /// Open orders of one bettor, ascending order id.
    pub fn open_orders_of(&self, bettor_id: u32) -> Vec<&Order> {
        self.orders
            .values()
            .filter(|o| o.bettor_id == bettor_id && o.unmatched > Money::ZERO && matches!(o.status, OrderStatus::Open | OrderStatus::PartFilled))
            .collect()
    }

    pub fn matched_bets(&self) -> &[MatchedBet] {
        &self.matched
    }

    pub fn last_traded(&self, competitor: usize) -> Option<OddsTick> {
        self.last_traded.get(competitor).copied().flatten()
    }

    pub fn journal(&self) -> &[JournalEvent] {
        &self.journal
    }

    /// Aggregate unmatched stake at one cell.
    pub fn cell(&self, competitor: usize, side: Side, odds: OddsTick) -> Money {
        self.ladders[competitor]
            .side(side)
            .get(&odds.index())
            .map(|l| l.aggregate)
            .unwrap_or(Money::ZERO)
    }

    /// Best (lowest) unmatched back tick, i.e. the back-side touch.
    pub fn best_back(&self, competitor: usize) -> Option<OddsTick> {
        self.ladders[competitor].back.keys().next().map(|&i| OddsTick::MIN.offset(i as i64))
    }

    /// Best (highest) unmatched lay tick, i.e. the lay-side touch.
    pub fn best_lay(&self, competitor: usize) -> Option<OddsTick> {
        self.ladders[competitor].lay.keys().next_back().map(|&i| OddsTick::MIN.offset(i as i64))
    }

    /// Up to `depth` populated (odds, aggregate) cells on one side, from the
    /// touch outward: backs ascending odds, lays descending.
    pub(crate) fn level_cells(&self, competitor: usize, side: Side, depth: usize) -> Vec<(OddsTick, Money)> {
        let ladder = self.ladders[competitor].side(side);
        let cell = |(&i, level): (&usize, &Level)| (OddsTick::MIN.offset(i as i64), level.aggregate);
        match side {
            Side::Back => ladder.iter().take(depth).map(cell).collect(),
            Side::Lay => ladder.iter().rev().take(depth).map(cell).collect(),
        }
    }

    /// All populated ticks of one competitor, ascending odds, with both
    /// sides' aggregates.
    pub(crate) fn nonempty_cells(&self, competitor: usize) -> Vec<(OddsTick, Money, Money)> {
        let book = &self.ladders[competitor];
        let mut ticks: Vec<usize> = book.back.keys().chain(book.lay.keys()).copied().collect();
        ticks.sort_unstable();
        ticks.dedup();
        ticks
            .into_iter()
            .map(|i| {
                let odds = OddsTick::MIN.offset(i as i64);
                let agg = |m: &BTreeMap<usize, Level>| m.get(&i).map(|l| l.aggregate).unwrap_or(Money::ZERO);
                (odds, agg(&book.back), agg(&book.lay))
            })
            .collect()
    }

    /// The escrow an order's unmatched remainder requires.
    fn resting_hold(side: Side, odds: OddsTick, unmatched: Money) -> Money {
        match side {
            Side::Back => unmatched,
            Side::Lay => lay_liability(unmatched, odds),
        }
    }

    /// Planned fills for an incoming order, without touching any state:
    /// (resting order id, fill stake, resting odds), best price first, FIFO
    /// within a price.
    fn match_plan(&self, req: &OrderRequest) -> Vec<(u64, Money, OddsTick)> {
        let mut fills = Vec::new();
        let mut remaining = req.stake;
        let opposite = self.ladders[req.competitor].side(req.side.opposite());
        let tick = req.odds.index();

        let mut scan = |level: &Level| {
            for &oid in &level.queue {
                if remaining.is_zero() {
                    return false;
                }
                let resting = &self.orders[&oid];
                let fill = remaining.min(resting.unmatched);
                debug_assert!(fill > Money::ZERO);
                fills.push((oid, fill, resting.odds));
                remaining -= fill;
            }
            !remaining.is_zero()
        };

        match (self.mode, req.side) {
            (MatchMode::Strict, _) => {
                if let Some(level) = opposite.get(&tick) {
                    scan(level);
                }
            }
            // Incoming back wants odds >= its own; best for it is the
            // highest resting lay.
            (MatchMode::Crossing, Side::Back) => {
                for (_, level) in opposite.range(tick..).rev() {
                    if !scan(level) {
                        break;
                    }
                }
            }
            // Incoming lay accepts odds <= its own; best for it is the
            // lowest resting back.
            (MatchMode::Crossing, Side::Lay) => {
                for (_, level) in opposite.range(..=tick) {
                    if !scan(level) {
                        break;
                    }
                }
            }
        }
        fills
    }

    /// Submits an order: plans fills, checks the exact escrow the outcome
    /// needs, then applies fills and rests the remainder. Rejection leaves
    /// every piece of state untouched.
    pub fn submit_order(
        &mut self,
        req: OrderRequest,
        accounts: &mut Accounts,
        time_ms: u64,
    ) -> Result<SubmissionReport, ExchangeError> {
        if req.competitor >= self.n_competitors {
            return Err(ExchangeError::UnknownCompetitor(req.competitor));
        }
        if self.phase == Phase::Closed {
            return Err(ExchangeError::Rejected(RejectReason::MarketClosed));
        }
        if req.stake <= Money::ZERO {
            return Err(ExchangeError::Rejected(RejectReason::ZeroStake));
        }

        let fills = self.match_plan(&req);
        let filled: Money = fills.iter().map(|&(_, stake, _)| stake).sum();
        let rested = req.stake - filled;
        let needed = match req.side {
            Side::Back => req.stake,
            Side::Lay => {
                fills.iter().map(|&(_, stake, odds)| lay_liability(stake, odds)).sum::<Money>()
                    + lay_liability(rested, req.odds)
            }
        };
        let account = accounts.get_mut(req.bettor_id)?;
        if account.balance < needed {
            return Err(ExchangeError::Rejected(RejectReason::InsufficientFunds {
                needed,
                available: account.balance,
            }));
        }
        account.hold(needed);

        let order_id = self.next_order_id;
        self.next_order_id += 1;
        let arrival_seq = self.next_seq;
        self.next_seq += 1;

        let mut touched: Vec<(Side, OddsTick)> = Vec::new();
        let mut matches = Vec::with_capacity(fills.len());
        for (resting_id, fill, resting_odds) in fills {
            let resting = self.orders.get_mut(&resting_id).expect("planned order exists");
            let before = resting.unmatched;
            resting.unmatched -= fill;
            resting.status = if resting.unmatched.is_zero() { OrderStatus::Filled } else { OrderStatus::PartFilled };
            // A resting lay's escrow is one ceil over its whole remainder, so
            // fills take the ceil difference (sums telescope to the hold); a
            // resting back was hit by a lay whose plan held per-fill ceils.
            let liability = match req.side {
                Side::Back => lay_liability(before, resting_odds) - lay_liability(resting.unmatched, resting_odds),
                Side::Lay => lay_liability(fill, resting_odds),
            };
            let (back_order_id, lay_order_id, back_bettor, lay_bettor) = match req.side {
                Side::Back => (order_id, resting_id, req.bettor_id, resting.bettor_id),
                Side::Lay => (resting_id, order_id, resting.bettor_id, req.bettor_id),
            };
            let done = resting.unmatched.is_zero();
            let side = self.ladders[req.competitor].side_mut(req.side.opposite());
            let level = side.get_mut(&resting_odds.index()).expect("planned level exists");
            level.aggregate -= fill;
            if done {
                debug_assert_eq!(level.queue.front(), Some(&resting_id), "fills consume in arrival order");
                level.queue.pop_front();
            }
            if level.aggregate.is_zero() {
                side.remove(&resting_odds.index());
            }
            touched.push((req.side.opposite(), resting_odds));

            let bet = MatchedBet {
                back_order_id,
                lay_order_id,
                back_bettor,
                lay_bettor,
                competitor: req.competitor,
                odds: resting_odds,
                stake: fill,
                liability,
                time_ms,
            };
            self.matched.push(bet.clone());
            matches.push(bet);
            self.last_traded[req.competitor] = Some(resting_odds);
        }

        let status = match (matches.is_empty(), rested.is_zero()) {
            (true, _) => OrderStatus::Open,
            (false, false) => OrderStatus::PartFilled,
            (false, true) => OrderStatus::Filled,
        };
        self.orders.insert(
            order_id,
            Order {
                order_id,
                bettor_id: req.bettor_id,
                competitor: req.competitor,
                side: req.side,
                odds: req.odds,
                stake: req.stake,
                arrival_seq,
                arrival_time_ms: time_ms,
                unmatched: rested,
                status,
            },
        );
        if rested > Money::ZERO {
            let level = self.ladders[req.competitor].side_mut(req.side).entry(req.odds.index()).or_default();
            level.queue.push_back(order_id);
            level.aggregate += rested;
            touched.push((req.side, req.odds));
        }

        let ladder_deltas = self.ladder_deltas(req.competitor, &touched);
        self.journal.push(JournalEvent {
            seq: self.journal.len() as u64,
            time_ms,
            kind: EventKind::Submit {
                order_id,
                bettor_id: req.bettor_id,
                competitor: req.competitor,
                side: req.side,
                odds: req.odds,
                stake: req.stake,
                fills: matches.clone(),
                rested,
            },
            ladder: ladder_deltas,
            accounts: vec![AccountDelta { bettor_id: req.bettor_id, balance: -needed, escrow: needed }],
            pot_delta: Money::ZERO,
        });

        debug_assert!(self.mode == MatchMode::Strict || self.uncrossed(req.competitor));
        Ok(SubmissionReport { order_id, matches, resting_unmatched: rested })
    }

    fn ladder_deltas(&self, competitor: usize, touched: &[(Side, OddsTick)]) -> Vec<LadderDelta> {
        let mut seen = Vec::new();
        let mut deltas = Vec::new();
        for &(side, odds) in touched {
            if seen.contains(&(side, odds)) {
                continue;
            }
            seen.push((side, odds));
            deltas.push(LadderDelta { competitor, side, odds, unmatched: self.cell(competitor, side, odds) });
        }
        deltas
    }

    fn uncrossed(&self, competitor: usize) -> bool {
        match (self.best_lay(competitor), self.best_back(competitor)) {
            (Some(lay), Some(back)) => lay < back,
            _ => true,
        }
    }

    /// Cancels an order's unmatched remainder, releasing its escrow. Already
    /// dead or fully matched orders report a zero cancel instead of failing.
    pub fn cancel_order(
        &mut self,
        order_id: u64,
        accounts: &mut Accounts,
        time_ms: u64,
    ) -> Result<Money, ExchangeError> {
        let order = self.orders.get_mut(&order_id).ok_or(ExchangeError::UnknownOrder(order_id))?;
        if order.unmatched.is_zero() || !matches!(order.status, OrderStatus::Open | OrderStatus::PartFilled) {
            return Ok(Money::ZERO);
        }
        let amount = order.unmatched;
        let hold = Self::resting_hold(order.side, order.odds, amount);
        order.unmatched = Money::ZERO;
        order.status = OrderStatus::Cancelled;
        let (bettor_id, competitor, side, odds) = (order.bettor_id, order.competitor, order.side, order.odds);

        accounts.get_mut(bettor_id)?.release(hold);
        self.remove_from_level(competitor, side, odds, order_id, amount);

        let ladder_deltas = self.ladder_deltas(competitor, &[(side, odds)]);
        self.journal.push(JournalEvent {
            seq: self.journal.len() as u64,
            time_ms,
            kind: EventKind::Cancel { order_id, bettor_id, competitor, side, odds, amount },
            ladder: ladder_deltas,
            accounts: vec![AccountDelta { bettor_id, balance: hold, escrow: -hold }],
            pot_delta: Money::ZERO,
        });
        Ok(amount)
    }

    fn remove_from_level(&mut self, competitor: usize, side: Side, odds: OddsTick, order_id: u64, amount: Money) {
        let ladder = self.ladders[competitor].side_mut(side);
        let level = ladder.get_mut(&odds.index()).expect("resting order has a level");
        level.queue.retain(|&id| id != order_id);
        level.aggregate -= amount;
        if level.aggregate.is_zero() {
            ladder.remove(&odds.index());
        }
    }

    /// Race start: every unmatched remainder is cancelled, escrow released,
    /// and the market goes in-play. Returns how many orders were affected.
    pub fn transition_in_play(&mut self, accounts: &mut Accounts, time_ms: u64) -> Result<usize, ExchangeError> {
        if self.phase != Phase::PreRace {
            return Err(ExchangeError::WrongPhase(self.phase));
        }
        let count = self.purge_unmatched(accounts, OrderStatus::Cancelled, Phase::InPlay, time_ms)?;
        Ok(count)
    }

    /// Close of betting: remaining unmatched stakes expire back to their
    /// owners and no further orders are accepted.
    pub fn close_market(&mut self, accounts: &mut Accounts, time_ms: u64) -> Result<usize, ExchangeError> {
        if self.phase != Phase::InPlay {
            return Err(ExchangeError::WrongPhase(self.phase));
        }
        let count = self.purge_unmatched(accounts, OrderStatus::Expired, Phase::Closed, time_ms)?;
        Ok(count)
    }

    fn purge_unmatched(
        &mut self,
        accounts: &mut Accounts,
        final_status: OrderStatus,
        next_phase: Phase,
        time_ms: u64,
    ) -> Result<usize, ExchangeError> {
        let mut releases: BTreeMap<u32, Money> = BTreeMap::new();
        let mut touched: Vec<(usize, Side, OddsTick)> = Vec::new();
        let mut count = 0usize;
        for order in self.orders.values_mut() {
            if order.unmatched > Money::ZERO && matches!(order.status, OrderStatus::Open | OrderStatus::PartFilled) {
                let hold = Self::resting_hold(order.side, order.odds, order.unmatched);
                *releases.entry(order.bettor_id).or_default() += hold;
                touched.push((order.competitor, order.side, order.odds));
                order.unmatched = Money::ZERO;
                order.status = final_status;
                count += 1;
            }
        }
        for (&bettor_id, &amount) in &releases {
            accounts.get_mut(bettor_id)?.release(amount);
        }
        for ladder in &mut self.ladders {
            ladder.back.clear();
            ladder.lay.clear();
        }
        self.phase = next_phase;

        touched.sort_by_key(|&(c, s, o)| (c, s, o.index()));
        touched.dedup();
        let ladder = touched
            .into_iter()
            .map(|(competitor, side, odds)| LadderDelta { competitor, side, odds, unmatched: Money::ZERO })
            .collect();
        self.journal.push(JournalEvent {
            seq: self.journal.len() as u64,
            time_ms,
            kind: EventKind::PhaseChange { phase: next_phase, affected_orders: count as u32 },
            ladder,
            accounts: releases
                .into_iter()
                .map(|(bettor_id, amount)| AccountDelta { bettor_id, balance: amount, escrow: -amount })
                .collect(),
            pot_delta: Money::ZERO,
        });
        Ok(count)
    }

    pub(crate) fn push_settle_event(&mut self, event: JournalEvent) {
        self.journal.push(event);
    }

    pub(crate) fn mark_settled(&mut self) {
        self.settled = true;
    }

    pub(crate) fn next_journal_seq(&self) -> u64 {
        self.journal.len() as u64
    }

    /// Recomputes, from orders and matched bets, the escrow each account
    /// should currently hold. Test and invariant support.
    pub fn expected_escrow(&self) -> BTreeMap<u32, Money> {
        let mut escrow: BTreeMap<u32, Money> = BTreeMap::new();
        if self.settled {
            return escrow;
        }
        for order in self.orders.values() {
            if order.unmatched > Money::ZERO {
                *escrow.entry(order.bettor_id).or_default() += Self::resting_hold(order.side, order.odds, order.unmatched);
            }
        }
        for bet in &self.matched {
            *escrow.entry(bet.back_bettor).or_default() += bet.stake;
            *escrow.entry(bet.lay_bettor).or_default() += bet.liability;
        }
        escrow
    }
}
