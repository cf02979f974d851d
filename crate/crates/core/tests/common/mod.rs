//! Shared test harness: a deliberately naive quadratic matching reference
//! that rescans the whole order list for every fill, plus a randomized
//! stream driver asserting the book-based matcher mirrors it exactly.

#![allow(dead_code)]

use bbe_core::exchange::{Accounts, MarketBook, MatchMode, OrderRequest, Side};
use bbe_core::ladder::OddsTick;
use bbe_core::money::Money;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum RefSide {
    Back,
    Lay,
}

#[derive(Debug)]
pub struct RefOrder {
    pub id: u64,
    pub competitor: usize,
    pub side: RefSide,
    pub tick: usize,
    pub unmatched: i64,
}

/// (back_order_id, lay_order_id, competitor, resting tick index, stake cents)
pub type Fill = (u64, u64, usize, usize, i64);

/// Quadratic reference: repeatedly scan every resting order, pick the best
/// eligible counterparty (back takers prefer the highest tick, lay takers the
/// lowest; ties go to the oldest id), fill, repeat.
pub fn ref_submit(resting: &mut Vec<RefOrder>, mut incoming: RefOrder, crossing: bool) -> Vec<Fill> {
    let mut fills = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for (i, o) in resting.iter().enumerate() {
            if o.unmatched == 0 || o.competitor != incoming.competitor || o.side == incoming.side {
                continue;
            }
            let price_ok = if crossing {
                match incoming.side {
                    RefSide::Back => o.tick >= incoming.tick,
                    RefSide::Lay => o.tick <= incoming.tick,
                }
            } else {
                o.tick == incoming.tick
            };
            if !price_ok {
                continue;
            }
            let beats = |cand: &RefOrder, cur: &RefOrder| match incoming.side {
                RefSide::Back => cand.tick > cur.tick || (cand.tick == cur.tick && cand.id < cur.id),
                RefSide::Lay => cand.tick < cur.tick || (cand.tick == cur.tick && cand.id < cur.id),
            };
            best = match best {
                None => Some(i),
                Some(j) if beats(o, &resting[j]) => Some(i),
                keep => keep,
            };
        }
        let Some(i) = best else { break };
        let counter = &mut resting[i];
        let amount = incoming.unmatched.min(counter.unmatched);
        let (back_id, lay_id) = match incoming.side {
            RefSide::Back => (incoming.id, counter.id),
            RefSide::Lay => (counter.id, incoming.id),
        };
        fills.push((back_id, lay_id, incoming.competitor, counter.tick, amount));
        counter.unmatched -= amount;
        incoming.unmatched -= amount;
        if incoming.unmatched == 0 {
            break;
        }
    }
    if incoming.unmatched > 0 {
        resting.push(incoming);
    }
    fills
}

pub fn ref_depth(resting: &[RefOrder]) -> BTreeMap<(usize, RefSide, usize), i64> {
    let mut depth = BTreeMap::new();
    for o in resting {
        if o.unmatched > 0 {
            *depth.entry((o.competitor, o.side, o.tick)).or_default() += o.unmatched;
        }
    }
    depth
}

pub fn book_cells(book: &MarketBook, competitor: usize) -> Vec<(usize, i64, i64)> {
    bbe_core::exchange::ladder_view(book, competitor)
        .unwrap()
        .into_iter()
        .map(|cell| (cell.odds.index(), cell.back.cents(), cell.lay.cents()))
        .collect()
}

/// Feeds one seeded random order stream (submits and cancels) to both
/// matchers and asserts identical fills and final depth.
pub fn run_stream(seed: u64, mode: MatchMode) {
    let crossing = mode == MatchMode::Crossing;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_competitors = rng.gen_range(1..=6);
    let n_orders = rng.gen_range(50..=500);
    // Strict mode needs tick collisions to match at all; crossing gets a
    // dense band so sides overlap often.
    let tick_pool: Vec<usize> = if crossing { (100..160).collect() } else { (0..6).map(|i| 100 + 2 * i).collect() };

    let mut book = MarketBook::new(n_competitors, mode);
    let mut accounts = Accounts::new();
    for b in 1..=8u32 {
        accounts.open(b, Money::from_cents(1_000_000_000));
    }
    let mut resting: Vec<RefOrder> = Vec::new();
    let mut issued: Vec<u64> = Vec::new();
    let mut next_id = 1u64;

    for step in 0..n_orders {
        if !issued.is_empty() && rng.gen_bool(0.15) {
            let id = issued[rng.gen_range(0..issued.len())];
            let got = book.cancel_order(id, &mut accounts, step).unwrap();
            let want = resting
                .iter_mut()
                .find(|o| o.id == id)
                .map(|o| std::mem::take(&mut o.unmatched))
                .unwrap_or(0);
            assert_eq!(got.cents(), want, "cancel {id} in stream {seed}");
            continue;
        }
        let side = if rng.gen_bool(0.5) { Side::Back } else { Side::Lay };
        let tick = tick_pool[rng.gen_range(0..tick_pool.len())];
        let competitor = rng.gen_range(0..n_competitors);
        let stake = rng.gen_range(1..=10_000i64);
        let req = OrderRequest {
            bettor_id: rng.gen_range(1..=8),
            competitor,
            side,
            odds: OddsTick::MIN.offset(tick as i64),
            stake: Money::from_cents(stake),
        };
        let report = book.submit_order(req, &mut accounts, step).unwrap();
        assert_eq!(report.order_id, next_id, "id assignment must mirror the reference");
        issued.push(report.order_id);

        let incoming = RefOrder {
            id: next_id,
            competitor,
            side: if side == Side::Back { RefSide::Back } else { RefSide::Lay },
            tick,
            unmatched: stake,
        };
        let want = ref_submit(&mut resting, incoming, crossing);
        let got: Vec<Fill> = report
            .matches
            .iter()
            .map(|m| (m.back_order_id, m.lay_order_id, m.competitor, m.odds.index(), m.stake.cents()))
            .collect();
        assert_eq!(got, want, "fills diverged at order {next_id} in stream {seed} ({mode:?})");
        next_id += 1;
    }

    let mut book_depth = BTreeMap::new();
    for c in 0..n_competitors {
        for (odds, back, lay) in book_cells(&book, c) {
            if back > 0 {
                book_depth.insert((c, RefSide::Back, odds), back);
            }
            if lay > 0 {
                book_depth.insert((c, RefSide::Lay, odds), lay);
            }
        }
    }
    assert_eq!(book_depth, ref_depth(&resting), "final depth diverged in stream {seed} ({mode:?})");
}
