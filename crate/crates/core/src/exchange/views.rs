//! Read-only market views: the depth-limited grid bettors watch and the full
//! sparse ladder.

use super::{ExchangeError, MarketBook, Side};
use crate::ladder::OddsTick;
use crate::money::Money;
use serde::{Deserialize, Serialize};

/// One competitor's row: best cells on each side, reported from the touch
/// outward (backs lowest odds first, lays highest first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub competitor: usize,
    pub back: Vec<(OddsTick, Money)>,
    pub lay: Vec<(OddsTick, Money)>,
    pub favourite_odds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    /// Rows in favourite order: ascending favourite odds, competitors with
    /// no price signal last, ties by competitor id.
    pub rows: Vec<GridRow>,
    pub depth: usize,
}

impl GridView {
    pub fn row(&self, competitor: usize) -> &GridRow {
        self.rows.iter().find(|r| r.competitor == competitor).expect("every competitor has a row")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderCell {
    pub odds: OddsTick,
    pub back: Money,
    pub lay: Money,
}

/// The market's current price for one competitor: midpoint of the two
/// touches, one touch if the book is one-sided, else the last traded odds.
pub fn favourite_odds(book: &MarketBook, competitor: usize) -> Option<f64> {
    match (book.best_back(competitor), book.best_lay(competitor)) {
        (Some(back), Some(lay)) => Some((back.value() + lay.value()) / 2.0),
        (Some(touch), None) | (None, Some(touch)) => Some(touch.value()),
        (None, None) => book.last_traded(competitor).map(|t| t.value()),
    }
}

pub fn grid_view(book: &MarketBook, depth: usize) -> GridView {
    assert!(depth >= 1, "grid depth must be at least 1");
    let mut rows: Vec<GridRow> = (0..book.n_competitors())
        .map(|competitor| GridRow {
            competitor,
            back: book.level_cells(competitor, Side::Back, depth),
            lay: book.level_cells(competitor, Side::Lay, depth),
            favourite_odds: favourite_odds(book, competitor),
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &GridRow| (r.favourite_odds.is_none(), r.favourite_odds.unwrap_or(f64::INFINITY), r.competitor);
        key(a).partial_cmp(&key(b)).expect("odds are finite")
    });
    GridView { rows, depth }
}

/// Full depth for one competitor as a sparse list: only ticks carrying
/// unmatched stake appear, ascending odds.
pub fn ladder_view(book: &MarketBook, competitor: usize) -> Result<Vec<LadderCell>, ExchangeError> {
    if competitor >= book.n_competitors() {
        return Err(ExchangeError::UnknownCompetitor(competitor));
    }
    let mut cells: Vec<LadderCell> = Vec::new();
    for (odds, back, lay) in book.nonempty_cells(competitor) {
        cells.push(LadderCell { odds, back, lay });
    }
    Ok(cells)
}
