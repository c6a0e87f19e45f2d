//! Fixed-coordinate order book state: depth arrays per price, admissibility,
//! and the cumulative statistics used by clearing and the generator.
//!
//! Prices live on the integer grid `1..=d`. The ask is the lowest price with
//! outstanding sell volume and the bid the highest price with outstanding buy
//! volume; an empty sell side reports the beyond-grid sentinel `d + 1`
//! (standing in for "infinite ask") and an empty buy side reports `0`. These
//! sentinels keep every price comparison total: `d + 1` is larger than any
//! price and `0` smaller.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Queue depth at one price level, in model volume units. Exact integer
/// arithmetic throughout; no floating-point depths.
pub type Depth = i64;

/// Errors from constructing or deserializing book state.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BookError {
    #[error("buy and sell arrays must both have length d = {d}, got {buy} and {sell}")]
    LengthMismatch { d: usize, buy: usize, sell: usize },
    #[error("depth arrays must be non-negative, found {value} at price {price} on the {side} side")]
    NegativeDepth { side: &'static str, price: u32, value: Depth },
    #[error("price grid must have d >= 1")]
    EmptyGrid,
}

/// A configuration of limit orders: outstanding buy and sell volume per price
/// on the grid `1..=d`. This is a point of the ambient configuration space;
/// it is *not* required to be admissible (buy and sell supports may cross).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BookState {
    buy: Vec<Depth>,
    sell: Vec<Depth>,
}

impl BookState {
    /// Build a state from 1-based depth arrays (`buy[0]` is price 1).
    pub fn new(buy: Vec<Depth>, sell: Vec<Depth>) -> Result<Self, BookError> {
        if buy.len() != sell.len() {
            return Err(BookError::LengthMismatch { d: buy.len(), buy: buy.len(), sell: sell.len() });
        }
        if buy.is_empty() {
            return Err(BookError::EmptyGrid);
        }
        for (side, arr) in [("buy", &buy), ("sell", &sell)] {
            if let Some(i) = arr.iter().position(|&v| v < 0) {
                return Err(BookError::NegativeDepth { side, price: i as u32 + 1, value: arr[i] });
            }
        }
        Ok(Self { buy, sell })
    }

    /// All-zero book on a grid of `d` prices.
    pub fn empty(d: u32) -> Self {
        assert!(d >= 1, "price grid must have d >= 1");
        Self { buy: vec![0; d as usize], sell: vec![0; d as usize] }
    }

    pub fn d(&self) -> u32 {
        self.buy.len() as u32
    }

    pub fn buy(&self) -> &[Depth] {
        &self.buy
    }

    pub fn sell(&self) -> &[Depth] {
        &self.sell
    }

    /// Buy depth at `price` (1-based); zero outside the grid.
    pub fn buy_at(&self, price: u32) -> Depth {
        if price >= 1 && price <= self.d() { self.buy[price as usize - 1] } else { 0 }
    }

    /// Sell depth at `price` (1-based); zero outside the grid.
    pub fn sell_at(&self, price: u32) -> Depth {
        if price >= 1 && price <= self.d() { self.sell[price as usize - 1] } else { 0 }
    }

    /// Lowest price with sell volume, or `d + 1` when the sell side is empty.
    pub fn ask(&self) -> u32 {
        self.sell
            .iter()
            .position(|&v| v > 0)
            .map(|i| i as u32 + 1)
            .unwrap_or(self.d() + 1)
    }

    /// Highest price with buy volume, or `0` when the buy side is empty.
    pub fn bid(&self) -> u32 {
        self.buy
            .iter()
            .rposition(|&v| v > 0)
            .map(|i| i as u32 + 1)
            .unwrap_or(0)
    }

    /// `(ask, bid)` with the empty-side sentinels `d + 1` and `0`.
    pub fn ask_bid(&self) -> (u32, u32) {
        (self.ask(), self.bid())
    }

    /// An admissible book has every outstanding buy priced strictly below
    /// every outstanding sell. Under the sentinel conventions this is just
    /// `ask > bid`; the empty book is admissible.
    pub fn is_admissible(&self) -> bool {
        self.ask() > self.bid()
    }

    /// Both sides hold at least one order.
    pub fn both_sides_nonempty(&self) -> bool {
        self.buy.iter().any(|&v| v > 0) && self.sell.iter().any(|&v| v > 0)
    }

    pub fn total_buy(&self) -> Depth {
        self.buy.iter().sum()
    }

    pub fn total_sell(&self) -> Depth {
        self.sell.iter().sum()
    }

    /// Consume into the raw `(buy, sell)` arrays.
    pub fn into_parts(self) -> (Vec<Depth>, Vec<Depth>) {
        (self.buy, self.sell)
    }

    /// Two-row CSV: buy depths on the first line, sell depths on the second.
    pub fn to_csv(&self) -> String {
        let row = |v: &[Depth]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!("{}\n{}\n", row(&self.buy), row(&self.sell))
    }

    /// Parse the two-row CSV form. Exact integer round-trip with `to_csv`.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<Depth>, _> = line.split(',').map(|t| t.trim().parse::<Depth>()).collect();
            rows.push(row.map_err(|e| format!("line {}: {}", ln + 1, e))?);
        }
        if rows.len() != 2 {
            return Err(format!("expected 2 rows (buy, sell), got {}", rows.len()));
        }
        let sell = rows.pop().unwrap();
        let buy = rows.pop().unwrap();
        Self::new(buy, sell).map_err(|e| e.to_string())
    }
}

impl fmt::Debug for BookState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BookState {{ buy: {:?}, sell: {:?} }}", self.buy, self.sell)
    }
}

#[derive(Serialize, Deserialize)]
struct BookStateRepr {
    d: u32,
    buy: Vec<Depth>,
    sell: Vec<Depth>,
}

impl Serialize for BookState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        BookStateRepr { d: self.d(), buy: self.buy.clone(), sell: self.sell.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BookState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = BookStateRepr::deserialize(deserializer)?;
        if repr.buy.len() != repr.d as usize || repr.sell.len() != repr.d as usize {
            return Err(serde::de::Error::custom(format!(
                "buy/sell lengths {}/{} do not match d = {}",
                repr.buy.len(),
                repr.sell.len(),
                repr.d
            )));
        }
        BookState::new(repr.buy, repr.sell).map_err(serde::de::Error::custom)
    }
}

/// Keep entries at prices `<= i`, zero the rest. `i <= 0` gives all zeros,
/// `i >= d + 1` the identity.
pub fn truncate_below(side: &[Depth], i: i64) -> Vec<Depth> {
    let d = side.len() as i64;
    let mut out = vec![0; side.len()];
    if i >= 1 {
        let hi = i.min(d) as usize;
        out[..hi].copy_from_slice(&side[..hi]);
    }
    out
}

/// Keep entries at prices `>= i`, zero the rest. `i <= 0` gives the identity,
/// `i >= d + 1` all zeros.
pub fn truncate_above(side: &[Depth], i: i64) -> Vec<Depth> {
    let d = side.len() as i64;
    let mut out = vec![0; side.len()];
    if i <= d {
        let lo = i.max(1) as usize - 1;
        out[lo..].copy_from_slice(&side[lo..]);
    }
    out
}

/// Cumulative depth statistics for one state, extended half a step past each
/// end of the grid so that every lookup the clearing formulas make is total:
///
/// * `cum_buy_above(k)` is the buy volume at prices `>= k`, defined for
///   `k in 0..=d+1` (`0` behaves like `1`, `d + 1` is `0`);
/// * `cum_sell_below(k)` is the sell volume at prices `<= k`
///   (`0` is `0`, `d + 1` behaves like `d`);
/// * `imbalance(k)` is their difference, non-decreasing in `k`;
/// * `extended_ask`/`extended_bid` are the first price where the imbalance
///   turns positive and the last where it is negative, with the same
///   sentinels as `ask`/`bid`. On admissible books they *are* the ask and
///   bid; on crossed books they extend those notions and drive clearing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookProfile {
    d: u32,
    cum_buy_above: Vec<Depth>,
    cum_sell_below: Vec<Depth>,
    p_a: u32,
    p_b: u32,
}

impl BookProfile {
    pub fn new(state: &BookState) -> Self {
        let d = state.d() as usize;
        // index k in 0..=d+1
        let mut cum_buy_above = vec![0; d + 2];
        for k in (1..=d).rev() {
            cum_buy_above[k] = cum_buy_above[k + 1] + state.buy()[k - 1];
        }
        cum_buy_above[0] = cum_buy_above[1];
        let mut cum_sell_below = vec![0; d + 2];
        for k in 1..=d {
            cum_sell_below[k] = cum_sell_below[k - 1] + state.sell()[k - 1];
        }
        cum_sell_below[d + 1] = cum_sell_below[d];
        let mut p_a = d as u32 + 1;
        let mut p_b = 0;
        for k in 1..=d {
            let g = cum_sell_below[k] - cum_buy_above[k];
            if g > 0 {
                p_a = k as u32;
                break;
            }
        }
        for k in (1..=d).rev() {
            let g = cum_sell_below[k] - cum_buy_above[k];
            if g < 0 {
                p_b = k as u32;
                break;
            }
        }
        Self { d: d as u32, cum_buy_above, cum_sell_below, p_a, p_b }
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Buy volume at prices `>= k`, for `k in 0..=d+1`.
    pub fn cum_buy_above(&self, k: u32) -> Depth {
        self.cum_buy_above[(k as usize).min(self.d as usize + 1)]
    }

    /// Sell volume at prices `<= k`, for `k in 0..=d+1`.
    pub fn cum_sell_below(&self, k: u32) -> Depth {
        self.cum_sell_below[(k as usize).min(self.d as usize + 1)]
    }

    /// Sell-minus-buy cumulative imbalance; non-decreasing in `k`.
    pub fn imbalance(&self, k: u32) -> Depth {
        self.cum_sell_below(k) - self.cum_buy_above(k)
    }

    /// First price with positive imbalance; `d + 1` when there is none.
    pub fn extended_ask(&self) -> u32 {
        self.p_a
    }

    /// Last price with negative imbalance; `0` when there is none.
    pub fn extended_bid(&self) -> u32 {
        self.p_b
    }

    /// Largest price `i` with `cum_buy_above(i) >= z`; `0` when the set is
    /// empty (volume `z` exceeds the whole buy side).
    pub fn buy_inverse(&self, z: Depth) -> u32 {
        for k in (1..=self.d as usize).rev() {
            if self.cum_buy_above[k] >= z {
                return k as u32;
            }
        }
        0
    }

    /// Smallest price `i` with `cum_sell_below(i) >= z`; `d + 1` when the set
    /// is empty (volume `z` exceeds the whole sell side).
    pub fn sell_inverse(&self, z: Depth) -> u32 {
        for k in 1..=self.d as usize {
            if self.cum_sell_below[k] >= z {
                return k as u32;
            }
        }
        self.d + 1
    }
}

/// Matched volume removed from each side by clearing. Buy and sell totals are
/// always equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedOrders {
    pub buy: Vec<Depth>,
    pub sell: Vec<Depth>,
}

impl ExecutedOrders {
    pub fn none(d: u32) -> Self {
        Self { buy: vec![0; d as usize], sell: vec![0; d as usize] }
    }

    pub fn total_buy(&self) -> Depth {
        self.buy.iter().sum()
    }

    pub fn total_sell(&self) -> Depth {
        self.sell.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_book() -> BookState {
        // d = 9 book with ask 6, bid 4
        BookState::new(vec![1, 3, 2, 1, 0, 0, 0, 0, 0], vec![0, 0, 0, 0, 0, 1, 0, 3, 2]).unwrap()
    }

    #[test]
    fn ask_bid_examples() {
        assert_eq!(fig_book().ask_bid(), (6, 4));
        let empty = BookState::empty(5);
        assert_eq!(empty.ask_bid(), (6, 0)); // sentinels d+1 and 0
        let single = BookState::new(vec![0, 1, 0, 0], vec![0, 0, 0, 2]).unwrap();
        assert_eq!(single.ask_bid(), (4, 2));
    }

    #[test]
    fn admissibility() {
        assert!(fig_book().is_admissible());
        let crossed = BookState::new(vec![0, 0, 2, 0], vec![0, 2, 0, 0]).unwrap();
        assert!(!crossed.is_admissible());
        assert!(BookState::empty(4).is_admissible()); // d+1 > 0
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate_below(&[1, 3, 2, 1, 0, 0, 2, 0, 0], 4), vec![1, 3, 2, 1, 0, 0, 0, 0, 0]);
        assert_eq!(truncate_above(&[0, 0, 1, 1, 1, 1, 0, 3, 2], 5), vec![0, 0, 0, 0, 1, 1, 0, 3, 2]);
        assert_eq!(truncate_below(&[5, 1, 2], 0), vec![0, 0, 0]);
        assert_eq!(truncate_below(&[5, 1, 2], 7), vec![5, 1, 2]);
        assert_eq!(truncate_above(&[5, 1, 2], 0), vec![5, 1, 2]);
        assert_eq!(truncate_above(&[5, 1, 2], 4), vec![0, 0, 0]);
    }

    #[test]
    fn profile_cumulative_and_inverses() {
        let p = BookProfile::new(&fig_book());
        let b: Vec<Depth> = (1..=9).map(|k| p.cum_buy_above(k)).collect();
        let s: Vec<Depth> = (1..=9).map(|k| p.cum_sell_below(k)).collect();
        assert_eq!(b, vec![7, 6, 3, 1, 0, 0, 0, 0, 0]);
        assert_eq!(s, vec![0, 0, 0, 0, 0, 1, 1, 4, 6]);
        assert_eq!(p.buy_inverse(2), 3);
        assert_eq!(p.sell_inverse(2), 8);
        // out-of-volume lookups hit the sentinels
        assert_eq!(p.buy_inverse(100), 0);
        assert_eq!(p.sell_inverse(100), 10);
    }

    #[test]
    fn profile_crossed_book() {
        // crossed configuration: buys up to 7, sells down to 3
        let x = BookState::new(vec![1, 3, 2, 1, 0, 0, 2, 0, 0], vec![0, 0, 1, 1, 1, 1, 0, 3, 2]).unwrap();
        let p = BookProfile::new(&x);
        let g: Vec<Depth> = (1..=9).map(|k| p.imbalance(k)).collect();
        assert_eq!(g, vec![-9, -8, -4, -1, 1, 2, 2, 7, 9]);
        assert_eq!(p.extended_bid(), 4);
        assert_eq!(p.extended_ask(), 5);
    }

    fn all_sides(d: usize, max: Depth) -> Vec<Vec<Depth>> {
        let mut out = vec![vec![]];
        for _ in 0..d {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (0..=max).map(move |x| {
                        let mut w = v.clone();
                        w.push(x);
                        w
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn exhaustive_small_grid_properties() {
        let sides = all_sides(4, 2);
        for buy in &sides {
            for sell in &sides {
                let x = BookState::new(buy.clone(), sell.clone()).unwrap();
                let p = BookProfile::new(&x);
                for k in 0..=4 {
                    assert!(p.imbalance(k) <= p.imbalance(k + 1), "imbalance not monotone for {:?}", x);
                }
                if x.is_admissible() {
                    assert_eq!(p.extended_ask(), x.ask(), "extended ask != ask on admissible {:?}", x);
                    assert_eq!(p.extended_bid(), x.bid(), "extended bid != bid on admissible {:?}", x);
                }
                for i in -1..=6i64 {
                    let lo = truncate_below(buy, i);
                    let hi = truncate_above(buy, i + 1);
                    let sum: Vec<Depth> = lo.iter().zip(&hi).map(|(a, b)| a + b).collect();
                    assert_eq!(&sum, buy);
                }
            }
        }
    }

    #[test]
    fn json_and_csv_round_trip() {
        let x = fig_book();
        let json = serde_json::to_string(&x).unwrap();
        assert!(json.contains("\"d\":9"));
        let back: BookState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
        let csv = x.to_csv();
        assert_eq!(BookState::from_csv(&csv).unwrap(), x);
        assert!(serde_json::from_str::<BookState>("{\"d\":3,\"buy\":[1,2],\"sell\":[0,0,0]}").is_err());
        assert!(serde_json::from_str::<BookState>("{\"d\":2,\"buy\":[1,-2],\"sell\":[0,0]}").is_err());
    }
}
