//! Mid-price-centred order book: states indexed `-d'..=d'` around the centre
//! `ceil(p/2)`, where `p` is the sum of ask and bid in absolute coordinates
//! (twice the mid-price).
//!
//! Clearing in this frame is order matching re-indexed to the window,
//! followed by a re-centering shift; orders shifted out of the window are
//! cancelled. A valid centred state keeps both sides non-empty, ask above
//! bid, and satisfies the centering identity `ask + bid + (p mod 2) = 0` in
//! window coordinates.

use crate::book::{BookState, Depth};
use crate::matching::clear;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CentredError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
    #[error("clearing wiped out one side of the centred book")]
    SideWipedOut,
    #[error("centred level at absolute price {price} falls outside the target grid 1..={d}")]
    OutOfGrid { price: i64, d: u32 },
    #[error("pre-image enumeration exceeded budget of {0} candidates")]
    BudgetExceeded(u64),
    #[error("invalid centred state: {0}")]
    Invalid(String),
}

/// Round-up half: the smallest integer at or above `p / 2`, any sign of `p`.
pub fn ceil_half(p: i64) -> i64 {
    (p + p.rem_euclid(2)) / 2
}

/// Remainder of `p` modulo 2, always in `{0, 1}`.
pub fn parity(p: i64) -> i64 {
    p.rem_euclid(2)
}

/// A window pair of depth arrays indexed `-d'..=d'` (array slot 0 is `-d'`),
/// without the centred-state invariants: this is the ambient space that order
/// flow and clearing pass through.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CentredSides {
    d_prime: u32,
    buy: Vec<Depth>,
    sell: Vec<Depth>,
}

impl CentredSides {
    pub fn new(d_prime: u32, buy: Vec<Depth>, sell: Vec<Depth>) -> Result<Self, CentredError> {
        let len = 2 * d_prime as usize + 1;
        if buy.len() != len || sell.len() != len {
            return Err(CentredError::Invalid(format!(
                "window arrays must have length {}, got {} and {}",
                len,
                buy.len(),
                sell.len()
            )));
        }
        if buy.iter().chain(&sell).any(|&v| v < 0) {
            return Err(CentredError::Invalid("negative depth".into()));
        }
        Ok(Self { d_prime, buy, sell })
    }

    pub fn zero(d_prime: u32) -> Self {
        let len = 2 * d_prime as usize + 1;
        Self { d_prime, buy: vec![0; len], sell: vec![0; len] }
    }

    /// Build from sparse `(offset, depth)` lists.
    pub fn from_levels(d_prime: u32, buys: &[(i32, Depth)], sells: &[(i32, Depth)]) -> Self {
        let mut s = Self::zero(d_prime);
        for &(j, v) in buys {
            *s.buy_mut(j) += v;
        }
        for &(j, v) in sells {
            *s.sell_mut(j) += v;
        }
        s
    }

    pub fn d_prime(&self) -> u32 {
        self.d_prime
    }

    fn idx(&self, j: i32) -> usize {
        debug_assert!(j.unsigned_abs() <= self.d_prime);
        (j + self.d_prime as i32) as usize
    }

    pub fn buy(&self) -> &[Depth] {
        &self.buy
    }

    pub fn sell(&self) -> &[Depth] {
        &self.sell
    }

    pub fn buy_at(&self, j: i32) -> Depth {
        if j.unsigned_abs() <= self.d_prime { self.buy[self.idx(j)] } else { 0 }
    }

    pub fn sell_at(&self, j: i32) -> Depth {
        if j.unsigned_abs() <= self.d_prime { self.sell[self.idx(j)] } else { 0 }
    }

    pub fn buy_mut(&mut self, j: i32) -> &mut Depth {
        let i = self.idx(j);
        &mut self.buy[i]
    }

    pub fn sell_mut(&mut self, j: i32) -> &mut Depth {
        let i = self.idx(j);
        &mut self.sell[i]
    }

    /// Lowest sell offset; `d'` for an empty sell side (the window-frame
    /// empty-support convention).
    pub fn ask(&self) -> i32 {
        self.sell
            .iter()
            .position(|&v| v > 0)
            .map(|i| i as i32 - self.d_prime as i32)
            .unwrap_or(self.d_prime as i32)
    }

    /// Highest buy offset; `-d'` for an empty buy side.
    pub fn bid(&self) -> i32 {
        self.buy
            .iter()
            .rposition(|&v| v > 0)
            .map(|i| i as i32 - self.d_prime as i32)
            .unwrap_or(-(self.d_prime as i32))
    }

    pub fn both_sides_nonempty(&self) -> bool {
        self.buy.iter().any(|&v| v > 0) && self.sell.iter().any(|&v| v > 0)
    }

    pub fn total_buy(&self) -> Depth {
        self.buy.iter().sum()
    }

    pub fn total_sell(&self) -> Depth {
        self.sell.iter().sum()
    }
}

/// Shift both sides `i` slots: offset `j` takes the value previously at
/// `j + i`, and anything carried past the window boundary is cancelled.
pub fn shift(sides: &CentredSides, i: i32) -> CentredSides {
    let dp = sides.d_prime() as i32;
    let lo = (-dp).max(-dp - i);
    let hi = dp.min(dp - i);
    let mut out = CentredSides::zero(sides.d_prime());
    for j in lo..=hi {
        *out.buy_mut(j) = sides.buy_at(j + i);
        *out.sell_mut(j) = sides.sell_at(j + i);
    }
    out
}

/// A centred order book state: window sides plus `p`, the ask-plus-bid of the
/// absolute frame. Valid states have both sides non-empty, ask above bid and
/// `ask + bid + parity(p) = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CentredState {
    sides: CentredSides,
    p: i64,
}

impl CentredState {
    pub fn new(sides: CentredSides, p: i64) -> Result<Self, CentredError> {
        if !sides.both_sides_nonempty() {
            return Err(CentredError::Invalid("both sides must be non-empty".into()));
        }
        let (a, b) = (sides.ask(), sides.bid());
        if a <= b {
            return Err(CentredError::Invalid(format!("ask {} must exceed bid {}", a, b)));
        }
        if a as i64 + b as i64 + parity(p) != 0 {
            return Err(CentredError::Invalid(format!(
                "centering violated: ask {} + bid {} + parity {} != 0",
                a,
                b,
                parity(p)
            )));
        }
        Ok(Self { sides, p })
    }

    pub fn sides(&self) -> &CentredSides {
        &self.sides
    }

    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn d_prime(&self) -> u32 {
        self.sides.d_prime()
    }

    pub fn ask(&self) -> i32 {
        self.sides.ask()
    }

    pub fn bid(&self) -> i32 {
        self.sides.bid()
    }

    pub fn into_parts(self) -> (CentredSides, i64) {
        (self.sides, self.p)
    }
}

#[derive(Serialize, Deserialize)]
struct CentredStateRepr {
    d_prime: u32,
    p: i64,
    buy: Vec<Depth>,
    sell: Vec<Depth>,
}

impl Serialize for CentredState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CentredStateRepr {
            d_prime: self.d_prime(),
            p: self.p,
            buy: self.sides.buy().to_vec(),
            sell: self.sides.sell().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CentredState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = CentredStateRepr::deserialize(deserializer)?;
        let sides = CentredSides::new(repr.d_prime, repr.buy, repr.sell).map_err(serde::de::Error::custom)?;
        CentredState::new(sides, repr.p).map_err(serde::de::Error::custom)
    }
}

/// Re-centre an ordered window pair: bump `p` by `ask + bid + parity(p)` and
/// shift the book by the resulting change of centre. Requires both sides
/// non-empty with ask above bid; the output always satisfies the centred
/// invariants.
pub fn center(sides: &CentredSides, p: i64) -> Result<CentredState, CentredError> {
    if !sides.both_sides_nonempty() {
        return Err(CentredError::PreconditionViolated("both sides must be non-empty"));
    }
    let (a, b) = (sides.ask() as i64, sides.bid() as i64);
    if a <= b {
        return Err(CentredError::PreconditionViolated("ask must exceed bid"));
    }
    let p_new = p + a + b + parity(p);
    let s = ceil_half(p_new) - ceil_half(p);
    let shifted = shift(sides, s as i32);
    CentredState::new(shifted, p_new)
}

fn sides_to_book(sides: &CentredSides) -> BookState {
    BookState::new(sides.buy().to_vec(), sides.sell().to_vec()).expect("window pair is a valid book")
}

fn book_to_sides(book: &BookState, d_prime: u32) -> CentredSides {
    CentredSides::new(d_prime, book.buy().to_vec(), book.sell().to_vec()).expect("grid sizes match")
}

/// Clearing in the centred frame: order matching re-indexed to the window,
/// then re-centering. Fixes valid centred states exactly. Fails with
/// `SideWipedOut` when matching empties a side, which a flow model obeying
/// the no-wipe-out rate assumptions never triggers.
pub fn clear_centred(sides: &CentredSides, p: i64) -> Result<CentredState, CentredError> {
    if !sides.both_sides_nonempty() {
        return Err(CentredError::PreconditionViolated("both sides must be non-empty"));
    }
    let matched = clear(&sides_to_book(sides)).cleared;
    if !matched.both_sides_nonempty() {
        return Err(CentredError::SideWipedOut);
    }
    center(&book_to_sides(&matched, sides.d_prime()), p)
}

/// View an admissible absolute book in the centred frame, dropping levels
/// farther than `d'` from the centre. Fails when either side is empty or the
/// spread exceeds the window (the best levels themselves would be dropped).
pub fn to_centred(state: &BookState, d_prime: u32) -> Result<CentredState, CentredError> {
    if !state.is_admissible() {
        return Err(CentredError::PreconditionViolated("state must be admissible"));
    }
    if !state.both_sides_nonempty() {
        return Err(CentredError::PreconditionViolated("both sides must be non-empty"));
    }
    let (ask, bid) = state.ask_bid();
    let p = ask as i64 + bid as i64;
    if ask as i64 - bid as i64 > 2 * d_prime as i64 {
        return Err(CentredError::PreconditionViolated("spread exceeds the centred window"));
    }
    let origin = ceil_half(p);
    let mut sides = CentredSides::zero(d_prime);
    for price in 1..=state.d() as i64 {
        let j = price - origin;
        if j.unsigned_abs() <= d_prime as u64 {
            *sides.buy_mut(j as i32) = state.buy_at(price as u32);
            *sides.sell_mut(j as i32) = state.sell_at(price as u32);
        }
    }
    CentredState::new(sides, p)
}

/// Map a centred state back to an absolute grid of `d` prices. Only zero
/// depth may fall off the grid; a non-empty level outside `1..=d` is an
/// error. Levels dropped by `to_centred` are not recovered.
pub fn from_centred(state: &CentredState, d: u32) -> Result<BookState, CentredError> {
    let origin = ceil_half(state.p());
    let dp = state.d_prime() as i32;
    let mut buy = vec![0; d as usize];
    let mut sell = vec![0; d as usize];
    for j in -dp..=dp {
        let (bv, sv) = (state.sides().buy_at(j), state.sides().sell_at(j));
        if bv == 0 && sv == 0 {
            continue;
        }
        let price = j as i64 + origin;
        if price < 1 || price > d as i64 {
            return Err(CentredError::OutOfGrid { price, d });
        }
        buy[price as usize - 1] = bv;
        sell[price as usize - 1] = sv;
    }
    Ok(BookState::new(buy, sell).expect("depths are non-negative"))
}

/// All vectors of non-negative integers of length `len` with entries summing
/// to `total`, in lexicographic order.
fn compositions(total: Depth, len: usize) -> Vec<Vec<Depth>> {
    if len == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for rest in compositions(total - first, len - 1) {
            let mut v = Vec::with_capacity(len);
            v.push(first);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Enumerate the states that clear (in the centred frame) to `target`.
///
/// Every pre-image decomposes into a re-centering shift with free boundary
/// content in the slots the shift vacates, and a matched-volume pair that
/// order matching removes. `max_boundary` bounds each free boundary
/// coefficient, `max_matched` bounds the matched volume per side, and
/// `p_window` restricts the pre-image `p'`. Output order is deterministic:
/// shifts ascending, then `p'`, boundary content, matched volume.
pub fn enumerate_centred_preimage(
    target: &CentredState,
    max_boundary: Depth,
    max_matched: Depth,
    p_window: std::ops::RangeInclusive<i64>,
    budget: u64,
) -> Result<Vec<(CentredSides, i64)>, CentredError> {
    let dp = target.d_prime() as i32;
    let x = target.sides();
    let (sell_sup, buy_inf) = (
        x.sell().iter().rposition(|&v| v > 0).map(|i| i as i32 - dp).unwrap_or(-dp),
        x.buy().iter().position(|&v| v > 0).map(|i| i as i32 - dp).unwrap_or(dp),
    );
    let s_lo = sell_sup - dp;
    let s_hi = dp + buy_inf;
    let q0 = ceil_half(target.p());
    let mut out = Vec::new();
    let mut work: u64 = 0;
    for s in s_lo..=s_hi {
        // p' with ceil(p'/2) = ceil(p/2) + s: exactly 2q-1 and 2q
        let q = q0 + s as i64;
        let p_candidates = [2 * q - 1, 2 * q];
        let base = shift(x, s);
        // slots vacated by the shift carry free content: top of the sell side
        // for a positive shift, bottom of the buy side for a negative one
        let free_slots: Vec<i32> = if s > 0 {
            ((dp - s + 1).max(-dp)..=dp).collect()
        } else if s < 0 {
            (-dp..=(-dp - s - 1).min(dp)).collect()
        } else {
            Vec::new()
        };
        let assignments: Vec<Vec<Depth>> = {
            let mut acc: Vec<Vec<Depth>> = vec![vec![]];
            for _ in &free_slots {
                acc = acc
                    .into_iter()
                    .flat_map(|v| {
                        (0..=max_boundary).map(move |c| {
                            let mut w = v.clone();
                            w.push(c);
                            w
                        })
                    })
                    .collect();
            }
            acc
        };
        for p_prime in p_candidates {
            if !p_window.contains(&p_prime) {
                continue;
            }
            for assign in &assignments {
                let mut pre = base.clone();
                for (&slot, &c) in free_slots.iter().zip(assign) {
                    if s > 0 {
                        *pre.sell_mut(slot) = c;
                    } else {
                        *pre.buy_mut(slot) = c;
                    }
                }
                // matched-volume pairs on top of the shifted book
                let (a, b) = (pre.ask(), pre.bid());
                let sell_span = (a + dp + 1) as usize; // slots -d'..=a
                let buy_span = (dp - b + 1) as usize; // slots b..=d'
                for v in 0..=max_matched {
                    for z_buy in compositions(v, buy_span) {
                        let zb_inf = z_buy.iter().position(|&c| c > 0).map(|i| b + i as i32).unwrap_or(dp + 1);
                        for z_sell in compositions(v, sell_span) {
                            work += 1;
                            if work > budget {
                                return Err(CentredError::BudgetExceeded(budget));
                            }
                            let zs_sup =
                                z_sell.iter().rposition(|&c| c > 0).map(|i| -dp + i as i32).unwrap_or(-dp - 1);
                            if zs_sup > zb_inf {
                                continue;
                            }
                            let mut cand = pre.clone();
                            for (i, &c) in z_buy.iter().enumerate() {
                                *cand.buy_mut(b + i as i32) += c;
                            }
                            for (i, &c) in z_sell.iter().enumerate() {
                                *cand.sell_mut(-dp + i as i32) += c;
                            }
                            out.push((cand, p_prime));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Replace depth far from the opposite best price by resting defaults:
/// buy levels below `ask - window` become `default_buy`, sell levels above
/// `bid + window` become `default_sell`. Idempotent. The caller keeps the
/// spread at or below `window`, otherwise the padding would overwrite best
/// levels and break the centred invariants.
pub fn pad_outside_window(
    state: &CentredState,
    window: u32,
    default_sell: Depth,
    default_buy: Depth,
) -> CentredState {
    let dp = state.d_prime() as i32;
    let (a, b) = (state.ask(), state.bid());
    let mut sides = state.sides().clone();
    for j in -dp..=dp {
        if j < a - window as i32 {
            *sides.buy_mut(j) = default_buy;
        }
        if j > b + window as i32 {
            *sides.sell_mut(j) = default_sell;
        }
    }
    CentredState::new(sides, state.p()).expect("padding preserves centred invariants when spread <= window")
}
