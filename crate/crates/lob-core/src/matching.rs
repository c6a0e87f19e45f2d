//! Market clearing by order matching.
//!
//! [`clear`] projects an arbitrary order configuration onto the admissible
//! set by matching crossed buy and sell volume, maximizing traded volume
//! under price priority. It is the unique map with these properties:
//!
//! * (A1) executed volume is non-negative,
//! * (A2) executed buy and sell totals are equal,
//! * (A3) every matched buy is priced at or above every matched sell,
//! * (A4) matched orders have priority over unmatched ones on both sides,
//!
//! and it fixes exactly the admissible configurations. [`brute_force_clear`]
//! realizes the same map by exhaustive search over executed-volume pairs and
//! serves as the independent oracle. [`apply_event`] is the closed-form
//! per-event fast path, and [`clear_batch`] nets a batch of events before
//! clearing once, as in a frequent batch auction.

use crate::book::{truncate_above, truncate_below, BookProfile, BookState, Depth, ExecutedOrders};
use crate::event::{Event, EventKind};
use serde::{Deserialize, Serialize};

/// Errors for clearing-related operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
    #[error("batched events drive the {side} queue at price {price} negative")]
    NegativeQueue { side: &'static str, price: i32 },
    #[error("search space of {candidates} executed-volume candidates exceeds budget {budget}")]
    BudgetExceeded { candidates: u128, budget: u128 },
}

/// Side of the book, for trade reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

/// One executed level in a clearing report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub side: Side,
    pub price: u32,
    pub volume: Depth,
}

/// Outcome of clearing one configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearingResult {
    /// The admissible post-clearing book.
    pub cleared: BookState,
    /// Matched volume removed from each side; `cleared + executed` equals the
    /// input elementwise.
    pub executed: ExecutedOrders,
    /// Executed levels, sells by ascending price then buys by descending
    /// price. Presentation only; equality of results is decided by `cleared`
    /// and `executed`.
    pub trades: Vec<Trade>,
}

fn trades_from_executed(executed: &ExecutedOrders) -> Vec<Trade> {
    let mut trades = Vec::new();
    for (i, &v) in executed.sell.iter().enumerate() {
        if v > 0 {
            trades.push(Trade { side: Side::Sell, price: i as u32 + 1, volume: v });
        }
    }
    for (i, &v) in executed.buy.iter().enumerate().rev() {
        if v > 0 {
            trades.push(Trade { side: Side::Buy, price: i as u32 + 1, volume: v });
        }
    }
    trades
}

fn result_from_cleared(state: &BookState, buy: Vec<Depth>, sell: Vec<Depth>) -> ClearingResult {
    let executed = ExecutedOrders {
        buy: state.buy().iter().zip(&buy).map(|(a, b)| a - b).collect(),
        sell: state.sell().iter().zip(&sell).map(|(a, b)| a - b).collect(),
    };
    let cleared = BookState::new(buy, sell).expect("clearing keeps depths non-negative");
    debug_assert!(cleared.is_admissible());
    debug_assert_eq!(executed.total_buy(), executed.total_sell());
    let trades = trades_from_executed(&executed);
    ClearingResult { cleared, executed, trades }
}

/// Match crossed volume and return the admissible remainder.
///
/// Two-branch closed form on each side, driven by the extended bid/ask of the
/// cumulative imbalance; the second branch of either side covers wipe-outs
/// where that side empties entirely. Identity exactly on admissible books;
/// idempotent.
pub fn clear(state: &BookState) -> ClearingResult {
    let p = BookProfile::new(state);
    let pb = p.extended_bid();
    let pa = p.extended_ask();

    let g_pb = p.imbalance(pb);
    let buy = if g_pb <= -state.buy_at(pb) {
        truncate_below(state.buy(), pb as i64)
    } else {
        // pb >= 1 here: at pb = 0 the imbalance is -total_buy <= 0
        let mut v = truncate_below(state.buy(), pb as i64 - 1);
        v[pb as usize - 1] = (-g_pb).max(0);
        v
    };

    let g_pa = p.imbalance(pa);
    let sell = if g_pa >= state.sell_at(pa) {
        truncate_above(state.sell(), pa as i64)
    } else {
        // pa <= d here: at pa = d + 1 the imbalance is total_sell >= 0
        let mut v = truncate_above(state.sell(), pa as i64 + 1);
        v[pa as usize - 1] = g_pa.max(0);
        v
    };

    result_from_cleared(state, buy, sell)
}

/// Which closed-form branch [`apply_event`] took, for coverage accounting.
/// `case` is 1..=4 in event-kind order (limit buy, limit sell, cancel buy,
/// cancel sell); `sub` numbers the sub-cases top to bottom (1..=4 for limit
/// orders, 1..=2 for cancellations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaseTrace {
    pub case: u8,
    pub sub: u8,
}

/// Result of the per-event fast path: the cleared state plus its new bid and
/// ask, produced without re-profiling the perturbed configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventOutcome {
    pub state: BookState,
    pub bid: u32,
    pub ask: u32,
    pub trace: CaseTrace,
}

fn set_level(side: &[Depth], price: u32, value: Depth) -> Vec<Depth> {
    let mut v = side.to_vec();
    v[price as usize - 1] = value;
    v
}

fn add_level(side: &[Depth], price: u32, delta: Depth) -> Vec<Depth> {
    let mut v = side.to_vec();
    v[price as usize - 1] += delta;
    v
}

/// Closed-form application of one elementary event followed by clearing.
///
/// Requires an admissible state with both sides non-empty, size strictly
/// below both total side volumes, and (for cancellations) no oversized
/// cancel. Equals `clear` of the perturbed configuration, returning the new
/// bid and ask directly. Flow models satisfying the standing rate assumptions
/// assign rate zero wherever these preconditions fail; other callers should
/// fall back to [`clear`].
pub fn apply_event(state: &BookState, event: &Event) -> Result<EventOutcome, MatchError> {
    if !state.is_admissible() {
        return Err(MatchError::PreconditionViolated("state must be admissible"));
    }
    if !state.both_sides_nonempty() {
        return Err(MatchError::PreconditionViolated("both sides must be non-empty"));
    }
    if event.price < 1 || event.price > state.d() as i32 {
        return Err(MatchError::PreconditionViolated("event price outside grid"));
    }
    if event.size < 1 {
        return Err(MatchError::PreconditionViolated("event size must be at least 1"));
    }
    let p = BookProfile::new(state);
    let z = event.size;
    if z >= p.cum_buy_above(1).min(p.cum_sell_below(state.d())) {
        return Err(MatchError::PreconditionViolated("size must be below both total side volumes"));
    }
    let k = event.price as u32;
    let (a, b) = state.ask_bid();

    let outcome = match event.kind {
        EventKind::LimitBuy => {
            if k <= b {
                EventOutcome {
                    state: BookState::new(add_level(state.buy(), k, z), state.sell().to_vec()).unwrap(),
                    bid: b,
                    ask: a,
                    trace: CaseTrace { case: 1, sub: 1 },
                }
            } else if k < a {
                EventOutcome {
                    state: BookState::new(add_level(state.buy(), k, z), state.sell().to_vec()).unwrap(),
                    bid: k,
                    ask: a,
                    trace: CaseTrace { case: 1, sub: 2 },
                }
            } else if k < p.sell_inverse(z) {
                // partial execution: the new buy eats every sell priced <= k
                let filled = p.cum_sell_below(k);
                EventOutcome {
                    state: BookState::new(
                        add_level(state.buy(), k, z - filled),
                        truncate_above(state.sell(), k as i64 + 1),
                    )
                    .unwrap(),
                    bid: k,
                    ask: p.sell_inverse(filled + 1),
                    trace: CaseTrace { case: 1, sub: 3 },
                }
            } else {
                // full execution against the cheapest sells
                let si = p.sell_inverse(z);
                let sell = set_level(&truncate_above(state.sell(), si as i64 + 1), si, p.cum_sell_below(si) - z);
                EventOutcome {
                    state: BookState::new(state.buy().to_vec(), sell).unwrap(),
                    bid: b,
                    ask: p.sell_inverse(z + 1),
                    trace: CaseTrace { case: 1, sub: 4 },
                }
            }
        }
        EventKind::LimitSell => {
            if k >= a {
                EventOutcome {
                    state: BookState::new(state.buy().to_vec(), add_level(state.sell(), k, z)).unwrap(),
                    bid: b,
                    ask: a,
                    trace: CaseTrace { case: 2, sub: 1 },
                }
            } else if k > b {
                EventOutcome {
                    state: BookState::new(state.buy().to_vec(), add_level(state.sell(), k, z)).unwrap(),
                    bid: b,
                    ask: k,
                    trace: CaseTrace { case: 2, sub: 2 },
                }
            } else if k > p.buy_inverse(z) {
                let filled = p.cum_buy_above(k);
                EventOutcome {
                    state: BookState::new(
                        truncate_below(state.buy(), k as i64 - 1),
                        add_level(state.sell(), k, z - filled),
                    )
                    .unwrap(),
                    bid: p.buy_inverse(filled + 1),
                    ask: k,
                    trace: CaseTrace { case: 2, sub: 3 },
                }
            } else {
                let bi = p.buy_inverse(z);
                let buy = set_level(&truncate_below(state.buy(), bi as i64 - 1), bi, p.cum_buy_above(bi) - z);
                EventOutcome {
                    state: BookState::new(buy, state.sell().to_vec()).unwrap(),
                    bid: p.buy_inverse(z + 1),
                    ask: a,
                    trace: CaseTrace { case: 2, sub: 4 },
                }
            }
        }
        EventKind::CancelBuy => {
            if z > state.buy_at(k) {
                return Err(MatchError::PreconditionViolated("cancellation exceeds standing buy queue"));
            }
            let buy = add_level(state.buy(), k, -z);
            let (bid, sub) = if k == b { (p.buy_inverse(z + 1), 1) } else { (b, 2) };
            EventOutcome {
                state: BookState::new(buy, state.sell().to_vec()).unwrap(),
                bid,
                ask: a,
                trace: CaseTrace { case: 3, sub },
            }
        }
        EventKind::CancelSell => {
            if z > state.sell_at(k) {
                return Err(MatchError::PreconditionViolated("cancellation exceeds standing sell queue"));
            }
            let sell = add_level(state.sell(), k, -z);
            let (ask, sub) = if k == a { (p.sell_inverse(z + 1), 1) } else { (a, 2) };
            EventOutcome {
                state: BookState::new(state.buy().to_vec(), sell).unwrap(),
                bid: b,
                ask,
                trace: CaseTrace { case: 4, sub },
            }
        }
    };
    debug_assert!(outcome.state.is_admissible());
    Ok(outcome)
}

/// Membership test for the clearing pre-image of an admissible `target`:
/// true iff `clear(candidate)` equals `target`, decided from the executed
/// difference alone. With `z = candidate - target`, membership requires
/// non-negative entries, equal matched totals, every matched sell priced at
/// or below every matched buy, matched sells at or below the target ask and
/// matched buys at or above the target bid.
pub fn preimage_contains(candidate: &BookState, target: &BookState) -> Result<bool, MatchError> {
    if !target.is_admissible() {
        return Err(MatchError::PreconditionViolated("pre-image target must be admissible"));
    }
    if candidate.d() != target.d() {
        return Err(MatchError::PreconditionViolated("grid sizes differ"));
    }
    let d = target.d();
    let mut z_buy_total = 0;
    let mut z_sell_total = 0;
    // inf supp(z_buy) and sup supp(z_sell) with empty-support sentinels
    let mut z_buy_min = d + 1;
    let mut z_sell_max = 0;
    for i in 0..d as usize {
        let zb = candidate.buy()[i] - target.buy()[i];
        let zs = candidate.sell()[i] - target.sell()[i];
        if zb < 0 || zs < 0 {
            return Ok(false);
        }
        if zb > 0 && z_buy_min == d + 1 {
            z_buy_min = i as u32 + 1;
        }
        if zs > 0 {
            z_sell_max = i as u32 + 1;
        }
        z_buy_total += zb;
        z_sell_total += zs;
    }
    Ok(z_buy_total == z_sell_total
        && z_sell_max <= z_buy_min
        && z_sell_max <= target.ask()
        && z_buy_min >= target.bid())
}

fn support_bounds(side: &[Depth], d: u32) -> (u32, u32) {
    // (inf supp, sup supp) with sentinels (d + 1, 0) for the empty side
    let inf = side.iter().position(|&v| v > 0).map(|i| i as u32 + 1).unwrap_or(d + 1);
    let sup = side.iter().rposition(|&v| v > 0).map(|i| i as u32 + 1).unwrap_or(0);
    (inf, sup)
}

fn enumerate_sub_vectors(bound: &[Depth]) -> Vec<Vec<Depth>> {
    let mut out: Vec<Vec<Depth>> = vec![vec![]];
    for &b in bound {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=b).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// Exhaustive-search clearing oracle: enumerate every executed-volume pair
/// satisfying (A1)-(A4) with an admissible remainder and assert there is
/// exactly one. Test-only path; `budget` caps the candidate count.
pub fn brute_force_clear(state: &BookState, budget: u128) -> Result<ClearingResult, MatchError> {
    let candidates: u128 = state
        .buy()
        .iter()
        .chain(state.sell())
        .map(|&v| v as u128 + 1)
        .product();
    if candidates > budget {
        return Err(MatchError::BudgetExceeded { candidates, budget });
    }
    let d = state.d();
    let buy_options = enumerate_sub_vectors(state.buy());
    let sell_options = enumerate_sub_vectors(state.sell());
    let mut found: Option<(Vec<Depth>, Vec<Depth>)> = None;
    for zb in &buy_options {
        let zb_total: Depth = zb.iter().sum();
        let (zb_inf, _) = support_bounds(zb, d);
        for zs in &sell_options {
            if zs.iter().sum::<Depth>() != zb_total {
                continue; // (A2)
            }
            let (_, zs_sup) = support_bounds(zs, d);
            if zs_sup > zb_inf {
                continue; // (A3)
            }
            let rem_buy: Vec<Depth> = state.buy().iter().zip(zb).map(|(a, b)| a - b).collect();
            let rem_sell: Vec<Depth> = state.sell().iter().zip(zs).map(|(a, b)| a - b).collect();
            let (rem_sell_inf, _) = support_bounds(&rem_sell, d);
            let (_, rem_buy_sup) = support_bounds(&rem_buy, d);
            if zs_sup > rem_sell_inf || zb_inf < rem_buy_sup {
                continue; // (A4)
            }
            if rem_sell_inf <= rem_buy_sup {
                continue; // remainder must be admissible
            }
            let cand = (zb.clone(), zs.clone());
            assert!(
                found.is_none(),
                "order-matching axioms admit two executions for {:?}: {:?} and {:?}",
                state,
                found,
                cand
            );
            found = Some(cand);
        }
    }
    let (zb, zs) = found.expect("order-matching axioms admit no execution");
    let buy: Vec<Depth> = state.buy().iter().zip(&zb).map(|(a, b)| a - b).collect();
    let sell: Vec<Depth> = state.sell().iter().zip(&zs).map(|(a, b)| a - b).collect();
    Ok(result_from_cleared(state, buy, sell))
}

/// Net a batch of events onto an admissible state and clear once. Events are
/// summed per level first, so a cancellation and an equal arrival at the same
/// price annihilate; the error reports the first level a net cancellation
/// drives negative.
pub fn clear_batch(state: &BookState, events: &[Event]) -> Result<ClearingResult, MatchError> {
    if !state.is_admissible() {
        return Err(MatchError::PreconditionViolated("state must be admissible"));
    }
    let d = state.d() as i32;
    let mut buy = state.buy().to_vec();
    let mut sell = state.sell().to_vec();
    for e in events {
        if e.price < 1 || e.price > d {
            return Err(MatchError::PreconditionViolated("event price outside grid"));
        }
        let idx = e.price as usize - 1;
        let delta = if e.kind.is_cancel() { -e.size } else { e.size };
        if e.kind.is_buy_side() {
            buy[idx] += delta;
        } else {
            sell[idx] += delta;
        }
    }
    for (side, arr) in [("buy", &buy), ("sell", &sell)] {
        if let Some(i) = arr.iter().position(|&v| v < 0) {
            return Err(MatchError::NegativeQueue { side, price: i as i32 + 1 });
        }
    }
    Ok(clear(&BookState::new(buy, sell).unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn book(buy: &[Depth], sell: &[Depth]) -> BookState {
        BookState::new(buy.to_vec(), sell.to_vec()).unwrap()
    }

    #[test]
    fn clear_crossed_example() {
        // crossed configuration: three new sells and two new buys landed on an
        // admissible book with ask 6 and bid 4
        let x = book(&[1, 3, 2, 1, 0, 0, 2, 0, 0], &[0, 0, 1, 1, 1, 1, 0, 3, 2]);
        let r = clear(&x);
        assert_eq!(r.cleared, book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 1, 1, 0, 3, 2]));
        assert_eq!(r.executed.buy, vec![0, 0, 0, 0, 0, 0, 2, 0, 0]);
        assert_eq!(r.executed.sell, vec![0, 0, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(
            r.trades,
            vec![
                Trade { side: Side::Sell, price: 3, volume: 1 },
                Trade { side: Side::Sell, price: 4, volume: 1 },
                Trade { side: Side::Buy, price: 7, volume: 2 },
            ]
        );
    }

    #[test]
    fn clear_fixes_admissible() {
        let x = book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 1, 0, 3, 2]);
        let r = clear(&x);
        assert_eq!(r.cleared, x);
        assert_eq!(r.executed.total_buy(), 0);
        assert!(r.trades.is_empty());
    }

    #[test]
    fn clear_wipe_out_branches() {
        // sell side overwhelms the whole buy side
        let r = clear(&book(&[0, 3, 0, 0], &[5, 0, 0, 0]));
        assert_eq!(r.cleared, book(&[0, 0, 0, 0], &[2, 0, 0, 0]));
        assert_eq!(r.executed.total_buy(), 3);
        assert_eq!(r.executed.total_sell(), 3);
        let oracle = brute_force_clear(&book(&[0, 3, 0, 0], &[5, 0, 0, 0]), 1 << 20).unwrap();
        assert_eq!(oracle.cleared, r.cleared);
        // and the mirror image
        let r = clear(&book(&[0, 0, 0, 5], &[0, 3, 0, 0]));
        assert_eq!(r.cleared, book(&[0, 0, 0, 2], &[0, 0, 0, 0]));
    }

    #[test]
    fn brute_force_examples() {
        let x = book(&[0, 2, 0], &[1, 1, 0]);
        let r = brute_force_clear(&x, 1 << 20).unwrap();
        assert_eq!(r.cleared, book(&[0, 0, 0], &[0, 0, 0]));
        assert_eq!(r.executed.buy, vec![0, 2, 0]);
        assert_eq!(r.executed.sell, vec![1, 1, 0]);
        assert_eq!(r.cleared, clear(&x).cleared);

        let adm = book(&[1, 0, 0], &[0, 0, 2]);
        assert_eq!(brute_force_clear(&adm, 1 << 20).unwrap().cleared, adm);

        assert!(matches!(
            brute_force_clear(&book(&[1000, 1000, 1000], &[1000, 1000, 1000]), 10),
            Err(MatchError::BudgetExceeded { .. })
        ));
    }

    fn fig_book() -> BookState {
        book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 1, 0, 3, 2])
    }

    #[test]
    fn apply_event_crossing_buy_partial() {
        let out = apply_event(&fig_book(), &Event::new(EventKind::LimitBuy, 7, 2)).unwrap();
        assert_eq!(out.state, book(&[1, 3, 2, 1, 0, 0, 1, 0, 0], &[0, 0, 0, 0, 0, 0, 0, 3, 2]));
        assert_eq!((out.bid, out.ask), (7, 8));
        assert_eq!(out.trace, CaseTrace { case: 1, sub: 3 });
    }

    #[test]
    fn apply_event_crossing_buy_full() {
        let out = apply_event(&fig_book(), &Event::new(EventKind::LimitBuy, 9, 2)).unwrap();
        assert_eq!(out.state, book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0, 0, 2, 2]));
        assert_eq!((out.bid, out.ask), (4, 8));
        assert_eq!(out.trace, CaseTrace { case: 1, sub: 4 });
    }

    #[test]
    fn apply_event_cancel_at_bid() {
        let out = apply_event(&fig_book(), &Event::new(EventKind::CancelBuy, 4, 1)).unwrap();
        assert_eq!(out.state, book(&[1, 3, 2, 0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 1, 0, 3, 2]));
        assert_eq!((out.bid, out.ask), (3, 6));
        assert_eq!(out.trace, CaseTrace { case: 3, sub: 1 });
    }

    #[test]
    fn apply_event_rejects_bad_preconditions() {
        let x = fig_book();
        assert!(apply_event(&x, &Event::new(EventKind::CancelSell, 6, 2)).is_err());
        assert!(apply_event(&x, &Event::new(EventKind::LimitBuy, 0, 1)).is_err());
        assert!(apply_event(&x, &Event::new(EventKind::LimitBuy, 3, 6)).is_err());
        let one_sided = book(&[1, 0], &[0, 0]);
        assert!(apply_event(&one_sided, &Event::new(EventKind::LimitBuy, 1, 1)).is_err());
    }

    fn random_admissible(rng: &mut StdRng, d: u32) -> BookState {
        loop {
            let split = rng.random_range(1..d);
            let mut buy = vec![0; d as usize];
            let mut sell = vec![0; d as usize];
            for i in 0..d as usize {
                if (i as u32) < split {
                    buy[i] = rng.random_range(0..4);
                } else {
                    sell[i] = rng.random_range(0..4);
                }
            }
            let x = BookState::new(buy, sell).unwrap();
            if x.both_sides_nonempty() {
                return x;
            }
        }
    }

    #[test]
    fn apply_event_matches_clear_randomized() {
        let mut rng = StdRng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 2000 {
            let x = random_admissible(&mut rng, 7);
            let p = BookProfile::new(&x);
            let cap = p.cum_buy_above(1).min(p.cum_sell_below(7));
            if cap < 2 {
                continue;
            }
            let kind = EventKind::ALL[rng.random_range(0..4)];
            let price = rng.random_range(1..=7);
            let z = rng.random_range(1..cap);
            let e = Event::new(kind, price, z);
            if kind.is_cancel() {
                let depth = if kind.is_buy_side() { x.buy_at(price as u32) } else { x.sell_at(price as u32) };
                if z > depth {
                    continue;
                }
            }
            let out = apply_event(&x, &e).unwrap();
            let perturbed = e.apply_to(&x).unwrap();
            assert_eq!(out.state, clear(&perturbed).cleared, "state {:?} event {:?}", x, e);
            assert_eq!((out.ask, out.bid), out.state.ask_bid(), "state {:?} event {:?}", x, e);
            checked += 1;
        }
    }

    #[test]
    fn preimage_examples() {
        let left = book(&[1, 3, 2, 1, 0, 0, 2, 0, 0], &[0, 0, 1, 1, 1, 1, 0, 3, 2]);
        let right = book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 1, 1, 0, 3, 2]);
        assert!(preimage_contains(&left, &right).unwrap());
        assert!(preimage_contains(&right, &right).unwrap());
        // unequal matched totals
        let unbalanced = book(&[1, 3, 2, 1, 0, 0, 2, 0, 0], &[0, 0, 1, 0, 1, 1, 0, 3, 2]);
        assert!(!preimage_contains(&unbalanced, &right).unwrap());
        let crossed_target = book(&[0, 2, 0], &[1, 0, 0]);
        assert!(preimage_contains(&crossed_target, &crossed_target).is_err());
    }

    #[test]
    fn clear_batch_semantics() {
        let x = fig_book();
        assert_eq!(clear_batch(&x, &[]).unwrap().cleared, x);
        // net-zero pair at an empty level is fine
        let evs = vec![Event::new(EventKind::LimitBuy, 5, 1), Event::new(EventKind::CancelBuy, 5, 1)];
        assert_eq!(clear_batch(&x, &evs).unwrap().cleared, x);
        // oversized net cancellation reports the offending queue
        let evs = vec![Event::new(EventKind::CancelSell, 6, 2)];
        assert_eq!(
            clear_batch(&x, &evs),
            Err(MatchError::NegativeQueue { side: "sell", price: 6 })
        );
        // batching equals one-shot clearing of the net sum
        let evs = vec![
            Event::new(EventKind::LimitSell, 3, 1),
            Event::new(EventKind::LimitSell, 4, 1),
            Event::new(EventKind::LimitSell, 6, 1),
            Event::new(EventKind::LimitBuy, 7, 2),
        ];
        let r = clear_batch(&x, &evs).unwrap();
        let net = BookState::new(vec![1, 3, 2, 1, 0, 0, 2, 0, 0], vec![0, 0, 1, 1, 0, 2, 0, 3, 2]).unwrap();
        assert_eq!(r.cleared, clear(&net).cleared);
        assert_eq!(r.cleared, book(&[1, 3, 2, 1, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 2, 0, 3, 2]));
    }

    #[test]
    fn conservation_and_idempotence_randomized() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..2000 {
            let d = 6;
            let buy: Vec<Depth> = (0..d).map(|_| rng.random_range(0..4)).collect();
            let sell: Vec<Depth> = (0..d).map(|_| rng.random_range(0..4)).collect();
            let x = BookState::new(buy, sell).unwrap();
            let r = clear(&x);
            for i in 0..d {
                assert_eq!(r.cleared.buy()[i] + r.executed.buy[i], x.buy()[i]);
                assert_eq!(r.cleared.sell()[i] + r.executed.sell[i], x.sell()[i]);
            }
            assert!(r.cleared.is_admissible());
            assert_eq!(clear(&r.cleared).cleared, r.cleared);
            assert_eq!(r.cleared == x, x.is_admissible());
        }
    }
}
