//! Event-driven Monte Carlo simulation of the book process and estimators
//! for ask-move probabilities.
//!
//! Paths alternate exponential waits with sampled flow events, each followed
//! by clearing (the closed-form per-event path, falling back to full
//! clearing if an event escapes its preconditions). Replications are
//! independent: replication `r` draws from the seeded ChaCha stream `r`, so
//! serial and parallel runs produce identical results, replication by
//! replication.

use crate::book::BookState;
use crate::event::Event;
use crate::flow::{sample_next_event, Frame, FlowError, IntensityModel};
use crate::matching::{apply_event, clear, MatchError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error("origin must be admissible")]
    NotAdmissible,
    #[error("model frame {0:?} is not the fixed coordinate frame")]
    WrongFrame(Frame),
    #[error("all event rates vanished before the stop condition was reached")]
    DeadState,
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(u32),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// When a simulated path ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Simulate to a fixed time horizon in seconds.
    Horizon(f64),
    /// Stop at the first change of the tracked best price.
    FirstMove,
    /// Stop after this many events.
    MaxEvents(u64),
}

/// Which price a "first move" watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveRef {
    /// The ask price (the measured quantity in the ask-direction studies).
    Ask,
    /// Twice the mid-price, for sensitivity studies.
    Mid,
}

/// One simulated trajectory: strictly increasing event times with the event,
/// the post-clearing state and its best prices at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub origin: BookState,
    pub times: Vec<f64>,
    pub events: Vec<Event>,
    pub states: Vec<BookState>,
    pub asks: Vec<u32>,
    pub bids: Vec<u32>,
    /// Total simulated time: the horizon for horizon stops, otherwise the
    /// last event time.
    pub duration: f64,
}

impl PathRecord {
    pub fn final_state(&self) -> &BookState {
        self.states.last().unwrap_or(&self.origin)
    }

    pub fn final_ask(&self) -> u32 {
        self.asks.last().copied().unwrap_or_else(|| self.origin.ask())
    }

    /// CSV rows `time,kind,price,size,ask,bid`, one per event.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,kind,price,size,ask,bid\n");
        for i in 0..self.events.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.times[i],
                self.events[i].kind.as_str(),
                self.events[i].price,
                self.events[i].size,
                self.asks[i],
                self.bids[i],
            ));
        }
        out
    }
}

/// Simulate one path from `origin` under `model` until `stop`, drawing from
/// `rng`. Dead states are final: under a horizon stop the path simply rests
/// there; under the other stops they are an error.
pub fn simulate_path(
    model: &IntensityModel,
    origin: &BookState,
    stop: StopRule,
    move_ref: MoveRef,
    rng: &mut ChaCha8Rng,
) -> Result<PathRecord, McError> {
    if model.frame() != Frame::Absolute {
        return Err(McError::WrongFrame(model.frame()));
    }
    if !origin.is_admissible() {
        return Err(McError::NotAdmissible);
    }
    let watched = |ask: u32, bid: u32| match move_ref {
        MoveRef::Ask => ask as i64,
        MoveRef::Mid => ask as i64 + bid as i64,
    };
    let initial_mark = {
        let (a, b) = origin.ask_bid();
        watched(a, b)
    };
    let mut record = PathRecord {
        origin: origin.clone(),
        times: Vec::new(),
        events: Vec::new(),
        states: Vec::new(),
        asks: Vec::new(),
        bids: Vec::new(),
        duration: 0.0,
    };
    let mut state = origin.clone();
    let mut clock = 0.0;
    loop {
        match stop {
            StopRule::MaxEvents(n) => {
                if record.events.len() as u64 >= n {
                    record.duration = clock;
                    return Ok(record);
                }
            }
            StopRule::FirstMove => {
                if let (Some(&a), Some(&b)) = (record.asks.last(), record.bids.last()) {
                    if watched(a, b) != initial_mark {
                        record.duration = clock;
                        return Ok(record);
                    }
                }
            }
            StopRule::Horizon(_) => {}
        }
        let sampled = match sample_next_event(model, &state, rng) {
            Ok(s) => s,
            Err(FlowError::DeadState) => match stop {
                StopRule::Horizon(t) => {
                    record.duration = t;
                    return Ok(record);
                }
                _ => return Err(McError::DeadState),
            },
            Err(_) => unreachable!("sampling only fails on dead states"),
        };
        let event_time = clock + sampled.wait;
        if let StopRule::Horizon(t) = stop {
            if event_time > t {
                record.duration = t;
                return Ok(record);
            }
        }
        clock = event_time;
        let (next, bid, ask) = match apply_event(&state, &sampled.event) {
            Ok(out) => (out.state, out.bid, out.ask),
            // guarded rates should never violate the fast-path
            // preconditions; fall back to full clearing if they do
            Err(MatchError::PreconditionViolated(_)) => {
                let perturbed = sampled
                    .event
                    .apply_to(&state)
                    .ok_or(MatchError::NegativeQueue { side: "either", price: sampled.event.price })?;
                let cleared = clear(&perturbed).cleared;
                let (a, b) = cleared.ask_bid();
                (cleared, b, a)
            }
            Err(e) => return Err(e.into()),
        };
        debug_assert!(next.is_admissible());
        record.times.push(clock);
        record.events.push(sampled.event);
        record.asks.push(ask);
        record.bids.push(bid);
        record.states.push(next.clone());
        state = next;
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    /// Replications included in the mean.
    pub n: u32,
    pub seed: u64,
}

/// Estimate plus the replications excluded from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: Estimate,
    /// Replications that hit the event budget (or froze in a dead state)
    /// before resolving; excluded from the mean and a sign of a
    /// mis-specified model.
    pub timeouts: u32,
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn estimate_from_outcomes(outcomes: &[Option<bool>], seed: u64) -> Result<EstimateReport, McError> {
    let timeouts = outcomes.iter().filter(|o| o.is_none()).count() as u32;
    let resolved: Vec<f64> = outcomes.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let n = resolved.len() as u32;
    if n < 2 {
        return Err(McError::TooFewReplications(n));
    }
    let mean = kahan_sum(resolved.iter().copied()) / n as f64;
    let ss = kahan_sum(resolved.iter().map(|x| (x - mean) * (x - mean)));
    let std_error = (ss / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
    Ok(EstimateReport { estimate: Estimate { mean, std_error, n, seed }, timeouts })
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    // counter-based derivation: one ChaCha stream per replication index
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

fn run_replications<F>(n_reps: u32, parallel: bool, run_one: F) -> Vec<Option<bool>>
where
    F: Fn(u64) -> Option<bool> + Sync,
{
    if parallel {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            return (0..n_reps as u64).into_par_iter().map(&run_one).collect();
        }
    }
    (0..n_reps as u64).map(run_one).collect()
}

/// Probability that the first move of the watched price is upward, from
/// `n_reps` independent replications capped at `max_events` events each.
pub fn estimate_first_move(
    model: &IntensityModel,
    origin: &BookState,
    n_reps: u32,
    seed: u64,
    move_ref: MoveRef,
    max_events: u64,
) -> Result<EstimateReport, McError> {
    if model.frame() != Frame::Absolute {
        return Err(McError::WrongFrame(model.frame()));
    }
    if !origin.is_admissible() {
        return Err(McError::NotAdmissible);
    }
    let initial = match move_ref {
        MoveRef::Ask => origin.ask() as i64,
        MoveRef::Mid => origin.ask() as i64 + origin.bid() as i64,
    };
    let outcomes = run_replications(n_reps, true, |rep| {
        let mut rng = replication_rng(seed, rep);
        let mut state = origin.clone();
        for _ in 0..max_events {
            let sampled = match sample_next_event(model, &state, &mut rng) {
                Ok(s) => s,
                Err(_) => return None, // frozen before any move
            };
            state = match apply_event(&state, &sampled.event) {
                Ok(out) => out.state,
                Err(_) => {
                    let perturbed = sampled.event.apply_to(&state)?;
                    clear(&perturbed).cleared
                }
            };
            let mark = match move_ref {
                MoveRef::Ask => state.ask() as i64,
                MoveRef::Mid => state.ask() as i64 + state.bid() as i64,
            };
            if mark != initial {
                return Some(mark > initial);
            }
        }
        None
    });
    estimate_from_outcomes(&outcomes, seed)
}

/// Probability that the ask at time `horizon` exceeds its initial value.
pub fn estimate_horizon(
    model: &IntensityModel,
    origin: &BookState,
    horizon: f64,
    n_reps: u32,
    seed: u64,
) -> Result<EstimateReport, McError> {
    estimate_horizon_with(model, origin, horizon, n_reps, seed, true)
}

/// As [`estimate_horizon`], with explicit control of replication
/// parallelism; results are identical either way.
pub fn estimate_horizon_with(
    model: &IntensityModel,
    origin: &BookState,
    horizon: f64,
    n_reps: u32,
    seed: u64,
    parallel: bool,
) -> Result<EstimateReport, McError> {
    if model.frame() != Frame::Absolute {
        return Err(McError::WrongFrame(model.frame()));
    }
    if !origin.is_admissible() {
        return Err(McError::NotAdmissible);
    }
    let initial_ask = origin.ask();
    let outcomes = run_replications(n_reps, parallel, |rep| {
        let mut rng = replication_rng(seed, rep);
        let mut state = origin.clone();
        let mut clock = 0.0;
        loop {
            let sampled = match sample_next_event(model, &state, &mut rng) {
                Ok(s) => s,
                Err(_) => break, // dead state rests until the horizon
            };
            if clock + sampled.wait > horizon {
                break;
            }
            clock += sampled.wait;
            state = match apply_event(&state, &sampled.event) {
                Ok(out) => out.state,
                Err(_) => {
                    let perturbed = sampled.event.apply_to(&state)?;
                    clear(&perturbed).cleared
                }
            };
        }
        Some(state.ask() > initial_ask)
    });
    estimate_from_outcomes(&outcomes, seed)
}
