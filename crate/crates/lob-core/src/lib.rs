//! Limit order book dynamics as stochastic order flow composed with a
//! deterministic clearing operator.
//!
//! The book state is an aggregate depth vector per price. Exogenous order
//! flow (limit arrivals and cancellations, Markovian rates) perturbs the
//! state; an order-matching clearing operator projects the perturbed
//! configuration back onto admissible books. On top of this split the crate
//! provides:
//!
//! * [`matching`]: the clearing operator, its closed-form per-event fast
//!   path, pre-image tests artifacts and a brute-force oracle;
//! * [`centred`]: the same machinery in a mid-price-centred window;
//! * [`flow`]: intensity models, validation, and event sampling;
//! * [`generator`]: the jump-process generator, its order-flow/clearing
//!   factorization, transition distributions, adjoints, and dense finite
//!   truncations for operator-level checks;
//! * [`kbe`]: backward-equation solving by explicit Euler stepping with lazy
//!   state-space expansion;
//! * [`mc`]: event-driven Monte Carlo path simulation and estimators;
//! * [`data`]: message-data parsing and count-based rate calibration.
//!
//! Everything is deterministic given a seed: samplers use counter-derived
//! ChaCha streams and all reductions run in fixed order, so results do not
//! depend on thread count (see the `parallel` feature).

pub mod book;
pub mod centred;
pub mod data;
pub mod event;
pub mod expm;
pub mod flow;
pub mod generator;
pub mod kbe;
pub mod matching;
pub mod mc;

pub use book::{BookProfile, BookState, Depth, ExecutedOrders};
pub use centred::{CentredSides, CentredState};
pub use event::{Event, EventKind};
pub use flow::{Frame, IntensityModel};
pub use matching::{apply_event, brute_force_clear, clear, clear_batch, preimage_contains, ClearingResult};
