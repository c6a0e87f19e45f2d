//! Markovian order-flow intensity models and event sampling.
//!
//! A model assigns a rate to every elementary event (kind, price, size) as a
//! function of the current book. All models are wrapped in two standing
//! guards before being used by samplers or generators:
//!
//! * sizes at or above either total side volume get rate zero, so no single
//!   event can wipe out a side;
//! * cancellations larger than the standing queue get rate zero.
//!
//! [`IntensityModel::raw_rate`] bypasses the guards and exposes the model
//! exactly as specified, which is what [`validate`] audits.

use crate::book::{BookState, Depth};
use crate::centred::{CentredSides, CentredState};
use crate::event::{Event, EventKind};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlowError {
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("total event rate is zero; the state is absorbing")]
    DeadState,
    #[error("model frame is {model:?} but a {state:?} state was supplied")]
    FrameMismatch { model: Frame, state: Frame },
}

/// Which coordinate frame a model's prices refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Absolute,
    Centred,
}

/// The view of a book that rate tables read: best prices by support, depth
/// per level, and side totals. Implemented by raw fixed-frame and centred
/// configurations alike, so rates are defined on the whole ambient space.
pub trait OrderBookView {
    /// Lowest sell price/offset; the frame's empty-side sentinel when empty.
    fn ask_i(&self) -> i32;
    /// Highest buy price/offset; the frame's empty-side sentinel when empty.
    fn bid_i(&self) -> i32;
    fn buy_depth(&self, price: i32) -> Depth;
    fn sell_depth(&self, price: i32) -> Depth;
    fn total_buy(&self) -> Depth;
    fn total_sell(&self) -> Depth;
}

impl OrderBookView for BookState {
    fn ask_i(&self) -> i32 {
        self.ask() as i32
    }
    fn bid_i(&self) -> i32 {
        self.bid() as i32
    }
    fn buy_depth(&self, price: i32) -> Depth {
        if price >= 1 { self.buy_at(price as u32) } else { 0 }
    }
    fn sell_depth(&self, price: i32) -> Depth {
        if price >= 1 { self.sell_at(price as u32) } else { 0 }
    }
    fn total_buy(&self) -> Depth {
        BookState::total_buy(self)
    }
    fn total_sell(&self) -> Depth {
        BookState::total_sell(self)
    }
}

impl OrderBookView for CentredSides {
    fn ask_i(&self) -> i32 {
        self.ask()
    }
    fn bid_i(&self) -> i32 {
        self.bid()
    }
    fn buy_depth(&self, price: i32) -> Depth {
        self.buy_at(price)
    }
    fn sell_depth(&self, price: i32) -> Depth {
        self.sell_at(price)
    }
    fn total_buy(&self) -> Depth {
        CentredSides::total_buy(self)
    }
    fn total_sell(&self) -> Depth {
        CentredSides::total_sell(self)
    }
}

impl OrderBookView for CentredState {
    fn ask_i(&self) -> i32 {
        self.sides().ask()
    }
    fn bid_i(&self) -> i32 {
        self.sides().bid()
    }
    fn buy_depth(&self, price: i32) -> Depth {
        self.sides().buy_at(price)
    }
    fn sell_depth(&self, price: i32) -> Depth {
        self.sides().sell_at(price)
    }
    fn total_buy(&self) -> Depth {
        self.sides().total_buy()
    }
    fn total_sell(&self) -> Depth {
        self.sides().total_sell()
    }
}

/// One entry of an explicit rate table (toy models, fixtures).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRate {
    pub kind: EventKind,
    pub price: i32,
    pub size: Depth,
    pub rate: f64,
}

/// An order-flow intensity model. Rates are pure functions of the visible
/// book; models are immutable after construction and freely shared across
/// threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityModel {
    /// Unit-size flow with power-law arrival rates in the distance to the
    /// best opposite price, flat market-order rate encoded as an executable
    /// limit order at the best opposite price, and cancellations proportional
    /// to standing depth.
    Model1 { d: u32, beta: f64, alpha: f64, mu: f64, theta: Vec<f64> },
    /// Per-size rate tables `[size][price]` for sizes `1..=max_size`.
    /// Cancellation entries apply only up to the standing queue depth.
    Model2 {
        d: u32,
        max_size: Depth,
        limit_buy: Vec<Vec<f64>>,
        limit_sell: Vec<Vec<f64>>,
        cancel_buy: Vec<Vec<f64>>,
        cancel_sell: Vec<Vec<f64>>,
    },
    /// Unit-size flat rates: arrivals while the queue is below `cap`,
    /// cancellations once it reaches `cap`.
    ModelA { d: u32, cap: Depth, limit_buy: f64, limit_sell: f64, cancel_buy: f64, cancel_sell: f64 },
    /// Size- and relative-price-dependent rates. Matrices are `[size][col]`
    /// with rows for sizes `1..=6` and columns for relative prices `0..=5`
    /// (column 1 of the 6x6 layout is relative price 0). Arrivals rest
    /// strictly inside distances `1..=5` of the opposite best price and
    /// require the queue below `cap - size`; cancellations act at distances
    /// `0..=5` of their own best price on standing volume.
    ModelB {
        d: u32,
        cap: Depth,
        buy_arrival: [[f64; 6]; 6],
        sell_arrival: [[f64; 6]; 6],
        buy_cancel: [[f64; 6]; 6],
        sell_cancel: [[f64; 6]; 6],
    },
    /// Centred-frame unit-size flow active within `window` ticks of the
    /// opposite best price, with market orders at the window edges and
    /// depth-proportional cancellations. Composes with
    /// [`crate::centred::pad_outside_window`] after clearing.
    Model3 {
        d_prime: u32,
        window: u32,
        default_sell: Depth,
        default_buy: Depth,
        limit_buy: Vec<f64>,
        limit_sell: Vec<f64>,
        market_buy: f64,
        market_sell: f64,
        cancel_buy: Vec<f64>,
        cancel_sell: Vec<f64>,
    },
    /// Explicit state-independent rate table.
    Table { frame: Frame, d: u32, max_size: Depth, rates: Vec<TableRate> },
}

fn check_non_negative(name: &str, values: &[f64]) -> Result<(), FlowError> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FlowError::BadParameter(format!("{} must be finite and non-negative", name)));
    }
    Ok(())
}

impl IntensityModel {
    pub fn model1(d: u32, beta: f64, alpha: f64, mu: f64, theta: Vec<f64>) -> Result<Self, FlowError> {
        if d < 1 {
            return Err(FlowError::BadParameter("d must be at least 1".into()));
        }
        if !(beta > 0.0) || !(mu > 0.0) || !alpha.is_finite() {
            return Err(FlowError::BadParameter("beta and mu must be positive".into()));
        }
        if theta.len() != d as usize {
            return Err(FlowError::BadParameter("theta must have one entry per price distance 1..=d".into()));
        }
        check_non_negative("theta", &theta)?;
        Ok(IntensityModel::Model1 { d, beta, alpha, mu, theta })
    }

    pub fn model2(
        d: u32,
        max_size: Depth,
        limit_buy: Vec<Vec<f64>>,
        limit_sell: Vec<Vec<f64>>,
        cancel_buy: Vec<Vec<f64>>,
        cancel_sell: Vec<Vec<f64>>,
    ) -> Result<Self, FlowError> {
        for (name, t) in [
            ("limit_buy", &limit_buy),
            ("limit_sell", &limit_sell),
            ("cancel_buy", &cancel_buy),
            ("cancel_sell", &cancel_sell),
        ] {
            if t.len() != max_size as usize || t.iter().any(|row| row.len() != d as usize) {
                return Err(FlowError::BadParameter(format!("{} must be a {} x {} table", name, max_size, d)));
            }
            for row in t {
                check_non_negative(name, row)?;
            }
        }
        Ok(IntensityModel::Model2 { d, max_size, limit_buy, limit_sell, cancel_buy, cancel_sell })
    }

    pub fn model_a(
        d: u32,
        cap: Depth,
        limit_buy: f64,
        limit_sell: f64,
        cancel_buy: f64,
        cancel_sell: f64,
    ) -> Result<Self, FlowError> {
        if cap < 1 {
            return Err(FlowError::BadParameter("cap must be at least 1".into()));
        }
        check_non_negative("rates", &[limit_buy, limit_sell, cancel_buy, cancel_sell])?;
        Ok(IntensityModel::ModelA { d, cap, limit_buy, limit_sell, cancel_buy, cancel_sell })
    }

    pub fn model_b(
        d: u32,
        cap: Depth,
        buy_arrival: [[f64; 6]; 6],
        sell_arrival: [[f64; 6]; 6],
        buy_cancel: [[f64; 6]; 6],
        sell_cancel: [[f64; 6]; 6],
    ) -> Result<Self, FlowError> {
        if cap < 1 {
            return Err(FlowError::BadParameter("cap must be at least 1".into()));
        }
        for m in [&buy_arrival, &sell_arrival, &buy_cancel, &sell_cancel] {
            for row in m {
                check_non_negative("matrix entries", row)?;
            }
        }
        Ok(IntensityModel::ModelB { d, cap, buy_arrival, sell_arrival, buy_cancel, sell_cancel })
    }

    pub fn model3(
        d_prime: u32,
        window: u32,
        default_sell: Depth,
        default_buy: Depth,
        limit_buy: Vec<f64>,
        limit_sell: Vec<f64>,
        market_buy: f64,
        market_sell: f64,
        cancel_buy: Vec<f64>,
        cancel_sell: Vec<f64>,
    ) -> Result<Self, FlowError> {
        if window as u64 > 2 * d_prime as u64 {
            return Err(FlowError::BadParameter("window must not exceed the full book width".into()));
        }
        if default_sell < 0 || default_buy < 0 {
            return Err(FlowError::BadParameter("resting defaults must be non-negative".into()));
        }
        for (name, t) in [
            ("limit_buy", &limit_buy),
            ("limit_sell", &limit_sell),
            ("cancel_buy", &cancel_buy),
            ("cancel_sell", &cancel_sell),
        ] {
            if t.len() != window as usize {
                return Err(FlowError::BadParameter(format!("{} must have one entry per distance 1..={}", name, window)));
            }
            check_non_negative(name, t)?;
        }
        check_non_negative("market rates", &[market_buy, market_sell])?;
        Ok(IntensityModel::Model3 {
            d_prime,
            window,
            default_sell,
            default_buy,
            limit_buy,
            limit_sell,
            market_buy,
            market_sell,
            cancel_buy,
            cancel_sell,
        })
    }

    pub fn table(frame: Frame, d: u32, max_size: Depth, rates: Vec<TableRate>) -> Result<Self, FlowError> {
        for r in &rates {
            if !r.rate.is_finite() || r.rate < 0.0 {
                return Err(FlowError::BadParameter("table rates must be finite and non-negative".into()));
            }
            if r.size < 1 || r.size > max_size {
                return Err(FlowError::BadParameter("table sizes must lie in 1..=max_size".into()));
            }
        }
        Ok(IntensityModel::Table { frame, d, max_size, rates })
    }

    /// Flat unit-size rates calibrated by event counts from one day of
    /// Micron Technology (MU) equity message data, with queue cap `cap`.
    pub fn model_a_calibrated(cap: Depth) -> Self {
        IntensityModel::model_a(6, cap, 11.6, 10.7, 10.8, 9.7).unwrap()
    }

    /// Size- and relative-price-resolved rates from the same message data as
    /// [`IntensityModel::model_a_calibrated`], with queue cap `cap`.
    pub fn model_b_calibrated(cap: Depth) -> Self {
        // sell arrivals by (size, relative price to the bid)
        let sell_arrival = [
            [0.74, 4.23, 1.96, 0.53, 0.35, 0.28],
            [0.19, 2.68, 0.67, 0.05, 0.03, 0.05],
            [0.10, 1.79, 0.28, 0.02, 0.01, 0.01],
            [0.04, 0.49, 0.10, 0.01, 0.01, 0.02],
            [0.03, 0.31, 0.04, 0.01, 0.01, 0.05],
            [0.08, 1.55, 0.37, 0.06, 0.09, 0.15],
        ];
        // sell cancellations by (size, relative price to the ask)
        let sell_cancel = [
            [4.08, 1.76, 0.44, 0.32, 0.27, 0.28],
            [2.78, 0.44, 0.04, 0.04, 0.04, 0.04],
            [1.76, 0.18, 0.02, 0.01, 0.01, 0.04],
            [0.48, 0.09, 0.01, 0.01, 0.02, 0.15],
            [0.29, 0.03, 0.01, 0.01, 0.05, 0.003],
            [1.60, 0.26, 0.03, 0.11, 0.15, 0.28],
        ];
        // buy arrivals by (size, relative price to the ask)
        let buy_arrival = [
            [0.46, 3.95, 1.75, 0.35, 0.30, 0.39],
            [0.12, 2.65, 0.65, 0.07, 0.04, 0.05],
            [0.08, 1.48, 0.24, 0.02, 0.01, 0.01],
            [0.02, 0.49, 0.09, 0.01, 0.01, 0.01],
            [0.018, 0.30, 0.04, 0.01, 0.02, 0.04],
            [0.05, 1.26, 0.37, 0.09, 0.11, 0.15],
        ];
        // buy cancellations by (size, relative price to the bid)
        let buy_cancel = [
            [3.72, 1.49, 0.41, 0.28, 0.34, 0.42],
            [2.73, 0.44, 0.06, 0.05, 0.05, 0.05],
            [1.41, 0.17, 0.02, 0.01, 0.01, 0.02],
            [0.47, 0.08, 0.01, 0.01, 0.02, 0.16],
            [0.27, 0.03, 0.01, 0.01, 0.04, 0.002],
            [1.29, 0.28, 0.05, 0.12, 0.15, 0.28],
        ];
        IntensityModel::model_b(6, cap, buy_arrival, sell_arrival, buy_cancel, sell_cancel).unwrap()
    }

    pub fn frame(&self) -> Frame {
        match self {
            IntensityModel::Model3 { .. } => Frame::Centred,
            IntensityModel::Table { frame, .. } => *frame,
            _ => Frame::Absolute,
        }
    }

    /// Inclusive price range events are drawn from: `1..=d` absolute,
    /// `-d'..=d'` centred.
    pub fn price_range(&self) -> std::ops::RangeInclusive<i32> {
        match self {
            IntensityModel::Model1 { d, .. }
            | IntensityModel::Model2 { d, .. }
            | IntensityModel::ModelA { d, .. }
            | IntensityModel::ModelB { d, .. } => 1..=*d as i32,
            IntensityModel::Model3 { d_prime, .. } => -(*d_prime as i32)..=*d_prime as i32,
            IntensityModel::Table { frame, d, .. } => match frame {
                Frame::Absolute => 1..=*d as i32,
                Frame::Centred => -(*d as i32)..=*d as i32,
            },
        }
    }

    /// Largest size with a possibly nonzero rate.
    pub fn max_size(&self) -> Depth {
        match self {
            IntensityModel::Model1 { .. } | IntensityModel::ModelA { .. } | IntensityModel::Model3 { .. } => 1,
            IntensityModel::Model2 { max_size, .. } | IntensityModel::Table { max_size, .. } => *max_size,
            IntensityModel::ModelB { .. } => 6,
        }
    }

    /// Declared size-decay bound `(M, alpha)`: every rate is claimed to stay
    /// at or below `M / (1 + size)^alpha`. For models whose cancellations
    /// scale with standing depth the bound covers the arrival tables; it
    /// holds for cancellations on books whose queues stay below
    /// `max_arrival_rate / max_theta`.
    pub fn decay_bound(&self) -> (f64, f64) {
        let alpha = 2.0;
        let row_peak = |row: &[f64]| row.iter().fold(0.0f64, |a, &b| a.max(b));
        // tightest M over the rows: rate(z) <= M / (1+z)^alpha
        let tables_peak = |rows: &[(usize, f64)]| -> f64 {
            rows.iter().fold(0.0f64, |acc, &(z, peak)| acc.max(peak * (1.0 + z as f64).powf(alpha)))
        };
        let m = match self {
            IntensityModel::Model1 { beta, mu, .. } => beta.max(*mu) * 2.0f64.powf(alpha),
            IntensityModel::Model2 { limit_buy, limit_sell, cancel_buy, cancel_sell, .. } => {
                let rows: Vec<(usize, f64)> = [limit_buy, limit_sell, cancel_buy, cancel_sell]
                    .into_iter()
                    .flat_map(|t| t.iter().enumerate().map(|(zi, row)| (zi + 1, row_peak(row))))
                    .collect();
                tables_peak(&rows)
            }
            IntensityModel::ModelA { limit_buy, limit_sell, cancel_buy, cancel_sell, .. } => {
                row_peak(&[*limit_buy, *limit_sell, *cancel_buy, *cancel_sell]) * 2.0f64.powf(alpha)
            }
            IntensityModel::ModelB { buy_arrival, sell_arrival, buy_cancel, sell_cancel, .. } => {
                let rows: Vec<(usize, f64)> = [buy_arrival, sell_arrival, buy_cancel, sell_cancel]
                    .into_iter()
                    .flat_map(|t| t.iter().enumerate().map(|(zi, row)| (zi + 1, row_peak(row))))
                    .collect();
                tables_peak(&rows)
            }
            IntensityModel::Model3 { limit_buy, limit_sell, market_buy, market_sell, .. } => {
                row_peak(limit_buy).max(row_peak(limit_sell)).max(*market_buy).max(*market_sell)
                    * 2.0f64.powf(alpha)
            }
            IntensityModel::Table { rates, .. } => {
                let rows: Vec<(usize, f64)> = rates.iter().map(|r| (r.size as usize, r.rate)).collect();
                tables_peak(&rows)
            }
        };
        (m, alpha)
    }

    /// The rate exactly as the model specifies it, without the standing
    /// guards. [`validate`] audits this function.
    pub fn raw_rate<V: OrderBookView>(&self, state: &V, kind: EventKind, price: i32, size: Depth) -> f64 {
        if size < 1 {
            return 0.0;
        }
        let (a, b) = (state.ask_i(), state.bid_i());
        match self {
            IntensityModel::Model1 { d, beta, alpha, mu, theta } => {
                if size != 1 || price < 1 || price > *d as i32 {
                    return 0.0;
                }
                match kind {
                    EventKind::LimitBuy => {
                        if price < a {
                            beta / ((a - price) as f64).powf(*alpha)
                        } else if price == a {
                            *mu
                        } else {
                            0.0
                        }
                    }
                    EventKind::LimitSell => {
                        if price > b {
                            beta / ((price - b) as f64).powf(*alpha)
                        } else if price == b {
                            *mu
                        } else {
                            0.0
                        }
                    }
                    EventKind::CancelBuy => {
                        if price < b {
                            theta[(b - price) as usize - 1] * state.buy_depth(price) as f64
                        } else {
                            0.0
                        }
                    }
                    EventKind::CancelSell => {
                        if price > a {
                            theta[(price - a) as usize - 1] * state.sell_depth(price) as f64
                        } else {
                            0.0
                        }
                    }
                }
            }
            IntensityModel::Model2 { d, max_size, limit_buy, limit_sell, cancel_buy, cancel_sell } => {
                if size > *max_size || price < 1 || price > *d as i32 {
                    return 0.0;
                }
                let (zi, ki) = (size as usize - 1, price as usize - 1);
                match kind {
                    EventKind::LimitBuy => limit_buy[zi][ki],
                    EventKind::LimitSell => limit_sell[zi][ki],
                    EventKind::CancelBuy => {
                        if size <= state.buy_depth(price) { cancel_buy[zi][ki] } else { 0.0 }
                    }
                    EventKind::CancelSell => {
                        if size <= state.sell_depth(price) { cancel_sell[zi][ki] } else { 0.0 }
                    }
                }
            }
            IntensityModel::ModelA { d, cap, limit_buy, limit_sell, cancel_buy, cancel_sell } => {
                if size != 1 || price < 1 || price > *d as i32 {
                    return 0.0;
                }
                match kind {
                    EventKind::LimitBuy => {
                        if state.buy_depth(price) < *cap { *limit_buy } else { 0.0 }
                    }
                    EventKind::LimitSell => {
                        if state.sell_depth(price) < *cap { *limit_sell } else { 0.0 }
                    }
                    EventKind::CancelBuy => {
                        if state.buy_depth(price) >= *cap { *cancel_buy } else { 0.0 }
                    }
                    EventKind::CancelSell => {
                        if state.sell_depth(price) >= *cap { *cancel_sell } else { 0.0 }
                    }
                }
            }
            IntensityModel::ModelB { d, cap, buy_arrival, sell_arrival, buy_cancel, sell_cancel } => {
                if size < 1 || size > 6 || price < 1 || price > *d as i32 {
                    return 0.0;
                }
                let zi = size as usize - 1;
                let rel = |r: i32| -> Option<usize> { (0..=5).contains(&r).then_some(r as usize) };
                // arrivals rest: relative price at least 1 from the opposite
                // best, so no order crosses on arrival
                let rel_rest = |r: i32| -> Option<usize> { (1..=5).contains(&r).then_some(r as usize) };
                match kind {
                    EventKind::LimitBuy => match rel_rest(a - price) {
                        Some(r) if state.buy_depth(price) < cap - size => buy_arrival[zi][r],
                        _ => 0.0,
                    },
                    EventKind::LimitSell => match rel_rest(price - b) {
                        Some(r) if state.sell_depth(price) < cap - size => sell_arrival[zi][r],
                        _ => 0.0,
                    },
                    // cancellations act on standing orders: the queue must
                    // hold at least the cancelled size
                    EventKind::CancelBuy => match rel(b - price) {
                        Some(r) if state.buy_depth(price) >= size => buy_cancel[zi][r],
                        _ => 0.0,
                    },
                    EventKind::CancelSell => match rel(price - a) {
                        Some(r) if state.sell_depth(price) >= size => sell_cancel[zi][r],
                        _ => 0.0,
                    },
                }
            }
            IntensityModel::Model3 {
                d_prime,
                window,
                limit_buy,
                limit_sell,
                market_buy,
                market_sell,
                cancel_buy,
                cancel_sell,
                ..
            } => {
                let dp = *d_prime as i32;
                let w = *window as i32;
                if size != 1 || price < -dp || price > dp {
                    return 0.0;
                }
                match kind {
                    EventKind::LimitBuy => {
                        if a - w <= price && price < a {
                            limit_buy[(a - price) as usize - 1]
                        } else if price == dp {
                            *market_buy
                        } else {
                            0.0
                        }
                    }
                    EventKind::LimitSell => {
                        if b < price && price <= b + w {
                            limit_sell[(price - b) as usize - 1]
                        } else if price == -dp {
                            *market_sell
                        } else {
                            0.0
                        }
                    }
                    EventKind::CancelBuy => {
                        if a - w <= price && price < a {
                            cancel_buy[(a - price) as usize - 1] * state.buy_depth(price) as f64
                        } else {
                            0.0
                        }
                    }
                    EventKind::CancelSell => {
                        if b < price && price <= b + w {
                            cancel_sell[(price - b) as usize - 1] * state.sell_depth(price) as f64
                        } else {
                            0.0
                        }
                    }
                }
            }
            IntensityModel::Table { rates, .. } => rates
                .iter()
                .filter(|r| r.kind == kind && r.price == price && r.size == size)
                .map(|r| r.rate)
                .sum(),
        }
    }

    /// The effective rate: the model's raw rate behind the standing guards.
    pub fn rate<V: OrderBookView>(&self, state: &V, kind: EventKind, price: i32, size: Depth) -> f64 {
        if size >= state.total_buy().min(state.total_sell()) {
            return 0.0;
        }
        if kind.is_cancel() {
            let depth = if kind.is_buy_side() { state.buy_depth(price) } else { state.sell_depth(price) };
            if size > depth {
                return 0.0;
            }
        }
        self.raw_rate(state, kind, price, size)
    }

    /// Visit every event with positive effective rate, in the fixed scan
    /// order: kind, then price ascending, then size ascending.
    pub fn for_each_event<V: OrderBookView>(&self, state: &V, mut f: impl FnMut(Event, f64)) {
        let prices = self.price_range();
        let max_size = self.max_size();
        for kind in EventKind::ALL {
            for price in prices.clone() {
                for size in 1..=max_size {
                    let r = self.rate(state, kind, price, size);
                    if r > 0.0 {
                        f(Event::new(kind, price, size), r);
                    }
                }
            }
        }
    }

    /// Sum of all effective event rates, in the fixed scan order.
    pub fn total_rate<V: OrderBookView>(&self, state: &V) -> f64 {
        let mut total = 0.0;
        self.for_each_event(state, |_, r| total += r);
        total
    }
}

/// An exponential waiting time paired with the event that fires.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEvent {
    pub wait: f64,
    pub event: Event,
}

/// Draw the next event: the wait is exponential with the state's total rate
/// and the event is chosen proportionally to its rate. Exactly two uniform
/// draws are consumed, in that order, so a seeded stream replays identically.
pub fn sample_next_event<V: OrderBookView, R: Rng>(
    model: &IntensityModel,
    state: &V,
    rng: &mut R,
) -> Result<SampledEvent, FlowError> {
    let total = model.total_rate(state);
    if !(total > 0.0) {
        return Err(FlowError::DeadState);
    }
    let u: f64 = rng.random();
    let wait = -(1.0 - u).ln() / total;
    let pick: f64 = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut chosen = None;
    let mut last = None;
    model.for_each_event(state, |e, r| {
        cum += r;
        last = Some(e);
        if chosen.is_none() && pick < cum {
            chosen = Some(e);
        }
    });
    let event = chosen.or(last).expect("positive total rate implies at least one event");
    Ok(SampledEvent { wait, event })
}

/// One clause-violation record from [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Which rate assumption failed: 1 = oversized order has nonzero rate,
    /// 2 = rate exceeds the declared size-decay bound, 3 = cancellation
    /// beyond standing depth has nonzero rate.
    pub clause: u8,
    pub kind: EventKind,
    pub price: i32,
    pub size: Depth,
    pub rate: f64,
    pub state: String,
}

/// Report from auditing a model's raw rates on a sample of states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub states_checked: usize,
    pub rates_checked: u64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audit the raw rate table on each sampled state, for sizes up to
/// `max_size + 2`, against the three standing rate assumptions: oversized
/// orders must have rate zero, rates must respect `bound.0 / (1+z)^bound.1`,
/// and cancellations must not exceed standing queues. `bound` defaults to
/// the model's declared decay bound.
///
/// The audit reads [`IntensityModel::raw_rate`], so it reports exactly the
/// mass the effective [`IntensityModel::rate`] guard would discard. On books
/// thin enough that legal order sizes reach a side total, clause-1 findings
/// against the reference tables are expected and harmless.
pub fn validate<V: OrderBookView + std::fmt::Debug>(
    model: &IntensityModel,
    states: &[V],
    bound: Option<(f64, f64)>,
) -> ValidationReport {
    let (m, alpha) = bound.unwrap_or_else(|| model.decay_bound());
    let mut report = ValidationReport { states_checked: states.len(), ..Default::default() };
    for state in states {
        let wipe_cap = state.total_buy().min(state.total_sell());
        for kind in EventKind::ALL {
            for price in model.price_range() {
                for size in 1..=model.max_size() + 2 {
                    let rate = model.raw_rate(state, kind, price, size);
                    report.rates_checked += 1;
                    let mut flag = |clause: u8| {
                        report.violations.push(Violation {
                            clause,
                            kind,
                            price,
                            size,
                            rate,
                            state: format!("{:?}", state),
                        });
                    };
                    if size >= wipe_cap && rate != 0.0 {
                        flag(1);
                    }
                    if rate > m / (1.0 + size as f64).powf(alpha) {
                        flag(2);
                    }
                    if kind.is_cancel() && rate != 0.0 {
                        let depth =
                            if kind.is_buy_side() { state.buy_depth(price) } else { state.sell_depth(price) };
                        if size > depth {
                            flag(3);
                        }
                    }
                }
            }
        }
    }
    report
}
