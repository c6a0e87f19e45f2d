//! Elementary order-flow events: limit order arrivals and cancellations.
//!
//! An event carries a price level and a size. Prices are `1..=d` in the
//! fixed-coordinate frame and `-d'..=d'` in the mid-price-centred frame, so
//! they are signed here. Several events applied together act additively on
//! the depth arrays.

use serde::{Deserialize, Serialize};

use crate::book::{BookState, Depth};

/// The four elementary order-flow event types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LimitBuy,
    LimitSell,
    CancelBuy,
    CancelSell,
}

impl EventKind {
    /// Fixed enumeration order used everywhere rates are scanned.
    pub const ALL: [EventKind; 4] = [
        EventKind::LimitBuy,
        EventKind::LimitSell,
        EventKind::CancelBuy,
        EventKind::CancelSell,
    ];

    pub fn is_cancel(self) -> bool {
        matches!(self, EventKind::CancelBuy | EventKind::CancelSell)
    }

    pub fn is_buy_side(self) -> bool {
        matches!(self, EventKind::LimitBuy | EventKind::CancelBuy)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::LimitBuy => "limit_buy",
            EventKind::LimitSell => "limit_sell",
            EventKind::CancelBuy => "cancel_buy",
            EventKind::CancelSell => "cancel_sell",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        match s.trim() {
            "limit_buy" => Some(EventKind::LimitBuy),
            "limit_sell" => Some(EventKind::LimitSell),
            "cancel_buy" => Some(EventKind::CancelBuy),
            "cancel_sell" => Some(EventKind::CancelSell),
            _ => None,
        }
    }
}

/// One elementary order-flow event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// Price level: `1..=d` absolute, `-d'..=d'` centred.
    pub price: i32,
    /// Volume, at least 1.
    pub size: Depth,
}

impl Event {
    pub fn new(kind: EventKind, price: i32, size: Depth) -> Self {
        Self { kind, price, size }
    }

    /// Apply the event to a fixed-coordinate book (no clearing). Returns
    /// `None` when the result would leave the configuration space: price off
    /// the grid, or a cancellation larger than the standing queue.
    pub fn apply_to(&self, state: &BookState) -> Option<BookState> {
        if self.price < 1 || self.price > state.d() as i32 || self.size < 1 {
            return None;
        }
        let idx = self.price as usize - 1;
        let (mut buy, mut sell) = (state.buy().to_vec(), state.sell().to_vec());
        let queue = match self.kind {
            EventKind::LimitBuy | EventKind::CancelBuy => &mut buy[idx],
            EventKind::LimitSell | EventKind::CancelSell => &mut sell[idx],
        };
        if self.kind.is_cancel() {
            if self.size > *queue {
                return None;
            }
            *queue -= self.size;
        } else {
            *queue += self.size;
        }
        Some(BookState::new(buy, sell).expect("event application preserves shape"))
    }
}

/// Parse an events CSV (`kind,price,size`, optional header line).
pub fn parse_events_csv(text: &str) -> Result<Vec<Event>, String> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("kind")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("line {}: expected 3 columns, got {}", ln + 1, fields.len()));
        }
        let kind = EventKind::parse(fields[0]).ok_or_else(|| format!("line {}: unknown kind {:?}", ln + 1, fields[0]))?;
        let price: i32 = fields[1].trim().parse().map_err(|e| format!("line {}: bad price: {}", ln + 1, e))?;
        let size: Depth = fields[2].trim().parse().map_err(|e| format!("line {}: bad size: {}", ln + 1, e))?;
        out.push(Event::new(kind, price, size));
    }
    Ok(out)
}

/// Format events as CSV with a header, inverse of [`parse_events_csv`].
pub fn events_to_csv(events: &[Event]) -> String {
    let mut s = String::from("kind,price,size\n");
    for e in events {
        s.push_str(&format!("{},{},{}\n", e.kind.as_str(), e.price, e.size));
    }
    s
}
