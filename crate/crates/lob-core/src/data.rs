//! Exchange message data: parsing the six-column message CSV convention
//! (time, type, order id, size, price-in-units, direction), building initial
//! book states from visible depth, and count-based rate calibration of the
//! flat and size/relative-price-resolved reference models.

use crate::book::{BookState, Depth};
use crate::flow::IntensityModel;
use crate::matching::clear;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("row {row}, column {column}: {reason}")]
    Parse { row: usize, column: usize, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no visible depth maps onto the price grid")]
    EmptyBook,
    #[error("io error: {0}")]
    Io(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

/// One message: a limit submission, cancellation, execution or other event,
/// with price in integer price units and signed direction (+1 buy, -1 sell).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub time: f64,
    pub msg_type: u8,
    pub order_id: i64,
    pub size: i64,
    pub price: i64,
    pub direction: i8,
}

pub const MSG_SUBMISSION: u8 = 1;
pub const MSG_CANCEL_PARTIAL: u8 = 2;
pub const MSG_CANCEL_TOTAL: u8 = 3;
pub const MSG_EXEC_VISIBLE: u8 = 4;
pub const MSG_EXEC_HIDDEN: u8 = 5;

/// Parse the six-column message CSV. Rows must be well-formed, with
/// non-decreasing times, positive prices and positive sizes.
pub fn parse_messages_str(text: &str) -> Result<Vec<MessageRecord>, DataError> {
    let mut out = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(DataError::Parse {
                row,
                column: fields.len().min(6),
                reason: format!("expected 6 columns, got {}", fields.len()),
            });
        }
        let field = |col: usize| fields[col].trim();
        let parse_err = |col: usize, reason: String| DataError::Parse { row, column: col + 1, reason };
        let time: f64 = field(0).parse().map_err(|e| parse_err(0, format!("bad time: {}", e)))?;
        let msg_type: u8 = field(1).parse().map_err(|e| parse_err(1, format!("bad type: {}", e)))?;
        let order_id: i64 = field(2).parse().map_err(|e| parse_err(2, format!("bad order id: {}", e)))?;
        let size: i64 = field(3).parse().map_err(|e| parse_err(3, format!("bad size: {}", e)))?;
        let price: i64 = field(4).parse().map_err(|e| parse_err(4, format!("bad price: {}", e)))?;
        let direction: i8 = field(5).parse().map_err(|e| parse_err(5, format!("bad direction: {}", e)))?;
        if time < last_time {
            return Err(parse_err(0, format!("time {} decreases below {}", time, last_time)));
        }
        if price <= 0 {
            return Err(parse_err(4, "price must be positive".into()));
        }
        if size <= 0 {
            return Err(parse_err(3, "size must be positive".into()));
        }
        if direction != 1 && direction != -1 {
            return Err(parse_err(5, format!("direction must be +1 or -1, got {}", direction)));
        }
        last_time = time;
        out.push(MessageRecord { time, msg_type, order_id, size, price, direction });
    }
    Ok(out)
}

pub fn parse_messages(path: &Path) -> Result<Vec<MessageRecord>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io(e.to_string()))?;
    parse_messages_str(&text)
}

/// Render records back to CSV; byte-exact inverse of the parser for
/// well-formed input in canonical float formatting.
pub fn messages_to_csv(records: &[MessageRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.time, r.msg_type, r.order_id, r.size, r.price, r.direction
        ));
    }
    out
}

/// One visible depth level, price in raw integer units, size in shares;
/// positive direction for bid-side depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLevel {
    pub price: i64,
    pub shares: i64,
    pub is_buy: bool,
}

/// Parse a snapshot row `ask_price,ask_size,bid_price,bid_size,...` (deeper
/// levels repeat the four columns). Empty levels are encoded with
/// non-positive prices and are skipped.
pub fn parse_snapshot_row(line: &str) -> Result<Vec<DepthLevel>, DataError> {
    let fields: Vec<&str> = line.trim().split(',').collect();
    if fields.len() % 4 != 0 || fields.is_empty() {
        return Err(DataError::Parse {
            row: 1,
            column: fields.len(),
            reason: "snapshot rows hold four columns per level".into(),
        });
    }
    let mut out = Vec::new();
    for (level, chunk) in fields.chunks(4).enumerate() {
        let num = |i: usize| -> Result<i64, DataError> {
            chunk[i].trim().parse().map_err(|e| DataError::Parse {
                row: 1,
                column: level * 4 + i + 1,
                reason: format!("{}", e),
            })
        };
        let (ap, av, bp, bv) = (num(0)?, num(1)?, num(2)?, num(3)?);
        if ap > 0 && av > 0 {
            out.push(DepthLevel { price: ap, shares: av, is_buy: false });
        }
        if bp > 0 && bv > 0 {
            out.push(DepthLevel { price: bp, shares: bv, is_buy: true });
        }
    }
    Ok(out)
}

/// How raw prices and share counts map onto the model grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of price levels on the model grid.
    pub d: u32,
    /// Shares per volume unit.
    pub unit_size: i64,
    /// Raw price units per tick.
    pub tick: i64,
    /// Raw price anchored at grid index `d / 2` (the bid slot).
    pub reference_bid: i64,
}

impl GridSpec {
    fn grid_index(&self, price: i64) -> Option<u32> {
        let offset = price - self.reference_bid;
        if offset % self.tick != 0 {
            return None;
        }
        let idx = self.d as i64 / 2 + offset / self.tick;
        (idx >= 1 && idx <= self.d as i64).then_some(idx as u32)
    }
}

fn round_half_away(num: i64, den: i64) -> i64 {
    // round(num / den) with halves away from zero; num, den > 0
    (2 * num + den) / (2 * den)
}

/// An initial state built from visible depth, cleared if the raw levels
/// crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub state: BookState,
    /// The raw depth crossed and was run through clearing.
    pub crossed: bool,
}

/// Aggregate visible depth onto the grid, round volumes to units (half away
/// from zero) and clear any crossing.
pub fn build_initial_state(levels: &[DepthLevel], grid: &GridSpec) -> Result<InitialState, DataError> {
    if grid.unit_size <= 0 || grid.tick <= 0 || grid.d == 0 {
        return Err(DataError::BadParameter("grid needs positive d, unit_size and tick".into()));
    }
    let mut buy_shares = vec![0i64; grid.d as usize];
    let mut sell_shares = vec![0i64; grid.d as usize];
    for level in levels {
        if level.shares <= 0 {
            continue;
        }
        if let Some(idx) = grid.grid_index(level.price) {
            let target = if level.is_buy { &mut buy_shares } else { &mut sell_shares };
            target[idx as usize - 1] += level.shares;
        }
    }
    let to_units = |shares: &[i64]| -> Vec<Depth> {
        shares.iter().map(|&s| round_half_away(s.max(0), grid.unit_size)).collect()
    };
    let raw = BookState::new(to_units(&buy_shares), to_units(&sell_shares))
        .expect("rounded unit depths are non-negative");
    if raw.total_buy() == 0 && raw.total_sell() == 0 {
        return Err(DataError::EmptyBook);
    }
    if raw.is_admissible() {
        Ok(InitialState { state: raw, crossed: false })
    } else {
        Ok(InitialState { state: clear(&raw).cleared, crossed: true })
    }
}

/// Which reference model the counts feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationScheme {
    /// Flat per-type rates: count / (d * T).
    ModelA,
    /// Per (type, size, relative price) rates: count / T.
    ModelB,
}

/// Event counts and the rates derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scheme: CalibrationScheme,
    pub unit_size: i64,
    pub tick: i64,
    /// Observed span of the message stream in seconds.
    pub total_seconds: f64,
    /// Counted events per kind: buy arrivals, sell arrivals, buy
    /// cancellations, sell cancellations.
    pub totals: [u64; 4],
    /// Per (kind, size unit 1..=6, relative price 0..=5) counts; sizes above
    /// the largest bucket clamp into it.
    pub counts: [[[u64; 6]; 6]; 4],
    /// Messages with types outside submissions and cancellations.
    pub skipped_types: u64,
    /// Countable messages with no reconstructable best price yet.
    pub unresolved: u64,
    /// Countable messages with a relative price outside the matrix range
    /// (Model B only).
    pub out_of_range: u64,
}

const KIND_BUY_ARRIVAL: usize = 0;
const KIND_SELL_ARRIVAL: usize = 1;
const KIND_BUY_CANCEL: usize = 2;
const KIND_SELL_CANCEL: usize = 3;

/// Count-based calibration against a message stream: maintain the aggregate
/// book to reconstruct prevailing best prices, classify each submission or
/// cancellation by side, size unit and relative price, and turn the counts
/// into a model. Executions update the book but are never counted as flow
/// (they are outcomes of matching, not exogenous events).
pub fn calibrate(
    records: &[MessageRecord],
    scheme: CalibrationScheme,
    d: u32,
    unit_size: i64,
    tick: i64,
    max_size: i64,
    cap: Depth,
) -> Result<(CalibrationReport, IntensityModel), DataError> {
    if unit_size <= 0 || tick <= 0 {
        return Err(DataError::BadParameter("unit_size and tick must be positive".into()));
    }
    if max_size < 1 || max_size > 6 {
        return Err(DataError::BadParameter("size buckets run 1..=6".into()));
    }
    if records.is_empty() {
        return Err(DataError::InsufficientData("empty message stream".into()));
    }
    let total_seconds = records.last().unwrap().time - records.first().unwrap().time;
    if !(total_seconds > 0.0) {
        return Err(DataError::InsufficientData("message stream spans zero seconds".into()));
    }

    let mut bids: BTreeMap<i64, i64> = BTreeMap::new();
    let mut asks: BTreeMap<i64, i64> = BTreeMap::new();
    let mut report = CalibrationReport {
        scheme,
        unit_size,
        tick,
        total_seconds,
        totals: [0; 4],
        counts: [[[0; 6]; 6]; 4],
        skipped_types: 0,
        unresolved: 0,
        out_of_range: 0,
    };

    for r in records {
        let best_bid = bids.keys().next_back().copied();
        let best_ask = asks.keys().next().copied();
        // classify against the book as it stood when the message arrived
        let kind = match (r.msg_type, r.direction) {
            (MSG_SUBMISSION, 1) => Some(KIND_BUY_ARRIVAL),
            (MSG_SUBMISSION, -1) => Some(KIND_SELL_ARRIVAL),
            (MSG_CANCEL_PARTIAL | MSG_CANCEL_TOTAL, 1) => Some(KIND_BUY_CANCEL),
            (MSG_CANCEL_PARTIAL | MSG_CANCEL_TOTAL, -1) => Some(KIND_SELL_CANCEL),
            (MSG_EXEC_VISIBLE | MSG_EXEC_HIDDEN, _) => None,
            _ => {
                report.skipped_types += 1;
                None
            }
        };
        if let Some(kind) = kind {
            report.totals[kind] += 1;
            let reference = match kind {
                KIND_BUY_ARRIVAL => best_ask.map(|a| (a - r.price) / tick),
                KIND_SELL_ARRIVAL => best_bid.map(|b| (r.price - b) / tick),
                KIND_BUY_CANCEL => best_bid.map(|b| (b - r.price) / tick),
                _ => best_ask.map(|a| (r.price - a) / tick),
            };
            match reference {
                None => report.unresolved += 1,
                Some(rel) => {
                    let z = round_half_away(r.size, unit_size).clamp(1, max_size) as usize;
                    if (0..=5).contains(&rel) {
                        report.counts[kind][z - 1][rel as usize] += 1;
                    } else {
                        report.out_of_range += 1;
                    }
                }
            }
        }
        // book maintenance
        let side = if r.direction == 1 { &mut bids } else { &mut asks };
        match r.msg_type {
            MSG_SUBMISSION => {
                *side.entry(r.price).or_insert(0) += r.size;
            }
            MSG_CANCEL_PARTIAL | MSG_CANCEL_TOTAL | MSG_EXEC_VISIBLE | MSG_EXEC_HIDDEN => {
                if let Some(q) = side.get_mut(&r.price) {
                    *q -= r.size;
                    if *q <= 0 {
                        side.remove(&r.price);
                    }
                }
            }
            _ => {}
        }
    }

    if report.totals.iter().sum::<u64>() == 0 {
        return Err(DataError::InsufficientData("no countable submissions or cancellations".into()));
    }

    let model = match scheme {
        CalibrationScheme::ModelA => {
            let denom = d as f64 * total_seconds;
            IntensityModel::model_a(
                d,
                cap,
                report.totals[KIND_BUY_ARRIVAL] as f64 / denom,
                report.totals[KIND_SELL_ARRIVAL] as f64 / denom,
                report.totals[KIND_BUY_CANCEL] as f64 / denom,
                report.totals[KIND_SELL_CANCEL] as f64 / denom,
            )
            .map_err(|e| DataError::BadParameter(e.to_string()))?
        }
        CalibrationScheme::ModelB => {
            let matrix = |kind: usize| -> [[f64; 6]; 6] {
                let mut out = [[0.0; 6]; 6];
                for z in 0..6 {
                    for rel in 0..6 {
                        out[z][rel] = report.counts[kind][z][rel] as f64 / total_seconds;
                    }
                }
                out
            };
            IntensityModel::model_b(
                d,
                cap,
                matrix(KIND_BUY_ARRIVAL),
                matrix(KIND_SELL_ARRIVAL),
                matrix(KIND_BUY_CANCEL),
                matrix(KIND_SELL_CANCEL),
            )
            .map_err(|e| DataError::BadParameter(e.to_string()))?
        }
    };
    Ok((report, model))
}
