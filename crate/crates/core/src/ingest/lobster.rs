//! Message (6 column) and level-N orderbook (4N column) CSV files, no header.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::book::{Price, Qty, Snapshot};

pub const SUBMIT: u8 = 1;
pub const CANCEL: u8 = 2;
pub const DELETE: u8 = 3;
pub const EXECUTE: u8 = 4;
pub const EXECUTE_HIDDEN: u8 = 5;
pub const CROSS: u8 = 6;
pub const HALT: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    /// Seconds after midnight.
    pub time: f64,
    pub event_type: u8,
    pub order_id: u64,
    pub size: Qty,
    /// Dollars times 10^4.
    pub price: Price,
    /// +1 buy limit order, -1 sell limit order.
    pub direction: i8,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize, name: &str) -> Result<T, IngestError> {
    rec[i].parse().map_err(|_| IngestError::Parse { line, msg: format!("bad {name} {:?}", &rec[i]) })
}

pub fn read_messages<R: Read>(input: R) -> Result<Vec<MessageRecord>, IngestError> {
    let mut out = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, rec) in reader(input).records().enumerate() {
        let line = i + 1;
        let rec = rec?;
        if rec.len() != 6 {
            return Err(IngestError::Columns { line, expected: 6, got: rec.len() });
        }
        let m = MessageRecord {
            time: field(&rec, 0, line, "time")?,
            event_type: field(&rec, 1, line, "event type")?,
            order_id: field(&rec, 2, line, "order id")?,
            size: field(&rec, 3, line, "size")?,
            price: field(&rec, 4, line, "price")?,
            direction: field(&rec, 5, line, "direction")?,
        };
        if !(1..=7).contains(&m.event_type) {
            return Err(IngestError::Parse { line, msg: format!("unknown event type {}", m.event_type) });
        }
        if m.direction != 1 && m.direction != -1 {
            return Err(IngestError::Parse { line, msg: format!("direction must be 1 or -1, got {}", m.direction) });
        }
        if !m.time.is_finite() || m.time < last_time {
            return Err(IngestError::Parse { line, msg: "time stamps must be finite and non-decreasing".into() });
        }
        last_time = m.time;
        out.push(m);
    }
    Ok(out)
}

pub fn parse_messages(path: &Path) -> Result<Vec<MessageRecord>, IngestError> {
    read_messages(open(path)?)
}

/// Reads orderbook rows `ask price, ask size, bid price, bid size` per level.
pub fn read_orderbook<R: Read>(input: R) -> Result<Vec<Snapshot>, IngestError> {
    let mut out = Vec::new();
    let mut width = None;
    for (i, rec) in reader(input).records().enumerate() {
        let line = i + 1;
        let rec = rec?;
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected || expected == 0 || expected % 4 != 0 {
            return Err(IngestError::Columns { line, expected: if expected % 4 == 0 { expected } else { 40 }, got: rec.len() });
        }
        let levels = expected / 4;
        let mut s = Snapshot {
            ask_price: Vec::with_capacity(levels),
            ask_size: Vec::with_capacity(levels),
            bid_price: Vec::with_capacity(levels),
            bid_size: Vec::with_capacity(levels),
        };
        for l in 0..levels {
            s.ask_price.push(field(&rec, 4 * l, line, "ask price")?);
            s.ask_size.push(field(&rec, 4 * l + 1, line, "ask size")?);
            s.bid_price.push(field(&rec, 4 * l + 2, line, "bid price")?);
            s.bid_size.push(field(&rec, 4 * l + 3, line, "bid size")?);
        }
        out.push(s);
    }
    Ok(out)
}

pub fn parse_orderbook(path: &Path) -> Result<Vec<Snapshot>, IngestError> {
    read_orderbook(open(path)?)
}

pub fn write_messages<W: Write>(out: W, messages: &[MessageRecord]) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for m in messages {
        w.write_record([
            m.time.to_string(),
            m.event_type.to_string(),
            m.order_id.to_string(),
            m.size.to_string(),
            m.price.to_string(),
            m.direction.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IngestError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn write_orderbook<W: Write>(out: W, books: &[Snapshot]) -> Result<(), IngestError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for s in books {
        let mut row = Vec::with_capacity(4 * s.levels());
        for l in 0..s.levels() {
            row.push(s.ask_price[l].to_string());
            row.push(s.ask_size[l].to_string());
            row.push(s.bid_price[l].to_string());
            row.push(s.bid_size[l].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| IngestError::Io { path: "<writer>".into(), source })?;
    Ok(())
}
