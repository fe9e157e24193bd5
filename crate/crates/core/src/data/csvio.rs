use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::graphs::Order;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "order_id",
    "merchant_id",
    "sender_id",
    "receiver_id",
    "payment_ts",
    "origin_x",
    "origin_y",
    "dest_x",
    "dest_y",
    "delivery_hours",
];

/// A parsed row that violated a value constraint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the file, header is line 1.
    pub line: u64,
    pub order_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub orders: Vec<Order>,
    pub rejected: Vec<Rejection>,
}

pub fn write_csv<W: Write>(orders: &[Order], out: W) -> Result<()> {
    // Header written by hand so an empty table still has one.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
    for (i, o) in orders.iter().enumerate() {
        w.serialize(o).map_err(|e| Error::Csv { line: i as u64 + 2, msg: e.to_string() })?;
    }
    w.flush().map_err(|e| Error::Csv { line: 0, msg: e.to_string() })?;
    Ok(())
}

pub fn save_csv(orders: &[Order], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(orders, std::io::BufWriter::new(f))
}

fn validate(o: &Order) -> Option<String> {
    if !(o.delivery_hours > 0.0 && o.delivery_hours.is_finite()) {
        return Some(format!("delivery_hours must be positive, got {}", o.delivery_hours));
    }
    if o.payment_ts < 0 {
        return Some(format!("payment_ts must be nonnegative, got {}", o.payment_ts));
    }
    if ![o.origin_x, o.origin_y, o.dest_x, o.dest_y].iter().all(|v| v.is_finite()) {
        return Some("coordinates must be finite".into());
    }
    None
}

/// Parses an orders table. Malformed rows abort with their line number;
/// rows that parse but violate value constraints are skipped and reported.
pub fn read_csv<R: Read>(input: R) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?.clone();
    if header.is_empty() {
        return Ok(LoadReport::default());
    }
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Csv {
            line: 1,
            msg: format!("header must be {}, got {}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut report = LoadReport::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Csv { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let o: Order = rec.deserialize(Some(&header)).map_err(|e| Error::Csv { line, msg: e.to_string() })?;
        match validate(&o) {
            None => report.orders.push(o),
            Some(reason) => report.rejected.push(Rejection { line, order_id: o.order_id, reason }),
        }
    }
    if !report.rejected.is_empty() {
        log::warn!("rejected {} of {} rows", report.rejected.len(), report.rejected.len() + report.orders.len());
    }
    Ok(report)
}

pub fn load_csv(path: &Path) -> Result<LoadReport> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f))
}
