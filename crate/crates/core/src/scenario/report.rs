//! File and stdout renderings of replay reports and throughput curves.

use std::fs;
use std::path::Path;

use crate::LedgerError;

use super::replay::ReplayReport;
use super::throughput::ThroughputPoint;

pub const CURVE_HEADER: [&str; 4] = ["freezerCount", "txCount", "blocks", "seconds"];

pub fn curve_csv(points: &[ThroughputPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([p.freezer_count, p.tx_count, p.blocks, p.seconds].map(|v| v.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_curve_csv(path: &Path, points: &[ThroughputPoint]) -> Result<(), LedgerError> {
    fs::write(path, curve_csv(points)).map_err(|e| LedgerError::io(path, e))
}

pub fn report_json(report: &ReplayReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report_json(path: &Path, report: &ReplayReport) -> Result<(), LedgerError> {
    fs::write(path, report_json(report)).map_err(|e| LedgerError::io(path, e))
}
