use crate::framing::PACKET_BITS;
use crate::metrics::goodput;
use crate::optics::{min_angle, min_separation, OpticalSetup};
use crate::protocol::{estimate_latency, packets_per_slot, LatencyModel};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

/// Reference tables that can be recomputed from closed-form models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TableName {
    Geometry,
    T3Packets,
    T5Latency,
    Goodput,
}

impl TableName {
    pub const ALL: [TableName; 4] =
        [TableName::Geometry, TableName::T3Packets, TableName::T5Latency, TableName::Goodput];

    pub fn as_str(self) -> &'static str {
        match self {
            TableName::Geometry => "GEOMETRY",
            TableName::T3Packets => "T3_PACKETS",
            TableName::T5Latency => "T5_LATENCY",
            TableName::Goodput => "GOODPUT",
        }
    }
}

impl FromStr for TableName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        TableName::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown table {s:?}; expected one of GEOMETRY, T3_PACKETS, T5_LATENCY, GOODPUT"))
    }
}

/// One computed value next to its published reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: String,
    pub quantity: String,
    pub unit: String,
    pub computed: f64,
    pub reference: f64,
    /// Allowed absolute deviation; zero means exact.
    pub tolerance: f64,
    pub pass: bool,
}

impl TableCell {
    fn new(row: &str, quantity: &str, unit: &str, computed: f64, reference: f64, tolerance: f64) -> Self {
        TableCell {
            row: row.into(),
            quantity: quantity.into(),
            unit: unit.into(),
            computed,
            reference,
            tolerance,
            pass: (computed - reference).abs() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub name: TableName,
    pub cells: Vec<TableCell>,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.name.as_str());
        let _ = writeln!(
            out,
            "{:<14} {:<18} {:>14} {:>14} {:>10} {:<6} result",
            "row", "quantity", "computed", "reference", "tolerance", "unit"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<14} {:<18} {:>14} {:>14} {:>10} {:<6} {}",
                c.row,
                c.quantity,
                trim(c.computed),
                trim(c.reference),
                trim(c.tolerance),
                c.unit,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

fn trim(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn ms(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1e6
}

/// Recomputes a reference table and checks each cell against the published value.
pub fn reproduce_table(name: TableName) -> TableReport {
    let cells = match name {
        TableName::Geometry => {
            let setup = OpticalSetup::prototype();
            let h = min_separation(&setup).expect("prototype setup is valid");
            let alpha = min_angle(&setup).expect("prototype setup is valid");
            vec![
                TableCell::new("prototype", "separation h", "cm", h * 100.0, 14.88, 0.005),
                TableCell::new("prototype", "angle alpha", "deg", alpha, 51.2, 0.1),
            ]
        }
        TableName::T3Packets => [(500e3, "500 kHz", 477.0), (1e6, "1 MHz", 954.0), (2e6, "2 MHz", 1908.0)]
            .into_iter()
            .map(|(rate, row, reference)| {
                let n = packets_per_slot(rate, 1, 2.0, PACKET_BITS) as f64;
                TableCell::new(row, "packets in T_s", "count", n, reference, 0.0)
            })
            .collect(),
        TableName::T5Latency => {
            let us = Duration::from_micros(1);
            [(100u64, "100x100", 10.0, 209.6, 219.6), (1000, "1000x1000", 1000.0, 209.6, 1209.6)]
                .into_iter()
                .flat_map(|(side, row, step1, step2, total)| {
                    let model =
                        LatencyModel::new(side * side, 100, PACKET_BITS as u64, us, us).expect("positive model");
                    let est = estimate_latency(&model);
                    [
                        TableCell::new(row, "step 1", "ms", ms(est.discovery), step1, 0.0),
                        TableCell::new(row, "step 2", "ms", ms(est.identification), step2, 0.0),
                        TableCell::new(row, "total", "ms", ms(est.total), total, 0.0),
                    ]
                })
                .collect()
        }
        TableName::Goodput => {
            let g = goodput(0.015, 1.0 / 3.0, 2e6, 2.0) / 1e6;
            // The published figure is given to one decimal place.
            vec![TableCell::new("2 MHz, 2 b/sym", "goodput", "Mbps", g, 1.3, 0.05)]
        }
    };
    TableReport { name, cells }
}
