//! Tabular pass/fail reports shared by the diagnostics.

use std::fmt::Write as _;

/// One checked quantity. `pass` is `false` when the value leaves
/// `[bound_low, bound_high]` or is not finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub instance_id: String,
    pub quantity: String,
    pub value: f64,
    pub bound_low: Option<f64>,
    pub bound_high: Option<f64>,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(
        instance_id: impl Into<String>,
        quantity: impl Into<String>,
        value: f64,
        bound_low: Option<f64>,
        bound_high: Option<f64>,
    ) -> Self {
        let pass = value.is_finite()
            && bound_low.is_none_or(|b| value >= b)
            && bound_high.is_none_or(|b| value <= b);
        ReportRow {
            instance_id: instance_id.into(),
            quantity: quantity.into(),
            value,
            bound_low,
            bound_high,
            pass,
        }
    }

    /// A row for an instance that could not be evaluated.
    pub fn failed(instance_id: impl Into<String>, quantity: &str) -> Self {
        ReportRow {
            instance_id: instance_id.into(),
            quantity: quantity.to_string(),
            value: f64::NAN,
            bound_low: None,
            bound_high: None,
            pass: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// CSV with header `instance_id,quantity,value,bound_low,bound_high,pass`.
    /// Missing bounds are empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("instance_id,quantity,value,bound_low,bound_high,pass\n");
        let opt = |b: Option<f64>| b.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                csv_cell(&r.instance_id),
                csv_cell(&r.quantity),
                r.value,
                opt(r.bound_low),
                opt(r.bound_high),
                r.pass
            );
        }
        s
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
