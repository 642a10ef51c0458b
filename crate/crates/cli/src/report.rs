use std::fmt::Write as _;

use serde_json::Value;

/// A command's output in both renderings.
pub struct Report {
    pub json: Value,
    pub table: String,
}

impl Report {
    pub fn new(json: Value) -> Self {
        Self {
            json,
            table: String::new(),
        }
    }

    pub fn line(&mut self, text: impl AsRef<str>) -> &mut Self {
        let _ = writeln!(self.table, "{}", text.as_ref());
        self
    }
}

pub fn probs(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{:.4}", x + 0.0)).collect();
    format!("({})", parts.join(", "))
}

/// Fixed-width table with a header row.
pub fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        let cells: Vec<String> = r.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
