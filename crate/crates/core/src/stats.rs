//! Structural summary of a snapshot graph.
//!
//! Mean degree is total degree `2|E|/|V|` and edge density is
//! `2|E| / (|V| (|V| - 1))`; these are the forms that reproduce published
//! host-graph summaries from their own node and edge counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::degree::DegreeTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("edge density is undefined for {0} node(s)")]
    TooFewNodes(u64),
}

pub fn mean_degree(n_nodes: u64, n_edges: u64) -> Result<f64, StatsError> {
    if n_nodes == 0 {
        return Err(StatsError::TooFewNodes(n_nodes));
    }
    Ok(2.0 * n_edges as f64 / n_nodes as f64)
}

pub fn edge_density(n_nodes: u64, n_edges: u64) -> Result<f64, StatsError> {
    if n_nodes < 2 {
        return Err(StatsError::TooFewNodes(n_nodes));
    }
    let n = n_nodes as f64;
    Ok(2.0 * n_edges as f64 / (n * (n - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_nodes: u64,
    pub n_edges: u64,
    pub isolated: u64,
    pub leaves: u64,
    pub edge_density: f64,
    pub min_degree: u64,
    pub max_degree: u64,
    pub mean_degree: f64,
}

/// Associative per-shard accumulator over total degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeSummary {
    pub nodes: u64,
    pub degree_sum: u64,
    pub isolated: u64,
    pub leaves: u64,
    pub min: u64,
    pub max: u64,
}

impl Default for DegreeSummary {
    fn default() -> Self {
        DegreeSummary { nodes: 0, degree_sum: 0, isolated: 0, leaves: 0, min: u64::MAX, max: 0 }
    }
}

impl DegreeSummary {
    pub fn push(&mut self, degree: u64) {
        self.nodes += 1;
        self.degree_sum += degree;
        self.isolated += (degree == 0) as u64;
        self.leaves += (degree == 1) as u64;
        self.min = self.min.min(degree);
        self.max = self.max.max(degree);
    }

    pub fn merge(self, other: Self) -> Self {
        DegreeSummary {
            nodes: self.nodes + other.nodes,
            degree_sum: self.degree_sum + other.degree_sum,
            isolated: self.isolated + other.isolated,
            leaves: self.leaves + other.leaves,
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    pub fn report(&self) -> Result<StatsReport, StatsError> {
        let n_edges = self.degree_sum / 2;
        Ok(StatsReport {
            n_nodes: self.nodes,
            n_edges,
            isolated: self.isolated,
            leaves: self.leaves,
            edge_density: edge_density(self.nodes, n_edges)?,
            min_degree: if self.nodes == 0 { 0 } else { self.min },
            max_degree: self.max,
            mean_degree: mean_degree(self.nodes, n_edges)?,
        })
    }
}

/// One pass over a degree table.
pub fn compute_stats(degrees: &DegreeTable) -> Result<StatsReport, StatsError> {
    let mut acc = DegreeSummary::default();
    for v in 0..degrees.n() {
        acc.push(degrees.degree(v));
    }
    acc.report()
}

impl StatsReport {
    /// Aligned text table with one row per feature.
    pub fn to_table(&self, column: &str) -> String {
        let rows = [
            ("|V|", thousands(self.n_nodes)),
            ("|E|", thousands(self.n_edges)),
            ("Isolated nodes (deg = 0)", thousands(self.isolated)),
            ("Leaves (deg = 1)", thousands(self.leaves)),
            ("Edge density", scientific(self.edge_density)),
            ("Min. degree", thousands(self.min_degree)),
            ("Max. degree", thousands(self.max_degree)),
            ("Mean degree", format!("{:.2}", self.mean_degree)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(column.len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>vwidth$}", "Feature", column);
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>vwidth$}");
        }
        out
    }
}

/// `1.28e-07`-style scientific notation (two mantissa decimals, signed
/// two-digit exponent).
pub fn scientific(x: f64) -> String {
    let s = format!("{x:.2e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().unwrap_or(0);
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", exp.abs())
        }
        None => s,
    }
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
