//! Aggregate tables and static charts over episode traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::EpisodeTrace;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no traces to report")]
    Empty,
    #[error("group {group:?} mixes configs {first} and {other}")]
    MixedConfigs {
        group: String,
        first: String,
        other: String,
    },
}

/// Reported quantities, in column order.
pub const METRICS: [&str; 9] = [
    "swf",
    "prod",
    "eq",
    "emissions",
    "excess",
    "trades",
    "properties",
    "projects",
    "investments",
];

/// The reported quantities of one trace, in [`METRICS`] order.
pub fn trace_values(trace: &EpisodeTrace) -> [f64; 9] {
    let s = &trace.summary;
    [
        s.metrics.swf,
        s.metrics.prod,
        s.metrics.eq,
        s.cumulative_emissions,
        s.excess_emissions,
        s.trades as f64,
        s.properties as f64,
        s.projects_complete as f64,
        s.investments as f64,
    ]
}

/// Group label built from the policies and the punishment.
pub fn group_key(trace: &EpisodeTrace) -> String {
    let h = &trace.header;
    format!("{} p={} ent={}", h.gov_policy, h.punishment, h.ent_policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub stats: Vec<Stat>,
}

impl ReportRow {
    pub fn stat(&self, metric: &str) -> Option<Stat> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.stats[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Groups traces by [`group_key`]; every group must share one config.
    /// Rows come out in key order.
    pub fn from_traces<'a, I>(traces: I) -> Result<Self, ReportError>
    where
        I: IntoIterator<Item = &'a EpisodeTrace>,
    {
        let mut groups: BTreeMap<String, (String, Vec<&EpisodeTrace>)> = BTreeMap::new();
        for trace in traces {
            let key = group_key(trace);
            let hash = &trace.header.config_hash;
            let entry = groups.entry(key.clone()).or_insert_with(|| (hash.clone(), Vec::new()));
            if &entry.0 != hash {
                return Err(ReportError::MixedConfigs {
                    group: key,
                    first: entry.0.clone(),
                    other: hash.clone(),
                });
            }
            entry.1.push(trace);
        }
        if groups.is_empty() {
            return Err(ReportError::Empty);
        }
        let rows = groups
            .into_iter()
            .map(|(group, (_, traces))| {
                let values: Vec<[f64; 9]> = traces.iter().map(|t| trace_values(t)).collect();
                let stats = (0..METRICS.len())
                    .map(|m| Stat::of(&values.iter().map(|v| v[m]).collect::<Vec<_>>()))
                    .collect();
                let mut seeds: Vec<u64> = traces.iter().map(|t| t.header.seed).collect();
                seeds.sort_unstable();
                ReportRow {
                    group,
                    episodes: traces.len(),
                    seeds,
                    stats,
                }
            })
            .collect();
        Ok(Self { rows })
    }

    /// Sorts rows by descending mean swf, ties by name.
    pub fn ranked_by_swf(mut self) -> Self {
        self.rows.sort_by(|a, b| {
            b.stats[0]
                .mean
                .total_cmp(&a.stats[0].mean)
                .then_with(|| a.group.cmp(&b.group))
        });
        self
    }

    pub fn row(&self, group: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    /// Comma-separated table with `<metric>_mean` and `<metric>_std` columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,episodes");
        for m in METRICS {
            write!(out, ",{m}_mean,{m}_std").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "\"{}\",{}", r.group.replace('"', "\"\""), r.episodes).unwrap();
            for s in &r.stats {
                write!(out, ",{},{}", s.mean, s.std).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Human-aligned table of `mean ± std` cells.
    pub fn to_text(&self) -> String {
        let mut header: Vec<String> = vec!["group".into(), "n".into()];
        header.extend(METRICS.iter().map(|m| m.to_string()));
        let mut rows: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut cells = vec![r.group.clone(), r.episodes.to_string()];
            cells.extend(
                r.stats
                    .iter()
                    .map(|s| format!("{} ± {}", fmt_num(s.mean), fmt_num(s.std))),
            );
            rows.push(cells);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if c == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }

    /// Bar chart of one metric's group means with ±1 std whiskers.
    pub fn bar_chart_svg(&self, metric: &str) -> Option<String> {
        let idx = METRICS.iter().position(|m| *m == metric)?;
        let (w, h, left, bottom, top) = (720.0, 420.0, 70.0, 150.0, 40.0);
        let plot_h = h - bottom - top;
        let n = self.rows.len().max(1) as f64;
        let slot = (w - left - 20.0) / n;
        let hi = self
            .rows
            .iter()
            .map(|r| r.stats[idx].mean + r.stats[idx].std)
            .fold(0.0f64, f64::max);
        let lo = self
            .rows
            .iter()
            .map(|r| r.stats[idx].mean - r.stats[idx].std)
            .fold(0.0f64, f64::min);
        let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
        let y = |v: f64| top + plot_h * (hi - v) / span;
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{metric} (mean ± std)</text>"#,
            w / 2.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
            top + plot_h
        )
        .unwrap();
        let zero = y(0.0);
        writeln!(
            s,
            r#"<line x1="{left}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="black"/>"#,
            w - 20.0
        )
        .unwrap();
        for k in 0..=4 {
            let v = lo + span * k as f64 / 4.0;
            writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 6.0,
                y(v) + 4.0,
                fmt_num(v)
            )
            .unwrap();
        }
        for (i, r) in self.rows.iter().enumerate() {
            let st = r.stats[idx];
            let x = left + slot * i as f64 + slot * 0.15;
            let bw = slot * 0.7;
            let (y0, y1) = (y(st.mean.max(0.0)), y(st.mean.min(0.0)));
            writeln!(
                s,
                r##"<rect x="{x:.2}" y="{y0:.2}" width="{bw:.2}" height="{:.2}" fill="#4c78a8"/>"##,
                (y1 - y0).max(0.5)
            )
            .unwrap();
            let cx = x + bw / 2.0;
            writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                y(st.mean + st.std),
                y(st.mean - st.std)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text transform="translate({cx:.2},{:.2}) rotate(40)">{}</text>"#,
                top + plot_h + 12.0,
                escape(&r.group)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(ReportTable::from_traces(std::iter::empty()), Err(ReportError::Empty));
    }
}
