use std::fmt::Write as _;

use serde::Serialize;

use super::rules::{Factor, Tag};
use crate::executor::{Strategy, Trace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub name: String,
    /// Decisions carrying this label.
    pub count: usize,
    /// Share of the denominator: each decision spreads a weight of 1 evenly
    /// over its labels.
    pub weight: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    pub title: String,
    pub denominator: usize,
    /// No decisions to divide by; all percentages are zero.
    pub empty: bool,
    pub buckets: Vec<Bucket>,
}

impl Breakdown {
    fn tally(title: &str, names: &[&str], events: &[Vec<String>]) -> Breakdown {
        let mut buckets: Vec<Bucket> = names
            .iter()
            .map(|n| Bucket {
                name: n.to_string(),
                count: 0,
                weight: 0.0,
                percent: 0.0,
            })
            .collect();
        for labels in events {
            let share = 1.0 / labels.len() as f64;
            for l in labels {
                if let Some(b) = buckets.iter_mut().find(|b| &b.name == l) {
                    b.count += 1;
                    b.weight += share;
                }
            }
        }
        let denominator = events.len();
        if denominator > 0 {
            for b in &mut buckets {
                b.percent = 100.0 * b.weight / denominator as f64;
            }
        }
        Breakdown {
            title: title.to_string(),
            denominator,
            empty: denominator == 0,
            buckets,
        }
    }

    pub fn bucket(&self, name: &str) -> Option<&Bucket> {
        self.buckets.iter().find(|b| b.name == name)
    }

    pub fn percent(&self, name: &str) -> f64 {
        self.bucket(name).map_or(0.0, |b| b.percent)
    }

    pub fn total_percent(&self) -> f64 {
        self.buckets.iter().map(|b| b.percent).sum()
    }
}

/// Recovery usage statistics over a supervised trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub decisions: usize,
    pub unseen: usize,
    pub recovery_properties: Breakdown,
    pub diagnosis_factors: Breakdown,
    pub resumption_strategies: Breakdown,
}

pub const NONE_BUCKET: &str = "NONE";

fn labels(v: &serde_json::Value) -> Vec<String> {
    let mut out: Vec<String> = v
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
        .unwrap_or_default();
    if out.is_empty() {
        out.push(NONE_BUCKET.to_string());
    }
    out
}

/// Build the three breakdowns from the `decision` events of a trace.
/// Properties and factors cover rule matches only; strategies cover every
/// decision, so unseen exits land in `RESUME_NONE`.
pub fn report(trace: &Trace) -> StatsReport {
    let mut props = Vec::new();
    let mut factors = Vec::new();
    let mut strategies = Vec::new();
    let mut unseen = 0;
    for e in trace.of_kind("decision") {
        let strategy = e.payload["directive"]["strategy"].as_str().unwrap_or("RESUME_NONE");
        strategies.push(vec![strategy.to_string()]);
        if e.payload["rule"].is_null() {
            unseen += 1;
        } else {
            props.push(labels(&e.payload["tags"]));
            factors.push(labels(&e.payload["factors"]));
        }
    }
    let mut tag_names: Vec<&str> = Tag::ALL.iter().map(|t| t.as_str()).collect();
    tag_names.push(NONE_BUCKET);
    let mut factor_names: Vec<&str> = Factor::ALL.iter().map(|f| f.as_str()).collect();
    factor_names.push(NONE_BUCKET);
    let strategy_names: Vec<&str> = Strategy::ALL.iter().map(|s| s.as_str()).collect();
    StatsReport {
        decisions: strategies.len(),
        unseen,
        recovery_properties: Breakdown::tally("recovery properties", &tag_names, &props),
        diagnosis_factors: Breakdown::tally("diagnosis factors", &factor_names, &factors),
        resumption_strategies: Breakdown::tally("resumption strategies", &strategy_names, &strategies),
    }
}

impl StatsReport {
    pub fn breakdowns(&self) -> [&Breakdown; 3] {
        [&self.recovery_properties, &self.diagnosis_factors, &self.resumption_strategies]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "decisions: {} (unseen: {})", self.decisions, self.unseen);
        for b in self.breakdowns() {
            let _ = writeln!(out);
            let suffix = if b.empty { "  (empty)" } else { "" };
            let _ = writeln!(out, "{} (n={}){suffix}", b.title, b.denominator);
            let _ = writeln!(out, "  {:<18} {:>6} {:>9} {:>8}", "bucket", "count", "weight", "percent");
            for k in &b.buckets {
                let _ = writeln!(out, "  {:<18} {:>6} {:>9.3} {:>7.2}%", k.name, k.count, k.weight, k.percent);
            }
        }
        out
    }
}
