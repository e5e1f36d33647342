use std::fmt::{self, Write as _};

use serde::{Serialize, Serializer};

use super::{CorpusStats, Metrics, Rational};

/// Exact rational; serializes as `{"exact": "p/q", "value": f64}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fraction(pub Rational);

impl Fraction {
    /// Decimal rendering rounded half-up to `places` digits, computed on
    /// integers.
    pub fn decimal(&self, places: u32) -> String {
        let scale = 10u128.pow(places);
        let num = u128::from(*self.0.numer()) * scale;
        let den = u128::from(*self.0.denom());
        let rounded = (2 * num + den) / (2 * den);
        let int = rounded / scale;
        if places == 0 {
            return int.to_string();
        }
        format!("{int}.{:0width$}", rounded % scale, width = places as usize)
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            exact: String,
            value: f64,
        }
        Repr {
            exact: self.0.to_string(),
            value: self.to_f64(),
        }
        .serialize(s)
    }
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("  "));
        }
    }
    out
}

/// Aligned-column text rendering of a report.
pub trait TableReport {
    fn render_table(&self) -> String;
}

impl TableReport for Metrics {
    fn render_table(&self) -> String {
        let mut rows = vec![vec![
            "level".to_string(),
            "correct".into(),
            "total".into(),
            "accuracy".into(),
            "exact".into(),
        ]];
        for (level, a) in &self.per_level {
            rows.push(vec![
                level.to_string(),
                a.correct.to_string(),
                a.total.to_string(),
                a.accuracy.decimal(4),
                a.accuracy.to_string(),
            ]);
        }
        let o = &self.overall;
        rows.push(vec![
            "all".into(),
            o.correct.to_string(),
            o.total.to_string(),
            o.accuracy.decimal(4),
            o.accuracy.to_string(),
        ]);
        let mut out = table(&rows);
        if let Some(t) = &self.threshold {
            let _ = writeln!(out, "iou threshold: {}", t.decimal(2));
        }
        if !self.missing_prediction.is_empty() {
            let _ = writeln!(
                out,
                "missing predictions: {}",
                self.missing_prediction.join(", ")
            );
        }
        if !self.ties.is_empty() {
            let _ = writeln!(out, "tie-broken selections: {}", self.ties.join(", "));
        }
        out
    }
}

impl TableReport for CorpusStats {
    fn render_table(&self) -> String {
        let mut rows = vec![vec![
            "statistic".to_string(),
            "value".into(),
            "exact".into(),
        ]];
        rows.push(vec![
            "instances".into(),
            self.instances.to_string(),
            String::new(),
        ]);
        rows.push(vec![
            "expressions".into(),
            self.expressions.to_string(),
            String::new(),
        ]);
        rows.push(vec![
            "avg objects".into(),
            self.avg_objects.decimal(2),
            self.avg_objects.to_string(),
        ]);
        rows.push(vec![
            "avg max level".into(),
            self.avg_max_level.decimal(2),
            self.avg_max_level.to_string(),
        ]);
        for (level, n) in &self.max_level_histogram {
            rows.push(vec![
                format!("instances at level {level}"),
                n.to_string(),
                String::new(),
            ]);
        }
        for (level, n) in &self.expression_level_histogram {
            rows.push(vec![
                format!("expressions at level {level}"),
                n.to_string(),
                String::new(),
            ]);
        }
        let mut out = table(&rows);
        let _ = writeln!(out, "objects: {}", self.object_count_definition);
        out
    }
}

pub fn render_table(report: &impl TableReport) -> String {
    report.render_table()
}
