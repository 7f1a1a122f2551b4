//! Aggregate performance metrics and table rendering.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::median;

/// Per-gap outcome of one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapScore {
    pub true_total: f64,
    /// Mean of the imputed gap totals across imputations.
    pub imputed_total: f64,
    /// `imputed_total - true_total`.
    pub signed_bias: f64,
    pub periods: usize,
    pub truth_travel: usize,
    pub truth_still: usize,
    /// Imputed travel where the truth is still, each imputation weighted 1/m.
    pub over: f64,
    /// Imputed still where the truth travels, weighted 1/m.
    pub under: f64,
    /// Periods where imputation and truth agree, weighted 1/m.
    pub agree: f64,
}

/// Performance measures over a collection of gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub n: usize,
    pub skipped: usize,
    pub abs_bias: f64,
    pub med_bias: f64,
    pub dist_over: f64,
    pub dist_under: f64,
    pub rmse: f64,
    pub tp_acc: f64,
    pub tp_over: f64,
    pub tp_under: f64,
}

fn rate(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else {
        0.0
    }
}

impl MetricRow {
    /// Means over gaps for the distance measures; pooled period counts for
    /// the travel-period rates. Empty input gives NaN measures.
    pub fn aggregate(scores: &[GapScore], skipped: usize) -> Self {
        let n = scores.len();
        if n == 0 {
            return Self {
                n,
                skipped,
                abs_bias: f64::NAN,
                med_bias: f64::NAN,
                dist_over: f64::NAN,
                dist_under: f64::NAN,
                rmse: f64::NAN,
                tp_acc: f64::NAN,
                tp_over: f64::NAN,
                tp_under: f64::NAN,
            };
        }
        let nf = n as f64;
        let b: Vec<f64> = scores.iter().map(|s| s.signed_bias).collect();
        let sum = |f: &dyn Fn(&GapScore) -> f64| scores.iter().map(f).sum::<f64>();
        Self {
            n,
            skipped,
            abs_bias: (b.iter().sum::<f64>() / nf).abs(),
            med_bias: median(&b).unwrap(),
            dist_over: b.iter().map(|x| x.max(0.0)).sum::<f64>() / nf,
            dist_under: b.iter().map(|x| (-x).max(0.0)).sum::<f64>() / nf,
            rmse: (b.iter().map(|x| x * x).sum::<f64>() / nf).sqrt(),
            tp_acc: rate(sum(&|s| s.agree), sum(&|s| s.periods as f64)),
            tp_over: rate(sum(&|s| s.over), sum(&|s| s.truth_still as f64)),
            tp_under: rate(sum(&|s| s.under), sum(&|s| s.truth_travel as f64)),
        }
    }

    pub fn get(&self, c: Column) -> f64 {
        match c {
            Column::AbsBias | Column::Bias => self.abs_bias,
            Column::MedBias => self.med_bias,
            Column::DistOver => self.dist_over,
            Column::DistUnder => self.dist_under,
            Column::Rmse => self.rmse,
            Column::TpAcc => self.tp_acc,
            Column::TpOver => self.tp_over,
            Column::TpUnder => self.tp_under,
        }
    }

    /// Column-wise mean of several rows; counts are summed.
    pub fn mean_of(rows: &[MetricRow]) -> Self {
        let k = rows.len() as f64;
        let avg = |f: fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
        Self {
            n: rows.iter().map(|r| r.n).sum(),
            skipped: rows.iter().map(|r| r.skipped).sum(),
            abs_bias: avg(|r| r.abs_bias),
            med_bias: avg(|r| r.med_bias),
            dist_over: avg(|r| r.dist_over),
            dist_under: avg(|r| r.dist_under),
            rmse: avg(|r| r.rmse),
            tp_acc: avg(|r| r.tp_acc),
            tp_over: avg(|r| r.tp_over),
            tp_under: avg(|r| r.tp_under),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    AbsBias,
    /// Absolute bias under the parameter-grid heading.
    Bias,
    MedBias,
    DistOver,
    DistUnder,
    Rmse,
    TpAcc,
    TpOver,
    TpUnder,
}

impl Column {
    pub fn header(self) -> &'static str {
        match self {
            Column::AbsBias => "Abs Bias",
            Column::Bias => "Bias (km)",
            Column::MedBias => "Med Bias",
            Column::DistOver => "Dist Over",
            Column::DistUnder => "Dist Under",
            Column::Rmse => "RMSE",
            Column::TpAcc => "TP Acc.",
            Column::TpOver => "TP Over",
            Column::TpUnder => "TP Under",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Column::AbsBias | Column::Bias => "abs_bias",
            Column::MedBias => "med_bias",
            Column::DistOver => "dist_over",
            Column::DistUnder => "dist_under",
            Column::Rmse => "rmse",
            Column::TpAcc => "tp_acc",
            Column::TpOver => "tp_over",
            Column::TpUnder => "tp_under",
        }
    }

    fn render(self, v: f64) -> String {
        if v.is_nan() {
            return "-".into();
        }
        match self {
            Column::AbsBias | Column::MedBias | Column::DistOver | Column::DistUnder => format!("{v:.1} Km"),
            Column::Bias => format!("{v:.1}"),
            Column::Rmse => format!("{v:.2}"),
            Column::TpAcc | Column::TpOver | Column::TpUnder => format!("{v:.1}%"),
        }
    }
}

/// Column order of the method-comparison tables.
pub const COMPARISON_COLUMNS: [Column; 8] = [
    Column::AbsBias,
    Column::MedBias,
    Column::DistOver,
    Column::DistUnder,
    Column::Rmse,
    Column::TpAcc,
    Column::TpOver,
    Column::TpUnder,
];

/// Column order of the parameter-grid table.
pub const GRID_COLUMNS: [Column; 7] =
    [Column::Bias, Column::DistOver, Column::DistUnder, Column::Rmse, Column::TpAcc, Column::TpOver, Column::TpUnder];

/// Column order of the own-sets tables.
pub const OWN_SETS_COLUMNS: [Column; 7] =
    [Column::AbsBias, Column::Rmse, Column::TpOver, Column::TpUnder, Column::TpAcc, Column::DistOver, Column::DistUnder];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub keys: Vec<String>,
    pub metrics: MetricRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub key_headers: Vec<String>,
    pub columns: Vec<Column>,
    pub groups: Vec<Group>,
}

impl Table {
    pub fn new(name: &str, title: &str, key_headers: &[&str], columns: &[Column]) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            key_headers: key_headers.iter().map(|s| s.to_string()).collect(),
            columns: columns.to_vec(),
            groups: Vec::new(),
        }
    }

    pub fn push_group(&mut self, label: impl Into<String>, rows: Vec<Row>) {
        self.groups.push(Group { label: label.into(), rows });
    }

    pub fn find(&self, group: &str, keys: &[&str]) -> Option<&MetricRow> {
        self.groups
            .iter()
            .find(|g| g.label == group)?
            .rows
            .iter()
            .find(|r| r.keys.iter().map(String::as_str).eq(keys.iter().copied()))
            .map(|r| &r.metrics)
    }

    /// Aligned plain-text layout: a header, then each group label followed
    /// by its rows.
    pub fn render_text(&self) -> String {
        let mut header: Vec<String> = self.key_headers.clone();
        header.extend(self.columns.iter().map(|c| c.header().to_string()));
        header.extend(["n".to_string(), "Skipped".to_string()]);
        let mut lines: Vec<Option<Vec<String>>> = Vec::new();
        let mut labels = Vec::new();
        for g in &self.groups {
            labels.push((lines.len(), g.label.clone()));
            for r in &g.rows {
                let mut cells = r.keys.clone();
                cells.extend(self.columns.iter().map(|c| c.render(r.metrics.get(*c))));
                cells.extend([r.metrics.n.to_string(), r.metrics.skipped.to_string()]);
                lines.push(Some(cells));
            }
            lines.push(None);
        }
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for cells in lines.iter().flatten() {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.chars().count());
            }
        }
        let keys = self.key_headers.len();
        let fmt_row = |cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let pad = w - c.chars().count();
                if i < keys {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        let mut out = String::new();
        writeln!(out, "{}", self.title).unwrap();
        writeln!(out, "{}", "=".repeat(total)).unwrap();
        writeln!(out, "{}", fmt_row(&header)).unwrap();
        let mut label_iter = labels.into_iter().peekable();
        for (i, cells) in lines.iter().enumerate() {
            while let Some((_, label)) = label_iter.next_if(|(at, _)| *at == i) {
                writeln!(out, "{}", "-".repeat(total)).unwrap();
                writeln!(out, "{label}").unwrap();
            }
            if let Some(cells) = cells {
                writeln!(out, "{}", fmt_row(cells)).unwrap();
            }
        }
        out
    }
}

/// Long-format CSV, one row per table cell.
pub fn write_tables_csv<W: Write>(w: W, tables: &[Table]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["table", "group", "row", "metric", "value", "n", "skipped"])?;
    for t in tables {
        for g in &t.groups {
            for r in &g.rows {
                let row = r.keys.join(" | ");
                for c in &t.columns {
                    let v = r.metrics.get(*c);
                    let value = if v.is_nan() { String::new() } else { format!("{v}") };
                    wr.write_record([
                        t.name.as_str(),
                        g.label.as_str(),
                        row.as_str(),
                        c.key(),
                        value.as_str(),
                        &r.metrics.n.to_string(),
                        &r.metrics.skipped.to_string(),
                    ])?;
                }
            }
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn render_tables_text(tables: &[Table]) -> String {
    tables.iter().map(Table::render_text).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gs(bias: f64) -> GapScore {
        GapScore {
            true_total: 1.0,
            imputed_total: 1.0 + bias,
            signed_bias: bias,
            periods: 4,
            truth_travel: 2,
            truth_still: 2,
            over: 0.0,
            under: 0.0,
            agree: 4.0,
        }
    }

    #[test]
    fn perfect_imputation_row() {
        let r = MetricRow::aggregate(&[gs(0.0), gs(0.0)], 0);
        assert_eq!((r.abs_bias, r.med_bias, r.dist_over, r.dist_under, r.rmse), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.tp_acc, r.tp_over, r.tp_under), (100.0, 0.0, 0.0));
    }

    #[test]
    fn bias_summaries() {
        let r = MetricRow::aggregate(&[gs(2.0), gs(-1.0), gs(-4.0)], 1);
        assert_eq!(r.abs_bias, 1.0);
        assert_eq!(r.med_bias, -1.0);
        assert_eq!(r.dist_over, 2.0 / 3.0);
        assert_eq!(r.dist_under, 5.0 / 3.0);
        assert!((r.rmse - (21.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!((r.n, r.skipped), (3, 1));
    }

    #[test]
    fn empty_rates_are_zero() {
        let s = GapScore { truth_travel: 0, truth_still: 0, periods: 0, agree: 0.0, ..gs(0.0) };
        let r = MetricRow::aggregate(&[s], 0);
        assert_eq!((r.tp_acc, r.tp_over, r.tp_under), (0.0, 0.0, 0.0));
        assert!(MetricRow::aggregate(&[], 2).abs_bias.is_nan());
    }

    #[test]
    fn text_and_csv() {
        let mut t = Table::new("t1", "Method comparison", &[""], &COMPARISON_COLUMNS);
        t.push_group("1 hrs", vec![Row { keys: vec!["LI".into()], metrics: MetricRow::aggregate(&[gs(-0.8)], 0) }]);
        let text = t.render_text();
        assert!(text.contains("Abs Bias"));
        assert!(text.contains("0.8 Km"));
        assert!(text.lines().any(|l| l == "1 hrs"));
        let mut buf = Vec::new();
        write_tables_csv(&mut buf, &[t.clone()]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 8);
        assert_eq!(t.find("1 hrs", &["LI"]).unwrap().n, 1);
    }

    proptest! {
        #[test]
        fn over_minus_under_is_mean_bias(b in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
            let scores: Vec<GapScore> = b.iter().map(|&x| gs(x)).collect();
            let r = MetricRow::aggregate(&scores, 0);
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            prop_assert!((r.dist_over - r.dist_under - mean).abs() < 1e-9);
            prop_assert!(r.dist_over >= 0.0 && r.dist_under >= 0.0);
        }
    }
}
