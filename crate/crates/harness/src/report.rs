//! Text, CSV and JSON renderings of breakdown reports and gain curves.

use figqa_core::stats::{BreakdownCell, BreakdownReport, GainRow};

pub const WORSE_MARK: &str = "*";
pub const BEST_MARK: &str = "^";

fn cell_text(cell: Option<&BreakdownCell>) -> String {
    match cell {
        None => "-".to_string(),
        Some(c) => {
            let mark = if c.is_best {
                BEST_MARK
            } else if c.significantly_worse {
                WORSE_MARK
            } else {
                ""
            };
            format!(
                "{:.2}±{:.2}{mark}",
                100.0 * c.bootstrap.mean,
                100.0 * c.bootstrap.std_dev
            )
        }
    }
}

/// Aligned table of bootstrap mean ± std (in percent) per strategy and
/// column, followed by a legend for the markers.
pub fn breakdown_text(report: &BreakdownReport) -> String {
    let mut header = vec!["strategy".to_string()];
    header.extend(report.columns.iter().map(|c| c.label()));
    let mut rows = vec![header];
    for row in &report.rows {
        let mut line = vec![row.strategy.clone()];
        line.extend(row.cells.iter().map(|c| cell_text(c.as_ref())));
        rows.push(line);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| {
                let pad = w - s.chars().count();
                if i == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out.push_str(&format!(
        "\n{BEST_MARK} column best (highest bootstrap mean)\n\
         {WORSE_MARK} significantly worse than the column best (Wilcoxon signed-rank, p < {})\n\
         values: bootstrap mean ± std in percent over {} resamples, seed {}\n",
        report.options.alpha, report.options.n_resamples, report.options.seed
    ));
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_string(records: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// One line per (strategy, column) cell.
pub fn breakdown_csv(report: &BreakdownReport) -> String {
    let mut records = vec![[
        "strategy",
        "column",
        "n",
        "accuracy",
        "bootstrap_mean",
        "bootstrap_std",
        "is_best",
        "p_vs_best",
        "significantly_worse_than_best",
    ]
    .map(String::from)
    .to_vec()];
    for row in &report.rows {
        for (col, cell) in report.columns.iter().zip(&row.cells) {
            let mut r = vec![row.strategy.clone(), col.label()];
            match cell {
                None => r.extend(std::iter::repeat_n(String::new(), 7)),
                Some(c) => r.extend([
                    c.n.to_string(),
                    c.accuracy.to_string(),
                    c.bootstrap.mean.to_string(),
                    c.bootstrap.std_dev.to_string(),
                    c.is_best.to_string(),
                    opt(c.vs_best.as_ref().map(|t| t.p_value)),
                    c.significantly_worse.to_string(),
                ]),
            }
            records.push(r);
        }
    }
    csv_string(records)
}

pub fn breakdown_json(report: &BreakdownReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Gain table; empty bins leave the accuracy and gain fields blank.
pub fn gain_csv(rows: &[GainRow]) -> String {
    let mut records = vec![[
        "lower",
        "upper",
        "n",
        "baseline_accuracy",
        "method_accuracy",
        "gain",
    ]
    .map(String::from)
    .to_vec()];
    for r in rows {
        records.push(vec![
            r.lower.to_string(),
            r.upper.to_string(),
            r.n.to_string(),
            opt(r.baseline_accuracy),
            opt(r.method_accuracy),
            opt(r.gain),
        ]);
    }
    csv_string(records)
}
