//! Plain-text tables with percentages at one decimal.

use super::{ConfusionMatrix, CrossValReport, RateReport};

pub fn percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}%", 100.0 * v),
        None => "n/a".to_string(),
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone()));
        out.push('\n');
    }
    out
}

/// One row per named classifier: S01, FA, ND and an optional size column.
pub fn rates_table(rows: &[(String, RateReport, Option<usize>)]) -> String {
    let with_size = rows.iter().any(|r| r.2.is_some());
    let mut header = vec!["Classifier", "S01", "FA", "ND"];
    if with_size {
        header.push("Size");
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, r, size)| {
            let mut cells = vec![name.clone(), percent(Some(r.s01)), percent(r.fa), percent(r.nd)];
            if with_size {
                cells.push(size.map(|s| s.to_string()).unwrap_or_default());
            }
            cells
        })
        .collect();
    render(&header, &body)
}

pub fn confusion_table(name: &str, m: &ConfusionMatrix) -> String {
    let rows = vec![
        vec!["Defect (true)".to_string(), m.tp.to_string(), m.fn_.to_string()],
        vec!["No defect (true)".to_string(), m.fp.to_string(), m.tn.to_string()],
    ];
    format!(
        "{name}\n{}",
        render(&["", "Defect (predicted)", "No defect (predicted)"], &rows)
    )
}

pub fn crossval_table(reports: &[CrossValReport]) -> String {
    let pm = |s: Option<super::Stat>| match s {
        Some(s) => format!("{:.1}% ± {:.1}", 100.0 * s.mean, 100.0 * s.std),
        None => "n/a".to_string(),
    };
    let body: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.trainer.clone(),
                pm(Some(r.s01)),
                pm(r.fa),
                pm(r.nd),
                r.timing
                    .as_ref()
                    .map(|t| format!("{:.3} s ± {:.3}", t.stat.mean, t.stat.std))
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    render(&["Classifier", "S01", "FA", "ND", "Training time"], &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rates;

    #[test]
    fn rate_rows_are_aligned() {
        let m = ConfusionMatrix {
            tp: 95,
            fn_: 32,
            fp: 93,
            tn: 848,
        };
        let t = rates_table(&[("mlp".into(), rates(&m), None)]);
        assert!(t.contains("11.7%"));
        assert!(t.contains("9.9%") && t.contains("25.2%"));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        let c = confusion_table("best mlp", &m);
        assert!(c.contains("848"));
        assert_eq!(percent(None), "n/a");
    }
}
