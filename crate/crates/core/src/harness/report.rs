//! Report emission: one CSV row per method and replication, plus a Markdown
//! summary laid out like a results table (methods as rows, sample sizes as
//! columns, standard errors in parentheses).

use std::io::Write;

use serde::Serialize;

use super::experiment::ExperimentReport;
use crate::config::Method;
use crate::error::Result;

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    method: &'a str,
    rep: usize,
    seed: u64,
    mse: Option<f64>,
    runtime_sec: Option<f64>,
}

/// Columns: `scenario, method, rep, seed, mse, runtime_sec`. Timings are
/// left empty unless `record_runtime` is set.
pub fn write_report_csv<W: Write>(out: W, reports: &[ExperimentReport], record_runtime: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for report in reports {
        for r in &report.reps {
            w.serialize(CsvRow {
                scenario: report.scenario.scenario.name(),
                method: report.method.name(),
                rep: r.rep,
                seed: r.seed,
                mse: r.mse,
                runtime_sec: record_runtime.then_some(r.runtime_sec),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    scenario: &'a str,
    n: usize,
    rep: usize,
    seed: u64,
    selected: &'a str,
}

/// The candidate chosen in each replication of the `ours` method.
pub fn write_selections_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for report in reports.iter().filter(|r| r.method == Method::Ours) {
        for r in &report.reps {
            w.serialize(SelectionRow {
                scenario: report.scenario.scenario.name(),
                n: report.scenario.n,
                rep: r.rep,
                seed: r.seed,
                selected: r.selected.as_deref().unwrap_or(""),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Csv {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Markdown table with one row per method and one column per sample size.
/// Methods appear in first-seen order.
pub fn markdown_table(reports: &[ExperimentReport], record_runtime: bool) -> String {
    let mut sizes: Vec<usize> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for r in reports {
        if !sizes.contains(&r.scenario.n) {
            sizes.push(r.scenario.n);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut s = String::new();
    if let Some(first) = reports.first() {
        let reps = first.reps.len();
        s.push_str(&format!(
            "Comparison of MSE over {reps} runs ({}, sigma={}). Standard errors (SE of the mean) are in parentheses.\n\n",
            first.scenario.scenario.name(),
            first.scenario.sigma
        ));
    }
    s.push_str("| Method |");
    for n in &sizes {
        s.push_str(&format!(" n={n} |"));
    }
    s.push_str("\n|:--|");
    for _ in &sizes {
        s.push_str(":-:|");
    }
    s.push('\n');
    for m in methods {
        let name = match m {
            Method::Ours => format!("**{}**", m.display_name()),
            _ => m.display_name().to_string(),
        };
        s.push_str(&format!("| {name} |"));
        for n in &sizes {
            match reports.iter().find(|r| r.method == m && r.scenario.n == *n) {
                Some(r) => {
                    let mut cell = format!(" {:.4} ({:.4})", r.mean_mse, r.se_mean);
                    if r.failed > 0 {
                        cell.push_str(&format!(" [{} failed]", r.failed));
                    }
                    if record_runtime {
                        cell.push_str(&format!(" {:.1}s", r.runtime_sec));
                    }
                    s.push_str(&cell);
                    s.push_str(" |");
                }
                None => s.push_str(" – |"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{Scenario, ScenarioSpec};
    use crate::harness::experiment::RepRecord;

    fn report(method: Method, n: usize, values: &[f64]) -> ExperimentReport {
        let recs = values
            .iter()
            .enumerate()
            .map(|(i, &v)| RepRecord {
                rep: i,
                seed: i as u64,
                mse: Some(v),
                runtime_sec: 1.5,
                selected: Some("s2@1e-3".into()),
                error: None,
            })
            .collect();
        ExperimentReport::from_records(ScenarioSpec::new(Scenario::Univariate, n, 1.0, 0), method, recs).unwrap()
    }

    #[test]
    fn csv_layout() {
        let reports = vec![report(Method::Ours, 100, &[0.5, 0.25]), report(Method::PlugIn, 100, &[1.0, 2.0])];
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &reports, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scenario,method,rep,seed,mse,runtime_sec");
        assert_eq!(lines[1], "univariate,ours,0,0,0.5,");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn markdown_layout() {
        let reports = vec![
            report(Method::Ours, 1000, &[0.05, 0.07]),
            report(Method::PlugIn, 1000, &[0.08]),
            report(Method::Ours, 500, &[0.1]),
        ];
        let md = markdown_table(&reports, false);
        assert!(md.contains("| Method | n=1000 | n=500 |"));
        assert!(md.contains("| **Ours** | 0.0600 (0.0100) | 0.1000 (0.0000) |"));
        assert!(md.contains("| Plug-in KRR | 0.0800 (0.0000) | – |"));
    }
}
