//! Grid construction and table output.

use std::io::Write;

use crate::data::TargetKind;
use crate::error::Result;
use crate::simgen::Setup;

use super::{run_scenario, Method, ScenarioConfig, ScenarioResult, Stat, SummaryRow};

/// Column headers of every summary table.
pub const TABLE_HEADERS: [&str; 7] = ["Setup", "n", "p", "RF", "RF kernel", "L kernel", "Δ_RF"];

const CELLS: [(usize, usize); 4] = [(800, 20), (800, 40), (1600, 20), (1600, 40)];

/// The 20 scenarios of one results table: five setups by four `(n, p)` cells.
pub fn paper_grid(target: TargetKind, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    Setup::ALL
        .iter()
        .flat_map(|&setup| {
            CELLS.iter().map(move |&(n, p)| ScenarioConfig {
                setup,
                n,
                p,
                target,
                ..base.clone()
            })
        })
        .collect()
}

/// Runs each scenario in order.
pub fn run_grid(configs: &[ScenarioConfig]) -> Result<Vec<ScenarioResult>> {
    configs.iter().map(run_scenario).collect()
}

fn cell(stat: Option<Stat>) -> String {
    stat.map_or_else(|| "NA".to_string(), |s| s.cell())
}

fn table_row(row: &SummaryRow) -> [String; 7] {
    [
        row.setup.label().to_string(),
        row.n.to_string(),
        row.p.to_string(),
        cell(row.stat(Method::Rf)),
        cell(row.stat(Method::RfKernel)),
        cell(row.stat(Method::LaplaceKernel)),
        cell(row.delta_rf),
    ]
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE_HEADERS)?;
    for row in rows {
        out.write_record(table_row(row))?;
    }
    out.flush()?;
    Ok(())
}

/// Space-padded columns; text columns left-aligned, numbers right-aligned.
pub fn write_summary_text<W: Write>(rows: &[SummaryRow], mut w: W) -> Result<()> {
    let body: Vec<[String; 7]> = rows.iter().map(table_row).collect();
    let mut widths: Vec<usize> = TABLE_HEADERS.iter().map(|h| h.chars().count()).collect();
    for r in &body {
        for (wd, c) in widths.iter_mut().zip(r) {
            *wd = (*wd).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, &wd))| {
                let pad = " ".repeat(wd - c.chars().count());
                if j == 0 {
                    format!("{c}{pad}")
                } else {
                    format!("{pad}{c}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let header: Vec<String> = TABLE_HEADERS.iter().map(|s| s.to_string()).collect();
    writeln!(w, "{}", line(&header))?;
    for r in &body {
        writeln!(w, "{}", line(r))?;
    }
    Ok(())
}

/// One line per (scenario, replicate, method); failed methods have an empty value.
pub fn write_raw_csv<W: Write>(results: &[ScenarioResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "setup",
        "n",
        "p",
        "target",
        "node_size_multiplier",
        "replicate",
        "seed",
        "split_hash",
        "method",
        "metric",
        "value",
        "comparable_pairs",
    ])?;
    for res in results {
        let c = &res.config;
        let metric = format!("{:?}", res.summary.metric).to_lowercase();
        for rec in &res.records {
            for (method, m) in &rec.metrics {
                out.write_record([
                    c.setup.key().to_string(),
                    c.n.to_string(),
                    c.p.to_string(),
                    c.target.to_string(),
                    c.pipeline.node_size_multiplier.to_string(),
                    rec.index.to_string(),
                    rec.seed.to_string(),
                    format!("{:016x}", rec.split_hash),
                    method.key().to_string(),
                    metric.clone(),
                    m.map_or_else(String::new, |m| format!("{:.17e}", m.value)),
                    m.and_then(|m| m.comparable_pairs).map_or_else(String::new, |p| p.to_string()),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::metrics::MetricKind;

    fn row() -> SummaryRow {
        let s = |mean, sd| Some(Stat { mean, sd, count: 20 });
        let methods: BTreeMap<Method, Option<Stat>> =
            [(Method::Rf, s(6.827, 0.668)), (Method::RfKernel, s(5.233, 0.597)), (Method::LaplaceKernel, None)]
                .into_iter()
                .collect();
        SummaryRow {
            setup: Setup::Friedman,
            n: 800,
            p: 20,
            target: TargetKind::Continuous,
            metric: MetricKind::Mse,
            node_size_multiplier: 1,
            replicates: 20,
            methods,
            delta_rf: s(-1.594, 0.4),
            sd_degenerate: false,
        }
    }

    #[test]
    fn grid_has_twenty_cells() {
        let g = paper_grid(TargetKind::Binary, &ScenarioConfig::default());
        assert_eq!(g.len(), 20);
        assert_eq!((g[1].setup, g[1].n, g[1].p), (Setup::Friedman, 800, 40));
        assert!(g.iter().all(|c| c.target == TargetKind::Binary));
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        assert!(run_grid(&[]).unwrap().is_empty());
        let mut buf = Vec::new();
        write_summary_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "Setup,n,p,RF,RF kernel,L kernel,Δ_RF\n");
    }

    #[test]
    fn csv_cells_use_mean_sd_format() {
        let mut buf = Vec::new();
        write_summary_csv(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "Friedman,800,20,6.827 (0.668),5.233 (0.597),NA,-1.594 (0.400)");
    }

    #[test]
    fn text_table_is_aligned() {
        let mut buf = Vec::new();
        write_summary_text(&[row(), row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lens: Vec<usize> = text.lines().skip(1).map(|l| l.chars().count()).collect();
        assert_eq!(lens[0], lens[1]);
        assert!(text.starts_with("Setup"));
    }
}
