//! CSV and text emission. Column orders here are part of the tool's
//! interface; change them only together with the README.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::economics::{ExperimentReport, SweepResult};
use crate::error::Result;
use crate::fluid::{MarketState, Trajectory};
use crate::stochastic::{EventRecord, StochasticRun};

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "time",
    "x_L",
    "y_L",
    "x_I",
    "y_I",
    "A",
    "gross",
    "shared",
    "net",
    "completed_L",
    "completed_I",
];

pub const ENSEMBLE_HEADER: [&str; 5] = ["replication", "net_revenue", "completed_L", "completed_I", "final_y_I"];

pub const SWEEP_HEADER: [&str; 7] = [
    "delta",
    "net_revenue",
    "gross_revenue",
    "shared_revenue",
    "completed_L",
    "completed_I",
    "legal_completion_share",
];

pub const EXPERIMENT_HEADER: [&str; 10] = [
    "regime",
    "demand_kind",
    "M",
    "engine",
    "delta_star",
    "net_no_share",
    "net_with_share",
    "gain_ratio",
    "legal_completion_share",
    "fluid_stoch_rel_err",
];

pub const EVENT_HEADER: [&str; 12] = [
    "time",
    "event_kind",
    "swarm",
    "x_L",
    "y_L",
    "x_I",
    "y_I",
    "A",
    "gross",
    "shared",
    "completed_L",
    "completed_I",
];

fn num(v: f64) -> String {
    v.to_string()
}

fn csv_bytes<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn state_columns(s: &MarketState) -> [String; 10] {
    [
        num(s.legal_downloaders),
        num(s.legal_seeds),
        num(s.illicit_downloaders),
        num(s.illicit_seeds),
        num(s.adopters),
        num(s.gross_revenue),
        num(s.shared_revenue),
        num(s.net_revenue()),
        num(s.completed_legal),
        num(s.completed_illicit),
    ]
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    csv_bytes(
        &TRAJECTORY_HEADER,
        traj.iter()
            .map(|(t, s)| std::iter::once(num(t)).chain(state_columns(s)).collect::<Vec<_>>()),
    )
}

pub fn ensemble_csv(run: &StochasticRun) -> Result<Vec<u8>> {
    csv_bytes(
        &ENSEMBLE_HEADER,
        run.final_states.iter().enumerate().map(|(i, s)| {
            vec![
                i.to_string(),
                num(s.net_revenue()),
                num(s.completed_legal),
                num(s.completed_illicit),
                num(s.illicit_seeds),
            ]
        }),
    )
}

pub fn sweep_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    csv_bytes(
        &SWEEP_HEADER,
        sweep.deltas.iter().zip(&sweep.reports).map(|(d, r)| {
            vec![
                num(*d),
                num(r.net),
                num(r.gross),
                num(r.shared),
                num(r.completed_legal),
                num(r.completed_illicit),
                num(r.legal_share_of_completions),
            ]
        }),
    )
}

pub fn experiment_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    csv_bytes(
        &EXPERIMENT_HEADER,
        report.rows.iter().map(|r| {
            vec![
                r.regime.name(),
                r.regime.demand.as_str().to_string(),
                num(r.market_size),
                r.engine.to_string(),
                num(r.delta_star),
                num(r.net_no_share),
                num(r.net_with_share),
                num(r.gain_ratio),
                num(r.legal_completion_share),
                r.fluid_stoch_rel_err.map(num).unwrap_or_else(|| "NA".into()),
            ]
        }),
    )
}

pub fn event_log_csv(events: &[EventRecord]) -> Result<Vec<u8>> {
    csv_bytes(
        &EVENT_HEADER,
        events.iter().map(|e| {
            let s = &e.state;
            vec![
                num(e.time),
                e.kind.as_str().to_string(),
                e.swarm.as_str().to_string(),
                num(s.legal_downloaders),
                num(s.legal_seeds),
                num(s.illicit_downloaders),
                num(s.illicit_seeds),
                num(s.adopters),
                num(s.gross_revenue),
                num(s.shared_revenue),
                num(s.completed_legal),
                num(s.completed_illicit),
            ]
        }),
    )
}

/// Aligned plain-text rendering of an experiment report.
pub fn experiment_table(report: &ExperimentReport) -> String {
    let header = [
        "regime", "M", "engine", "delta*", "net(0)", "net(delta*)", "gain", "legal share", "rel err",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &report.rows {
        let gain = if r.baseline_collapsed {
            format!(">={:.3}", r.gain_ratio)
        } else {
            format!("{:.3}", r.gain_ratio)
        };
        rows.push(vec![
            r.regime.name(),
            format!("{}", r.market_size),
            r.engine.to_string(),
            format!("{:.3}", r.delta_star),
            format!("{:.2}", r.net_no_share),
            format!("{:.2}", r.net_with_share),
            gain,
            format!("{:.3}", r.legal_completion_share),
            r.fluid_stoch_rel_err.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid;
    use crate::scenario::Scenario;

    #[test]
    fn trajectory_header_and_net_column() {
        let mut sc = Scenario::default();
        sc.horizon = 1.0;
        let traj = fluid::run(&sc).unwrap();
        let text = String::from_utf8(trajectory_csv(&traj).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "time,x_L,y_L,x_I,y_I,A,gross,shared,net,completed_L,completed_I");
        assert_eq!(lines.count(), traj.len());
        let last = traj.final_state().unwrap();
        let cols: Vec<f64> = text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[8], last.gross_revenue - last.shared_revenue);
        assert_eq!(cols[0], 1.0);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
