use std::fs;
use std::path::Path;

use atacom::envs::StepRecord;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::sweep::CellResult;

/// Column names of the per-episode CSV: `t, s…, u…, u_s…, c…, V, viol, sat`.
pub fn episode_header(records: &[StepRecord]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    if let Some(r) = records.first() {
        h.extend((0..r.state.len()).map(|i| format!("s{i}")));
        h.extend((0..r.action.len()).map(|i| format!("u{i}")));
        h.extend((0..r.u_s.len()).map(|i| format!("u_s{i}")));
        h.extend((0..r.c.len()).map(|i| format!("c{i}")));
    }
    h.extend(["V", "viol", "sat"].map(String::from));
    h
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_episode_csv(path: &Path, records: &[StepRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(episode_header(records))?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        for v in [&r.state, &r.action, &r.u_s, &r.c] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push(r.v.to_string());
        row.push(r.max_violation.to_string());
        row.push((r.saturated as u8).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes any serializable summary as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

pub fn write_plot_data(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Position trace of each episode, one series per episode.
pub fn trajectory_points(episodes: &[(u64, &[StepRecord])]) -> Vec<PlotPoint> {
    let mut out = Vec::new();
    for (seed, records) in episodes {
        for r in records.iter().filter(|r| r.state.len() >= 2) {
            out.push(PlotPoint {
                x: r.state[0],
                y: r.state[1],
                series: format!("episode_{seed}"),
            });
        }
    }
    out
}

/// Discounted return per episode, one series per sweep cell.
pub fn return_points(cells: &[CellResult]) -> Vec<PlotPoint> {
    cells
        .iter()
        .flat_map(|cell| {
            cell.episodes.iter().enumerate().map(move |(i, e)| PlotPoint {
                x: i as f64,
                y: e.discounted_return,
                series: cell.label.clone(),
            })
        })
        .collect()
}
