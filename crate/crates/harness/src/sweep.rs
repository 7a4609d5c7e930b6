use atacom::envs::EpisodeResult;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SweepAxis};
use crate::error::{HarnessError, Result};
use crate::runner::{run_experiment, Summary};

/// One point of the sweep grid.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub assignments: Vec<(String, toml::Value)>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub label: String,
    pub assignments: Vec<(String, toml::Value)>,
    pub summary: Summary,
    #[serde(skip)]
    pub episodes: Vec<EpisodeResult>,
}

fn show(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes `value` at the dotted `path`, creating intermediate tables.
fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let bad = || HarnessError::Validation(format!("sweep axis `{path}` is not a config field"));
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(bad)?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(bad)?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Cartesian product of `axes` applied to `template`, in row-major order
/// (the last axis varies fastest). No axes gives the template itself.
pub fn expand(template: &ExperimentConfig, axes: &[SweepAxis]) -> Result<Vec<Cell>> {
    let mut base = template.clone();
    base.sweep.clear();
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for axis in axes {
        if axis.values.is_empty() {
            return Err(HarnessError::Validation(format!(
                "sweep axis `{}` has no values",
                axis.field
            )));
        }
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push((axis.field.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|assignments| {
            let mut value = base.to_value();
            for (field, v) in &assignments {
                set_path(&mut value, field, v.clone())?;
            }
            let config = ExperimentConfig::from_value(value).map_err(|e| match e {
                HarnessError::Validation(m) => HarnessError::Validation(format!(
                    "sweep cell {}: {m}",
                    label_of(&assignments)
                )),
                other => other,
            })?;
            Ok(Cell {
                label: label_of(&assignments),
                assignments,
                config,
            })
        })
        .collect()
}

fn label_of(assignments: &[(String, toml::Value)]) -> String {
    if assignments.is_empty() {
        return "base".into();
    }
    assignments
        .iter()
        .map(|(k, v)| format!("{k}={}", show(v)))
        .collect::<Vec<_>>()
        .join(",")
}

/// Runs every cell. Cells run in parallel, each with its own seeds, so the
/// grid is identical to running the cells one by one.
pub fn sweep(template: &ExperimentConfig, axes: &[SweepAxis]) -> Result<Vec<CellResult>> {
    let cells = expand(template, axes)?;
    cells
        .into_par_iter()
        .map(|cell| {
            let run = run_experiment(&cell.config, false)?;
            Ok(CellResult {
                label: cell.label,
                assignments: cell.assignments,
                summary: run.summary,
                episodes: run.episodes,
            })
        })
        .collect()
}
