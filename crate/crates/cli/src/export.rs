//! Schema-stable CSV and JSON exports of value functions, policies and
//! experiment tables (column layouts are listed in `docs/formats.md`).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rallyproc::geometry::CourtLayout;
use rallyproc::solver::ValueFunction;
use rallyproc::state::{State, StateCensus};

use crate::pipeline::PolicyArtifact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// A parsed artifact id: `mrp:<ε>`, `mdp:<ε>`, `policy:<ε>` or a suite name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArtifactId {
    Values { which: &'static str, epsilon: u32 },
    Policy { epsilon: u32 },
    Table(String),
}

impl ArtifactId {
    pub fn parse(id: &str) -> Result<Self> {
        let eps = |s: &str| s.parse::<u32>().with_context(|| format!("bad ε in artifact id {id:?}"));
        Ok(match id.split_once(':') {
            Some(("mrp", e)) => ArtifactId::Values { which: "mrp", epsilon: eps(e)? },
            Some(("mdp", e)) => ArtifactId::Values { which: "mdp", epsilon: eps(e)? },
            Some(("policy", e)) => ArtifactId::Policy { epsilon: eps(e)? },
            None if ["fig5", "fig6", "fig7", "fig8", "appendixA", "appendixB"].contains(&id) => ArtifactId::Table(id.into()),
            _ => bail!("unknown artifact id {id:?} (expected mrp:<ε>, mdp:<ε>, policy:<ε> or a suite name)"),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ValueRecord {
    index: usize,
    state: String,
    a: Option<u8>,
    b: Option<u8>,
    shot: Option<String>,
    value: f64,
}

fn cells(state: &State) -> (Option<u8>, Option<u8>, Option<String>) {
    match state {
        State::Transient { a, b, shot } => (Some(a.0), Some(b.0), Some(shot.to_string())),
        _ => (None, None, None),
    }
}

/// Write a value function: one row per state, absorbing states last.
pub fn write_values(vf: &ValueFunction, census: &StateCensus, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Json => fs::write(path, serde_json::to_string_pretty(vf)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for (index, &value) in vf.values.iter().enumerate() {
                let state = census.state(index);
                let (a, b, shot) = cells(&state);
                w.serialize(ValueRecord { index, state: state.to_string(), a, b, shot, value })?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Read back a value function written by [`write_values`].
pub fn read_values(path: &Path, format: Format, epsilon: u32, policy_id: &str) -> Result<ValueFunction> {
    match format {
        Format::Json => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
        Format::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            let mut values = Vec::new();
            for (i, rec) in r.deserialize::<ValueRecord>().enumerate() {
                let rec = rec?;
                if rec.index != i {
                    bail!("row {i} has index {}", rec.index);
                }
                values.push(rec.value);
            }
            Ok(ValueFunction { values, epsilon, policy_id: policy_id.into(), bellman_residual: f64::NAN })
        }
    }
}

#[derive(Debug, Serialize)]
struct PolicyRecord<'a> {
    index: usize,
    a: u8,
    b: u8,
    shot: String,
    action: &'a str,
}

/// Write a deterministic policy: one row per transient state.
pub fn write_policy(p: &PolicyArtifact, census: &StateCensus, layout: &CourtLayout, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Json => fs::write(path, serde_json::to_string_pretty(p)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for (index, &action) in p.actions.iter().enumerate() {
                let (a, b, shot) = cells(&census.state(index));
                let name = &layout.action(rallyproc::geometry::ActionId(action)).name;
                w.serialize(PolicyRecord { index, a: a.unwrap_or(0), b: b.unwrap_or(0), shot: shot.unwrap_or_default(), action: name })?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Convert an experiment CSV to JSON rows, or copy it as CSV.
pub fn write_table(csv_path: &Path, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => {
            fs::copy(csv_path, path)?;
        }
        Format::Json => {
            let mut r = csv::Reader::from_path(csv_path)?;
            let headers = r.headers()?.clone();
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let mut obj = serde_json::Map::new();
                for (h, v) in headers.iter().zip(rec.iter()) {
                    let value = match v.parse::<f64>() {
                        Ok(x) if h.starts_with("eps_") => serde_json::json!(x),
                        _ => serde_json::json!(v),
                    };
                    obj.insert(h.to_string(), value);
                }
                rows.push(serde_json::Value::Object(obj));
            }
            fs::write(path, serde_json::to_string_pretty(&rows)?)?;
        }
    }
    Ok(())
}
