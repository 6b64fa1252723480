//! Parameter sweeps: one experiment per value, run on a worker pool, merged
//! into `sweep.json` and `sweep.csv`.
//!
//! A parameter is a dotted path into the config, e.g. `grid.nx`,
//! `solver.eps` or `analytics.penalty_gap.eps`. Inside an array of tables a
//! segment is either an index (`checks.0.lambda`) or a `kind` value, which
//! selects the first entry of that kind.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use aobstacle::verify::Tally;

use crate::config::{self, ConfigError, Experiment};
use crate::output::{num, OutputDir};
use crate::run::{
    run_experiment, RunOptions, RunStatus, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK,
};

fn config_error(message: impl Into<String>) -> ConfigError {
    ConfigError {
        position: None,
        message: message.into(),
    }
}

fn scalar_like(old: Option<&toml::Value>, raw: &str) -> Result<toml::Value, String> {
    use toml::Value;
    let int = raw.trim().parse::<i64>();
    let float = raw.trim().parse::<f64>();
    match old {
        Some(Value::Integer(_)) => int
            .map(Value::Integer)
            .map_err(|_| format!("'{raw}' is not an integer")),
        Some(Value::Float(_)) => float
            .map(Value::Float)
            .map_err(|_| format!("'{raw}' is not a number")),
        Some(Value::Boolean(_)) => raw
            .trim()
            .parse::<bool>()
            .map(Value::Boolean)
            .map_err(|_| format!("'{raw}' is not a boolean")),
        Some(Value::String(_)) => Ok(Value::String(raw.to_string())),
        Some(_) => Err("parameter does not address a scalar".into()),
        None => Ok(match (int, float) {
            (Ok(i), _) => Value::Integer(i),
            (_, Ok(f)) => Value::Float(f),
            _ => Value::String(raw.to_string()),
        }),
    }
}

/// Sets the scalar at dotted `param` to `raw`, keeping the type of an
/// existing value.
pub fn set_param(doc: &mut toml::Table, param: &str, raw: &str) -> Result<(), String> {
    use toml::Value;
    let segs: Vec<&str> = param.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(format!("malformed parameter '{param}'"));
    }
    let (last, path) = segs.split_last().expect("split yields one segment");
    let mut table = doc;
    let mut walked = String::new();
    let mut k = 0;
    while k < path.len() {
        let seg = path[k];
        walked = if walked.is_empty() {
            seg.to_string()
        } else {
            format!("{walked}.{seg}")
        };
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = match entry {
            Value::Table(t) => t,
            Value::Array(items) => {
                k += 1;
                let Some(&sel) = path.get(k) else {
                    return Err(format!("'{walked}' is an array; add an index or kind"));
                };
                let pos = match sel.parse::<usize>() {
                    Ok(i) if i < items.len() => i,
                    Ok(i) => return Err(format!("'{walked}' has no entry {i}")),
                    Err(_) => items
                        .iter()
                        .position(|v| v.get("kind").and_then(Value::as_str) == Some(sel))
                        .ok_or_else(|| format!("'{walked}' has no entry of kind '{sel}'"))?,
                };
                match &mut items[pos] {
                    Value::Table(t) => t,
                    _ => return Err(format!("'{walked}.{sel}' is not a table")),
                }
            }
            _ => return Err(format!("'{walked}' is not a table")),
        };
        k += 1;
    }
    let v = scalar_like(table.get(*last), raw).map_err(|m| format!("{param}: {m}"))?;
    table.insert(last.to_string(), v);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub dir: String,
    pub status: RunStatus,
    pub exit_code: i32,
    pub tally: Tally,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Increasing,
    Constant,
    Mixed,
}

fn trend(col: &[f64]) -> Trend {
    let w = || col.windows(2);
    if w().all(|p| p[1] < p[0]) {
        Trend::Decreasing
    } else if w().all(|p| p[1] > p[0]) {
        Trend::Increasing
    } else if w().all(|p| p[1] == p[0]) {
        Trend::Constant
    } else {
        Trend::Mixed
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub name: String,
    pub param: String,
    pub values: Vec<String>,
    pub exit_code: i32,
    pub rows: Vec<SweepRow>,
    /// Per metric present in every row, its trend in the given value order.
    pub trends: BTreeMap<String, Trend>,
    /// For grid sweeps: `log(e_k / e_k+1) / log(h_k / h_k+1)` per error metric.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub observed_order: BTreeMap<String, Vec<f64>>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub jobs: Option<usize>,
    pub run: RunOptions,
}

/// Builds one experiment per value. The base config must build too, so its
/// errors keep their original line and column.
pub fn prepare(
    text: &str,
    dir: &Path,
    name: &str,
    param: &str,
    values: &[String],
    seed: Option<u64>,
) -> Result<(Experiment, Vec<Experiment>), ConfigError> {
    let base = config::parse(text, dir, name, seed)?;
    if values.is_empty() {
        return Err(config_error("sweep needs at least one value"));
    }
    let doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let mut d = doc.clone();
        set_param(&mut d, param, v).map_err(config_error)?;
        let t = toml::to_string(&d).map_err(|e| config_error(e.to_string()))?;
        let exp = config::parse(&t, dir, name, seed).map_err(|e| ConfigError {
            position: None,
            message: format!("{param} = {v}: {}", e.message),
        })?;
        out.push(exp);
    }
    Ok((base, out))
}

fn dir_name(k: usize, v: &str) -> String {
    let clean: String = v
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{k:02}_{clean}")
}

/// Runs the prepared experiments and writes the merged summary into `out`.
pub fn run_sweep(
    name: &str,
    param: &str,
    values: &[String],
    exps: &[Experiment],
    out: &OutputDir,
    opts: SweepOptions,
) -> std::io::Result<SweepRecord> {
    let started = Instant::now();
    let dirs: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(k, v)| dir_name(k, v))
        .collect();
    let work = || -> std::io::Result<Vec<_>> {
        exps.par_iter()
            .zip(dirs.par_iter())
            .map(|(exp, d)| run_experiment(exp, &out.subdir(d)?, opts.run))
            .collect()
    };
    let records = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(std::io::Error::other)?
            .install(work)?,
        None => work()?,
    };
    let rows: Vec<SweepRow> = records
        .iter()
        .zip(values)
        .zip(&dirs)
        .map(|((r, v), d)| SweepRow {
            value: v.clone(),
            dir: d.clone(),
            status: r.status,
            exit_code: r.exit_code,
            tally: r.tally,
            metrics: r.metrics.clone(),
        })
        .collect();
    let common: BTreeSet<&String> = rows
        .first()
        .map(|r| {
            r.metrics
                .keys()
                .filter(|k| rows.iter().all(|r| r.metrics.contains_key(*k)))
                .collect()
        })
        .unwrap_or_default();
    let column = |k: &String| -> Vec<f64> { rows.iter().map(|r| r.metrics[k]).collect() };
    let trends = common
        .iter()
        .map(|k| ((*k).clone(), trend(&column(k))))
        .collect();
    let mut observed_order = BTreeMap::new();
    if param == "grid.nx" || param == "grid.ny" {
        let hs: Vec<f64> = exps.iter().map(|e| e.grid().h()).collect();
        for k in common.iter().filter(|k| k.contains("error")) {
            let e = column(k);
            let orders: Vec<f64> = (1..e.len())
                .map(|i| (e[i - 1] / e[i]).ln() / (hs[i - 1] / hs[i]).ln())
                .collect();
            observed_order.insert((*k).clone(), orders);
        }
    }
    let exit_code = if rows.iter().any(|r| r.exit_code == EXIT_NOT_CONVERGED) {
        EXIT_NOT_CONVERGED
    } else if rows.iter().any(|r| r.exit_code != EXIT_OK) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    };

    let keys: Vec<&String> = rows
        .iter()
        .flat_map(|r| r.metrics.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut header = vec!["value", "status", "exit_code"];
    header.extend(keys.iter().map(|k| k.as_str()));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.value.clone(),
                serde_json::to_value(r.status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                r.exit_code.to_string(),
            ];
            row.extend(
                keys.iter()
                    .map(|k| r.metrics.get(*k).map(|v| num(*v)).unwrap_or_default()),
            );
            row
        })
        .collect();
    out.write_table("sweep.csv", &header, &table)?;

    let record = SweepRecord {
        name: name.to_string(),
        param: param.to_string(),
        values: values.to_vec(),
        exit_code,
        rows,
        trends,
        observed_order,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(std::io::Error::other)?;
    text.push('\n');
    out.write_bytes("sweep.json", text.as_bytes())?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn set_param_keeps_types() {
        let mut d = doc("[grid]\nnx = 17\n[solver]\neps = 0.1\n");
        set_param(&mut d, "grid.nx", "33").unwrap();
        set_param(&mut d, "solver.eps", "1e-3").unwrap();
        assert_eq!(d["grid"]["nx"].as_integer(), Some(33));
        assert_eq!(d["solver"]["eps"].as_float(), Some(1e-3));
        assert!(set_param(&mut d, "grid.nx", "3.5").is_err());
        set_param(&mut d, "solver.tol_residual", "1e-9").unwrap();
        assert_eq!(d["solver"]["tol_residual"].as_float(), Some(1e-9));
    }

    #[test]
    fn set_param_in_arrays() {
        let text =
            "[[analytics]]\nkind = \"growth\"\n[[analytics]]\nkind = \"penalty_gap\"\neps = 0.1\n";
        let mut d = doc(text);
        set_param(&mut d, "analytics.penalty_gap.eps", "0.01").unwrap();
        assert_eq!(d["analytics"][1]["eps"].as_float(), Some(0.01));
        set_param(&mut d, "analytics.0.n_dyadic", "4").unwrap();
        assert_eq!(d["analytics"][0]["n_dyadic"].as_integer(), Some(4));
        assert!(set_param(&mut d, "analytics.entropy.levels", "1").is_err());
        assert!(set_param(&mut d, "analytics.7.x", "1").is_err());
        assert!(set_param(&mut d, "analytics", "1").is_err());
        assert!(set_param(&mut d, "a..b", "1").is_err());
    }

    #[test]
    fn trends() {
        assert_eq!(trend(&[3.0, 2.0, 1.0]), Trend::Decreasing);
        assert_eq!(trend(&[1.0, 2.0]), Trend::Increasing);
        assert_eq!(trend(&[1.0, 1.0]), Trend::Constant);
        assert_eq!(trend(&[1.0, 2.0, 1.0]), Trend::Mixed);
        assert_eq!(dir_name(3, "1e-3"), "03_1e-3");
        assert_eq!(dir_name(0, "a/b"), "00_a_b");
    }
}
