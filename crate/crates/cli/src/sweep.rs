//! Cross-product experiment sweeps over shattering parameters.
//!
//! A sweep runs the adversarial-ERM gap experiment once per cell of the
//! cross product of one or two varied variables, emitting a long-format CSV:
//! one row per trial per cell, prefixed by the varied values and a status
//! column. Infeasible cells become single rows carrying the error text
//! instead of aborting the sweep. Per-cell seeds are `master_seed + cell
//! index`, so a sweep with no varied variables reproduces a direct `erm-gap`
//! run with the same seed.

use serde::{Deserialize, Serialize};

use vvplab::adversary::gap_experiment;
use vvplab::seed::derive_seed;
use vvplab::shatter::{ShatterInstance, ShatterParams};

/// Base configuration; config-file values are overridden by flags, and the
/// varied variables override both per cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepBase {
    pub d1: usize,
    pub d2: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub eps: f64,
    pub tau: f64,
    pub sample_size: usize,
    pub trials: usize,
}

impl Default for SweepBase {
    fn default() -> Self {
        Self {
            d1: 16,
            d2: 16,
            b: 4,
            j: 4,
            eps: 0.5,
            tau: 0.5,
            sample_size: 8,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarySpec {
    pub key: String,
    /// Raw value strings as given on the command line; parsed per key.
    pub values: Vec<String>,
}

pub fn parse_vary(spec: &str) -> Result<VarySpec, String> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| format!("--vary expects key=v1,v2,..., got {spec:?}"))?;
    let values: Vec<String> = values.split(',').map(str::to_string).collect();
    if values.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(format!("--vary {key} has an empty value list"));
    }
    let known = ["n", "sample_size", "trials", "d1", "d2", "k", "B", "J", "eps", "tau"];
    if !known.contains(&key) {
        return Err(format!("unknown sweep variable {key:?}; expected one of {known:?}"));
    }
    Ok(VarySpec {
        key: key.to_string(),
        values,
    })
}

fn apply(base: &mut SweepBase, key: &str, raw: &str) -> Result<(), String> {
    let int = || -> Result<usize, String> {
        raw.parse::<usize>()
            .map_err(|_| format!("{key} needs an integer, got {raw:?}"))
    };
    match key {
        "n" | "sample_size" => base.sample_size = int()?,
        "trials" => base.trials = int()?,
        "d1" => base.d1 = int()?,
        "d2" => base.d2 = int()?,
        "k" => {
            let k = int()?;
            if k % 2 != 0 {
                return Err(format!("k must be even (split as d1 = d2 = k/2), got {k}"));
            }
            base.d1 = k / 2;
            base.d2 = k / 2;
        }
        "B" => base.b = int()?,
        "J" => base.j = int()?,
        "eps" => {
            base.eps = raw
                .parse()
                .map_err(|_| format!("eps needs a float, got {raw:?}"))?
        }
        "tau" => {
            base.tau = raw
                .parse()
                .map_err(|_| format!("tau needs a float, got {raw:?}"))?
        }
        other => return Err(format!("unknown sweep variable {other:?}")),
    }
    Ok(())
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

/// Runs the sweep and returns the CSV text. Cells execute in declared order;
/// trials within a cell parallelize through the experiment itself.
pub fn run_sweep(base: &SweepBase, varies: &[VarySpec], master_seed: u64) -> Result<String, String> {
    if varies.len() > 2 {
        return Err("at most two varied variables are supported".into());
    }
    // Cross product, first vary outermost.
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for vary in varies {
        let mut next = Vec::new();
        for cell in &cells {
            for value in &vary.values {
                let mut c = cell.clone();
                c.push((vary.key.clone(), value.clone()));
                next.push(c);
            }
        }
        cells = next;
    }

    let mut csv = String::new();
    for vary in varies {
        csv.push_str(&vary.key);
        csv.push(',');
    }
    csv.push_str("status,trial,unseen_fraction,empirical_loss,excess\n");

    for (idx, cell) in cells.iter().enumerate() {
        let cell_seed = master_seed.wrapping_add(idx as u64);
        let prefix: String = cell
            .iter()
            .map(|(_, v)| format!("{v},"))
            .collect();

        let mut cfg = base.clone();
        let mut cell_err = None;
        for (key, value) in cell {
            if let Err(e) = apply(&mut cfg, key, value) {
                cell_err = Some(e);
                break;
            }
        }
        let outcome = match cell_err {
            Some(e) => Err(e),
            None => run_cell(&cfg, cell_seed),
        };
        match outcome {
            Ok(rows) => {
                for row in rows {
                    csv.push_str(&format!(
                        "{prefix}ok,{},{},{},{}\n",
                        row.trial, row.unseen_fraction, row.empirical_loss, row.excess
                    ));
                }
            }
            Err(e) => {
                csv.push_str(&format!("{prefix}{},,,,\n", sanitize(&e)));
            }
        }
    }
    Ok(csv)
}

fn run_cell(cfg: &SweepBase, cell_seed: u64) -> Result<Vec<vvplab::adversary::GapRow>, String> {
    let params = ShatterParams {
        d1: cfg.d1,
        d2: cfg.d2,
        examples_per_block: cfg.b,
        blocks: cfg.j,
        margin: cfg.eps,
        tau: cfg.tau,
    };
    let inst = ShatterInstance::build(params, derive_seed(cell_seed, 0xB11D))
        .map_err(|e| e.to_string())?;
    gap_experiment(&inst, cfg.sample_size, cfg.trials, cell_seed).map_err(|e| e.to_string())
}
