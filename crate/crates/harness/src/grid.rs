//! Experiment grids over `(n, d, s, eps, delta)`.
//!
//! An axis is written `key=v1,v2,...`. Values are decimal or scientific
//! numbers or powers of two written `2^k`; `2^a..2^b` expands to every power of
//! two in between.

use crate::config::Config;
use crate::error::{HarnessError, Result};

/// Grid keys, in CSV column order.
pub const GRID_KEYS: [&str; 5] = ["n", "d", "s", "eps", "delta"];

pub fn parse_value(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = if let Some(exp) = s.strip_prefix("2^") {
        let k: i32 = exp.parse().map_err(|_| format!("bad exponent in `{s}`"))?;
        if !(0..=62).contains(&k) {
            return Err(format!("exponent out of range in `{s}`"));
        }
        2f64.powi(k)
    } else {
        s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<f64>,
}

pub fn parse_axis(spec: &str) -> Result<GridAxis> {
    let err = |reason: String| HarnessError::Grid { spec: spec.to_string(), reason };
    let (key, rest) = spec.split_once('=').ok_or_else(|| err("expected key=v1,v2,...".into()))?;
    let key = key.trim();
    if !GRID_KEYS.contains(&key) {
        return Err(err(format!("unknown key `{key}`; expected one of {}", GRID_KEYS.join(", "))));
    }
    let mut values = Vec::new();
    for part in rest.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let exp = |t: &str| -> Result<i32> {
                t.trim()
                    .strip_prefix("2^")
                    .and_then(|e| e.parse().ok())
                    .filter(|k| (0..=62).contains(k))
                    .ok_or_else(|| err(format!("ranges take powers of two, got `{t}`")))
            };
            let (lo, hi) = (exp(a)?, exp(b)?);
            if lo > hi {
                return Err(err(format!("empty range `{part}`")));
            }
            values.extend((lo..=hi).map(|k| 2f64.powi(k)));
        } else {
            values.push(parse_value(part).map_err(err)?);
        }
    }
    if values.is_empty() {
        return Err(err("no values".into()));
    }
    Ok(GridAxis { key: key.to_string(), values })
}

/// One grid cell: a value for every key in [`GRID_KEYS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub eps: f64,
    pub delta: f64,
}

impl Cell {
    pub fn values(&self) -> [f64; 5] {
        [self.n as f64, self.d as f64, self.s as f64, self.eps, self.delta]
    }

    fn set(&mut self, key: &str, v: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(HarnessError::Value { key: key.to_string(), reason: format!("{v} is not a count") })
            }
        };
        match key {
            "n" => self.n = count(v)?,
            "d" => self.d = count(v)?,
            "s" => self.s = count(v)?,
            "eps" => self.eps = v,
            "delta" => self.delta = v,
            _ => unreachable!("keys are checked when parsing"),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub base: Cell,
    pub axes: Vec<GridAxis>,
}

impl Grid {
    /// Base values come from the config keys `n, d, s, eps, delta`; axes from
    /// `grid.<key>` entries followed by `extra` specs (later specs replace
    /// earlier axes with the same key).
    pub fn from_config(cfg: &Config, base: Cell, extra: &[String]) -> Result<Self> {
        let mut b = base;
        for key in GRID_KEYS {
            if let Some(v) = cfg.get(key) {
                let v = parse_value(v).map_err(|reason| HarnessError::Value { key: key.into(), reason })?;
                b.set(key, v)?;
            }
        }
        let mut axes: Vec<GridAxis> = Vec::new();
        let specs = GRID_KEYS
            .iter()
            .filter_map(|k| cfg.get(&format!("grid.{k}")).map(|v| format!("{k}={v}")))
            .chain(extra.iter().cloned());
        for spec in specs {
            let axis = parse_axis(&spec)?;
            axes.retain(|a| a.key != axis.key);
            axes.push(axis);
        }
        Ok(Self { base: b, axes })
    }

    /// Cartesian product, first axis varying slowest.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = vec![self.base];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * axis.values.len());
            for c in &cells {
                for &v in &axis.values {
                    let mut c2 = *c;
                    c2.set(&axis.key, v)?;
                    next.push(c2);
                }
            }
            cells = next;
        }
        Ok(cells)
    }
}
