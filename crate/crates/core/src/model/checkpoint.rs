//! Versioned plain-text checkpoints.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! save/load cycle restores every value bit for bit.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{FclNet, FclNetConfig, FclNetParams, ModelError, Result};
use crate::data::{parse_grid, write_grid, Bounds, GridSpec, Prepared, Standardization};
use crate::layers::Parameterized;
use crate::tensor::Tensor;

const MAGIC: &str = "fclnet-checkpoint 1";

/// A trained network together with the grid and the standardization it was
/// fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FclNet,
    pub grid: GridSpec,
    pub scaling: Standardization,
}

fn bounds_str(b: &Bounds) -> String {
    format!("{},{}", b.min, b.max)
}

fn parse_bounds(s: &str) -> Result<Bounds> {
    let (a, b) = s.split_once(',').ok_or_else(|| ModelError::Checkpoint(format!("bad bounds {s:?}")))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| ModelError::Checkpoint(format!("bad bounds {s:?}")));
    Ok(Bounds { min: p(a)?, max: p(b)? })
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "[config]")?;
        for (k, v) in self.model.config.to_kv() {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "[grid]")?;
        write_grid(&mut w, &self.grid)?;
        writeln!(w, "[scaling]")?;
        let s = &self.scaling;
        writeln!(w, "demand={}", bounds_str(&s.demand))?;
        writeln!(w, "ttr={}", bounds_str(&s.ttr))?;
        writeln!(w, "hour={}", bounds_str(&s.hour))?;
        writeln!(w, "week={}", bounds_str(&s.week))?;
        writeln!(w, "weather={}", s.weather.iter().map(bounds_str).collect::<Vec<_>>().join(";"))?;
        writeln!(w, "[params]")?;
        let mut result = Ok(());
        self.model.params.visit("", &mut |name, _, t| {
            if result.is_err() {
                return;
            }
            let shape = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            let values = t.data().iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
            result = writeln!(w, "{name} {shape} {values}");
        });
        result?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut lines = r.lines();
        let first = lines.next().transpose()?.unwrap_or_default();
        if first.trim() != MAGIC {
            return Err(bad(format!("unrecognized header {first:?}")));
        }
        let mut section = String::new();
        let mut config = FclNetConfig::default();
        let mut grid_text = String::new();
        let mut scaling = Standardization {
            demand: Bounds { min: 0.0, max: 0.0 },
            ttr: Bounds { min: 0.0, max: 0.0 },
            hour: Bounds { min: 0.0, max: 0.0 },
            week: Bounds { min: 0.0, max: 0.0 },
            weather: [Bounds { min: 0.0, max: 0.0 }; 5],
        };
        let mut seen_scaling = 0;
        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                continue;
            }
            match section.as_str() {
                "config" => {
                    let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad config line {line:?}")))?;
                    if !config.set(k.trim(), v.trim())? {
                        return Err(bad(format!("unknown config key {k:?}")));
                    }
                }
                "grid" => {
                    grid_text.push_str(line);
                    grid_text.push('\n');
                }
                "scaling" => {
                    let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad scaling line {line:?}")))?;
                    match k {
                        "demand" => scaling.demand = parse_bounds(v)?,
                        "ttr" => scaling.ttr = parse_bounds(v)?,
                        "hour" => scaling.hour = parse_bounds(v)?,
                        "week" => scaling.week = parse_bounds(v)?,
                        "weather" => {
                            let parts: Vec<&str> = v.split(';').collect();
                            if parts.len() != 5 {
                                return Err(bad("weather bounds need five entries".into()));
                            }
                            for (slot, p) in scaling.weather.iter_mut().zip(parts) {
                                *slot = parse_bounds(p)?;
                            }
                        }
                        _ => return Err(bad(format!("unknown scaling key {k:?}"))),
                    }
                    seen_scaling += 1;
                }
                "params" => {
                    let mut it = line.split_whitespace();
                    let name = it.next().unwrap().to_string();
                    let shape = it
                        .next()
                        .ok_or_else(|| bad(format!("missing shape for {name}")))?
                        .split(',')
                        .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape for {name}"))))
                        .collect::<Result<Vec<_>>>()?;
                    let values = it.map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value in {name}")))).collect::<Result<Vec<_>>>()?;
                    tensors.push((name, shape, values));
                }
                other => return Err(bad(format!("unknown section {other:?}"))),
            }
        }
        if seen_scaling != 5 {
            return Err(bad("incomplete scaling section".into()));
        }
        let grid = parse_grid(&grid_text)?;
        config.validate()?;
        let mut params = FclNetParams::zeros(&config, grid.rows, grid.cols, 0.0)?;
        let mut at = 0;
        let mut err: Option<ModelError> = None;
        params.visit_mut("", &mut |name, _, t| {
            if err.is_some() {
                return;
            }
            match tensors.get(at) {
                Some((n, shape, values)) if n == name && shape.as_slice() == t.shape() && values.len() == t.len() => {
                    match Tensor::new(shape.clone(), values.clone()) {
                        Ok(v) => *t = v,
                        Err(e) => err = Some(e.into()),
                    }
                }
                Some((n, shape, _)) => err = Some(bad(format!("expected {name} {:?}, found {n} {shape:?}", t.shape()))),
                None => err = Some(bad(format!("missing parameter {name}"))),
            }
            at += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if at != tensors.len() {
            return Err(bad(format!("{} unexpected parameter tensors", tensors.len() - at)));
        }
        Ok(Self { model: FclNet { config, params }, grid, scaling })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Prediction in demand units using the stored standardization.
    pub fn predict(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        let z = self.model.predict_standardized(data, t)?;
        Ok(z.into_iter().map(|v| self.scaling.demand.invert(v).max(0.0)).collect())
    }
}
