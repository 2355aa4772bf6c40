//! Plain-text file formats.
//!
//! Reals are written with 17 significant digits so every file reads back
//! to the same bits.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::filter::{HistoryRecord, TimeSnap};
use crate::grid::{BoundaryCondition, BoxDomain, Grid};

/// 17 significant digits in scientific notation.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(vals: &[f64], sep: &str) -> String {
    vals.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(sep)
}

/// Density snapshot: `# d=`, `# n=`, `# domain=`, `# t=` headers then one
/// value per line in canonical cell order.
pub fn write_density<W: Write>(mut w: W, density: &Density, t: f64) -> Result<()> {
    let grid = density.grid();
    let dom = grid.domain();
    writeln!(w, "# d={}", grid.dim())?;
    writeln!(
        w,
        "# n={}",
        grid.counts().iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    )?;
    let bounds: Vec<String> = (0..grid.dim())
        .map(|a| format!("{},{}", fmt_real(dom.lower()[a]), fmt_real(dom.upper()[a])))
        .collect();
    writeln!(w, "# domain={}", bounds.join(";"))?;
    writeln!(w, "# t={}", fmt_real(t))?;
    for &v in density.values() {
        writeln!(w, "{}", fmt_real(v))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub n: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t: f64,
    pub values: Vec<f64>,
}

impl DensitySnapshot {
    /// Rebuilds the density; boundary conditions are not part of the file.
    pub fn into_density(self, bc: Vec<BoundaryCondition>) -> Result<Density> {
        let grid = Grid::new(BoxDomain::new(self.lower, self.upper)?, self.n, bc)?;
        Density::new(Arc::new(grid), self.values)
    }

    /// Rebuilds the density on an existing grid, checking that it matches.
    pub fn into_density_on(self, grid: &Arc<Grid>) -> Result<Density> {
        if grid.counts() != self.n.as_slice()
            || grid.domain().lower() != self.lower.as_slice()
            || grid.domain().upper() != self.upper.as_slice()
        {
            return Err(Error::IncompatibleGrids("snapshot does not match the grid".into()));
        }
        Density::new(grid.clone(), self.values)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: '{s}'")))
}

pub fn read_density<R: BufRead>(r: R) -> Result<DensitySnapshot> {
    let mut d = None;
    let mut n = None;
    let mut bounds = None;
    let mut t = None;
    let mut values = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let (key, val) = h
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header '{line}'")))?;
            match key.trim() {
                "d" => {
                    d = Some(
                        val.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Parse(format!("bad dimension '{val}'")))?,
                    )
                }
                "n" => {
                    n = Some(
                        val.split(',')
                            .map(|s| {
                                s.trim()
                                    .parse::<usize>()
                                    .map_err(|_| Error::Parse(format!("bad count '{s}'")))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "domain" => {
                    let mut lo = Vec::new();
                    let mut hi = Vec::new();
                    for axis in val.split(';') {
                        let (a, b) = axis
                            .split_once(',')
                            .ok_or_else(|| Error::Parse(format!("bad domain '{val}'")))?;
                        lo.push(parse_f64(a)?);
                        hi.push(parse_f64(b)?);
                    }
                    bounds = Some((lo, hi));
                }
                "t" => t = Some(parse_f64(val)?),
                other => return Err(Error::Parse(format!("unknown header '{other}'"))),
            }
        } else {
            values.push(parse_f64(line)?);
        }
    }
    let d = d.ok_or_else(|| Error::Parse("missing '# d=' header".into()))?;
    let n = n.ok_or_else(|| Error::Parse("missing '# n=' header".into()))?;
    let (lower, upper) = bounds.ok_or_else(|| Error::Parse("missing '# domain=' header".into()))?;
    let t = t.ok_or_else(|| Error::Parse("missing '# t=' header".into()))?;
    if n.len() != d || lower.len() != d {
        return Err(Error::Parse(format!("headers disagree with d={d}")));
    }
    let cells: usize = n.iter().product();
    if values.len() != cells {
        return Err(Error::Parse(format!("expected {cells} values, found {}", values.len())));
    }
    Ok(DensitySnapshot {
        n,
        lower,
        upper,
        t,
        values,
    })
}

/// Observation file: header `t,z` then one row per observation; vector
/// observations use extra columns.
pub fn write_observations<W: Write>(mut w: W, obs: &[(f64, Vec<f64>)]) -> Result<()> {
    writeln!(w, "t,z")?;
    for (t, z) in obs {
        writeln!(w, "{},{}", fmt_real(*t), join(z, ","))?;
    }
    Ok(())
}

pub fn read_observations<R: BufRead>(r: R) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let mut cols = line.split(',');
        let t = parse_f64(cols.next().unwrap_or(""))?;
        let z = cols.map(parse_f64).collect::<Result<Vec<_>>>()?;
        if z.is_empty() {
            return Err(Error::Parse(format!("observation row without value: '{line}'")));
        }
        out.push((t, z));
    }
    Ok(out)
}

/// Run report: `t, mean_1..mean_d, std_1..std_d, mode_count_axis1,
/// log_evidence`, one row per record.
pub fn write_run_report<W: Write>(mut w: W, history: &[HistoryRecord]) -> Result<()> {
    let d = history.first().map_or(0, |r| r.mean.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("mean_{i}")));
    header.extend((1..=d).map(|i| format!("std_{i}")));
    header.push("mode_count_axis1".into());
    header.push("log_evidence".into());
    writeln!(w, "{}", header.join(","))?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_real(r.t),
            join(&r.mean, ","),
            join(&r.std, ","),
            r.mode_count,
            fmt_real(r.log_evidence)
        )?;
    }
    Ok(())
}

/// Requested and realised times of snapped events: `kind,requested,actual,distance`.
pub fn write_time_snaps<W: Write>(mut w: W, snaps: &[(&str, TimeSnap)]) -> Result<()> {
    writeln!(w, "kind,requested,actual,distance")?;
    for (kind, s) in snaps {
        writeln!(
            w,
            "{kind},{},{},{}",
            fmt_real(s.requested),
            fmt_real(s.actual),
            fmt_real(s.distance())
        )?;
    }
    Ok(())
}

/// `t,x_1..x_d` rows.
pub fn write_trajectory<W: Write>(mut w: W, times: &[f64], states: &[Vec<f64>]) -> Result<()> {
    let d = states.first().map_or(0, Vec::len);
    let cols: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (t, x) in times.iter().zip(states) {
        writeln!(w, "{},{}", fmt_real(*t), join(x, ","))?;
    }
    Ok(())
}
