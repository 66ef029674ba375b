//! Flat text export of configurations.
//!
//! ```text
//! # mott-config d=2 L=10,10 boundary=periodic seed=7 origin=0
//! x1 x2 E
//! 0 0 0.25
//! 1.5 -2 -0.5
//! ```
//!
//! `origin=-` marks a configuration without a distinguished point. Open
//! boxes that have moved carry an extra `lower=a,b` key. Values use the
//! shortest round-trip float formatting, so export then import is lossless.

use std::fmt::Write as _;

use super::MarkedConfiguration;
use crate::error::{Error, Result};
use crate::geometry::{Boundary, BoxGeometry, PointSet};

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str, line: usize) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Config {
                line: Some(line),
                message: format!("bad number `{t}`"),
            })
        })
        .collect()
}

pub fn export_table(cfg: &MarkedConfiguration, seed: u64) -> String {
    let g = cfg.geometry();
    let d = g.dim();
    let mut out = String::new();
    let origin = cfg
        .origin_index()
        .map_or_else(|| "-".to_string(), |o| o.to_string());
    let _ = write!(
        out,
        "# mott-config d={d} L={} boundary={} seed={seed} origin={origin}",
        join(g.sides()),
        g.boundary()
    );
    let centered = g.lower().iter().zip(g.sides()).all(|(l, s)| *l == -s / 2.0);
    if !centered {
        let _ = write!(out, " lower={}", join(g.lower()));
    }
    out.push('\n');
    let cols: Vec<String> = (1..=d).map(|a| format!("x{a}")).chain(["E".into()]).collect();
    out.push_str(&cols.join(" "));
    out.push('\n');
    for i in 0..cfg.len() {
        for v in cfg.point(i) {
            let _ = write!(out, "{v} ");
        }
        let _ = writeln!(out, "{}", cfg.energy(i));
    }
    out
}

/// Parse a table; returns the configuration and the recorded seed.
pub fn import_table(text: &str) -> Result<(MarkedConfiguration, u64)> {
    let err = |line: usize, m: String| Error::Config {
        line: Some(line),
        message: m,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty table".into()))?;
    let rest = header
        .strip_prefix("# mott-config")
        .ok_or_else(|| err(1, "missing `# mott-config` header".into()))?;
    let (mut d, mut sides, mut boundary, mut seed, mut origin, mut lower) =
        (None, None, None, None, None, None);
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header field `{kv}`")))?;
        match k {
            "d" => d = Some(v.parse::<usize>().map_err(|_| err(1, format!("bad d `{v}`")))?),
            "L" => sides = Some(parse_list(v, 1)?),
            "boundary" => boundary = Some(v.parse::<Boundary>().map_err(|e| err(1, e.to_string()))?),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| err(1, format!("bad seed `{v}`")))?),
            "origin" => {
                origin = Some(if v == "-" {
                    None
                } else {
                    Some(v.parse::<usize>().map_err(|_| err(1, format!("bad origin `{v}`")))?)
                })
            }
            "lower" => lower = Some(parse_list(v, 1)?),
            other => return Err(err(1, format!("unknown header field `{other}`"))),
        }
    }
    let d = d.ok_or_else(|| err(1, "header lacks d".into()))?;
    let sides = sides.ok_or_else(|| err(1, "header lacks L".into()))?;
    if sides.len() != d {
        return Err(err(1, format!("L lists {} sides for d={d}", sides.len())));
    }
    let boundary = boundary.ok_or_else(|| err(1, "header lacks boundary".into()))?;
    let mut geom = BoxGeometry::new(sides, boundary).map_err(|e| err(1, e.to_string()))?;
    if let Some(lo) = lower {
        if lo.len() != d {
            return Err(err(1, "lower has wrong length".into()));
        }
        let shift: Vec<f64> = geom.lower().iter().zip(&lo).map(|(a, b)| a - b).collect();
        geom = geom.shifted(&shift);
    }
    let (_, cols) = lines.next().ok_or_else(|| err(2, "missing column line".into()))?;
    if cols.split_whitespace().count() != d + 1 {
        return Err(err(2, format!("expected {} columns", d + 1)));
    }
    let mut pts = PointSet::new(d);
    let mut energies = Vec::new();
    let mut row = Vec::with_capacity(d + 1);
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        row.clear();
        for t in l.split_whitespace() {
            row.push(
                t.parse::<f64>()
                    .map_err(|_| err(i + 1, format!("bad number `{t}`")))?,
            );
        }
        if row.len() != d + 1 {
            return Err(err(i + 1, format!("expected {} values, got {}", d + 1, row.len())));
        }
        pts.push(&row[..d]);
        energies.push(row[d]);
    }
    let cfg = MarkedConfiguration::new(pts, energies, geom, origin.flatten())?;
    Ok((cfg, seed.unwrap_or(0)))
}
