//! Plain-text FSPS persistence.
//!
//! ```text
//! fsps 1
//! outputs 1
//! dim 10
//! samples 367
//! c_bar 2.8284271247461903
//! seed 0
//! radius 0.28284271247461906
//! center -0.94 0 ... 0
//! ```
//!
//! One `radius` and one `center` line per output, in output order. Floats
//! use the shortest representation that parses back to the same value.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::Fsps;
use crate::error::{Error, Result};

pub const FSPS_FORMAT_VERSION: u32 = 1;

pub fn write_fsps(fsps: &Fsps, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("fsps {FSPS_FORMAT_VERSION}\n"));
    out.push_str(&format!("outputs {}\n", fsps.n_outputs()));
    out.push_str(&format!("dim {}\n", fsps.dim()));
    out.push_str(&format!("samples {}\n", fsps.samples));
    out.push_str(&format!("c_bar {}\n", fsps.c_bar));
    out.push_str(&format!("seed {}\n", fsps.seed));
    for r in fsps.radii.iter() {
        out.push_str(&format!("radius {r}\n"));
    }
    for row in fsps.centers.row_iter() {
        let values: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("center {}\n", values.join(" ")));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_fsps(path: &Path) -> Result<Fsps> {
    let text = fs::read_to_string(path)?;
    parse(&text).map_err(|reason| Error::FspsFormat {
        path: path.to_path_buf(),
        reason,
    })
}

fn parse(text: &str) -> std::result::Result<Fsps, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut header = |key: &str| -> std::result::Result<String, String> {
        let line = lines.next().ok_or(format!("missing `{key}` line"))?;
        let (k, v) = line.split_once(' ').ok_or(format!("malformed line `{line}`"))?;
        if k != key {
            return Err(format!("expected `{key}`, found `{k}`"));
        }
        Ok(v.trim().to_string())
    };
    let version: u32 = num(&header("fsps")?)?;
    if version != FSPS_FORMAT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let outputs: usize = num(&header("outputs")?)?;
    let dim: usize = num(&header("dim")?)?;
    let samples: usize = num(&header("samples")?)?;
    let c_bar: f64 = num(&header("c_bar")?)?;
    let seed: u64 = num(&header("seed")?)?;
    let mut radii = DVector::zeros(outputs);
    for i in 0..outputs {
        radii[i] = num(&header("radius")?)?;
    }
    let mut centers = DMatrix::zeros(outputs, dim);
    for i in 0..outputs {
        let values: Vec<f64> = header("center")?
            .split_whitespace()
            .map(num)
            .collect::<std::result::Result<_, _>>()?;
        if values.len() != dim {
            return Err(format!("center {i} has {} entries, expected {dim}", values.len()));
        }
        centers.set_row(i, &DVector::from_vec(values).transpose());
    }
    if let Some(extra) = lines.next() {
        return Err(format!("unexpected trailing line `{extra}`"));
    }
    Ok(Fsps {
        centers,
        radii,
        c_bar,
        samples,
        seed,
    })
}

fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}`"))
}
