//! Stacked boundary measurements and their text file format.

use crate::error::{Error, Result};
use crate::forward::ScatterConfig;
use num_complex::Complex64;
use std::io::{BufRead, Write};

/// Measured (noisy) stacked data vector with its noise standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData {
    pub values: Vec<Complex64>,
    /// Noise standard deviation per real component (`Sigma = gamma^2 I` on
    /// the stacked real representation). Zero marks noiseless synthetic data.
    pub gamma: f64,
}

impl ObservationData {
    pub fn new(values: Vec<Complex64>, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and nonnegative, got {gamma}"
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter(
                "observation vector contains non-finite entries".to_string(),
            ));
        }
        Ok(ObservationData { values, gamma })
    }
}

/// Writes the observation file:
/// `obs v1 M J N gamma seed`, wavenumber lines, direction lines, angle
/// lines, then `M*J*N` lines `re im` in `(m, j, n)` stacking order.
pub fn write_observations<W: Write>(
    cfg: &ScatterConfig,
    data: &ObservationData,
    seed: u64,
    w: &mut W,
) -> Result<()> {
    if data.values.len() != cfg.data_len() {
        return Err(Error::DimensionMismatch(format!(
            "observation vector length {} vs config M*J*N = {}",
            data.values.len(),
            cfg.data_len()
        )));
    }
    writeln!(
        w,
        "obs v1 {} {} {} {} {}",
        cfg.wavenumbers.len(),
        cfg.directions.len(),
        cfg.observation_angles.len(),
        data.gamma,
        seed
    )?;
    for k in &cfg.wavenumbers {
        writeln!(w, "{k}")?;
    }
    for d in &cfg.directions {
        writeln!(w, "{} {}", d[0], d[1])?;
    }
    for a in &cfg.observation_angles {
        writeln!(w, "{a}")?;
    }
    for v in &data.values {
        writeln!(w, "{} {}", v.re, v.im)?;
    }
    Ok(())
}

pub fn write_observations_file<P: AsRef<std::path::Path>>(
    cfg: &ScatterConfig,
    data: &ObservationData,
    seed: u64,
    path: P,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_observations(cfg, data, seed, &mut f)
}

/// Reads the observation file back as `(config, data, seed)`.
pub fn read_observations<R: BufRead>(
    r: R,
    path_label: &str,
) -> Result<(ScatterConfig, ObservationData, u64)> {
    let mut lines = r.lines().enumerate();
    let bad = |line: usize, detail: String| Error::FileFormat {
        path: path_label.to_string(),
        line: line + 1,
        detail,
    };
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i, l)),
            Some((_, Err(e))) => Err(Error::Io(e)),
            None => Err(Error::FileFormat {
                path: path_label.to_string(),
                line: 0,
                detail: format!("unexpected end of file, wanted {expect}"),
            }),
        }
    };
    let (ln, header) = next_line("header")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != "obs" || parts[1] != "v1" {
        return Err(bad(ln, "expected header `obs v1 M J N gamma seed`".into()));
    }
    let m: usize = parts[2].parse().map_err(|_| bad(ln, "bad M".into()))?;
    let j: usize = parts[3].parse().map_err(|_| bad(ln, "bad J".into()))?;
    let n: usize = parts[4].parse().map_err(|_| bad(ln, "bad N".into()))?;
    let gamma: f64 = parts[5].parse().map_err(|_| bad(ln, "bad gamma".into()))?;
    let seed: u64 = parts[6].parse().map_err(|_| bad(ln, "bad seed".into()))?;
    let mut wavenumbers = Vec::with_capacity(m);
    for _ in 0..m {
        let (i, l) = next_line("wavenumber")?;
        wavenumbers.push(l.trim().parse().map_err(|_| bad(i, "bad wavenumber".into()))?);
    }
    let mut directions = Vec::with_capacity(j);
    for _ in 0..j {
        let (i, l) = next_line("direction")?;
        let mut it = l.split_whitespace();
        let dx: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad direction x".into()))?;
        let dy: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad direction y".into()))?;
        directions.push([dx, dy]);
    }
    let mut observation_angles = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, l) = next_line("angle")?;
        observation_angles.push(l.trim().parse().map_err(|_| bad(i, "bad angle".into()))?);
    }
    let mut values = Vec::with_capacity(m * j * n);
    for _ in 0..m * j * n {
        let (i, l) = next_line("data entry")?;
        let mut it = l.split_whitespace();
        let re: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad real part".into()))?;
        let im: f64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i, "bad imaginary part".into()))?;
        values.push(Complex64::new(re, im));
    }
    let cfg = ScatterConfig {
        wavenumbers,
        directions,
        observation_angles,
        n_trunc: None,
    };
    cfg.validate()?;
    Ok((cfg, ObservationData::new(values, gamma)?, seed))
}

pub fn read_observations_file<P: AsRef<std::path::Path>>(
    path: P,
) -> Result<(ScatterConfig, ObservationData, u64)> {
    let label = path.as_ref().display().to_string();
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_observations(f, &label)
}
