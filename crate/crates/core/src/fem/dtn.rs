//! Dense boundary block realizing the truncated Dirichlet-to-Neumann pairing
//! `int_Gamma (T u) conj(v) dS` for P1 traces.
//!
//! Boundary basis functions are treated as piecewise linear in the polar
//! angle; their Fourier coefficients against `e^{-i n theta}` are integrated
//! in closed form, so the block is `B^T D B` with a real mode matrix `B`
//! (cos/sin rows per mode) and a complex diagonal `D` holding the per-mode
//! symbol `k rho_n(kR)` with the `R`/`pi` normalization.

use crate::error::{Error, Result};
use crate::mesh::BoundaryTrace;
use crate::special::hankel_log_derivative;
use num_complex::Complex64;

/// Factored DtN boundary block `B^T D B` over trace-ordered boundary nodes.
#[derive(Debug, Clone)]
pub struct DtnBlock {
    n_boundary: usize,
    n_trunc: usize,
    /// Mode rows of `B`: `[R_0, R_1, I_1, ..., R_N, I_N]`, each of length
    /// `n_boundary`, where `R_n(p) = Re c_n(psi_p)`, `I_n(p) = Im c_n(psi_p)`.
    rows: Vec<Vec<f64>>,
    /// Complex diagonal of `D`, one entry per row of `B`.
    weights: Vec<Complex64>,
}

/// Default truncation order: `max(ceil(kR) + 10, 20)` clamped to the
/// aliasing cap `n_boundary / 2`.
pub fn default_n_trunc(k: f64, radius: f64, n_boundary: usize) -> usize {
    let wish = ((k * radius).ceil() as usize + 10).max(20);
    wish.min(n_boundary / 2).max(1)
}

/// Closed-form `int_a^b ((theta - a)/L) e^{-i n theta} dtheta`, `n >= 1`.
fn ramp_rise(n: f64, a: f64, length: f64) -> Complex64 {
    let phase = Complex64::new(0.0, -n * a).exp();
    let e = Complex64::new(0.0, -n * length).exp();
    // 1 - e^{-i n L} without cancellation
    let one_minus = Complex64::new(2.0 * (0.5 * n * length).sin().powi(2), (n * length).sin());
    phase * (Complex64::new(0.0, 1.0) * e / n - one_minus / (n * n * length))
}

/// Closed-form `int_a^b ((b - theta)/L) e^{-i n theta} dtheta`, `n >= 1`.
fn ramp_fall(n: f64, a: f64, length: f64) -> Complex64 {
    let phase = Complex64::new(0.0, -n * a).exp();
    let one_minus = Complex64::new(2.0 * (0.5 * n * length).sin().powi(2), (n * length).sin());
    phase * (Complex64::new(0.0, -1.0) / n + one_minus / (n * n * length))
}

/// Assembles the DtN block for wavenumber `k` on the circle of radius
/// `radius` from the ordered boundary trace, truncated at `n_trunc` modes.
pub fn assemble_dtn(
    trace: &BoundaryTrace,
    k: f64,
    radius: f64,
    n_trunc: usize,
) -> Result<DtnBlock> {
    if k <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "wavenumber must be positive, got {k}"
        )));
    }
    if n_trunc < 1 {
        return Err(Error::InvalidParameter(
            "DtN truncation order must be at least 1".to_string(),
        ));
    }
    let nb = trace.node_indices.len();
    let cap = nb / 2;
    if n_trunc > cap {
        return Err(Error::DtnAliasing {
            n_trunc,
            cap,
            n_boundary: nb,
        });
    }
    let two_pi = 2.0 * core::f64::consts::PI;
    // angular support of each hat: predecessor and successor with wraparound
    let prev_angle = |p: usize| {
        if p == 0 {
            trace.angles[nb - 1] - two_pi
        } else {
            trace.angles[p - 1]
        }
    };
    let next_angle = |p: usize| {
        if p + 1 == nb {
            trace.angles[0] + two_pi
        } else {
            trace.angles[p + 1]
        }
    };

    let mut rows = Vec::with_capacity(2 * n_trunc + 1);
    let mut weights = Vec::with_capacity(2 * n_trunc + 1);
    for mode in 0..=n_trunc {
        let symbol = k * hankel_log_derivative(mode as i32, k * radius)?;
        if mode == 0 {
            let row: Vec<f64> = (0..nb)
                .map(|p| 0.5 * ((trace.angles[p] - prev_angle(p)) + (next_angle(p) - trace.angles[p])))
                .collect();
            rows.push(row);
            weights.push(symbol * radius / two_pi);
        } else {
            let nf = mode as f64;
            let mut row_re = Vec::with_capacity(nb);
            let mut row_im = Vec::with_capacity(nb);
            for p in 0..nb {
                let a_left = prev_angle(p);
                let a_mid = trace.angles[p];
                let a_right = next_angle(p);
                let c = ramp_rise(nf, a_left, a_mid - a_left) + ramp_fall(nf, a_mid, a_right - a_mid);
                row_re.push(c.re);
                row_im.push(c.im);
            }
            rows.push(row_re);
            rows.push(row_im);
            let w = symbol * radius / core::f64::consts::PI;
            weights.push(w);
            weights.push(w);
        }
    }
    Ok(DtnBlock {
        n_boundary: nb,
        n_trunc,
        rows,
        weights,
    })
}

impl DtnBlock {
    pub fn boundary_dim(&self) -> usize {
        self.n_boundary
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    /// Dense block entries in trace ordering; exactly complex symmetric.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let nb = self.n_boundary;
        let mut m = vec![vec![Complex64::default(); nb]; nb];
        for p in 0..nb {
            for q in p..nb {
                let mut acc = Complex64::default();
                for (row, w) in self.rows.iter().zip(self.weights.iter()) {
                    acc += w * row[p] * row[q];
                }
                m[p][q] = acc;
                m[q][p] = acc;
            }
        }
        m
    }

    /// Unconjugated quadratic form `v^T (B^T D B) v`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> Result<Complex64> {
        if v.len() != self.n_boundary {
            return Err(Error::DimensionMismatch(format!(
                "DtN quadratic form: vector length {} vs boundary dimension {}",
                v.len(),
                self.n_boundary
            )));
        }
        let mut acc = Complex64::default();
        for (row, w) in self.rows.iter().zip(self.weights.iter()) {
            let s: Complex64 = row.iter().zip(v.iter()).map(|(r, x)| r * x).sum();
            acc += w * s * s;
        }
        Ok(acc)
    }
}
