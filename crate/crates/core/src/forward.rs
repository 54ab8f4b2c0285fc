//! Forward scattering: solve the truncated Helmholtz problem for a given
//! piecewise-constant scatterer and incident plane wave, observe the boundary
//! trace, and stack the full multi-frequency multi-direction data vector.
//! Includes the separation-of-variables series for a concentric disk used as
//! the independent solver oracle.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_dtn, assemble_stiffness, assemble_system, assemble_weighted_mass, default_n_trunc,
    FactoredSystem, SparseSymMatrix,
};
use crate::mesh::{boundary_trace, BoundaryTrace, Mesh};
use crate::special::{bessel_j, bessel_y};
use num_complex::Complex64;
use rayon::prelude::*;

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// Plane incident wave `e^{i k x . d}` with unit direction `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncidentWave {
    pub wavenumber: f64,
    pub direction: [f64; 2],
}

impl IncidentWave {
    pub fn new(wavenumber: f64, direction: [f64; 2]) -> Result<Self> {
        if !(wavenumber > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wavenumber must be positive, got {wavenumber}"
            )));
        }
        let norm = direction[0].hypot(direction[1]);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter(
                "incident direction must be a nonzero vector".to_string(),
            ));
        }
        Ok(IncidentWave {
            wavenumber,
            direction: [direction[0] / norm, direction[1] / norm],
        })
    }

    /// `e^{i k x . d}` at a point.
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        let phase = self.wavenumber * (x[0] * self.direction[0] + x[1] * self.direction[1]);
        Complex64::new(phase.cos(), phase.sin())
    }

    pub fn direction_angle(&self) -> f64 {
        let a = self.direction[1].atan2(self.direction[0]);
        if a < 0.0 {
            a + TWO_PI
        } else {
            a
        }
    }
}

/// Per-element contrast values of a piecewise-constant scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererField {
    pub values: Vec<f64>,
    /// Nominal contrast level `b` of the admissible class this field was
    /// built for (0 when the field came from the direct continuous map).
    pub contrast: f64,
}

impl ScattererField {
    pub fn new(values: Vec<f64>, contrast: f64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite contrast value {v}"
            )));
        }
        Ok(ScattererField { values, contrast })
    }

    pub fn zero(n_elements: usize) -> Self {
        ScattererField {
            values: vec![0.0; n_elements],
            contrast: 0.0,
        }
    }

    /// True when every value is exactly `0` or `b` and no element touching
    /// the artificial boundary carries `b`.
    pub fn is_admissible(&self, mesh: &Mesh, trace: &BoundaryTrace) -> bool {
        if self.values.len() != mesh.num_elements() || !(self.contrast > 0.0) {
            return false;
        }
        let on_boundary: std::collections::HashSet<usize> =
            trace.node_indices.iter().copied().collect();
        for (e, &v) in self.values.iter().enumerate() {
            if v != 0.0 && v != self.contrast {
                return false;
            }
            if v != 0.0 && mesh.elements()[e].iter().any(|p| on_boundary.contains(p)) {
                return false;
            }
        }
        true
    }

    /// Indices of elements with nonzero contrast.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(e, _)| e)
    }

    /// Writes the text export `element_index q_value` per line.
    pub fn write_text<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        for (e, v) in self.values.iter().enumerate() {
            writeln!(w, "{e} {v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: std::io::BufRead>(r: R, n_elements: usize, path_label: &str) -> Result<Self> {
        let mut values = vec![0.0; n_elements];
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let bad = |detail: &str| Error::FileFormat {
                path: path_label.to_string(),
                line: i + 1,
                detail: detail.to_string(),
            };
            let e: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad element index"))?;
            let v: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad contrast value"))?;
            if e >= n_elements {
                return Err(bad("element index out of range"));
            }
            values[e] = v;
        }
        let contrast = values.iter().cloned().fold(0.0_f64, f64::max);
        ScattererField::new(values, contrast)
    }
}

/// Full observation geometry: wavenumbers, incident directions, observation
/// angles on the boundary circle, and an optional DtN truncation override.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterConfig {
    pub wavenumbers: Vec<f64>,
    pub directions: Vec<[f64; 2]>,
    pub observation_angles: Vec<f64>,
    pub n_trunc: Option<usize>,
}

impl ScatterConfig {
    /// Directions equally distributed around the circle with `d_1 = (1, 0)`.
    pub fn equally_spaced_directions(j: usize) -> Vec<[f64; 2]> {
        (0..j)
            .map(|i| {
                let a = TWO_PI * i as f64 / j as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    }

    /// Observation angles equally spaced starting at zero.
    pub fn equally_spaced_angles(n: usize) -> Vec<f64> {
        (0..n).map(|i| TWO_PI * i as f64 / n as f64).collect()
    }

    /// The six-wavenumber grid `0.5 pi .. 2.5 pi` with five directions and
    /// 32 observation angles.
    pub fn paper_default() -> Self {
        let pi = core::f64::consts::PI;
        ScatterConfig {
            wavenumbers: (0..6).map(|m| (0.5 + 0.4 * m as f64) * pi).collect(),
            directions: Self::equally_spaced_directions(5),
            observation_angles: Self::equally_spaced_angles(32),
            n_trunc: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavenumbers.is_empty() || self.directions.is_empty() || self.observation_angles.is_empty()
        {
            return Err(Error::InvalidParameter(
                "scatter config needs at least one wavenumber, direction, and angle".to_string(),
            ));
        }
        if let Some(k) = self.wavenumbers.iter().find(|&&k| !(k > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "wavenumbers must be positive, got {k}"
            )));
        }
        for d in &self.directions {
            if !(d[0].hypot(d[1]) > 0.0) {
                return Err(Error::InvalidParameter(
                    "incident directions must be nonzero".to_string(),
                ));
            }
        }
        let mut folded: Vec<f64> = self
            .observation_angles
            .iter()
            .map(|a| a.rem_euclid(TWO_PI))
            .collect();
        folded.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in folded.windows(2) {
            if (w[1] - w[0]).abs() < 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "observation angles must be distinct, found duplicate at {}",
                    w[0]
                )));
            }
        }
        Ok(())
    }

    pub fn data_len(&self) -> usize {
        self.wavenumbers.len() * self.directions.len() * self.observation_angles.len()
    }
}

/// Right-hand side `k^2 int q u^i v` assembled with the 3-point edge-midpoint
/// rule (exact for quadratics).
pub fn assemble_scatter_rhs(mesh: &Mesh, q: &ScattererField, wave: &IncidentWave) -> Result<Vec<Complex64>> {
    if q.values.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "scatterer has {} values for {} elements",
            q.values.len(),
            mesh.num_elements()
        )));
    }
    let k2 = wave.wavenumber * wave.wavenumber;
    let mut rhs = vec![Complex64::default(); mesh.num_nodes()];
    for e in q.support() {
        let t = mesh.elements()[e];
        let p = [mesh.nodes()[t[0]], mesh.nodes()[t[1]], mesh.nodes()[t[2]]];
        let area = mesh.element_area(e);
        let mids = [
            [(p[0][0] + p[1][0]) * 0.5, (p[0][1] + p[1][1]) * 0.5],
            [(p[1][0] + p[2][0]) * 0.5, (p[1][1] + p[2][1]) * 0.5],
            [(p[2][0] + p[0][0]) * 0.5, (p[2][1] + p[0][1]) * 0.5],
        ];
        let ui = [wave.eval(mids[0]), wave.eval(mids[1]), wave.eval(mids[2])];
        // hat function of vertex i equals 1/2 on its two incident edge midpoints
        let pairs = [(0usize, 2usize), (0, 1), (1, 2)];
        let scale = k2 * q.values[e] * area / 3.0;
        for (i, &(ma, mb)) in pairs.iter().enumerate() {
            rhs[t[i]] += scale * 0.5 * (ui[ma] + ui[mb]);
        }
    }
    Ok(rhs)
}

/// Solves the truncated scattering problem for one incident wave, returning
/// the complex scattered field at every mesh node.
pub fn solve_scattered(
    mesh: &Mesh,
    q: &ScattererField,
    wave: &IncidentWave,
    n_trunc: usize,
) -> Result<Vec<Complex64>> {
    let trace = boundary_trace(mesh)?;
    let stiffness = assemble_stiffness(mesh)?;
    let factored = factor_helmholtz(mesh, &trace, &stiffness, q, wave.wavenumber, Some(n_trunc))?;
    let rhs = assemble_scatter_rhs(mesh, q, wave)?;
    factored.solve(&rhs)
}

fn factor_helmholtz(
    mesh: &Mesh,
    trace: &BoundaryTrace,
    stiffness: &SparseSymMatrix,
    q: &ScattererField,
    k: f64,
    n_trunc: Option<usize>,
) -> Result<FactoredSystem> {
    if q.values.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "scatterer has {} values for {} elements",
            q.values.len(),
            mesh.num_elements()
        )));
    }
    let weights: Vec<f64> = q.values.iter().map(|&v| 1.0 + v).collect();
    let mass = assemble_weighted_mass(mesh, &weights)?;
    let ntr = n_trunc.unwrap_or_else(|| default_n_trunc(k, mesh.radius(), trace.node_indices.len()));
    let dtn = assemble_dtn(trace, k, mesh.radius(), ntr)?;
    assemble_system(stiffness, &mass, &dtn, trace, k)?.factor()
}

/// Piecewise-linear-in-angle interpolation of boundary nodal values at the
/// requested angles (folded into `[0, 2 pi)`).
pub fn observe_boundary(
    field: &[Complex64],
    trace: &BoundaryTrace,
    angles: &[f64],
) -> Result<Vec<Complex64>> {
    let nb = trace.node_indices.len();
    if field.len() < nb {
        return Err(Error::DimensionMismatch(format!(
            "field length {} shorter than boundary node count {nb}",
            field.len()
        )));
    }
    let values: Vec<Complex64> = trace.node_indices.iter().map(|&p| field[p]).collect();
    let mut out = Vec::with_capacity(angles.len());
    for &raw in angles {
        let theta = raw.rem_euclid(TWO_PI);
        // find the trace segment containing theta
        let seg = match trace.angles.binary_search_by(|a| a.partial_cmp(&theta).unwrap()) {
            Ok(i) => {
                out.push(values[i]);
                let _ = i;
                continue;
            }
            Err(0) | Err(_) if theta < trace.angles[0] => nb - 1,
            Err(i) if i >= nb => nb - 1,
            Err(i) => i - 1,
        };
        let a0 = trace.angles[seg];
        let (a1, v1) = if seg + 1 == nb {
            (trace.angles[0] + TWO_PI, values[0])
        } else {
            (trace.angles[seg + 1], values[seg + 1])
        };
        let theta_unwrapped = if theta < a0 { theta + TWO_PI } else { theta };
        let t = (theta_unwrapped - a0) / (a1 - a0);
        out.push(values[seg] * (1.0 - t) + v1 * t);
    }
    Ok(out)
}

/// Scattered boundary trace of the classical transmission problem for a
/// concentric disk of radius `a` and contrast `b`: mode matching of
/// `J_n(k sqrt(1+b) r)` inside against `H_n(k r)` outside.
pub fn analytic_disk_scattering(
    a: f64,
    b: f64,
    wave: &IncidentWave,
    radius: f64,
    angles: &[f64],
) -> Result<Vec<Complex64>> {
    if b <= -1.0 {
        return Err(Error::Domain(format!(
            "contrast must satisfy b > -1, got {b}"
        )));
    }
    if !(a > 0.0 && a < radius) {
        return Err(Error::InvalidParameter(format!(
            "disk radius must satisfy 0 < a < R, got a={a}, R={radius}"
        )));
    }
    if b == 0.0 {
        return Ok(vec![Complex64::default(); angles.len()]);
    }
    let k = wave.wavenumber;
    let k1 = k * (1.0 + b).sqrt();
    let theta_d = wave.direction_angle();
    let hankel = |n: u32, z: f64| -> Result<Complex64> {
        Ok(Complex64::new(bessel_j(n, z)?, bessel_y(n, z)?))
    };
    let mut out = vec![Complex64::default(); angles.len()];
    let mut running_norm = 0.0_f64;
    let mut small_streak = 0;
    let n_cap = (k * radius).ceil() as u32 + 200;
    for n in 0..=n_cap {
        let jka = bessel_j(n, k * a)?;
        let jk1a = bessel_j(n, k1 * a)?;
        let jp = |n: u32, z: f64| -> Result<f64> {
            Ok(if n == 0 {
                -bessel_j(1, z)?
            } else {
                bessel_j(n - 1, z)? - n as f64 / z * bessel_j(n, z)?
            })
        };
        let jpka = jp(n, k * a)?;
        let jpk1a = jp(n, k1 * a)?;
        let hka = hankel(n, k * a)?;
        let hpka = if n == 0 {
            -hankel(1, k * a)?
        } else {
            hankel(n - 1, k * a)? - n as f64 / (k * a) * hka
        };
        let numerator = k1 * jpk1a * jka - k * jk1a * jpka;
        let denominator = k1 * jpk1a * hka - k * jk1a * hpka;
        let i_pow = Complex64::new(0.0, 1.0).powu(n);
        let coeff = -i_pow * numerator / denominator;
        let amp = coeff * hankel(n, k * radius)?;
        let weight = if n == 0 { 1.0 } else { 2.0 };
        for (slot, &theta) in out.iter_mut().zip(angles.iter()) {
            *slot += weight * amp * (n as f64 * (theta - theta_d)).cos();
        }
        running_norm = running_norm.max(out.iter().map(|v| v.norm()).fold(0.0, f64::max));
        if (weight * amp.norm()) < 1e-12 * running_norm.max(1e-300) {
            small_streak += 1;
            if small_streak >= 3 {
                return Ok(out);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(Error::Domain(
        "analytic disk series did not converge within the mode cap".to_string(),
    ))
}

/// Stacked forward map over all `(k_m, d_j)` pairs in `(m outer, j middle,
/// n inner)` order. One factorization per wavenumber serves all directions;
/// wavenumbers run concurrently with a fixed-order gather.
pub fn forward_map(
    mesh: &Mesh,
    trace: &BoundaryTrace,
    q: &ScattererField,
    cfg: &ScatterConfig,
) -> Result<Vec<Complex64>> {
    let stiffness = assemble_stiffness(mesh)?;
    forward_map_with(mesh, trace, &stiffness, q, cfg)
}

/// `forward_map` against a pre-assembled stiffness matrix; the hot path for
/// repeated evaluations during sampling.
pub fn forward_map_with(
    mesh: &Mesh,
    trace: &BoundaryTrace,
    stiffness: &SparseSymMatrix,
    q: &ScattererField,
    cfg: &ScatterConfig,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if q.values.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "scatterer has {} values for {} elements",
            q.values.len(),
            mesh.num_elements()
        )));
    }
    let blocks: Result<Vec<Vec<Complex64>>> = cfg
        .wavenumbers
        .par_iter()
        .map(|&k| {
            let factored = factor_helmholtz(mesh, trace, stiffness, q, k, cfg.n_trunc)?;
            let mut block = Vec::with_capacity(cfg.directions.len() * cfg.observation_angles.len());
            for &d in &cfg.directions {
                let wave = IncidentWave::new(k, d)?;
                let rhs = assemble_scatter_rhs(mesh, q, &wave)?;
                let field = factored.solve(&rhs)?;
                block.extend(observe_boundary(&field, trace, &cfg.observation_angles)?);
            }
            Ok(block)
        })
        .collect();
    Ok(blocks?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;

    const PI: f64 = core::f64::consts::PI;

    fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        num / den
    }

    fn disk_scatterer(mesh: &Mesh, a: f64, b: f64) -> ScattererField {
        let values: Vec<f64> = (0..mesh.num_elements())
            .map(|e| {
                let c = mesh.element_centroid(e);
                if c[0].hypot(c[1]) < a {
                    b
                } else {
                    0.0
                }
            })
            .collect();
        ScattererField::new(values, b).unwrap()
    }

    #[test]
    fn zero_contrast_gives_exactly_zero_field() {
        let mesh = generate_disk_mesh(1.0, 0.15).unwrap();
        let q = ScattererField::zero(mesh.num_elements());
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let field = solve_scattered(&mesh, &q, &wave, 10).unwrap();
        assert!(field.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn analytic_series_frozen_spot_values() {
        // a = 0.5, b = 1, k = pi, R = 1, d = (1, 0); high-precision reference
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let angles = [0.0, PI / 3.0, PI, 1.2345];
        let expect = [
            Complex64::new(-0.081_912_995_878_029_716, -0.853_057_482_161_567_37),
            Complex64::new(-0.050_745_669_179_023_057, -0.513_014_849_396_363_01),
            Complex64::new(0.005_005_643_287_982_115_8, 0.152_500_506_718_031_34),
            Complex64::new(-0.040_329_499_344_026_574, -0.412_441_991_118_272_99),
        ];
        let got = analytic_disk_scattering(0.5, 1.0, &wave, 1.0, &angles).unwrap();
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).norm() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn analytic_series_zero_contrast_is_zero() {
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let v = analytic_disk_scattering(0.5, 0.0, &wave, 1.0, &[0.0, 1.0]).unwrap();
        assert!(v.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn analytic_series_rejects_contrast_below_minus_one() {
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        assert!(matches!(
            analytic_disk_scattering(0.5, -1.5, &wave, 1.0, &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn analytic_series_rotational_consistency() {
        let delta = 0.83;
        let angles: Vec<f64> = (0..8).map(|i| TWO_PI * i as f64 / 8.0).collect();
        let rotated: Vec<f64> = angles.iter().map(|a| a + delta).collect();
        let w0 = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let w1 = IncidentWave::new(PI, [delta.cos(), delta.sin()]).unwrap();
        let v0 = analytic_disk_scattering(0.5, 1.0, &w0, 1.0, &angles).unwrap();
        let v1 = analytic_disk_scattering(0.5, 1.0, &w1, 1.0, &rotated).unwrap();
        for (a, b) in v0.iter().zip(v1.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn analytic_series_self_convergence_against_padded_truncation() {
        // the adaptive cutoff must agree with a widely padded evaluation
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let angles: Vec<f64> = (0..16).map(|i| TWO_PI * i as f64 / 16.0).collect();
        let v = analytic_disk_scattering(0.5, 1.0, &wave, 1.0, &angles).unwrap();
        // brute-force padded series, 40 extra modes, no adaptive stop
        let k = PI;
        let k1 = k * 2.0_f64.sqrt();
        let mut padded = vec![Complex64::default(); angles.len()];
        for n in 0..60u32 {
            let jka = bessel_j(n, k * 0.5).unwrap();
            let jk1a = bessel_j(n, k1 * 0.5).unwrap();
            let jp = |n: u32, z: f64| {
                if n == 0 {
                    -bessel_j(1, z).unwrap()
                } else {
                    bessel_j(n - 1, z).unwrap() - n as f64 / z * bessel_j(n, z).unwrap()
                }
            };
            let h = |n: u32, z: f64| {
                Complex64::new(bessel_j(n, z).unwrap(), bessel_y(n, z).unwrap())
            };
            let hp = if n == 0 {
                -h(1, k * 0.5)
            } else {
                h(n - 1, k * 0.5) - n as f64 / (k * 0.5) * h(n, k * 0.5)
            };
            let num = k1 * jp(n, k1 * 0.5) * jka - k * jk1a * jp(n, k * 0.5);
            let den = k1 * jp(n, k1 * 0.5) * h(n, k * 0.5) - k * jk1a * hp;
            let an = -Complex64::new(0.0, 1.0).powu(n) * num / den;
            let weight = if n == 0 { 1.0 } else { 2.0 };
            for (slot, &theta) in padded.iter_mut().zip(angles.iter()) {
                *slot += weight * an * h(n, k) * (n as f64 * theta).cos();
            }
        }
        assert!(rel_l2(&v, &padded) < 1e-10);
    }

    #[test]
    fn fem_matches_analytic_disk_oracle_on_coarse_mesh() {
        let mesh = generate_disk_mesh(1.0, 4.9e-2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let wave = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let q = disk_scatterer(&mesh, 0.5, 1.0);
        let ntr = default_n_trunc(PI, 1.0, trace.node_indices.len());
        let field = solve_scattered(&mesh, &q, &wave, ntr).unwrap();
        let angles = ScatterConfig::equally_spaced_angles(64);
        let got = observe_boundary(&field, &trace, &angles).unwrap();
        let expect = analytic_disk_scattering(0.5, 1.0, &wave, 1.0, &angles).unwrap();
        let err = rel_l2(&got, &expect);
        assert!(err < 0.02, "relative L2 error {err} at h = 4.9e-2");
    }

    #[test]
    fn fem_exact_equivariance_under_mesh_symmetry_rotation() {
        // rotating the incident direction by a whole number of angular
        // sectors maps the discrete problem onto itself
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let nb = trace.node_indices.len();
        let shift = 5usize;
        let delta = TWO_PI * shift as f64 / nb as f64;
        let q = disk_scatterer(&mesh, 0.5, 1.0);
        let angles = ScatterConfig::equally_spaced_angles(16);
        let rotated: Vec<f64> = angles.iter().map(|a| a + delta).collect();
        let w0 = IncidentWave::new(PI, [1.0, 0.0]).unwrap();
        let w1 = IncidentWave::new(PI, [delta.cos(), delta.sin()]).unwrap();
        let f0 = solve_scattered(&mesh, &q, &w0, 14).unwrap();
        let f1 = solve_scattered(&mesh, &q, &w1, 14).unwrap();
        let v0 = observe_boundary(&f0, &trace, &angles).unwrap();
        let v1 = observe_boundary(&f1, &trace, &rotated).unwrap();
        assert!(rel_l2(&v1, &v0) < 1e-9);
    }

    #[test]
    fn observe_boundary_returns_nodal_values_at_node_angles() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let mut field = vec![Complex64::default(); mesh.num_nodes()];
        for (i, &p) in trace.node_indices.iter().enumerate() {
            field[p] = Complex64::new(i as f64, -(i as f64));
        }
        let got = observe_boundary(&field, &trace, &trace.angles).unwrap();
        for (i, v) in got.iter().enumerate() {
            assert_eq!(*v, Complex64::new(i as f64, -(i as f64)));
        }
    }

    #[test]
    fn observe_boundary_constant_field_stays_constant() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let field = vec![Complex64::new(2.5, -1.0); mesh.num_nodes()];
        let got = observe_boundary(&field, &trace, &[0.01, 1.0, 3.7, 6.2]).unwrap();
        for v in got {
            assert!((v - Complex64::new(2.5, -1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn observe_boundary_linear_in_angle_is_exact() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let mut field = vec![Complex64::default(); mesh.num_nodes()];
        for (i, &p) in trace.node_indices.iter().enumerate() {
            field[p] = Complex64::new(trace.angles[i], 0.0);
        }
        // query strictly between two nodes
        let mid = 0.5 * (trace.angles[3] + trace.angles[4]);
        let got = observe_boundary(&field, &trace, &[mid]).unwrap();
        assert_relative_eq!(got[0].re, mid, epsilon = 1e-13);
    }

    #[test]
    fn forward_map_zero_scatterer_is_zero_everywhere() {
        let mesh = generate_disk_mesh(1.0, 0.15).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let cfg = ScatterConfig {
            wavenumbers: vec![0.5 * PI, 1.5 * PI],
            directions: ScatterConfig::equally_spaced_directions(3),
            observation_angles: ScatterConfig::equally_spaced_angles(8),
            n_trunc: None,
        };
        let q = ScattererField::zero(mesh.num_elements());
        let y = forward_map(&mesh, &trace, &q, &cfg).unwrap();
        assert_eq!(y.len(), 2 * 3 * 8);
        assert!(y.iter().all(|v| v.norm() <= 1e-10));
    }

    #[test]
    fn forward_map_stacking_order_and_length() {
        let mesh = generate_disk_mesh(1.0, 0.15).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let cfg = ScatterConfig {
            wavenumbers: vec![PI, 1.3 * PI],
            directions: ScatterConfig::equally_spaced_directions(2),
            observation_angles: ScatterConfig::equally_spaced_angles(4),
            n_trunc: None,
        };
        let q = disk_scatterer(&mesh, 0.4, 1.0);
        let y = forward_map(&mesh, &trace, &q, &cfg).unwrap();
        assert_eq!(y.len(), 2 * 2 * 4);
        // the (m=0, j=0) block must equal a standalone solve
        let wave = IncidentWave::new(PI, cfg.directions[0]).unwrap();
        let ntr = default_n_trunc(PI, 1.0, trace.node_indices.len());
        let field = solve_scattered(&mesh, &q, &wave, ntr).unwrap();
        let head = observe_boundary(&field, &trace, &cfg.observation_angles).unwrap();
        for (a, b) in y[..4].iter().zip(head.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_map_is_deterministic_across_runs() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let cfg = ScatterConfig {
            wavenumbers: vec![PI, 1.7 * PI, 2.2 * PI],
            directions: ScatterConfig::equally_spaced_directions(2),
            observation_angles: ScatterConfig::equally_spaced_angles(6),
            n_trunc: None,
        };
        let q = disk_scatterer(&mesh, 0.4, 2.0);
        let y1 = forward_map(&mesh, &trace, &q, &cfg).unwrap();
        let y2 = forward_map(&mesh, &trace, &q, &cfg).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn born_regime_scales_linearly_in_contrast() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let cfg = ScatterConfig {
            wavenumbers: vec![PI],
            directions: vec![[1.0, 0.0]],
            observation_angles: ScatterConfig::equally_spaced_angles(16),
            n_trunc: None,
        };
        let norm = |b: f64| {
            let q = disk_scatterer(&mesh, 0.5, b);
            let y = forward_map(&mesh, &trace, &q, &cfg).unwrap();
            y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = norm(0.01) / norm(0.02);
        assert!(
            (ratio - 0.5).abs() < 0.025,
            "Born scaling ratio {ratio} should be 0.5 within 5%"
        );
    }

    #[test]
    fn solution_norm_shrinks_when_contrast_halves() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let wave = IncidentWave::new(0.5 * PI, [1.0, 0.0]).unwrap();
        let h1 = |b: f64| {
            let q = disk_scatterer(&mesh, 0.5, b);
            let field = solve_scattered(&mesh, &q, &wave, 12).unwrap();
            let k = assemble_stiffness(&mesh).unwrap();
            let m = assemble_weighted_mass(&mesh, &vec![1.0; mesh.num_elements()]).unwrap();
            let re: Vec<f64> = field.iter().map(|v| v.re).collect();
            let im: Vec<f64> = field.iter().map(|v| v.im).collect();
            let sq = k.quadratic_form(&re).unwrap()
                + k.quadratic_form(&im).unwrap()
                + m.quadratic_form(&re).unwrap()
                + m.quadratic_form(&im).unwrap();
            sq.sqrt()
        };
        let full = h1(1.0);
        let half = h1(0.5);
        assert!(full.is_finite() && full > 0.0);
        assert!(
            half <= 0.75 * full,
            "H1 norm must drop near-linearly with contrast: {half} vs {full}"
        );
    }

    #[test]
    fn incident_wave_normalizes_direction() {
        let w = IncidentWave::new(1.0, [3.0, 4.0]).unwrap();
        assert_relative_eq!(w.direction[0].hypot(w.direction[1]), 1.0, epsilon = 1e-15);
        assert!(IncidentWave::new(0.0, [1.0, 0.0]).is_err());
        assert!(IncidentWave::new(1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn admissibility_detects_boundary_touching_support() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let mut q = disk_scatterer(&mesh, 0.5, 1.0);
        assert!(q.is_admissible(&mesh, &trace));
        // paint one boundary-touching element
        let on_boundary: std::collections::HashSet<usize> =
            trace.node_indices.iter().copied().collect();
        let bad = (0..mesh.num_elements())
            .find(|&e| mesh.elements()[e].iter().any(|p| on_boundary.contains(p)))
            .unwrap();
        q.values[bad] = 1.0;
        assert!(!q.is_admissible(&mesh, &trace));
        // values outside {0, b} are inadmissible
        let mut q2 = disk_scatterer(&mesh, 0.3, 1.0);
        q2.values[0] = 0.5;
        assert!(!q2.is_admissible(&mesh, &trace));
    }
}
