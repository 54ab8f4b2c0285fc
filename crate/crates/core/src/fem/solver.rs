//! Direct solver for the assembled complex Helmholtz systems.
//!
//! With the structured mesh ordering (rings, boundary last) both the FEM
//! pattern and the dense DtN boundary coupling live inside a moderate band,
//! so the system is factored with banded LU and partial pivoting
//! (LAPACK-style storage with `kl` fill rows).

use crate::error::{Error, Result};
use crate::fem::dtn::DtnBlock;
use crate::fem::sparse::SparseSymMatrix;
use crate::mesh::BoundaryTrace;
use num_complex::Complex64;

/// Cap on band storage to catch pathologically ordered meshes early.
const MAX_BAND_BYTES: usize = 4 << 30;

/// Banded complex matrix in LAPACK `gb` layout (column-major, `ldab`
/// rows per column, top `kl` rows reserved for pivoting fill).
#[derive(Debug, Clone)]
struct Band {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<Complex64>,
}

impl Band {
    fn ldab(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j + self.kl && j <= i + self.kl + self.ku);
        j * self.ldab() + (self.kl + self.ku + i - j)
    }

    fn zeros(n: usize, kl: usize, ku: usize) -> Result<Band> {
        let ldab = 2 * kl + ku + 1;
        let bytes = ldab
            .checked_mul(n)
            .and_then(|x| x.checked_mul(std::mem::size_of::<Complex64>()))
            .ok_or_else(|| Error::Solver("band storage size overflow".into()))?;
        if bytes > MAX_BAND_BYTES {
            return Err(Error::Solver(format!(
                "band storage of {bytes} bytes exceeds the cap; mesh ordering has bandwidth {}",
                kl.max(ku)
            )));
        }
        Ok(Band {
            n,
            kl,
            ku,
            ab: vec![Complex64::default(); ldab * n],
        })
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let at = self.idx(i, j);
        self.ab[at] += v;
    }

    fn get(&self, i: usize, j: usize) -> Complex64 {
        if i <= j + self.kl && j <= i + self.kl + self.ku {
            self.ab[self.idx(i, j)]
        } else {
            Complex64::default()
        }
    }

    fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.kl + self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    fn frobenius_norm(&self) -> f64 {
        self.ab.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// In-place banded LU with partial pivoting. Returns the pivot vector.
    fn factor_in_place(&mut self) -> Result<Vec<usize>> {
        let n = self.n;
        let kl = self.kl;
        let kue = self.kl + self.ku; // effective upper bandwidth with fill
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let lim = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.ab[self.idx(j, j)].norm_sqr();
            for i in (j + 1)..=lim {
                let mag = self.ab[self.idx(i, j)].norm_sqr();
                if mag > best {
                    best = mag;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Solver(format!(
                    "zero or non-finite pivot at column {j} of {n}"
                )));
            }
            ipiv[j] = p;
            if p != j {
                let chi = (j + kue).min(n - 1);
                for c in j..=chi {
                    let (a, b) = (self.idx(j, c), self.idx(p, c));
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[self.idx(j, j)];
            let chi = (j + kue).min(n - 1);
            for i in (j + 1)..=lim {
                let m = self.ab[self.idx(i, j)] / piv;
                let at = self.idx(i, j);
                self.ab[at] = m;
                for c in (j + 1)..=chi {
                    let upper = self.ab[self.idx(j, c)];
                    let at = self.idx(i, c);
                    self.ab[at] -= m * upper;
                }
            }
        }
        Ok(ipiv)
    }
}

/// Assembled complex system `K - k^2 M(1+q) - DtN` in banded storage.
#[derive(Debug, Clone)]
pub struct HelmholtzSystem {
    band: Band,
}

/// Assembles the discrete weak form of the truncated scattering problem:
/// stiffness minus `k^2` weighted mass minus the DtN lift.
pub fn assemble_system(
    stiffness: &SparseSymMatrix,
    weighted_mass: &SparseSymMatrix,
    dtn: &DtnBlock,
    trace: &BoundaryTrace,
    k: f64,
) -> Result<HelmholtzSystem> {
    let n = stiffness.dim();
    if weighted_mass.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "stiffness dimension {n} vs mass dimension {}",
            weighted_mass.dim()
        )));
    }
    if dtn.boundary_dim() != trace.node_indices.len() {
        return Err(Error::DimensionMismatch(format!(
            "DtN block dimension {} vs trace length {}",
            dtn.boundary_dim(),
            trace.node_indices.len()
        )));
    }
    let mut bw = stiffness.bandwidth().max(weighted_mass.bandwidth());
    for &p in &trace.node_indices {
        for &q in &trace.node_indices {
            bw = bw.max(p.abs_diff(q));
        }
    }
    let mut band = Band::zeros(n, bw, bw)?;
    for (i, j, v) in stiffness.entries() {
        band.add(i, j, Complex64::new(v, 0.0));
    }
    for (i, j, v) in weighted_mass.entries() {
        band.add(i, j, Complex64::new(-k * k * v, 0.0));
    }
    let dense = dtn.to_dense();
    for (pi, &gi) in trace.node_indices.iter().enumerate() {
        for (qi, &gj) in trace.node_indices.iter().enumerate() {
            band.add(gi, gj, -dense[pi][qi]);
        }
    }
    Ok(HelmholtzSystem { band })
}

impl HelmholtzSystem {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.band.get(i, j)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.band.n {
            return Err(Error::DimensionMismatch(format!(
                "matvec: vector length {} vs dimension {}",
                x.len(),
                self.band.n
            )));
        }
        Ok(self.band.matvec(x))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.band.frobenius_norm()
    }

    /// Banded LU factorization; the system itself is left untouched.
    pub fn factor(&self) -> Result<FactoredSystem> {
        let mut band = self.band.clone();
        let ipiv = band.factor_in_place()?;
        let mut dmin = f64::INFINITY;
        let mut dmax = 0.0_f64;
        for j in 0..band.n {
            let d = band.ab[band.idx(j, j)].norm();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        if dmin == 0.0 || !dmin.is_finite() || !dmax.is_finite() {
            return Err(Error::Solver("factorization produced a zero pivot".into()));
        }
        Ok(FactoredSystem {
            band,
            ipiv,
            condition_estimate: dmax / dmin,
        })
    }
}

/// Reusable LU factors; `solve` is read-only and may be called concurrently.
#[derive(Debug, Clone)]
pub struct FactoredSystem {
    band: Band,
    ipiv: Vec<usize>,
    condition_estimate: f64,
}

impl FactoredSystem {
    pub fn dim(&self) -> usize {
        self.band.n
    }

    /// Crude conditioning diagnostic: `max |U_jj| / min |U_jj|`.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.band.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: rhs length {} vs dimension {n}",
                rhs.len()
            )));
        }
        let kl = self.band.kl;
        let kue = self.band.kl + self.band.ku;
        let mut x = rhs.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            let lim = (j + kl).min(n - 1);
            for i in (j + 1)..=lim {
                x[i] -= self.band.ab[self.band.idx(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            let xj = x[j] / self.band.ab[self.band.idx(j, j)];
            x[j] = xj;
            let lo = j.saturating_sub(kue);
            for i in lo..j {
                x[i] -= self.band.ab[self.band.idx(i, j)] * xj;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_dtn, assemble_stiffness, assemble_weighted_mass, default_n_trunc};
    use crate::mesh::{boundary_trace, generate_disk_mesh};
    use nalgebra::DMatrix;

    fn band_from_dense(m: &DMatrix<Complex64>, kl: usize, ku: usize) -> Band {
        let n = m.nrows();
        let mut band = Band::zeros(n, kl, ku).unwrap();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)].norm() != 0.0 {
                    band.add(i, j, m[(i, j)]);
                }
            }
        }
        band
    }

    /// Deterministic pseudo-random complex値 from a counter.
    fn lcg_complex(seed: &mut u64) -> Complex64 {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*seed >> 33) as f64) / (1u64 << 31) as f64 - 1.0
        };
        Complex64::new(next(), next())
    }

    #[test]
    fn banded_lu_matches_dense_lu() {
        let n = 24;
        let (kl, ku) = (3, 2);
        let mut seed = 42u64;
        let mut dense = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if j + kl >= i && i + ku >= j {
                    dense[(i, j)] = lcg_complex(&mut seed);
                }
            }
            dense[(i, i)] += Complex64::new(0.5, 0.0);
        }
        let rhs: Vec<Complex64> = (0..n).map(|_| lcg_complex(&mut seed)).collect();
        let mut band = band_from_dense(&dense, kl, ku);
        let ipiv = band.factor_in_place().unwrap();
        let fact = FactoredSystem {
            band,
            ipiv,
            condition_estimate: 0.0,
        };
        let x = fact.solve(&rhs).unwrap();
        let x_ref = dense
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(rhs.clone()))
            .expect("dense solve");
        for i in 0..n {
            assert!(
                (x[i] - x_ref[i]).norm() < 1e-11 * (1.0 + x_ref[i].norm()),
                "entry {i}: {} vs {}",
                x[i],
                x_ref[i]
            );
        }
    }

    #[test]
    fn manufactured_solution_recovered() {
        let n = 40;
        let (kl, ku) = (5, 5);
        let mut seed = 7u64;
        let mut dense = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if j + kl >= i && i + ku >= j {
                    dense[(i, j)] = lcg_complex(&mut seed);
                }
            }
        }
        let exact: Vec<Complex64> = (0..n).map(|_| lcg_complex(&mut seed)).collect();
        let band = band_from_dense(&dense, kl, ku);
        let rhs = band.matvec(&exact);
        let mut fband = band.clone();
        let ipiv = fband.factor_in_place().unwrap();
        let fact = FactoredSystem {
            band: fband,
            ipiv,
            condition_estimate: 0.0,
        };
        let x = fact.solve(&rhs).unwrap();
        let err: f64 = x
            .iter()
            .zip(exact.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale: f64 = exact.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-9 * scale, "relative error {}", err / scale);
    }

    #[test]
    fn identity_returns_rhs_and_zero_rhs_gives_zero() {
        let n = 9;
        let mut band = Band::zeros(n, 1, 1).unwrap();
        for i in 0..n {
            band.add(i, i, Complex64::new(1.0, 0.0));
        }
        let ipiv = band.factor_in_place().unwrap();
        let fact = FactoredSystem {
            band,
            ipiv,
            condition_estimate: 1.0,
        };
        let rhs: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -2.0)).collect();
        assert_eq!(fact.solve(&rhs).unwrap(), rhs);
        let zero = vec![Complex64::default(); n];
        assert_eq!(fact.solve(&zero).unwrap(), zero);
    }

    #[test]
    fn singular_matrix_reports_solver_error() {
        let mut band = Band::zeros(4, 1, 1).unwrap();
        band.add(0, 0, Complex64::new(1.0, 0.0));
        // column 1 left entirely zero
        band.add(2, 2, Complex64::new(1.0, 0.0));
        band.add(3, 3, Complex64::new(1.0, 0.0));
        assert!(matches!(
            band.factor_in_place(),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn helmholtz_assembly_is_complex_symmetric_with_small_residual() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let k = core::f64::consts::PI;
        let stiff = assemble_stiffness(&mesh).unwrap();
        let weights: Vec<f64> = (0..mesh.num_elements())
            .map(|e| {
                let c = mesh.element_centroid(e);
                if c[0].hypot(c[1]) < 0.5 {
                    1.3
                } else {
                    1.0
                }
            })
            .collect();
        let mass = assemble_weighted_mass(&mesh, &weights).unwrap();
        let ntr = default_n_trunc(k, 1.0, trace.node_indices.len());
        let dtn = assemble_dtn(&trace, k, 1.0, ntr).unwrap();
        let sys = assemble_system(&stiff, &mass, &dtn, &trace, k).unwrap();

        // complex symmetry across a sample of entries
        let scale = sys.frobenius_norm();
        for &i in &[0usize, 3, 100, mesh.num_nodes() - 1] {
            for &j in &[1usize, 50, mesh.num_nodes() - 2] {
                let d = (sys.entry(i, j) - sys.entry(j, i)).norm();
                assert!(d <= 1e-12 * scale, "entry ({i},{j}) asymmetry {d}");
            }
        }

        // residual contract on a deterministic rhs
        let mut seed = 3u64;
        let rhs: Vec<Complex64> = (0..mesh.num_nodes()).map(|_| lcg_complex(&mut seed)).collect();
        let fact = sys.factor().unwrap();
        let x = fact.solve(&rhs).unwrap();
        let ax = sys.matvec(&x).unwrap();
        let rnorm: f64 = ax
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let xnorm: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let bnorm: f64 = rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(
            rnorm <= 1e-10 * (sys.frobenius_norm() * xnorm + bnorm),
            "residual {rnorm} too large"
        );
        assert!(fact.condition_estimate() >= 1.0);
    }

    #[test]
    fn concurrent_solves_are_deterministic() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let trace = boundary_trace(&mesh).unwrap();
        let k = 2.0;
        let stiff = assemble_stiffness(&mesh).unwrap();
        let mass = assemble_weighted_mass(&mesh, &vec![1.0; mesh.num_elements()]).unwrap();
        let dtn = assemble_dtn(&trace, k, 1.0, 8).unwrap();
        let fact = assemble_system(&stiff, &mass, &dtn, &trace, k)
            .unwrap()
            .factor()
            .unwrap();
        let mut seed = 11u64;
        let rhs1: Vec<Complex64> = (0..mesh.num_nodes()).map(|_| lcg_complex(&mut seed)).collect();
        let rhs2: Vec<Complex64> = (0..mesh.num_nodes()).map(|_| lcg_complex(&mut seed)).collect();
        let (a, b) = rayon::join(|| fact.solve(&rhs1).unwrap(), || fact.solve(&rhs2).unwrap());
        assert_eq!(a, fact.solve(&rhs1).unwrap());
        assert_eq!(b, fact.solve(&rhs2).unwrap());
    }
}
