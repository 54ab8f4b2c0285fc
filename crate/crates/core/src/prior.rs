//! Whittle-Matern Gaussian prior `N(0, C)` with
//! `C = varsigma tau^{2 alpha - 2} (tau^2 I - Laplacian)^{-alpha}` under
//! Neumann boundary conditions, sampled through a truncated Karhunen-Loeve
//! expansion in the generalized eigenbasis of (stiffness, mass).

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, assemble_weighted_mass};
use crate::levelset::LevelSetField;
use crate::mesh::Mesh;
use crate::special::{bessel_k, gamma};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// Regularity, inverse length scale, variance, and truncation of the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub alpha: f64,
    pub tau: f64,
    pub sigma2: f64,
    pub n_kl: usize,
}

impl PriorSpec {
    pub fn new(alpha: f64, tau: f64, sigma2: f64, n_kl: usize) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prior regularity must satisfy alpha > 1, got {alpha}"
            )));
        }
        if !(tau > 0.0) || !(sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prior requires tau > 0 and sigma2 > 0, got tau={tau}, sigma2={sigma2}"
            )));
        }
        if n_kl == 0 {
            return Err(Error::InvalidParameter(
                "prior truncation must keep at least one mode".to_string(),
            ));
        }
        Ok(PriorSpec {
            alpha,
            tau,
            sigma2,
            n_kl,
        })
    }

    /// `varsigma = sigma^2 4 pi Gamma(alpha) / Gamma(alpha - 1)`.
    pub fn scaling_constant(&self) -> f64 {
        self.sigma2 * 4.0 * core::f64::consts::PI * gamma(self.alpha) / gamma(self.alpha - 1.0)
    }
}

/// Mass-orthonormal Neumann-Laplacian eigenpairs kept for the KL expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBasis {
    eigenvalues: Vec<f64>,
    /// Column-major: entry `p` of eigenvector `j` at `vectors[j * n_nodes + p]`.
    vectors: Vec<f64>,
    n_nodes: usize,
}

impl KlBasis {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n_nodes..(j + 1) * self.n_nodes]
    }

    /// Nodal field `sum_j scaled[j] v_j`.
    pub fn synthesize(&self, scaled: &[f64]) -> Result<Vec<f64>> {
        if scaled.len() > self.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a basis with {} modes",
                scaled.len(),
                self.n_modes()
            )));
        }
        let mut out = vec![0.0; self.n_nodes];
        for (j, &c) in scaled.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.vector(j).iter()) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// Writes the cache format `klb v1 n_kl n_nodes`, eigenvalue lines, then
    /// one whitespace-separated line per eigenvector.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "klb v1 {} {}", self.n_modes(), self.n_nodes)?;
        for lam in &self.eigenvalues {
            writeln!(w, "{lam}")?;
        }
        for j in 0..self.n_modes() {
            let row: Vec<String> = self.vector(j).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn write_file<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut f)
    }

    pub fn read_text<R: BufRead>(r: R, path_label: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, detail: String| Error::FileFormat {
            path: path_label.to_string(),
            line: line + 1,
            detail,
        };
        let (ln, header) = lines
            .next()
            .ok_or_else(|| bad(0, "empty file".into()))
            .and_then(|(i, l)| Ok((i, l?)))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "klb" || parts[1] != "v1" {
            return Err(bad(ln, "expected header `klb v1 n_kl n_nodes`".into()));
        }
        let n_kl: usize = parts[2].parse().map_err(|_| bad(ln, "bad mode count".into()))?;
        let n_nodes: usize = parts[3].parse().map_err(|_| bad(ln, "bad node count".into()))?;
        let mut eigenvalues = Vec::with_capacity(n_kl);
        for _ in 0..n_kl {
            let (i, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of eigenvalue table".into()))?;
            let line = line?;
            eigenvalues.push(
                line.trim()
                    .parse()
                    .map_err(|_| bad(i, "bad eigenvalue".into()))?,
            );
        }
        let mut vectors = Vec::with_capacity(n_kl * n_nodes);
        for _ in 0..n_kl {
            let (i, line) = lines
                .next()
                .ok_or_else(|| bad(0, "unexpected end of eigenvector table".into()))?;
            let line = line?;
            let before = vectors.len();
            for tok in line.split_whitespace() {
                vectors.push(tok.parse().map_err(|_| bad(i, "bad vector entry".into()))?);
            }
            if vectors.len() - before != n_nodes {
                return Err(bad(i, format!("expected {n_nodes} entries per eigenvector")));
            }
        }
        Ok(KlBasis {
            eigenvalues,
            vectors,
            n_nodes,
        })
    }

    pub fn read_file<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let label = path.as_ref().display().to_string();
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        KlBasis::read_text(f, &label)
    }
}

/// Computes the smallest `n_kl` generalized eigenpairs of
/// `K v = lambda M v` (no boundary constraint: natural Neumann), with
/// eigenvectors normalized so `v_i^T M v_j = delta_ij`.
pub fn build_kl_basis(mesh: &Mesh, n_kl: usize) -> Result<KlBasis> {
    let n = mesh.num_nodes();
    if n_kl > n {
        return Err(Error::InvalidParameter(format!(
            "requested {n_kl} KL modes but the mesh has only {n} nodes"
        )));
    }
    let stiffness = assemble_stiffness(mesh)?;
    let mass = assemble_weighted_mass(mesh, &vec![1.0; mesh.num_elements()])?;
    let kd = stiffness.to_dense();
    let md = mass.to_dense();
    let chol = nalgebra::Cholesky::new(md)
        .ok_or_else(|| Error::Eigen("mass matrix is not positive definite".to_string()))?;
    let l = chol.l();
    // B = L^{-1} K L^{-T}, computed via two triangular solves
    let y = l
        .solve_lower_triangular(&kd)
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".to_string()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".to_string()))?;
    let b = (&z + z.transpose()) * 0.5;
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(n_kl);
    let mut vectors = Vec::with_capacity(n_kl * n);
    for &idx in order.iter().take(n_kl) {
        eigenvalues.push(eig.eigenvalues[idx]);
        let u = eig.eigenvectors.column(idx).into_owned();
        let v = lt
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::Eigen("singular Cholesky factor".to_string()))?;
        // deterministic sign: largest-magnitude entry positive
        let mut pivot = 0usize;
        let mut best = 0.0_f64;
        for (p, &x) in v.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                pivot = p;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.extend(v.iter().map(|&x| sign * x));
    }

    let basis = KlBasis {
        eigenvalues,
        vectors,
        n_nodes: n,
    };
    // residual check: || K v - lambda M v || <= 1e-8 (||K v|| + ||M v||)
    for j in 0..basis.n_modes() {
        let v = basis.vector(j);
        let kv = stiffness.matvec(v)?;
        let mv = mass.matvec(v)?;
        let lam = basis.eigenvalues[j];
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let resid: f64 = kv
            .iter()
            .zip(mv.iter())
            .map(|(a, b)| (a - lam * b) * (a - lam * b))
            .sum::<f64>()
            .sqrt();
        let scale = norm(&kv) + norm(&mv);
        if resid > 1e-8 * scale {
            return Err(Error::Eigen(format!(
                "eigenpair {j} residual {resid:.3e} exceeds 1e-8 * {scale:.3e}"
            )));
        }
    }
    Ok(basis)
}

/// KL weights `sqrt(varsigma) tau^{alpha-1} (tau^2 + lambda)^{-alpha/2}`.
pub fn kl_weights(spec: &PriorSpec, eigenvalues: &[f64]) -> Vec<f64> {
    let root_varsigma = spec.scaling_constant().sqrt();
    eigenvalues
        .iter()
        .map(|&lam| {
            root_varsigma
                * spec.tau.powf(spec.alpha - 1.0)
                * (spec.tau * spec.tau + lam.max(0.0)).powf(-0.5 * spec.alpha)
        })
        .collect()
}

/// Draws one prior sample `phi = sum_j w_j xi_j v_j` with iid standard
/// normal coefficients; returns the nodal field and the coefficient vector.
pub fn sample_prior<R: Rng + ?Sized>(
    basis: &KlBasis,
    spec: &PriorSpec,
    rng: &mut R,
) -> Result<(LevelSetField, Vec<f64>)> {
    if spec.n_kl > basis.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "prior wants {} modes, basis holds {}",
            spec.n_kl,
            basis.n_modes()
        )));
    }
    let xi: Vec<f64> = (0..spec.n_kl).map(|_| rng.sample(StandardNormal)).collect();
    let field = synthesize_field(basis, spec, &xi)?;
    Ok((field, xi))
}

/// Synthesizes the nodal level-set field for a given coefficient vector.
pub fn synthesize_field(basis: &KlBasis, spec: &PriorSpec, xi: &[f64]) -> Result<LevelSetField> {
    if xi.len() > basis.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis with {} modes",
            xi.len(),
            basis.n_modes()
        )));
    }
    let weights = kl_weights(spec, &basis.eigenvalues()[..xi.len()]);
    let scaled: Vec<f64> = weights.iter().zip(xi.iter()).map(|(w, x)| w * x).collect();
    let values = basis.synthesize(&scaled)?;
    let mut field = LevelSetField::new(values)?;
    field.coefficients = Some(xi.to_vec());
    Ok(field)
}

/// Stationary Whittle-Matern covariance
/// `sigma^2 2^{2-alpha}/Gamma(alpha-1) (|x-y|/l)^{alpha-1} K_{alpha-1}(|x-y|/l)`
/// with `l = 1/tau`; equals `sigma^2` at coincident points.
pub fn matern_covariance(x: [f64; 2], y: [f64; 2], spec: &PriorSpec) -> Result<f64> {
    let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
    if dist == 0.0 {
        return Ok(spec.sigma2);
    }
    let z = dist * spec.tau;
    let nu = spec.alpha - 1.0;
    let k = bessel_k(nu, z)?;
    Ok(spec.sigma2 * (2.0_f64).powf(2.0 - spec.alpha) / gamma(nu) * z.powf(nu) * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_validation() {
        assert!(PriorSpec::new(1.0, 10.0, 1.0, 10).is_err());
        assert!(PriorSpec::new(3.0, 0.0, 1.0, 10).is_err());
        assert!(PriorSpec::new(3.0, 10.0, -1.0, 10).is_err());
        assert!(PriorSpec::new(3.0, 10.0, 1.0, 0).is_err());
        assert!(PriorSpec::new(3.0, 10.0, 1.0, 10).is_ok());
    }

    #[test]
    fn scaling_constant_matches_gamma_formula() {
        let spec = PriorSpec::new(3.0, 10.0, 1.0, 10).unwrap();
        assert_relative_eq!(
            spec.scaling_constant(),
            8.0 * core::f64::consts::PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn weight_at_zero_eigenvalue_frozen_value() {
        // alpha=3, tau=10, sigma2=1, lambda=0 -> sqrt(8 pi)/10
        let spec = PriorSpec::new(3.0, 10.0, 1.0, 1).unwrap();
        let w = kl_weights(&spec, &[0.0]);
        assert_relative_eq!(w[0], 0.501_325_654_926_200_1, max_relative = 1e-12);
        // algebraic simplification sqrt(varsigma)/tau at lambda = 0
        for alpha in [1.5, 2.0, 4.0] {
            let s = PriorSpec::new(alpha, 7.0, 2.0, 1).unwrap();
            let w = kl_weights(&s, &[0.0]);
            assert_relative_eq!(w[0], s.scaling_constant().sqrt() / 7.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn weights_positive_and_nonincreasing() {
        let spec = PriorSpec::new(2.5, 5.0, 1.0, 4).unwrap();
        let w = kl_weights(&spec, &[0.0, 1.0, 10.0, 1e6]);
        assert!(w.iter().all(|&x| x > 0.0));
        for pair in w.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn tau_doubling_limit_for_large_eigenvalues() {
        let lam = 1e6;
        for alpha in [2.0, 3.0, 4.0] {
            let s1 = PriorSpec::new(alpha, 10.0, 1.0, 1).unwrap();
            let s2 = PriorSpec::new(alpha, 20.0, 1.0, 1).unwrap();
            let ratio = kl_weights(&s2, &[lam])[0] / kl_weights(&s1, &[lam])[0];
            let expect = 2.0_f64.powf(alpha - 1.0);
            assert!(
                (ratio / expect - 1.0).abs() < 0.01,
                "alpha={alpha}: ratio {ratio} vs {expect}"
            );
        }
    }

    #[test]
    fn basis_first_pair_is_neumann_kernel() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let basis = build_kl_basis(&mesh, 8).unwrap();
        assert!(basis.eigenvalues()[0].abs() < 1e-8);
        let v0 = basis.vector(0);
        let mean = v0.iter().sum::<f64>() / v0.len() as f64;
        let spread = v0
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            .sqrt();
        assert!(
            spread < 1e-6 * mean.abs() * (v0.len() as f64).sqrt(),
            "first eigenvector must be constant, spread {spread}"
        );
        for w in basis.eigenvalues().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn first_nonzero_eigenvalue_matches_bessel_root() {
        // (j'_{1,1})^2 = 3.3899577166718887, double eigenvalue
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let basis = build_kl_basis(&mesh, 3).unwrap();
        let expect = 3.389_957_716_671_888_7;
        for j in [1, 2] {
            let rel = (basis.eigenvalues()[j] - expect).abs() / expect;
            assert!(rel < 0.02, "eigenvalue {j} off by {rel}");
        }
    }

    #[test]
    fn basis_is_mass_orthonormal() {
        let mesh = generate_disk_mesh(1.0, 0.25).unwrap();
        let basis = build_kl_basis(&mesh, 6).unwrap();
        let mass =
            assemble_weighted_mass(&mesh, &vec![1.0; mesh.num_elements()]).unwrap();
        for i in 0..6 {
            let mvi = mass.matvec(basis.vector(i)).unwrap();
            for j in 0..6 {
                let dot: f64 = basis.vector(j).iter().zip(mvi.iter()).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - expect).abs() < 1e-8,
                    "v_{j}^T M v_{i} = {dot}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn eigen_residuals_tight_for_nondegenerate_pairs() {
        let mesh = generate_disk_mesh(1.0, 0.2).unwrap();
        let basis = build_kl_basis(&mesh, 10).unwrap();
        let stiffness = assemble_stiffness(&mesh).unwrap();
        let mass = assemble_weighted_mass(&mesh, &vec![1.0; mesh.num_elements()]).unwrap();
        for j in 0..10 {
            let lam = basis.eigenvalues()[j];
            if lam < 1.0 {
                continue; // kernel mode handled by the relaxed check in the builder
            }
            let v = basis.vector(j);
            let kv = stiffness.matvec(v).unwrap();
            let mv = mass.matvec(v).unwrap();
            let resid: f64 = kv
                .iter()
                .zip(mv.iter())
                .map(|(a, b)| (a - lam * b) * (a - lam * b))
                .sum::<f64>()
                .sqrt();
            let kn: f64 = kv.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(resid <= 1e-8 * kn, "pair {j}: residual {resid} vs 1e-8*{kn}");
        }
    }

    #[test]
    fn requesting_more_modes_than_nodes_fails() {
        let mesh = generate_disk_mesh(1.0, 0.4).unwrap();
        assert!(matches!(
            build_kl_basis(&mesh, mesh.num_nodes() + 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mesh = generate_disk_mesh(1.0, 0.25).unwrap();
        let basis = build_kl_basis(&mesh, 12).unwrap();
        let spec = PriorSpec::new(3.0, 10.0, 1.0, 12).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let (f1, x1) = sample_prior(&basis, &spec, &mut r1).unwrap();
        let (f2, x2) = sample_prior(&basis, &spec, &mut r2).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(f1.values, f2.values);
        assert_eq!(f1.coefficients.as_deref(), Some(x1.as_slice()));
    }

    #[test]
    fn synthesis_is_linear_in_coefficients() {
        let mesh = generate_disk_mesh(1.0, 0.3).unwrap();
        let basis = build_kl_basis(&mesh, 5).unwrap();
        let spec = PriorSpec::new(2.0, 5.0, 1.0, 5).unwrap();
        let a = synthesize_field(&basis, &spec, &[1.0, 0.0, 2.0, 0.0, -1.0]).unwrap();
        let b = synthesize_field(&basis, &spec, &[0.5, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let sum = synthesize_field(&basis, &spec, &[1.5, 1.0, 2.0, 0.0, -1.0]).unwrap();
        for p in 0..mesh.num_nodes() {
            assert_relative_eq!(a.values[p] + b.values[p], sum.values[p], epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_decay_slope_matches_regularity() {
        let mesh = generate_disk_mesh(1.0, 0.1).unwrap();
        let basis = build_kl_basis(&mesh, 300).unwrap();
        let spec = PriorSpec::new(3.0, 10.0, 1.0, 300).unwrap();
        let w = kl_weights(&spec, basis.eigenvalues());
        let (j1, j2) = (200, 299);
        let slope = ((w[j2] * w[j2]).ln() - (w[j1] * w[j1]).ln())
            / (basis.eigenvalues()[j2].ln() - basis.eigenvalues()[j1].ln());
        assert!(
            (slope - (-3.0)).abs() / 3.0 < 0.15,
            "log-log slope {slope} vs -alpha = -3"
        );
    }

    #[test]
    fn matern_at_zero_distance_is_variance() {
        let spec = PriorSpec::new(2.7, 8.0, 1.7, 1).unwrap();
        assert_eq!(matern_covariance([0.3, 0.1], [0.3, 0.1], &spec).unwrap(), 1.7);
    }

    #[test]
    fn matern_strictly_decreasing_in_distance() {
        let spec = PriorSpec::new(3.0, 10.0, 1.0, 1).unwrap();
        let mut prev = matern_covariance([0.0, 0.0], [0.0, 0.0], &spec).unwrap();
        for i in 1..=100 {
            let d = 0.01 * i as f64;
            let c = matern_covariance([0.0, 0.0], [d, 0.0], &spec).unwrap();
            assert!(c < prev, "covariance must decrease at distance {d}");
            prev = c;
        }
    }

    #[test]
    fn matern_frozen_value_at_one_length_scale() {
        // alpha=2, sigma2=1, |x-y| = l  ->  K_1(1)
        let spec = PriorSpec::new(2.0, 4.0, 1.0, 1).unwrap();
        let c = matern_covariance([0.0, 0.0], [0.25, 0.0], &spec).unwrap();
        assert_relative_eq!(c, 0.601_907_230_197_234_57, max_relative = 1e-12);
    }

    #[test]
    fn basis_cache_round_trip_is_exact() {
        let mesh = generate_disk_mesh(1.0, 0.3).unwrap();
        let basis = build_kl_basis(&mesh, 7).unwrap();
        let mut buf = Vec::new();
        basis.write_text(&mut buf).unwrap();
        let back = KlBasis::read_text(std::io::Cursor::new(&buf), "buffer").unwrap();
        assert_eq!(back, basis);
    }
}
