//! Implementations of the five pipeline subcommands.

use crate::config::RunConfig;
use crate::manifest;
use anyhow::{anyhow, bail, Context};
use scatinv_core::forward::{forward_map, ScatterConfig, ScattererField};
use scatinv_core::inference::{
    add_noise, run_chain, write_samples, write_trace, ChainConfig, InversionContext,
};
use scatinv_core::levelset::{jaccard_index, ContrastMap, LevelSetSpec};
use scatinv_core::mesh::{boundary_trace, generate_disk_mesh, Mesh};
use scatinv_core::observation::{read_observations_file, write_observations_file};
use scatinv_core::prior::{build_kl_basis, synthesize_field, KlBasis, PriorSpec};
use scatinv_core::shapes::{rasterize_shape, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn scatter_config(cfg: &RunConfig) -> ScatterConfig {
    ScatterConfig {
        wavenumbers: cfg.scatter.wavenumbers.clone(),
        directions: ScatterConfig::equally_spaced_directions(cfg.scatter.n_directions),
        observation_angles: ScatterConfig::equally_spaced_angles(cfg.scatter.n_observations),
        n_trunc: cfg.scatter.n_trunc,
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = PathBuf::from(&cfg.run.output_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn forbid_inverse_crime(cfg: &RunConfig) -> anyhow::Result<()> {
    if (cfg.mesh.h - cfg.mesh.h_hat).abs() < 1e-15 && !cfg.run.allow_inverse_crime {
        bail!(
            "data mesh (h = {}) and inversion mesh (h_hat = {}) coincide; \
             pass --allow-inverse-crime to run anyway",
            cfg.mesh.h,
            cfg.mesh.h_hat
        );
    }
    Ok(())
}

/// Loads or rasterizes the true scatterer on the given mesh.
fn true_scatterer(cfg: &RunConfig, mesh: &Mesh) -> anyhow::Result<ScattererField> {
    let trace = boundary_trace(mesh)?;
    match cfg.run.scatterer.as_str() {
        "file" => {
            let path = cfg
                .run
                .scatterer_file
                .as_ref()
                .ok_or_else(|| anyhow!("run.scatterer_file missing"))?;
            let f = std::io::BufReader::new(
                std::fs::File::open(path).with_context(|| format!("cannot open {path}"))?,
            );
            Ok(ScattererField::read_text(f, mesh.num_elements(), path)?)
        }
        name => {
            let shape = Shape::parse(name)?;
            Ok(rasterize_shape(mesh, &trace, shape, cfg.run.contrast)?)
        }
    }
}

/// `mesh`: generate and export both meshes with a short report.
pub fn run_mesh(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    for (label, h, file) in [
        ("data", cfg.mesh.h, "mesh_data.txt"),
        ("inversion", cfg.mesh.h_hat, "mesh_inversion.txt"),
    ] {
        let mesh = generate_disk_mesh(cfg.mesh.radius, h)?;
        let trace = boundary_trace(&mesh)?;
        mesh.write_file(dir.join(file))?;
        println!(
            "{label} mesh: h = {h}, {} nodes, {} elements, {} boundary nodes, area {:.6} -> {}",
            mesh.num_nodes(),
            mesh.num_elements(),
            trace.node_indices.len(),
            mesh.total_area(),
            dir.join(file).display()
        );
    }
    manifest::write(cfg, "mesh", &dir)?;
    Ok(())
}

/// `simulate`: synthesize noisy observations of the true scatterer on the
/// fine data mesh.
pub fn run_simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    forbid_inverse_crime(cfg)?;
    let dir = out_dir(cfg)?;
    let mesh = generate_disk_mesh(cfg.mesh.radius, cfg.mesh.h)?;
    let trace = boundary_trace(&mesh)?;
    eprintln!(
        "simulate: data mesh with {} nodes / {} elements",
        mesh.num_nodes(),
        mesh.num_elements()
    );
    let truth = true_scatterer(cfg, &mesh)?;
    if !truth.is_admissible(&mesh, &trace) {
        bail!("true scatterer is not admissible on the data mesh");
    }
    let scatter = scatter_config(cfg);
    let clean = forward_map(&mesh, &trace, &truth, &scatter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.chain.seed);
    let data = add_noise(&clean, cfg.run.gamma, &mut rng)?;
    write_observations_file(&scatter, &data, cfg.chain.seed, dir.join("observations.txt"))?;
    mesh.write_file(dir.join("mesh_data.txt"))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("truth_scatterer.txt"))?);
    truth.write_text(&mut f)?;
    drop(f);
    manifest::write(cfg, "simulate", &dir)?;
    println!(
        "simulate: wrote {} observations (gamma = {}) to {}",
        data.values.len(),
        cfg.run.gamma,
        dir.join("observations.txt").display()
    );
    Ok(())
}

/// Reuses a cached KL basis when its dimensions match, otherwise solves the
/// eigenproblem and caches it.
fn load_or_build_basis(mesh: &Mesh, n_kl: usize, path: &Path) -> anyhow::Result<KlBasis> {
    if path.exists() {
        match KlBasis::read_file(path) {
            Ok(basis) if basis.n_nodes() == mesh.num_nodes() && basis.n_modes() >= n_kl => {
                eprintln!("invert: reusing KL basis cache {}", path.display());
                return Ok(basis);
            }
            Ok(_) => eprintln!("invert: cache {} has wrong dimensions, rebuilding", path.display()),
            Err(e) => eprintln!("invert: cache {} unreadable ({e}), rebuilding", path.display()),
        }
    }
    eprintln!("invert: solving the {n_kl}-mode eigenproblem (one-time cost)...");
    let basis = build_kl_basis(mesh, n_kl)?;
    basis.write_file(path)?;
    Ok(basis)
}

/// `invert`: run the pCN chain against an observation file on the coarse
/// inversion mesh, export the chain and conditional-mean estimates.
pub fn run_invert(cfg: &RunConfig, data_file: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    forbid_inverse_crime(cfg)?;
    let dir = out_dir(cfg)?;
    let (file_scatter, mut data, _gen_seed) = read_observations_file(data_file)?;

    // the data file must agree with the configured observation geometry
    let scatter = scatter_config(cfg);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
    let geometry_ok = file_scatter.wavenumbers.len() == scatter.wavenumbers.len()
        && file_scatter.directions.len() == scatter.directions.len()
        && file_scatter.observation_angles.len() == scatter.observation_angles.len()
        && file_scatter
            .wavenumbers
            .iter()
            .zip(scatter.wavenumbers.iter())
            .all(|(a, b)| close(*a, *b))
        && file_scatter
            .directions
            .iter()
            .zip(scatter.directions.iter())
            .all(|(a, b)| close(a[0], b[0]) && close(a[1], b[1]))
        && file_scatter
            .observation_angles
            .iter()
            .zip(scatter.observation_angles.iter())
            .all(|(a, b)| close(*a, *b));
    if !geometry_ok {
        bail!(
            "observation file {} disagrees with the configured (M, J, N) geometry",
            data_file.display()
        );
    }

    let mesh = generate_disk_mesh(cfg.mesh.radius, cfg.mesh.h_hat)?;
    let trace = boundary_trace(&mesh)?;
    eprintln!(
        "invert: inversion mesh with {} nodes / {} elements",
        mesh.num_nodes(),
        mesh.num_elements()
    );
    let basis_path = dir.join(format!(
        "kl_basis_R{}_h{}_n{}.klb",
        cfg.mesh.radius, cfg.mesh.h_hat, cfg.prior.n_kl
    ));
    let basis = load_or_build_basis(&mesh, cfg.prior.n_kl, &basis_path)?;
    let prior = PriorSpec::new(cfg.prior.alpha, cfg.prior.tau, cfg.prior.sigma2, cfg.prior.n_kl)?;
    let map = if cfg.run.direct_map {
        ContrastMap::Direct { floor: -0.99 }
    } else {
        ContrastMap::LevelSet(LevelSetSpec::binary(cfg.run.contrast)?)
    };
    let ctx = InversionContext::new(&mesh, &trace, &basis, &prior, map, scatter)?;

    data.gamma = cfg.likelihood_gamma(data.gamma);
    let chain_cfg = ChainConfig {
        beta: cfg.chain.beta,
        n_steps: cfg.chain.n_steps,
        cm_window: cfg.chain.cm_window,
        seed: cfg.chain.seed,
        thinning: cfg.chain.thinning,
        checkpoint_path: Some(dir.join("chain_checkpoint.txt")),
        checkpoint_every: 200,
        log_every: 200,
    };
    eprintln!(
        "invert: running {} pCN steps (beta = {}, seed = {})",
        chain_cfg.n_steps, chain_cfg.beta, chain_cfg.seed
    );
    let result = run_chain(&chain_cfg, &data, &ctx)?;

    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("chain_trace.txt"))?);
    write_trace(&result.raw.trace, &mut f)?;
    drop(f);
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("chain_samples.txt"))?);
    write_samples(&result.raw.samples, chain_cfg.thinning, &mut f)?;
    drop(f);
    if let Some(field) = &result.cm_field {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("cm_levelset.txt"))?);
        field.write_table(&mesh, &mut f)?;
    }
    if let Some(q) = &result.cm_scatterer {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("cm_scatterer.txt"))?);
        q.write_text(&mut f)?;
    }

    // metrics: deterministic content only, so a fixed seed reproduces bytes
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if xs.is_empty() {
            f64::NAN
        } else {
            xs[xs.len() / 2]
        }
    };
    let trace_phis: Vec<f64> = result.raw.trace.iter().map(|e| e.potential).collect();
    let mut head: Vec<f64> = trace_phis.iter().take(50).copied().collect();
    let tail_n = cfg.chain.cm_window.min(trace_phis.len());
    let mut tail: Vec<f64> = trace_phis[trace_phis.len().saturating_sub(tail_n)..].to_vec();
    let jaccard = match (cfg.run.scatterer.as_str(), &result.cm_scatterer) {
        ("file", _) | (_, None) => None,
        (name, Some(cm)) => {
            let shape = Shape::parse(name)?;
            let truth = rasterize_shape(&mesh, &trace, shape, cfg.run.contrast)?;
            Some(jaccard_index(cm, &truth, &mesh)?)
        }
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.txt"))?);
    writeln!(f, "acceptance_rate {}", result.raw.acceptance_rate)?;
    writeln!(f, "initial_potential {}", trace_phis.first().copied().unwrap_or(f64::NAN))?;
    writeln!(f, "final_potential {}", result.raw.state.potential)?;
    writeln!(f, "first50_median_potential {}", median(&mut head))?;
    writeln!(f, "trailing_median_potential {}", median(&mut tail))?;
    if let Some(j) = jaccard {
        writeln!(f, "jaccard_cm_vs_truth {j}")?;
    }
    drop(f);
    manifest::write(cfg, "invert", &dir)?;
    println!(
        "invert: acceptance {:.3}, final potential {:.3e}{}",
        result.raw.acceptance_rate,
        result.raw.state.potential,
        jaccard
            .map(|j| format!(", jaccard {j:.3}"))
            .unwrap_or_default()
    );
    Ok(())
}

/// Output table format for `export`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Table,
}

impl ExportFormat {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "table" => Ok(ExportFormat::Table),
            other => bail!("unknown export format `{other}` (expected csv or table)"),
        }
    }

    fn sep(&self) -> &'static str {
        match self {
            ExportFormat::Csv => ",",
            ExportFormat::Table => " ",
        }
    }
}

/// `export`: convert result files into plotting tables.
pub fn run_export(
    mesh_file: &Path,
    scatterer_file: Option<&Path>,
    levelset_file: Option<&Path>,
    format: ExportFormat,
    output: &Path,
) -> anyhow::Result<()> {
    let mesh = Mesh::read_file(mesh_file)?;
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(output)
            .with_context(|| format!("cannot create {}", output.display()))?,
    );
    let sep = format.sep();
    match (scatterer_file, levelset_file) {
        (Some(path), None) => {
            let f = std::io::BufReader::new(
                std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
            );
            let q = ScattererField::read_text(f, mesh.num_elements(), &path.display().to_string())?;
            for e in 0..mesh.num_elements() {
                let c = mesh.element_centroid(e);
                writeln!(out, "{}{sep}{}{sep}{}", c[0], c[1], q.values[e])?;
            }
        }
        (None, Some(path)) => {
            // per-node table: value column re-emitted against mesh nodes
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot open {}", path.display()))?;
            let mut values = Vec::with_capacity(mesh.num_nodes());
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let v: f64 = line
                    .split_whitespace()
                    .nth(2)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| anyhow!("{}:{}: expected `x y value`", path.display(), i + 1))?;
                values.push(v);
            }
            if values.len() != mesh.num_nodes() {
                bail!(
                    "level-set table has {} rows for a mesh with {} nodes",
                    values.len(),
                    mesh.num_nodes()
                );
            }
            for (p, v) in mesh.nodes().iter().zip(values.iter()) {
                writeln!(out, "{}{sep}{}{sep}{}", p[0], p[1], v)?;
            }
        }
        _ => bail!("export needs exactly one of --scatterer or --levelset"),
    }
    Ok(())
}

/// `prior-sample`: draw and export Whittle-Matern samples for the requested
/// `(alpha, tau)` pairs on the inversion mesh.
pub fn run_prior_sample(cfg: &RunConfig, pairs: &[(f64, f64)]) -> anyhow::Result<()> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let mesh = generate_disk_mesh(cfg.mesh.radius, cfg.mesh.h_hat)?;
    let basis_path = dir.join(format!(
        "kl_basis_R{}_h{}_n{}.klb",
        cfg.mesh.radius, cfg.mesh.h_hat, cfg.prior.n_kl
    ));
    let basis = load_or_build_basis(&mesh, cfg.prior.n_kl, &basis_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.chain.seed);
    for &(alpha, tau) in pairs {
        let prior = PriorSpec::new(alpha, tau, cfg.prior.sigma2, cfg.prior.n_kl)?;
        let (field, _) = scatinv_core::prior::sample_prior(&basis, &prior, &mut rng)?;
        let name = format!("prior_sample_alpha{alpha}_tau{tau:.4}.txt");
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
        field.write_table(&mesh, &mut f)?;
        println!("prior-sample: wrote {}", dir.join(&name).display());
    }
    manifest::write(cfg, "prior-sample", &dir)?;
    Ok(())
}

/// Synthesizes a deterministic sample for tests: the coefficient vector is
/// fixed instead of drawn.
pub fn synthesize_sample(
    cfg: &RunConfig,
    basis: &KlBasis,
    coeffs: &[f64],
) -> anyhow::Result<Vec<f64>> {
    let prior = PriorSpec::new(cfg.prior.alpha, cfg.prior.tau, cfg.prior.sigma2, cfg.prior.n_kl)?;
    Ok(synthesize_field(basis, &prior, coeffs)?.values)
}
