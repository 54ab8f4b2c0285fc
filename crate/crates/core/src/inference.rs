//! Data-misfit potential and the preconditioned Crank-Nicolson sampler over
//! KL coefficient space.
//!
//! The chain state is the coefficient vector `xi` (standard normal under the
//! prior), so the pCN proposal `sqrt(1-beta^2) xi + beta eta` preserves the
//! prior exactly. The sampler core is generic over the potential so it can be
//! checked against closed-form Gaussian posteriors without any PDE solves.

use crate::error::{Error, Result};
use crate::forward::{forward_map_with, ScatterConfig, ScattererField};
use crate::fem::{assemble_stiffness, SparseSymMatrix};
use crate::levelset::{ContrastMap, LevelSetField};
use crate::mesh::{BoundaryTrace, Mesh};
use crate::observation::ObservationData;
use crate::prior::{kl_weights, sample_prior, KlBasis, PriorSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::PathBuf;

/// Chain controls: proposal stepsize, length, trailing window for the
/// conditional mean, seed, thinning, and optional checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub beta: f64,
    pub n_steps: usize,
    pub cm_window: usize,
    pub seed: u64,
    pub thinning: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Progress line to stderr every this many steps (0 = silent).
    pub log_every: usize,
}

impl ChainConfig {
    pub fn new(beta: f64, n_steps: usize, cm_window: usize, seed: u64) -> Result<Self> {
        let cfg = ChainConfig {
            beta,
            n_steps,
            cm_window,
            seed,
            thinning: 1,
            checkpoint_path: None,
            checkpoint_every: 500,
            log_every: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pCN stepsize must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.cm_window > self.n_steps {
            return Err(Error::InvalidParameter(format!(
                "cm_window {} exceeds the chain length {}",
                self.cm_window, self.n_steps
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter(
                "thinning must be at least 1".to_string(),
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter(
                "checkpoint interval must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Current position of the Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub coeffs: Vec<f64>,
    pub potential: f64,
    pub step: usize,
    pub accepted: usize,
}

/// One recorded step of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub step: usize,
    pub potential: f64,
    pub accepted: bool,
}

/// Everything needed to evaluate the potential of a coefficient vector:
/// inversion mesh, KL basis, prior, shape map, and observation geometry.
pub struct InversionContext<'a> {
    pub mesh: &'a Mesh,
    pub trace: &'a BoundaryTrace,
    pub basis: &'a KlBasis,
    pub prior: &'a PriorSpec,
    pub map: ContrastMap,
    pub scatter: ScatterConfig,
    stiffness: SparseSymMatrix,
    weights: Vec<f64>,
}

impl<'a> InversionContext<'a> {
    pub fn new(
        mesh: &'a Mesh,
        trace: &'a BoundaryTrace,
        basis: &'a KlBasis,
        prior: &'a PriorSpec,
        map: ContrastMap,
        scatter: ScatterConfig,
    ) -> Result<Self> {
        scatter.validate()?;
        if basis.n_nodes() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "KL basis built for {} nodes, mesh has {}",
                basis.n_nodes(),
                mesh.num_nodes()
            )));
        }
        if prior.n_kl > basis.n_modes() {
            return Err(Error::DimensionMismatch(format!(
                "prior truncation {} exceeds the {} stored KL modes",
                prior.n_kl,
                basis.n_modes()
            )));
        }
        let stiffness = assemble_stiffness(mesh)?;
        let weights = kl_weights(prior, &basis.eigenvalues()[..prior.n_kl]);
        Ok(InversionContext {
            mesh,
            trace,
            basis,
            prior,
            map,
            scatter,
            stiffness,
            weights,
        })
    }

    pub fn n_coeffs(&self) -> usize {
        self.prior.n_kl
    }

    /// Nodal level-set field for a coefficient vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<LevelSetField> {
        if coeffs.len() != self.prior.n_kl {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector length {} vs prior truncation {}",
                coeffs.len(),
                self.prior.n_kl
            )));
        }
        let scaled: Vec<f64> = self
            .weights
            .iter()
            .zip(coeffs.iter())
            .map(|(w, x)| w * x)
            .collect();
        let mut field = LevelSetField::new(self.basis.synthesize(&scaled)?)?;
        field.coefficients = Some(coeffs.to_vec());
        Ok(field)
    }

    pub fn scatterer(&self, coeffs: &[f64]) -> Result<ScattererField> {
        let field = self.synthesize(coeffs)?;
        self.map.apply(&field, self.mesh)
    }

    /// Stacked forward observations for a coefficient vector.
    pub fn forward(&self, coeffs: &[f64]) -> Result<Vec<Complex64>> {
        let q = self.scatterer(coeffs)?;
        forward_map_with(self.mesh, self.trace, &self.stiffness, &q, &self.scatter)
    }

    pub fn potential(&self, coeffs: &[f64], data: &ObservationData) -> Result<f64> {
        let g = self.forward(coeffs)?;
        misfit_potential(&g, data)
    }
}

/// `Phi = (1 / (2 gamma^2)) sum |g_i - y_i|^2` over complex entries.
pub fn misfit_potential(g: &[Complex64], data: &ObservationData) -> Result<f64> {
    if g.len() != data.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "forward vector length {} vs data length {}",
            g.len(),
            data.values.len()
        )));
    }
    if !(data.gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "potential needs a positive noise level".to_string(),
        ));
    }
    let ss: f64 = g
        .iter()
        .zip(data.values.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let phi = ss / (2.0 * data.gamma * data.gamma);
    if !phi.is_finite() {
        return Err(Error::Solver(format!("potential overflowed: {phi}")));
    }
    Ok(phi)
}

/// Spec-named convenience: potential of a coefficient vector.
pub fn potential(coeffs: &[f64], data: &ObservationData, ctx: &InversionContext) -> Result<f64> {
    ctx.potential(coeffs, data)
}

/// Deterministic inner step: applies the pCN update given the proposal noise
/// and the uniform acceptance draw.
fn pcn_step_inner<F>(
    state: &ChainState,
    noise: &[f64],
    uniform: f64,
    beta: f64,
    potential_fn: &F,
) -> Result<ChainState>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let damp = (1.0 - beta * beta).sqrt();
    let proposal: Vec<f64> = state
        .coeffs
        .iter()
        .zip(noise.iter())
        .map(|(x, n)| damp * x + beta * n)
        .collect();
    let phi_prop = potential_fn(&proposal)?;
    let acceptance = (state.potential - phi_prop).exp().min(1.0);
    if uniform <= acceptance {
        Ok(ChainState {
            coeffs: proposal,
            potential: phi_prop,
            step: state.step + 1,
            accepted: state.accepted + 1,
        })
    } else {
        Ok(ChainState {
            coeffs: state.coeffs.clone(),
            potential: state.potential,
            step: state.step + 1,
            accepted: state.accepted,
        })
    }
}

/// One pCN transition drawing fresh proposal noise and the acceptance
/// uniform from `rng`.
pub fn pcn_step<R, F>(state: &ChainState, rng: &mut R, beta: f64, potential_fn: &F) -> Result<ChainState>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> Result<f64>,
{
    let noise: Vec<f64> = (0..state.coeffs.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let uniform: f64 = rng.gen();
    pcn_step_inner(state, &noise, uniform, beta, potential_fn)
}

/// Raw sampler output before any shape synthesis.
#[derive(Debug, Clone)]
pub struct RawChainResult {
    pub trace: Vec<TraceEntry>,
    /// Thinned coefficient samples (every `thinning`-th step).
    pub samples: Vec<Vec<f64>>,
    /// Unthinned trailing window of `cm_window` coefficient vectors.
    pub tail: Vec<Vec<f64>>,
    pub state: ChainState,
    pub acceptance_rate: f64,
    pub thinning: usize,
}

/// Full inversion output: raw chain plus the conditional-mean field and its
/// thresholded scatterer (absent when `cm_window` is zero).
pub struct ChainResult {
    pub raw: RawChainResult,
    pub cm_field: Option<LevelSetField>,
    pub cm_scatterer: Option<ScattererField>,
}

/// Runs the pCN chain from `init` against an arbitrary potential.
pub fn run_chain_with<F>(
    cfg: &ChainConfig,
    init: Vec<f64>,
    rng: &mut ChaCha8Rng,
    potential_fn: F,
) -> Result<RawChainResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let phi0 = potential_fn(&init)?;
    let state = ChainState {
        coeffs: init,
        potential: phi0,
        step: 0,
        accepted: 0,
    };
    advance_chain(cfg, state, rng, potential_fn)
}

/// Continues a chain from an existing state until `cfg.n_steps` total steps.
fn advance_chain<F>(
    cfg: &ChainConfig,
    mut state: ChainState,
    rng: &mut ChaCha8Rng,
    potential_fn: F,
) -> Result<RawChainResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let remaining = cfg.n_steps.saturating_sub(state.step);
    let mut trace = Vec::with_capacity(remaining);
    let mut samples = Vec::new();
    let mut tail: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.cm_window + 1);
    while state.step < cfg.n_steps {
        let accepted_before = state.accepted;
        state = pcn_step(&state, rng, cfg.beta, &potential_fn)?;
        trace.push(TraceEntry {
            step: state.step,
            potential: state.potential,
            accepted: state.accepted > accepted_before,
        });
        if state.step % cfg.thinning == 0 {
            samples.push(state.coeffs.clone());
        }
        if cfg.cm_window > 0 {
            tail.push_back(state.coeffs.clone());
            if tail.len() > cfg.cm_window {
                tail.pop_front();
            }
        }
        if let Some(path) = &cfg.checkpoint_path {
            if state.step % cfg.checkpoint_every == 0 || state.step == cfg.n_steps {
                Checkpoint::capture(cfg.seed, &state, rng).write_file(path)?;
            }
        }
        if cfg.log_every > 0 && state.step % cfg.log_every == 0 {
            eprintln!(
                "pcn step {}/{}: potential {:.4e}, acceptance {:.3}",
                state.step,
                cfg.n_steps,
                state.potential,
                state.accepted as f64 / state.step as f64
            );
        }
    }
    let acceptance_rate = if state.step == 0 {
        0.0
    } else {
        state.accepted as f64 / state.step as f64
    };
    Ok(RawChainResult {
        trace,
        samples,
        tail: tail.into_iter().collect(),
        state,
        acceptance_rate,
        thinning: cfg.thinning,
    })
}

/// Runs the inversion chain: initial state is a fresh prior draw from the
/// run seed, the potential is the data misfit through the forward map, and
/// the conditional mean over the trailing window is synthesized at the end.
pub fn run_chain(
    cfg: &ChainConfig,
    data: &ObservationData,
    ctx: &InversionContext,
) -> Result<ChainResult> {
    cfg.validate()?;
    if data.values.len() != ctx.scatter.data_len() {
        return Err(Error::DimensionMismatch(format!(
            "data length {} vs scatter config M*J*N = {}",
            data.values.len(),
            ctx.scatter.data_len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, init) = sample_prior(ctx.basis, ctx.prior, &mut rng)?;
    let raw = run_chain_with(cfg, init, &mut rng, |xi| ctx.potential(xi, data))?;
    finish_chain(raw, ctx)
}

/// Resumes an interrupted run bit-exactly from a checkpoint.
pub fn resume_chain(
    cfg: &ChainConfig,
    data: &ObservationData,
    ctx: &InversionContext,
    ckpt: &Checkpoint,
) -> Result<ChainResult> {
    cfg.validate()?;
    if ckpt.seed != cfg.seed {
        return Err(Error::InvalidParameter(format!(
            "checkpoint seed {} does not match chain seed {}",
            ckpt.seed, cfg.seed
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
    rng.set_word_pos(ckpt.word_pos);
    let state = ChainState {
        coeffs: ckpt.coeffs.clone(),
        potential: ckpt.potential,
        step: ckpt.step,
        accepted: ckpt.accepted,
    };
    let raw = advance_chain(cfg, state, &mut rng, |xi| ctx.potential(xi, data))?;
    finish_chain(raw, ctx)
}

fn finish_chain(raw: RawChainResult, ctx: &InversionContext) -> Result<ChainResult> {
    let (cm_field, cm_scatterer) = if raw.tail.is_empty() {
        (None, None)
    } else {
        let (field, scatterer) = conditional_mean_from(&raw, raw.tail.len(), ctx)?;
        (Some(field), Some(scatterer))
    };
    Ok(ChainResult {
        raw,
        cm_field,
        cm_scatterer,
    })
}

/// Mean of the last `window` coefficient vectors, synthesized to a nodal
/// field and thresholded to a scatterer. Prefers the unthinned tail, falling
/// back to thinned samples for longer windows.
pub fn conditional_mean_from(
    raw: &RawChainResult,
    window: usize,
    ctx: &InversionContext,
) -> Result<(LevelSetField, ScattererField)> {
    let mean = conditional_mean_coeffs(raw, window)?;
    let field = ctx.synthesize(&mean)?;
    let scatterer = ctx.map.apply(&field, ctx.mesh)?;
    Ok((field, scatterer))
}

/// Mean coefficient vector over the trailing `window` steps.
pub fn conditional_mean_coeffs(raw: &RawChainResult, window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidParameter(
            "conditional mean needs a positive window".to_string(),
        ));
    }
    let vectors: Vec<&Vec<f64>> = if window <= raw.tail.len() {
        raw.tail[raw.tail.len() - window..].iter().collect()
    } else {
        let need = window.div_ceil(raw.thinning);
        if need > raw.samples.len() {
            return Err(Error::InvalidParameter(format!(
                "window {window} exceeds the {} stored samples (thinning {})",
                raw.samples.len(),
                raw.thinning
            )));
        }
        raw.samples[raw.samples.len() - need..].iter().collect()
    };
    let n = vectors[0].len();
    let mut mean = vec![0.0; n];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= vectors.len() as f64;
    }
    Ok(mean)
}

/// Adds independent `N(0, gamma^2)` noise to the real and imaginary part of
/// every entry.
pub fn add_noise<R: Rng + ?Sized>(
    clean: &[Complex64],
    gamma: f64,
    rng: &mut R,
) -> Result<ObservationData> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise level must be finite and nonnegative, got {gamma}"
        )));
    }
    let values: Vec<Complex64> = clean
        .iter()
        .map(|v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + gamma * Complex64::new(re, im)
        })
        .collect();
    ObservationData::new(values, gamma)
}

/// Serializable snapshot sufficient to resume a chain bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub word_pos: u128,
    pub step: usize,
    pub accepted: usize,
    pub potential: f64,
    pub coeffs: Vec<f64>,
}

impl Checkpoint {
    fn capture(seed: u64, state: &ChainState, rng: &ChaCha8Rng) -> Checkpoint {
        Checkpoint {
            seed,
            word_pos: rng.get_word_pos(),
            step: state.step,
            accepted: state.accepted,
            potential: state.potential,
            coeffs: state.coeffs.clone(),
        }
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "pcn-checkpoint v1")?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "word_pos {}", self.word_pos)?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "accepted {}", self.accepted)?;
        writeln!(w, "potential {}", self.potential)?;
        let coeffs: Vec<String> = self.coeffs.iter().map(|c| format!("{c}")).collect();
        writeln!(w, "coeffs {}", coeffs.join(" "))?;
        Ok(())
    }

    pub fn write_file<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let tmp = path.as_ref().with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_text(&mut f)?;
        }
        std::fs::rename(&tmp, path.as_ref())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R, path_label: &str) -> Result<Checkpoint> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, detail: String| Error::FileFormat {
            path: path_label.to_string(),
            line: line + 1,
            detail,
        };
        let mut expect = |tag: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => {
                    if tag.is_empty() {
                        return Ok((i, l));
                    }
                    let rest = l
                        .strip_prefix(tag)
                        .map(|s| s.trim().to_string())
                        .ok_or_else(|| bad(i, format!("expected `{tag} ...`")))?;
                    Ok((i, rest))
                }
                Some((_, Err(e))) => Err(Error::Io(e)),
                None => Err(Error::FileFormat {
                    path: path_label.to_string(),
                    line: 0,
                    detail: format!("unexpected end of checkpoint, wanted {tag}"),
                }),
            }
        };
        let (i, header) = expect("")?;
        if header.trim() != "pcn-checkpoint v1" {
            return Err(bad(i, "expected header `pcn-checkpoint v1`".into()));
        }
        let (i, seed) = expect("seed")?;
        let seed: u64 = seed.parse().map_err(|_| bad(i, "bad seed".into()))?;
        let (i, wp) = expect("word_pos")?;
        let word_pos: u128 = wp.parse().map_err(|_| bad(i, "bad word_pos".into()))?;
        let (i, step) = expect("step")?;
        let step: usize = step.parse().map_err(|_| bad(i, "bad step".into()))?;
        let (i, acc) = expect("accepted")?;
        let accepted: usize = acc.parse().map_err(|_| bad(i, "bad accepted".into()))?;
        let (i, pot) = expect("potential")?;
        let potential: f64 = pot.parse().map_err(|_| bad(i, "bad potential".into()))?;
        let (i, coeffs) = expect("coeffs")?;
        let coeffs: Vec<f64> = coeffs
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(i, "bad coefficient".into()))?;
        Ok(Checkpoint {
            seed,
            word_pos,
            step,
            accepted,
            potential,
            coeffs,
        })
    }

    pub fn read_file<P: AsRef<std::path::Path>>(path: P) -> Result<Checkpoint> {
        let label = path.as_ref().display().to_string();
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Checkpoint::read_text(f, &label)
    }
}

/// Writes the trace file: `step phi_potential accepted` per line.
pub fn write_trace<W: Write>(entries: &[TraceEntry], w: &mut W) -> Result<()> {
    for e in entries {
        writeln!(w, "{} {} {}", e.step, e.potential, e.accepted as u8)?;
    }
    Ok(())
}

/// Writes the thinned sample store: `samples v1 count n_coeffs thinning`
/// then one whitespace-separated coefficient vector per line.
pub fn write_samples<W: Write>(samples: &[Vec<f64>], thinning: usize, w: &mut W) -> Result<()> {
    let n_coeffs = samples.first().map(|s| s.len()).unwrap_or(0);
    writeln!(w, "samples v1 {} {} {}", samples.len(), n_coeffs, thinning)?;
    for s in samples {
        let row: Vec<String> = s.iter().map(|c| format!("{c}")).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}
