//! Run configuration: TOML file with sections mirroring the pipeline stages,
//! overridable from command-line flags.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Radius of the artificial boundary.
    pub radius: f64,
    /// Data-mesh meshsize.
    pub h: f64,
    /// Inversion-mesh meshsize (2h avoids the inverse crime).
    pub h_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterSection {
    pub wavenumbers: Vec<f64>,
    pub n_directions: usize,
    pub n_observations: usize,
    /// DtN truncation override; omitted means the per-wavenumber default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trunc: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub alpha: f64,
    pub tau: f64,
    pub sigma2: f64,
    pub n_kl: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub beta: f64,
    pub n_steps: usize,
    pub cm_window: usize,
    pub seed: u64,
    pub thinning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// `love`, `cross`, `two_circles`, or `file`.
    pub scatterer: String,
    /// Path to an `element_index q` file when `scatterer = "file"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatterer_file: Option<String>,
    pub contrast: f64,
    pub gamma: f64,
    pub output_dir: String,
    #[serde(default)]
    pub allow_inverse_crime: bool,
    /// Replace the level-set threshold map by the clipped identity map.
    #[serde(default)]
    pub direct_map: bool,
}

/// Complete pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub scatter: ScatterSection,
    pub prior: PriorSection,
    pub chain: ChainSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Published full-scale setup: h = 2.45e-2 with 16512 data-mesh
    /// elements, six wavenumbers from 0.5 pi to 2.5 pi, five directions,
    /// noise 0.005, beta = 0.007 over 10^4 steps.
    pub fn paper_default() -> RunConfig {
        let pi = std::f64::consts::PI;
        RunConfig {
            mesh: MeshSection {
                radius: 1.0,
                h: 2.45e-2,
                h_hat: 4.9e-2,
            },
            scatter: ScatterSection {
                wavenumbers: (0..6).map(|m| (0.5 + 0.4 * m as f64) * pi).collect(),
                n_directions: 5,
                n_observations: 32,
                n_trunc: None,
            },
            prior: PriorSection {
                alpha: 3.0,
                tau: 10.0,
                sigma2: 1.0,
                n_kl: 300,
            },
            chain: ChainSection {
                beta: 0.007,
                n_steps: 10_000,
                cm_window: 2000,
                seed: 1,
                thinning: 5,
            },
            run: RunSection {
                scatterer: "love".to_string(),
                scatterer_file: None,
                contrast: 1.0,
                gamma: 0.005,
                output_dir: "out".to_string(),
                allow_inverse_crime: false,
                direct_map: false,
            },
        }
    }

    /// Desk-scale two-circles setup: both meshes doubled, three wavenumbers,
    /// 2000 steps at beta = 0.01.
    pub fn desk_two_circles() -> RunConfig {
        let pi = std::f64::consts::PI;
        let mut cfg = RunConfig::paper_default();
        cfg.mesh.h = 4.9e-2;
        cfg.mesh.h_hat = 9.8e-2;
        cfg.scatter.wavenumbers = vec![0.5 * pi, 1.5 * pi, 2.5 * pi];
        cfg.chain.beta = 0.01;
        cfg.chain.n_steps = 2000;
        cfg.chain.cm_window = 500;
        cfg.chain.thinning = 1;
        cfg.run.scatterer = "two_circles".to_string();
        cfg.run.contrast = 3.0;
        cfg
    }

    pub fn from_toml(text: &str) -> anyhow::Result<RunConfig> {
        toml::from_str(text).context("failed to parse config TOML")
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string_pretty(self).context("failed to serialize config")
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read config {}", path.as_ref().display()))?;
        RunConfig::from_toml(&text)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.mesh.radius > 0.0) {
            bail!("mesh.radius must be positive");
        }
        for (name, h) in [("mesh.h", self.mesh.h), ("mesh.h_hat", self.mesh.h_hat)] {
            if !(h > 0.0 && h < self.mesh.radius) {
                bail!("{name} must lie strictly between 0 and mesh.radius");
            }
        }
        if self.scatter.wavenumbers.is_empty()
            || self.scatter.n_directions == 0
            || self.scatter.n_observations == 0
        {
            bail!("scatter section needs at least one wavenumber, direction, and observation");
        }
        if self.scatter.wavenumbers.iter().any(|&k| !(k > 0.0)) {
            bail!("wavenumbers must be positive");
        }
        if !(self.prior.alpha > 1.0) {
            bail!("prior.alpha must exceed 1");
        }
        if !(self.prior.tau > 0.0) || !(self.prior.sigma2 > 0.0) || self.prior.n_kl == 0 {
            bail!("prior needs tau > 0, sigma2 > 0, and n_kl >= 1");
        }
        if !(self.chain.beta > 0.0 && self.chain.beta <= 1.0) {
            bail!("chain.beta must lie in (0, 1]");
        }
        if self.chain.cm_window > self.chain.n_steps {
            bail!("chain.cm_window cannot exceed chain.n_steps");
        }
        if self.chain.thinning == 0 {
            bail!("chain.thinning must be at least 1");
        }
        match self.run.scatterer.as_str() {
            "love" | "cross" | "two_circles" => {}
            "file" => {
                if self.run.scatterer_file.is_none() {
                    bail!("run.scatterer = \"file\" requires run.scatterer_file");
                }
            }
            other => bail!("unknown run.scatterer `{other}`"),
        }
        if !(self.run.contrast > 0.0) {
            bail!("run.contrast must be positive");
        }
        if !(self.run.gamma >= 0.0) {
            bail!("run.gamma must be nonnegative");
        }
        Ok(())
    }

    /// Effective noise level for the potential: the likelihood needs a
    /// positive gamma even when the data file was generated noiselessly.
    pub fn likelihood_gamma(&self, file_gamma: f64) -> f64 {
        if file_gamma > 0.0 {
            file_gamma
        } else {
            self.run.gamma.max(0.005)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_paper_default() {
        let cfg = RunConfig::paper_default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn toml_round_trip_desk_config() {
        let cfg = RunConfig::desk_two_circles();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_sections() {
        let mut cfg = RunConfig::paper_default();
        cfg.mesh.h = 2.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::paper_default();
        cfg.chain.cm_window = cfg.chain.n_steps + 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::paper_default();
        cfg.run.scatterer = "blob".into();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::paper_default();
        cfg.run.scatterer = "file".into();
        assert!(cfg.validate().is_err());
        cfg.run.scatterer_file = Some("q.txt".into());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[mesh]\nradius = 1.0\nh = 0.1\nh_hat = 0.2\nbogus = 3\n";
        assert!(RunConfig::from_toml(text).is_err());
    }
}
