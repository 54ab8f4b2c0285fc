//! Reproducibility manifest written next to every command's outputs.

use crate::config::RunConfig;
use anyhow::Context;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Writes `manifest_<command>.txt` with the config hash, seed, crate
/// versions, and the full canonical config text.
pub fn write(cfg: &RunConfig, command: &str, dir: &Path) -> anyhow::Result<()> {
    let toml_text = cfg.to_toml()?;
    let mut hasher = Sha256::new();
    hasher.update(toml_text.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let path = dir.join(format!("manifest_{command}.txt"));
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(&path)
            .with_context(|| format!("cannot create {}", path.display()))?,
    );
    writeln!(f, "manifest v1")?;
    writeln!(f, "command {command}")?;
    writeln!(f, "config_sha256 {hex}")?;
    writeln!(f, "seed {}", cfg.chain.seed)?;
    writeln!(f, "scatinv_cli {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "config_toml:")?;
    write!(f, "{toml_text}")?;
    Ok(())
}
