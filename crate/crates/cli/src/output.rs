//! Output-directory resolution, content hashing, and CSV emission.
//!
//! Every CSV starts with a comment line carrying the experiment-spec hash
//! followed by a header row, so downstream scripts can verify which spec
//! produced a table before plotting it.

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root directory.
pub const OUT_ROOT_ENV: &str = "CHANMGR_OUT";

/// Resolves where a run writes its artifacts: the explicit flag if given,
/// otherwise `<root>/<name>` where the root comes from `CHANMGR_OUT` and
/// falls back to `./runs`.
pub fn resolve_out_dir(flag: Option<&Path>, name: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => {
            let root = std::env::var_os(OUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            root.join(name)
        }
    }
}

/// Creates the output directory, refusing to reuse a non-empty one unless
/// `force` is set.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries =
            std::fs::read_dir(dir).with_context(|| format!("inspecting {}", dir.display()))?;
        if entries.next().is_some() && !force {
            bail!(
                "output directory {} already has contents (pass --force to overwrite)",
                dir.display()
            );
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Hex SHA-256 of a text document; used to fingerprint specs and configs.
pub fn content_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Writes a CSV file: spec-hash comment line, header row, then data rows.
pub fn write_csv(path: &Path, spec_hash: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(64 + header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str("# spec-hash: ");
    text.push_str(spec_hash);
    text.push('\n');
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
