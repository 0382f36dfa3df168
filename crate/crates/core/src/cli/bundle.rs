//! Fit-bundle persistence: a binary columnar draws file, a JSON manifest
//! keyed by the config/data hash, the verbatim config, and a diagnostics
//! report. Re-running a fit from the same config and data reproduces the
//! draws file byte for byte.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::{ChainDraws, Diagnostics, DrawMatrix};

const DRAWS_MAGIC: &[u8; 8] = b"PSDRAW01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Hash of the config text and the data bytes; stamps every output.
    pub manifest_hash: String,
    pub config_sha256: String,
    pub data_sha256: String,
    /// Resolved data location for bundle-relative reruns.
    pub data_path: PathBuf,
    pub seed: u64,
    pub chains: usize,
    pub warmup: usize,
    pub iter: usize,
    pub version: String,
}

impl Manifest {
    pub fn compute(
        config_text: &str,
        data_bytes: &[u8],
        data_path: &Path,
        seed: u64,
        chains: usize,
        warmup: usize,
        iter: usize,
    ) -> Manifest {
        let config_sha256 = hex_digest(config_text.as_bytes());
        let data_sha256 = hex_digest(data_bytes);
        let mut joint = Sha256::new();
        joint.update(config_sha256.as_bytes());
        joint.update(data_sha256.as_bytes());
        Manifest {
            manifest_hash: hex::encode_hash(joint.finalize()),
            config_sha256,
            data_sha256,
            data_path: data_path.to_path_buf(),
            seed,
            chains,
            warmup,
            iter,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

mod hex {
    pub fn encode_hash(bytes: impl AsRef<[u8]>) -> String {
        bytes.as_ref().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    hex::encode_hash(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct DrawsHeader {
    manifest_hash: String,
    param_names: Vec<String>,
    width: usize,
    chains: usize,
    draws_per_chain: usize,
}

/// Serialize a draw matrix: magic, JSON header, then per chain the draws
/// (f64 LE), logp, accept, divergent flags and tree depths.
pub fn write_draws(path: &Path, draws: &DrawMatrix, manifest_hash: &str) -> Result<()> {
    let header = DrawsHeader {
        manifest_hash: manifest_hash.to_string(),
        param_names: draws.param_names.clone(),
        width: draws.width,
        chains: draws.n_chains(),
        draws_per_chain: draws.draws_per_chain,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    let mut file = std::fs::File::create(path)?;
    file.write_all(DRAWS_MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    for chain in &draws.chains {
        for &v in &chain.draws {
            file.write_all(&v.to_le_bytes())?;
        }
        for &v in &chain.logp {
            file.write_all(&v.to_le_bytes())?;
        }
        for &v in &chain.accept {
            file.write_all(&v.to_le_bytes())?;
        }
        for &d in &chain.divergent {
            file.write_all(&[d as u8])?;
        }
        for &t in &chain.treedepth {
            file.write_all(&t.to_le_bytes())?;
        }
        file.write_all(&chain.step_size.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<(DrawMatrix, String)> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open draws file '{}': {e}", path.display())))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != DRAWS_MAGIC {
        return Err(Error::data("not a draws file (bad magic)"));
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)?;
    let mut header_json = vec![0u8; u64::from_le_bytes(len) as usize];
    file.read_exact(&mut header_json)?;
    let header: DrawsHeader = serde_json::from_slice(&header_json)
        .map_err(|e| Error::data(format!("bad draws header: {e}")))?;

    let read_f64s = |count: usize, file: &mut std::fs::File| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        file.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };

    let mut chains = Vec::with_capacity(header.chains);
    for _ in 0..header.chains {
        let draws = read_f64s(header.draws_per_chain * header.width, &mut file)?;
        let logp = read_f64s(header.draws_per_chain, &mut file)?;
        let accept = read_f64s(header.draws_per_chain, &mut file)?;
        let mut dbuf = vec![0u8; header.draws_per_chain];
        file.read_exact(&mut dbuf)?;
        let mut tbuf = vec![0u8; header.draws_per_chain * 4];
        file.read_exact(&mut tbuf)?;
        let treedepth =
            tbuf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let mut sbuf = [0u8; 8];
        file.read_exact(&mut sbuf)?;
        chains.push(ChainDraws {
            draws,
            logp,
            accept,
            divergent: dbuf.into_iter().map(|b| b != 0).collect(),
            treedepth,
            step_size: f64::from_le_bytes(sbuf),
        });
    }
    Ok((
        DrawMatrix {
            param_names: header.param_names,
            width: header.width,
            draws_per_chain: header.draws_per_chain,
            chains,
        },
        header.manifest_hash,
    ))
}

/// Wide CSV export of the draws, stamped with the manifest hash.
pub fn draws_to_csv(draws: &DrawMatrix, manifest_hash: &str) -> String {
    let mut out = format!("# manifest: {manifest_hash}\n");
    out.push_str("chain,draw,");
    out.push_str(&draws.param_names.join(","));
    out.push_str(",logp,accept,divergent,treedepth\n");
    for (c, chain) in draws.chains.iter().enumerate() {
        for k in 0..draws.draws_per_chain {
            out.push_str(&format!("{},{}", c + 1, k + 1));
            for j in 0..draws.width {
                out.push_str(&format!(",{}", draws.draw(c, k)[j]));
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                chain.logp[k], chain.accept[k], chain.divergent[k] as u8, chain.treedepth[k]
            ));
        }
    }
    out
}

/// The on-disk fit bundle.
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn write(
        dir: &Path,
        manifest: &Manifest,
        config_text: &str,
        draws: &DrawMatrix,
        diagnostics: &Diagnostics,
        csv: bool,
    ) -> Result<Bundle> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(manifest).expect("manifest serializes"),
        )?;
        std::fs::write(dir.join("config.toml"), config_text)?;
        write_draws(&dir.join("draws.bin"), draws, &manifest.manifest_hash)?;
        let report = format!(
            "# manifest: {}\n{}",
            manifest.manifest_hash,
            diagnostics.report()
        );
        std::fs::write(dir.join("diagnostics.txt"), report)?;
        if csv {
            std::fs::write(
                dir.join("draws.csv"),
                draws_to_csv(draws, &manifest.manifest_hash),
            )?;
        }
        Ok(Bundle { dir: dir.to_path_buf(), manifest: manifest.clone() })
    }

    pub fn open(dir: &Path) -> Result<Bundle> {
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
            Error::data(format!("cannot read '{}': {e}", manifest_path.display()))
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("bad manifest: {e}")))?;
        Ok(Bundle { dir: dir.to_path_buf(), manifest })
    }

    pub fn config_text(&self) -> Result<String> {
        Ok(std::fs::read_to_string(self.dir.join("config.toml"))?)
    }

    pub fn draws(&self) -> Result<DrawMatrix> {
        let (draws, hash) = read_draws(&self.dir.join("draws.bin"))?;
        if hash != self.manifest.manifest_hash {
            return Err(Error::data(
                "draws file does not belong to this bundle (hash mismatch)",
            ));
        }
        Ok(draws)
    }

    /// Verify the data file still matches the manifest, then load it.
    pub fn load_data(&self) -> Result<crate::data::Dataset> {
        let bytes = std::fs::read(&self.manifest.data_path).map_err(|e| {
            Error::data(format!(
                "cannot read data '{}': {e}",
                self.manifest.data_path.display()
            ))
        })?;
        if hex_digest(&bytes) != self.manifest.data_sha256 {
            return Err(Error::data(format!(
                "data file '{}' has changed since the fit (sha mismatch)",
                self.manifest.data_path.display()
            )));
        }
        crate::data::Dataset::from_csv_reader(bytes.as_slice())
    }
}
