use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{hex, read_artifact, FORMAT_VERSION};
use crate::adapter::{PlayerId, RoutingTensor, StyleVector};
use crate::error::{Error, Result};
use crate::numeric::{Group, Param, ParamStore, Tensor};
use crate::policy::{NetConfig, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in elements.
    pub offset: usize,
    pub dtype: String,
    pub group: Group,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingIndex {
    pub modules: usize,
    pub heads: usize,
    pub players: Vec<PlayerId>,
    /// Offset of the `[players, modules * heads]` block, in elements.
    pub offset: usize,
}

/// Human-readable description of a checkpoint blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub net: Option<NetConfig>,
    pub tensors: Vec<TensorEntry>,
    pub routing: Option<RoutingIndex>,
    pub blob: String,
    pub blob_elements: usize,
    pub blob_sha256: String,
}

const DTYPE: &str = "f32-le";

/// A network, a routing tensor, or both.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: Option<PolicyNet<f32>>,
    pub routing: Option<RoutingTensor<f32>>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn encode(ckpt: &Checkpoint, blob_name: String) -> (Manifest, Vec<u8>) {
    let mut data: Vec<f32> = Vec::new();
    let mut tensors = Vec::new();
    if let Some(net) = &ckpt.net {
        for p in net.params().iter() {
            tensors.push(TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset: data.len(),
                dtype: DTYPE.into(),
                group: p.group,
                trainable: p.trainable,
            });
            data.extend_from_slice(p.value.data());
        }
    }
    let routing = ckpt.routing.as_ref().map(|z| {
        let offset = data.len();
        for row in z.rows() {
            data.extend_from_slice(row.as_slice());
        }
        RoutingIndex {
            modules: z.modules(),
            heads: z.heads(),
            players: z.players().to_vec(),
            offset,
        }
    });
    let bytes: Vec<u8> = data.iter().flat_map(|x| x.to_le_bytes()).collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        net: ckpt.net.as_ref().map(|n| *n.config()),
        tensors,
        routing,
        blob: blob_name,
        blob_elements: data.len(),
        blob_sha256: hex(&Sha256::digest(&bytes)),
    };
    (manifest, bytes)
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the manifest.
pub fn save_checkpoint(manifest_path: &Path, ckpt: &Checkpoint) -> Result<Manifest> {
    let blob = blob_path(manifest_path);
    let name = blob
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Argument(format!("bad checkpoint path {}", manifest_path.display())))?
        .to_string();
    let (manifest, bytes) = encode(ckpt, name);
    if let Some(dir) = manifest_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&blob, bytes)?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn slice<'a>(data: &'a [f32], offset: usize, len: usize, what: &str) -> Result<&'a [f32]> {
    data.get(offset..offset + len)
        .ok_or_else(|| Error::Format(format!("{what} lies outside the blob")))
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let text = read_artifact(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let blob_file = manifest_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob_file).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(blob_file.display().to_string()),
        _ => Error::Io(e),
    })?;
    if hex(&Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(Error::Format(format!(
            "{} does not match its recorded hash",
            blob_file.display()
        )));
    }
    if bytes.len() != 4 * manifest.blob_elements {
        return Err(Error::Format("blob length disagrees with the manifest".into()));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let net = match manifest.net {
        Some(config) => {
            let mut store = ParamStore::new();
            for t in &manifest.tensors {
                if t.dtype != DTYPE {
                    return Err(Error::Format(format!("tensor `{}` has dtype {}", t.name, t.dtype)));
                }
                let n = t.shape.iter().product();
                let value = Tensor::new(t.shape.clone(), slice(&data, t.offset, n, &t.name)?.to_vec())?;
                store.push(Param {
                    name: t.name.clone(),
                    value,
                    group: t.group,
                    trainable: t.trainable,
                    routing_row: None,
                })?;
            }
            Some(PolicyNet::from_params(config, store)?)
        }
        None if manifest.tensors.is_empty() => None,
        None => return Err(Error::Format("tensors listed without a network config".into())),
    };
    let routing = match &manifest.routing {
        Some(idx) => {
            let width = idx.modules * idx.heads;
            let mut z = RoutingTensor::new(idx.modules, idx.heads);
            for (i, &p) in idx.players.iter().enumerate() {
                let row = slice(&data, idx.offset + i * width, width, "routing row")?;
                z.push(&StyleVector::from_flat(idx.modules, idx.heads, row.to_vec())?, p)?;
            }
            Some(z)
        }
        None => None,
    };
    Ok(Checkpoint { net, routing })
}
