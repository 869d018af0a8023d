//! Block container used by condensed archives (`.cdns`) and model snapshots
//! (`.tca`).
//!
//! ```text
//! magic[4] | version u32 | block* | sha256[32]
//! block  = tag[4] | length u64 | payload[length]
//! ```
//! All integers are little-endian; the trailing digest covers every preceding
//! byte. Condensed archives carry `MANI` (JSON manifest), `DECO` (decoder, absent
//! for feature-space methods) and `VIDS` (per-video code tables). Model
//! snapshots carry `MANI`, `ENCO` and `DECO`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_file, write_atomic};
use crate::condense::{CondensedDataset, CondensedSegment, CondensedVideo, Manifest};
use crate::error::{Error, Result};
use crate::tca::{Decoder, TcaConfig, TcaDims, TcaModel};
use crate::tensor::{Activation, Layer, Matrix, MlpParams};

pub const CONDENSED_MAGIC: &[u8; 4] = b"CDNS";
pub const MODEL_MAGIC: &[u8; 4] = b"TCAM";
pub const VERSION: u32 = 1;

const TAG_MANIFEST: &[u8; 4] = b"MANI";
const TAG_DECODER: &[u8; 4] = b"DECO";
const TAG_ENCODER: &[u8; 4] = b"ENCO";
const TAG_VIDEOS: &[u8; 4] = b"VIDS";
const DIGEST: usize = 32;

fn archive_err(msg: impl Into<String>) -> Error {
    Error::Archive(msg.into())
}

/// Assembles magic, version, blocks and the checksum trailer.
pub fn encode_container(magic: &[u8; 4], blocks: &[(&[u8; 4], Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (tag, payload) in blocks {
        out.extend_from_slice(*tag);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Verifies magic, checksum and version, then splits the blocks.
pub fn decode_container<'a>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<Vec<([u8; 4], &'a [u8])>> {
    if bytes.len() < 8 + DIGEST || &bytes[..4] != magic {
        return Err(archive_err(format!(
            "not a {} file",
            String::from_utf8_lossy(magic)
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
    if Sha256::digest(body).as_slice() != digest {
        return Err(archive_err("checksum mismatch; file is corrupt or truncated"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(archive_err(format!("unsupported version {version}, expected {VERSION}")));
    }
    let mut blocks = Vec::new();
    let mut pos = 8;
    while pos < body.len() {
        if body.len() - pos < 12 {
            return Err(archive_err(format!("truncated block header at byte {pos}")));
        }
        let tag: [u8; 4] = body[pos..pos + 4].try_into().expect("4 bytes");
        let len = u64::from_le_bytes(body[pos + 4..pos + 12].try_into().expect("8 bytes")) as usize;
        pos += 12;
        if body.len() - pos < len {
            return Err(archive_err(format!("block {} overruns file", String::from_utf8_lossy(&tag))));
        }
        blocks.push((tag, &body[pos..pos + len]));
        pos += len;
    }
    Ok(blocks)
}

fn find<'a>(blocks: &[([u8; 4], &'a [u8])], tag: &[u8; 4]) -> Option<&'a [u8]> {
    blocks.iter().find(|(t, _)| t == tag).map(|(_, p)| *p)
}

fn require<'a>(blocks: &[([u8; 4], &'a [u8])], tag: &[u8; 4]) -> Result<&'a [u8]> {
    find(blocks, tag).ok_or_else(|| archive_err(format!("missing {} block", String::from_utf8_lossy(tag))))
}

/// Little-endian cursor over one block payload.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    block: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], block: &'static str) -> Self {
        Self { bytes, pos: 0, block }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(archive_err(format!("{} block truncated at byte {}", self.block, self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| archive_err("size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let data = self.f32s(rows * cols)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| archive_err(format!("{} block: {e}", self.block)))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| archive_err(format!("{} block: invalid UTF-8", self.block)))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(archive_err(format!("{} block has trailing bytes", self.block)));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Layer count, then per layer `in`, `out`, activation tag, weights, biases.
pub fn encode_mlp(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + params.param_count() * 4 + params.layers.len() * 9);
    put_u32(&mut out, params.layers.len());
    for layer in &params.layers {
        put_u32(&mut out, layer.in_dim());
        put_u32(&mut out, layer.out_dim());
        out.push(layer.activation.tag());
        put_f32s(&mut out, layer.weight.data());
        put_f32s(&mut out, &layer.bias);
    }
    out
}

fn read_mlp(r: &mut Reader) -> Result<MlpParams> {
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, o) = (r.u32()?, r.u32()?);
        let tag = r.u8()?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| archive_err(format!("unknown activation tag {tag}")))?;
        let weight = r.matrix(i, o)?;
        let bias = r.f32s(o)?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(archive_err("non-finite bias"));
        }
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    MlpParams::new(layers).map_err(|e| archive_err(e.to_string()))
}

pub fn decode_mlp(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader::new(bytes, "network");
    let p = read_mlp(&mut r)?;
    r.finish()?;
    Ok(p)
}

fn encode_decoder(decoder: &Decoder) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, decoder.dims.feature_dim);
    put_u32(&mut out, decoder.dims.num_actions);
    put_u32(&mut out, decoder.dims.latent_dim);
    out.extend_from_slice(&encode_mlp(&decoder.params));
    out
}

fn decode_decoder(bytes: &[u8]) -> Result<Decoder> {
    let mut r = Reader::new(bytes, "DECO");
    let dims = TcaDims {
        feature_dim: r.u32()?,
        num_actions: r.u32()?,
        latent_dim: r.u32()?,
    };
    let params = read_mlp(&mut r)?;
    r.finish()?;
    Decoder::new(dims, params).map_err(|e| archive_err(e.to_string()))
}

fn encode_videos(videos: &[CondensedVideo]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, videos.len());
    for v in videos {
        put_u32(&mut out, v.id.len());
        out.extend_from_slice(v.id.as_bytes());
        put_u32(&mut out, v.segments.len());
        for s in &v.segments {
            put_u32(&mut out, s.action);
            put_u32(&mut out, s.length);
            put_u32(&mut out, s.codes.rows());
            out.extend_from_slice(&s.loss.to_le_bytes());
            put_f32s(&mut out, s.codes.data());
        }
    }
    out
}

fn decode_videos(bytes: &[u8], code_dim: usize) -> Result<Vec<CondensedVideo>> {
    let mut r = Reader::new(bytes, "VIDS");
    let n = r.u32()?;
    let mut videos = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.string()?;
        let count = r.u32()?;
        let mut segments = Vec::with_capacity(count);
        for _ in 0..count {
            let action = r.u32()?;
            let length = r.u32()?;
            let k = r.u32()?;
            let loss = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            let codes = r.matrix(k, code_dim)?;
            segments.push(CondensedSegment {
                action,
                length,
                codes,
                loss,
            });
        }
        videos.push(CondensedVideo { id, segments });
    }
    r.finish()?;
    Ok(videos)
}

fn manifest_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(value).map_err(|e| Error::json("manifest", e))
}

/// Serialized form of a condensed dataset.
pub fn encode_condensed(dataset: &CondensedDataset) -> Result<Vec<u8>> {
    dataset.validate()?;
    let mut blocks: Vec<(&[u8; 4], Vec<u8>)> = vec![(TAG_MANIFEST, manifest_json(&dataset.manifest)?)];
    if let Some(dec) = &dataset.decoder {
        blocks.push((TAG_DECODER, encode_decoder(dec)));
    }
    blocks.push((TAG_VIDEOS, encode_videos(&dataset.videos)));
    Ok(encode_container(CONDENSED_MAGIC, &blocks))
}

pub fn decode_condensed(bytes: &[u8]) -> Result<CondensedDataset> {
    let blocks = decode_container(CONDENSED_MAGIC, bytes)?;
    let manifest: Manifest =
        serde_json::from_slice(require(&blocks, TAG_MANIFEST)?).map_err(|e| Error::json("archive manifest", e))?;
    let decoder = find(&blocks, TAG_DECODER).map(decode_decoder).transpose()?;
    let videos = decode_videos(require(&blocks, TAG_VIDEOS)?, manifest.code_dim)?;
    let dataset = CondensedDataset {
        manifest,
        decoder,
        videos,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_condensed(path: impl AsRef<Path>, dataset: &CondensedDataset) -> Result<()> {
    write_atomic(path.as_ref(), &encode_condensed(dataset)?)
}

pub fn read_condensed(path: impl AsRef<Path>) -> Result<CondensedDataset> {
    decode_condensed(&read_file(path.as_ref())?)
}

/// JSON header of a model snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub dims: TcaDims,
    pub hidden: usize,
    pub config: TcaConfig,
    /// Provenance of the training corpus.
    pub corpus: serde_json::Value,
    pub vocabulary: Vec<String>,
    pub final_loss: Option<crate::tca::TcaLoss>,
}

pub fn encode_model(model: &TcaModel, manifest: &ModelManifest) -> Result<Vec<u8>> {
    if manifest.dims != model.dims() {
        return Err(archive_err("model manifest dims disagree with the model"));
    }
    Ok(encode_container(
        MODEL_MAGIC,
        &[
            (TAG_MANIFEST, manifest_json(manifest)?),
            (TAG_ENCODER, encode_mlp(&model.encoder)),
            (TAG_DECODER, encode_decoder(&model.decoder)),
        ],
    ))
}

pub fn decode_model(bytes: &[u8]) -> Result<(TcaModel, ModelManifest)> {
    let blocks = decode_container(MODEL_MAGIC, bytes)?;
    let manifest: ModelManifest =
        serde_json::from_slice(require(&blocks, TAG_MANIFEST)?).map_err(|e| Error::json("model manifest", e))?;
    let encoder = decode_mlp(require(&blocks, TAG_ENCODER)?)?;
    let decoder = decode_decoder(require(&blocks, TAG_DECODER)?)?;
    let model = TcaModel::from_parts(encoder, decoder).map_err(|e| archive_err(e.to_string()))?;
    if model.dims() != manifest.dims {
        return Err(archive_err("model manifest dims disagree with stored networks"));
    }
    Ok((model, manifest))
}

pub fn write_model(path: impl AsRef<Path>, model: &TcaModel, manifest: &ModelManifest) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model, manifest)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(TcaModel, ModelManifest)> {
    decode_model(&read_file(path.as_ref())?)
}
