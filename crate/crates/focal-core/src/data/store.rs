//! On-disk dataset layout: `manifest.json` (specs + texts + generation
//! parameters), `images.bin` (raw f64 pixels), `vocab.txt` (one token per
//! line). Loading reconstructs the dataset byte-for-byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::render::PixelImage;
use super::text::{ConditionTag, Vocabulary};
use super::triplet::{DataKind, Dataset, Record};

const IMAGES_MAGIC: &[u8; 4] = b"CSDS";
const IMAGES_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    kind: DataKind,
    seed: u64,
    width: usize,
    height: usize,
    n_images: usize,
    conditions: Vec<ConditionTag>,
    records: Vec<Record>,
}

const MANIFEST_VERSION: u32 = 1;

/// Write `manifest.json`, `images.bin`, and `vocab.txt` into `dir`,
/// creating it if needed.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        kind: dataset.kind,
        seed: dataset.seed,
        width: dataset.width,
        height: dataset.height,
        n_images: dataset.images.len(),
        conditions: dataset.conditions.clone(),
        records: dataset.records.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;

    let mut blob = Vec::with_capacity(
        16 + dataset.images.len() * dataset.width * dataset.height * 3 * 8,
    );
    blob.extend_from_slice(IMAGES_MAGIC);
    blob.extend_from_slice(&IMAGES_VERSION.to_le_bytes());
    blob.extend_from_slice(&(dataset.images.len() as u32).to_le_bytes());
    blob.extend_from_slice(&(dataset.width as u32).to_le_bytes());
    blob.extend_from_slice(&(dataset.height as u32).to_le_bytes());
    for image in &dataset.images {
        for &v in &image.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(dir.join(IMAGES_FILE))?;
    f.write_all(&blob)?;

    let mut vocab_text = String::new();
    for token in dataset.vocab.tokens() {
        vocab_text.push_str(token);
        vocab_text.push('\n');
    }
    fs::write(dir.join(VOCAB_FILE), vocab_text)?;
    Ok(())
}

/// Load a dataset previously written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let json = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| Error::format("manifest", e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            "manifest",
            format!("unsupported version {}", manifest.version),
        ));
    }

    let mut f = fs::File::open(dir.join(IMAGES_FILE))?;
    let mut blob = Vec::new();
    f.read_to_end(&mut blob)?;
    let images = decode_images(&blob, manifest.width, manifest.height)?;
    if images.len() != manifest.n_images {
        return Err(Error::format(
            "images.bin",
            format!("expected {} images, found {}", manifest.n_images, images.len()),
        ));
    }
    if images.len() != manifest.records.len() {
        return Err(Error::format(
            "manifest",
            format!("{} records but {} images", manifest.records.len(), images.len()),
        ));
    }

    let vocab_text = fs::read_to_string(dir.join(VOCAB_FILE))?;
    let tokens: Vec<String> = vocab_text.lines().map(str::to_string).collect();
    let vocab = Vocabulary::from_tokens(tokens)?;

    Ok(Dataset {
        kind: manifest.kind,
        seed: manifest.seed,
        width: manifest.width,
        height: manifest.height,
        conditions: manifest.conditions,
        records: manifest.records,
        images,
        vocab,
    })
}

fn decode_images(blob: &[u8], width: usize, height: usize) -> Result<Vec<Arc<PixelImage>>> {
    let header_err = |msg: &str| Error::format("images.bin", msg.to_string());
    if blob.len() < 20 {
        return Err(header_err("truncated header"));
    }
    if &blob[0..4] != IMAGES_MAGIC {
        return Err(header_err("bad magic"));
    }
    let version = u32::from_le_bytes(blob[4..8].try_into().unwrap());
    if version != IMAGES_VERSION {
        return Err(Error::format(
            "images.bin",
            format!("unsupported version {version}"),
        ));
    }
    let count = u32::from_le_bytes(blob[8..12].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(blob[12..16].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(blob[16..20].try_into().unwrap()) as usize;
    if w != width || h != height {
        return Err(Error::format(
            "images.bin",
            format!("canvas {w}x{h} does not match manifest {width}x{height}"),
        ));
    }
    let pixels_per_image = w * h * 3;
    let expected = 20 + count * pixels_per_image * 8;
    if blob.len() != expected {
        return Err(Error::format(
            "images.bin",
            format!("expected {expected} bytes, found {}", blob.len()),
        ));
    }
    let mut images = Vec::with_capacity(count);
    let mut offset = 20;
    for _ in 0..count {
        let mut data = Vec::with_capacity(pixels_per_image);
        for _ in 0..pixels_per_image {
            let bytes: [u8; 8] = blob[offset..offset + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(bytes));
            offset += 8;
        }
        images.push(Arc::new(PixelImage { width: w, height: h, data }));
    }
    Ok(images)
}
