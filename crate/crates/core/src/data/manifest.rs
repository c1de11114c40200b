//! Directory datasets: `name.ppm` images paired with `name_mask.pgm` masks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
use super::sample::Sample;
use crate::error::{Error, Result};

pub const MASK_SUFFIX: &str = "_mask";

/// `(image, mask)` pairs sorted by file name. Other files are ignored; an
/// image without a mask or a mask without an image is an error listing all
/// such files.
pub fn dataset_manifest(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut images = BTreeMap::new();
    let mut masks = BTreeMap::new();
    for entry in fs::read_dir(dir.as_ref())? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()).map(str::to_owned),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        match ext {
            "pgm" if stem.ends_with(MASK_SUFFIX) => {
                masks.insert(stem[..stem.len() - MASK_SUFFIX.len()].to_string(), path);
            }
            "ppm" => {
                images.insert(stem, path);
            }
            _ => {}
        }
    }
    let mut unpaired: Vec<String> = images
        .iter()
        .filter(|(k, _)| !masks.contains_key(*k))
        .chain(masks.iter().filter(|(k, _)| !images.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !unpaired.is_empty() {
        unpaired.sort();
        return Err(Error::Unpaired(unpaired));
    }
    Ok(images
        .into_iter()
        .map(|(k, img)| {
            let mask = masks.remove(&k).expect("paired above");
            (img, mask)
        })
        .collect())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>> {
    dataset_manifest(dir)?
        .into_iter()
        .map(|(img, mask)| Sample::new(read_ppm(img)?, read_pgm(mask)?))
        .collect()
}

/// Writes samples as `{prefix}{index:05}.ppm` / `{prefix}{index:05}_mask.pgm`.
pub fn write_dataset(dir: impl AsRef<Path>, prefix: &str, samples: &[Sample]) -> Result<Vec<(PathBuf, PathBuf)>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let img = dir.join(format!("{prefix}{i:05}.ppm"));
            let mask = dir.join(format!("{prefix}{i:05}{MASK_SUFFIX}.pgm"));
            write_ppm(&img, &s.image)?;
            write_pgm(&mask, &s.mask)?;
            Ok((img, mask))
        })
        .collect()
}
