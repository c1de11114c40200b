//! Export of region (RR) and semantic (SR) feature maps of one block.

use std::path::{Path, PathBuf};

use crate::data::{write_pgm, Mask};
use crate::engine::{save_nt, Graph, Mode, Tensor};
use crate::error::{Error, Result};
use crate::network::{forward, NetworkConfig};
use crate::params::ParamStore;

#[derive(Debug, Clone)]
pub struct HeatmapExport {
    /// `(mark, features)` for each of `rr` and `sr` the block records.
    pub maps: Vec<(String, Tensor)>,
    pub files: Vec<PathBuf>,
}

/// Signed map of one channel to grey levels: zero is 128, `scale` maps to 255
/// and `-scale` to 1.
pub fn signed_grey(t: &Tensor, n: usize, c: usize, scale: f32) -> Mask {
    let mut m = Mask::new(t.h(), t.w(), 128);
    for y in 0..t.h() {
        for x in 0..t.w() {
            let v = if scale > 0.0 { t.at(n, c, y, x) / scale } else { 0.0 };
            m.set(y, x, (128.0 + (127.0 * v).round()).clamp(1.0, 255.0) as u8);
        }
    }
    m
}

/// Runs `input` through the network in eval mode and writes, for block
/// `block` (e.g. `s3.1`), `{block}.{rr,sr}.nt` with the raw features and one
/// `{block}.{rr,sr}.cNNN.pgm` per channel of the first image.
pub fn dump_feature_heatmaps(
    store: &ParamStore,
    cfg: &NetworkConfig,
    input: &Tensor,
    block: &str,
    out_dir: &Path,
) -> Result<HeatmapExport> {
    let mut g = Graph::inference();
    let x = g.input(input.clone());
    forward(&mut g, store, cfg, x, Mode::Eval)?;
    let mut maps = Vec::new();
    for part in ["rr", "sr"] {
        let key = format!("{block}.{part}");
        if let Some(v) = g.marked(&key) {
            maps.push((key, g.value(v).clone()));
        }
    }
    if maps.is_empty() {
        return Err(Error::InvalidConfig(format!("no feature maps recorded for block {block:?}")));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (key, t) in &maps {
        let nt = out_dir.join(format!("{key}.nt"));
        save_nt(&nt, t)?;
        files.push(nt);
        let scale = t.batch_item(0).max_abs();
        for c in 0..t.c() {
            let path = out_dir.join(format!("{key}.c{c:03}.pgm"));
            write_pgm(&path, &signed_grey(t, 0, c, scale))?;
            files.push(path);
        }
    }
    Ok(HeatmapExport { maps, files })
}
