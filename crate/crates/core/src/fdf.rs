//! Frame difference fragmentation.
//!
//! For each frame `F_t` with a predecessor `F_{t-1}`, the absolute residual
//! `R_t = |F_t - F_{t-1}|` is split into non-overlapping `p x p` patches.
//! Each patch is scored by its summed residual over all pixels and all three
//! channels, and the `K = s² / p²` highest-scoring patches are pasted into
//! two `s x s` mosaics: one cut from the residual, one cut from `F_t` at the
//! same positions.
//!
//! Frames whose dimensions are not multiples of `p` are cropped at the right
//! and bottom edges. Selected patches are laid out in ascending raster
//! order of their source position, so the mosaic keeps the relative spatial
//! layout of the frame. Ties in the score are broken toward the lower patch
//! index.
//!
//! ```
//! use campvqa::fdf::{FdfConfig, compute_residual, patch_intensities, select_top_k};
//! use campvqa::media::FrameBuffer;
//!
//! let cfg = FdfConfig::new(2, 4).unwrap(); // K = 4
//! let prev = FrameBuffer::filled(8, 8, 0, [0, 0, 0]).unwrap();
//! let curr = FrameBuffer::filled(8, 8, 1, [1, 1, 1]).unwrap();
//! let residual = compute_residual(&prev, &curr).unwrap();
//! let scores = patch_intensities(&residual, &cfg).unwrap();
//! assert_eq!(scores.len(), 16);
//! assert!(scores.iter().all(|s| s.delta == 2 * 2 * 3));
//! let picked = select_top_k(&scores, &cfg).unwrap();
//! assert_eq!(picked.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 1, 2, 3]);
//! ```

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{write_json, Error, Result};
use crate::media::{write_png, FrameBuffer, VideoClip, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FdfConfigRepr", into = "FdfConfigRepr")]
pub struct FdfConfig {
    patch_size: usize,
    target_size: usize,
}

#[derive(Serialize, Deserialize)]
struct FdfConfigRepr {
    patch_size: usize,
    target_size: usize,
}

impl TryFrom<FdfConfigRepr> for FdfConfig {
    type Error = Error;

    fn try_from(r: FdfConfigRepr) -> Result<Self> {
        FdfConfig::new(r.patch_size, r.target_size)
    }
}

impl From<FdfConfig> for FdfConfigRepr {
    fn from(c: FdfConfig) -> Self {
        FdfConfigRepr {
            patch_size: c.patch_size,
            target_size: c.target_size,
        }
    }
}

impl Default for FdfConfig {
    fn default() -> Self {
        FdfConfig {
            patch_size: 16,
            target_size: 224,
        }
    }
}

impl FdfConfig {
    pub fn new(patch_size: usize, target_size: usize) -> Result<Self> {
        if patch_size == 0 || target_size == 0 {
            return Err(Error::Config(
                "patch and target size must be positive".into(),
            ));
        }
        if target_size % patch_size != 0 {
            return Err(Error::Config(format!(
                "target size {target_size} is not a multiple of patch size {patch_size}"
            )));
        }
        Ok(FdfConfig {
            patch_size,
            target_size,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    /// Number of patches per mosaic.
    pub fn k(&self) -> usize {
        let per_side = self.target_size / self.patch_size;
        per_side * per_side
    }

    fn cells_per_side(&self) -> usize {
        self.target_size / self.patch_size
    }
}

/// Per-pixel, per-channel absolute difference between two frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ResidualFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::InvalidData(format!(
                "residual {width}x{height} needs {} bytes, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(ResidualFrame {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Residual energy of one grid patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchScore {
    /// Raster index in the patch grid.
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub delta: u64,
}

/// Paired `s x s` mosaics built from the selected patches of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentPair {
    /// Index `t` of the frame the fragments were cut from.
    pub frame_index: usize,
    pub frame_fragment: FrameBuffer,
    pub residual_fragment: FrameBuffer,
    /// The selected patches in mosaic cell order.
    pub provenance: Vec<PatchScore>,
}

pub fn compute_residual(prev: &FrameBuffer, curr: &FrameBuffer) -> Result<ResidualFrame> {
    if !prev.same_shape(curr) {
        return Err(Error::InconsistentFrames(format!(
            "cannot difference {}x{} against {}x{}",
            curr.width(),
            curr.height(),
            prev.width(),
            prev.height()
        )));
    }
    let data = curr
        .data()
        .iter()
        .zip(prev.data())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    ResidualFrame::new(curr.width(), curr.height(), data)
}

/// Scores every full patch of the residual in raster order.
pub fn patch_intensities(residual: &ResidualFrame, cfg: &FdfConfig) -> Result<Vec<PatchScore>> {
    let p = cfg.patch_size;
    if residual.width < p || residual.height < p {
        return Err(Error::InputTooSmall(format!(
            "{}x{} residual is smaller than one {p}x{p} patch",
            residual.width, residual.height
        )));
    }
    let (cols, rows) = (residual.width / p, residual.height / p);
    let row_bytes = residual.width * CHANNELS;
    let mut deltas = vec![0u64; rows * cols];
    for y in 0..rows * p {
        let line = &residual.data[y * row_bytes..][..cols * p * CHANNELS];
        let base = (y / p) * cols;
        for (c, block) in line.chunks_exact(p * CHANNELS).enumerate() {
            deltas[base + c] += block.iter().map(|&v| v as u64).sum::<u64>();
        }
    }
    Ok(deltas
        .into_iter()
        .enumerate()
        .map(|(index, delta)| PatchScore {
            index,
            row: index / cols,
            col: index % cols,
            delta,
        })
        .collect())
}

/// Keeps the `K` highest-scoring patches, returned in ascending patch index.
pub fn select_top_k(scores: &[PatchScore], cfg: &FdfConfig) -> Result<Vec<PatchScore>> {
    let k = cfg.k();
    if scores.len() < k {
        return Err(Error::InputTooSmall(format!(
            "{} patches available, {k} required; frames must be at least {s}x{s}",
            scores.len(),
            s = cfg.target_size
        )));
    }
    let mut ranked = scores.to_vec();
    ranked.sort_unstable_by(|a, b| b.delta.cmp(&a.delta).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    ranked.sort_unstable_by_key(|s| s.index);
    Ok(ranked)
}

fn paste_mosaic(src: &[u8], src_width: usize, selected: &[PatchScore], cfg: &FdfConfig) -> Vec<u8> {
    let p = cfg.patch_size;
    let s = cfg.target_size;
    let cells = cfg.cells_per_side();
    let mut out = vec![0u8; s * s * CHANNELS];
    for (m, patch) in selected.iter().enumerate() {
        let (dst_row, dst_col) = (m / cells, m % cells);
        for dy in 0..p {
            let sy = patch.row * p + dy;
            let sx = patch.col * p;
            let from = (sy * src_width + sx) * CHANNELS;
            let to = ((dst_row * p + dy) * s + dst_col * p) * CHANNELS;
            out[to..to + p * CHANNELS].copy_from_slice(&src[from..from + p * CHANNELS]);
        }
    }
    out
}

pub fn assemble_fragments(
    frame: &FrameBuffer,
    residual: &ResidualFrame,
    selected: &[PatchScore],
    cfg: &FdfConfig,
) -> Result<FragmentPair> {
    let k = cfg.k();
    if selected.len() != k {
        return Err(Error::Internal(format!(
            "expected {k} selected patches, got {}",
            selected.len()
        )));
    }
    if frame.width() != residual.width || frame.height() != residual.height {
        return Err(Error::Internal("frame and residual sizes differ".into()));
    }
    let p = cfg.patch_size;
    if let Some(bad) = selected
        .iter()
        .find(|s| (s.col + 1) * p > frame.width() || (s.row + 1) * p > frame.height())
    {
        return Err(Error::Internal(format!(
            "patch ({}, {}) lies outside the {}x{} frame",
            bad.row,
            bad.col,
            frame.width(),
            frame.height()
        )));
    }
    let s = cfg.target_size;
    let t = frame.frame_index();
    let frame_fragment = FrameBuffer::new(
        s,
        s,
        t,
        paste_mosaic(frame.data(), frame.width(), selected, cfg),
    )?;
    let residual_fragment = FrameBuffer::new(
        s,
        s,
        t,
        paste_mosaic(residual.data(), residual.width, selected, cfg),
    )?;
    Ok(FragmentPair {
        frame_index: t,
        frame_fragment,
        residual_fragment,
        provenance: selected.to_vec(),
    })
}

/// Fragments for a single frame given its predecessor.
pub fn fragment_frame(
    prev: &FrameBuffer,
    curr: &FrameBuffer,
    cfg: &FdfConfig,
) -> Result<FragmentPair> {
    let residual = compute_residual(prev, curr)?;
    let scores = patch_intensities(&residual, cfg)?;
    let selected = select_top_k(&scores, cfg)?;
    assemble_fragments(curr, &residual, &selected, cfg)
}

/// One fragment pair for every frame after the first, in frame order.
pub fn fragment_video(clip: &VideoClip, cfg: &FdfConfig) -> Result<Vec<FragmentPair>> {
    if clip.frame_count() < 2 {
        return Err(Error::InputTooSmall(
            "fragmentation needs at least two frames".into(),
        ));
    }
    clip.frames()
        .par_windows(2)
        .map(|w| fragment_frame(&w[0], &w[1], cfg))
        .collect()
}

/// Writes `{video}_{t}_frag.png`, `{video}_{t}_res.png` for each pair plus a
/// `{video}_provenance.json` listing the selected patches per frame.
pub fn dump_fragments(dir: &Path, video_id: &str, pairs: &[FragmentPair]) -> Result<()> {
    #[derive(Serialize)]
    struct Entry<'a> {
        t: usize,
        patches: &'a [PatchScore],
    }
    pairs.par_iter().try_for_each(|pair| {
        let t = pair.frame_index;
        for (tag, img) in [
            ("frag", &pair.frame_fragment),
            ("res", &pair.residual_fragment),
        ] {
            write_png(
                &dir.join(format!("{video_id}_{t}_{tag}.png")),
                img.width(),
                img.height(),
                img.data(),
            )?;
        }
        Ok::<_, Error>(())
    })?;
    let entries: Vec<Entry> = pairs
        .iter()
        .map(|p| Entry {
            t: p.frame_index,
            patches: &p.provenance,
        })
        .collect();
    write_json(&dir.join(format!("{video_id}_provenance.json")), &entries)
}
