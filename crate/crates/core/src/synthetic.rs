//! Synthetic inputs for demos and tests: clips with known motion, stand-in
//! encoder outputs, and datasets with a planted feature-to-score map.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::features::{cvqf_file_name, write_cvqf, EmbeddingRecord, Modality};
use crate::fusion::SegmentPlan;
use crate::media::{encode_y4m, Chroma, FrameBuffer, Framerate, Y4mStream};

/// Frames of a horizontal gradient with a bright square moving diagonally
/// by `step` pixels per frame.
pub fn moving_square_frames(
    width: usize,
    height: usize,
    count: usize,
    square: usize,
    step: usize,
) -> Result<Vec<FrameBuffer>> {
    if width == 0 || height == 0 || square == 0 || square > width.min(height) {
        return Err(Error::InputTooSmall(format!(
            "a {square}px square does not fit a {width}x{height} frame"
        )));
    }
    (0..count)
        .map(|t| {
            let (x0, y0) = (
                t * step % (width - square + 1),
                t * step % (height - square + 1),
            );
            let mut data = Vec::with_capacity(width * height * 3);
            for y in 0..height {
                for x in 0..width {
                    let inside = (x0..x0 + square).contains(&x) && (y0..y0 + square).contains(&y);
                    let g = (x * 160 / width) as u8 + 32;
                    data.extend_from_slice(&if inside { [240, 230, 220] } else { [g, g, 96] });
                }
            }
            FrameBuffer::new(width, height, t, data)
        })
        .collect()
}

/// A 4:2:0 Y4M file of [`moving_square_frames`].
pub fn moving_square_y4m(width: usize, height: usize, count: usize, fps: u32) -> Result<Vec<u8>> {
    let square = (width.min(height) / 4).max(1);
    let frames = moving_square_frames(width, height, count, square, 2)?;
    let stream = Y4mStream::from_rgb_frames(&frames, Framerate::new(fps, 1)?, Chroma::C420)?;
    Ok(encode_y4m(&stream))
}

/// Widths of the stand-in encoder outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    pub image: usize,
    pub text: usize,
    pub slow: usize,
    pub fast: usize,
    pub spatial: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            image: 8,
            text: 8,
            slow: 6,
            fast: 2,
            spatial: 4,
        }
    }
}

impl EncoderDims {
    /// Width of the fused vector built from these outputs.
    pub fn fused_dim(&self) -> usize {
        self.image + 2 * self.text + self.slow + self.fast + self.spatial
    }
}

/// Embeddings shaped like the encoder's output for `plan`: one image and two
/// text vectors per sampled frame, one slowfast and one spatial vector per
/// segment. Every vector is `quality` times a fixed direction plus noise
/// seeded by `seed`, so fused features carry the quality signal linearly.
pub fn encoder_outputs(
    video_id: &str,
    plan: &SegmentPlan,
    dims: EncoderDims,
    quality: f64,
    seed: u64,
) -> Result<Vec<EmbeddingRecord>> {
    let mut dir_rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    let frames = plan.all_sampled_frames().len();
    let segments = plan.segment_count();
    let specs = [
        (Modality::Img, frames, dims.image),
        (Modality::Qlt, frames, dims.text),
        (Modality::Art, frames, dims.text),
        (Modality::Slowfast, segments, dims.slow + dims.fast),
        (Modality::Swint, segments, dims.spatial),
    ];
    specs
        .into_iter()
        .map(|(m, count, dim)| {
            let direction: Vec<f64> = (0..dim).map(|_| dir_rng.random_range(-1.0..1.0)).collect();
            let vectors = (0..count)
                .map(|_| {
                    direction
                        .iter()
                        .map(|d| (quality * d + 0.05 * noise.random_range(-1.0..1.0)) as f32)
                        .collect()
                })
                .collect();
            EmbeddingRecord::new(video_id, m, vectors)
        })
        .collect()
}

/// Writes [`encoder_outputs`] as `{id}.{modality}.cvqf` files under `dir`.
pub fn write_encoder_outputs(
    dir: &Path,
    video_id: &str,
    plan: &SegmentPlan,
    dims: EncoderDims,
    quality: f64,
    seed: u64,
) -> Result<()> {
    for r in encoder_outputs(video_id, plan, dims, quality, seed)? {
        write_cvqf(&r, &dir.join(cvqf_file_name(video_id, r.modality)))?;
    }
    Ok(())
}

/// `n` videos with `d` uniform features in [-1, 1] and scores
/// `1 + 4·σ(3·w·x)` for a fixed unit vector `w`, plus uniform noise of
/// amplitude `noise`.
pub fn planted_dataset(n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if d == 0 {
        return Err(Error::InputTooSmall(
            "planted dataset needs features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut ids, mut rows, mut mos) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
        let e = noise * rng.random_range(-1.0..1.0);
        mos.push(1.0 + 4.0 / (1.0 + (-3.0 * s).exp()) + e);
        rows.push(x);
        ids.push(format!("v{i:05}"));
    }
    Dataset::new(ids, rows, mos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::plan_segments;
    use crate::media::decode_y4m;

    #[test]
    fn square_moves() {
        let f = moving_square_frames(16, 16, 3, 4, 2).unwrap();
        assert_eq!(f[0].pixel(0, 0), [240, 230, 220]);
        assert_eq!(f[1].pixel(2, 2), [240, 230, 220]);
        assert_ne!(f[1].pixel(0, 0), [240, 230, 220]);
        assert!(moving_square_frames(4, 4, 1, 5, 1).is_err());
    }

    #[test]
    fn y4m_decodes() {
        let s = decode_y4m(&moving_square_y4m(32, 16, 5, 25).unwrap()).unwrap();
        assert_eq!(
            (s.header.width, s.header.height, s.frames.len()),
            (32, 16, 5)
        );
    }

    #[test]
    fn outputs_match_plan() {
        let plan = plan_segments(10, 4, 8).unwrap();
        let dims = EncoderDims::default();
        let r = encoder_outputs("a", &plan, dims, 0.5, 1).unwrap();
        let counts: Vec<_> = r.iter().map(|r| (r.modality, r.count(), r.dim)).collect();
        let f = plan.all_sampled_frames().len();
        assert_eq!(
            counts,
            [
                (Modality::Img, f, 8),
                (Modality::Qlt, f, 8),
                (Modality::Art, f, 8),
                (Modality::Slowfast, 3, 8),
                (Modality::Swint, 3, 4)
            ]
        );
        assert_eq!(r, encoder_outputs("a", &plan, dims, 0.5, 1).unwrap());
        assert_eq!(dims.fused_dim(), 36);
    }

    #[test]
    fn planted_scores_in_range() {
        let ds = planted_dataset(50, 4, 0.0, 3).unwrap();
        assert_eq!(ds.features.dim(), (50, 4));
        assert!(ds.mos.iter().all(|&m| m > 1.0 && m < 5.0));
    }
}
