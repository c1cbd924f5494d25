//! Segmentation and multimodal feature fusion.
//!
//! A video of `N` frames is cut into `M = ceil(N / r)` segments starting at
//! `t_i = i * r`, each `T` frames long; segments running past the end repeat
//! the last frame. Within each segment the semantic embeddings of the
//! half-rate sampled frames are average-pooled and concatenated
//! (`[img ‖ qlt ‖ art]`), the temporal vector is the concatenated slow/fast
//! pathway features and the spatial vector is taken as is. The per-segment
//! triples are averaged over all segments and concatenated into the final
//! multimodal feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EmbeddingRecord, Modality};
use crate::media::Framerate;

/// Default segment length in frames.
pub const DEFAULT_SEGMENT_LENGTH: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    /// Number of trailing replicas of the last frame.
    pub padded_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub stride: usize,
    pub length: usize,
    pub frame_count: usize,
    pub segments: Vec<Segment>,
}

/// One segment per second of video.
pub fn default_stride(framerate: Framerate) -> usize {
    (framerate.as_f64().round() as usize).max(1)
}

pub fn plan_segments(frame_count: usize, stride: usize, length: usize) -> Result<SegmentPlan> {
    if frame_count == 0 || stride == 0 || length == 0 {
        return Err(Error::InputTooSmall(format!(
            "cannot segment {frame_count} frames with stride {stride} and length {length}"
        )));
    }
    let m = frame_count.div_ceil(stride);
    let segments = (0..m)
        .map(|i| {
            let start = i * stride;
            let real = (frame_count - start).min(length);
            Segment {
                start,
                padded_count: length - real,
            }
        })
        .collect();
    Ok(SegmentPlan {
        stride,
        length,
        frame_count,
        segments,
    })
}

impl SegmentPlan {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// The `T` source frame indices of segment `i`, padding included.
    pub fn frame_indices(&self, i: usize) -> Vec<usize> {
        let start = self.segments[i].start;
        let last = self.frame_count - 1;
        (start..start + self.length).map(|f| f.min(last)).collect()
    }

    /// Source frame indices of the half-rate samples of segment `i`.
    pub fn sampled_frames(&self, i: usize) -> Vec<usize> {
        let frames = self.frame_indices(i);
        sample_half_rate(frames.len())
            .into_iter()
            .map(|k| frames[k])
            .collect()
    }

    /// Sorted, de-duplicated union of every segment's sampled frames. An
    /// encoder emits one semantic vector per entry, in this order.
    pub fn all_sampled_frames(&self) -> Vec<usize> {
        let mut all: Vec<usize> = (0..self.segment_count())
            .flat_map(|i| self.sampled_frames(i))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Positions `0, 2, 4, …` within a segment of `len` frames.
pub fn sample_half_rate(len: usize) -> Vec<usize> {
    (0..len).step_by(2).collect()
}

/// Element-wise mean.
pub fn gap_pool<V, T>(vectors: &[V]) -> Result<Vec<f64>>
where
    V: AsRef<[T]>,
    T: Copy + Into<f64>,
{
    let first = vectors
        .first()
        .ok_or_else(|| Error::InputTooSmall("cannot pool zero vectors".into()))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Dim(format!(
                "pooling length {} with length {dim}",
                v.len()
            )));
        }
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x.into();
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::Dim(format!(
            "{what} has length {}, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

/// `[img ‖ qlt ‖ art]`, of length `image_dim + 2 * text_dim`.
pub fn fuse_semantic(
    img: &[f64],
    qlt: &[f64],
    art: &[f64],
    image_dim: usize,
    text_dim: usize,
) -> Result<Vec<f64>> {
    check_len("image embedding", img, image_dim)?;
    check_len("quality embedding", qlt, text_dim)?;
    check_len("artifact embedding", art, text_dim)?;
    Ok([img, qlt, art].concat())
}

/// `[slow ‖ fast]`, of length `slow_dim + fast_dim`.
pub fn fuse_temporal(
    slow: &[f64],
    fast: &[f64],
    slow_dim: usize,
    fast_dim: usize,
) -> Result<Vec<f64>> {
    check_len("slow pathway feature", slow, slow_dim)?;
    check_len("fast pathway feature", fast, fast_dim)?;
    Ok([slow, fast].concat())
}

/// Semantic, temporal and spatial features of one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFeatures {
    pub semantic: Vec<f64>,
    pub temporal: Vec<f64>,
    pub spatial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeature {
    pub semantic: Vec<f64>,
    pub temporal: Vec<f64>,
    pub spatial: Vec<f64>,
    /// `[semantic ‖ temporal ‖ spatial]`.
    pub multimodal: Vec<f64>,
}

impl FusedFeature {
    /// Component lengths `(semantic, temporal, spatial)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.semantic.len(), self.temporal.len(), self.spatial.len())
    }

    pub fn to_record(&self, video_id: &str) -> Result<EmbeddingRecord> {
        let v = self.multimodal.iter().map(|&x| x as f32).collect();
        EmbeddingRecord::new(video_id, Modality::Fused, vec![v])
    }
}

/// Averages each component over segments and concatenates the results.
pub fn aggregate_video(segments: &[SegmentFeatures]) -> Result<FusedFeature> {
    let first = segments
        .first()
        .ok_or_else(|| Error::InputTooSmall("no segments to aggregate".into()))?;
    let dims = (
        first.semantic.len(),
        first.temporal.len(),
        first.spatial.len(),
    );
    if let Some(i) = segments
        .iter()
        .position(|s| (s.semantic.len(), s.temporal.len(), s.spatial.len()) != dims)
    {
        return Err(Error::Dim(format!(
            "segment {i} has different component sizes"
        )));
    }
    let semantic = gap_pool(&segments.iter().map(|s| &s.semantic[..]).collect::<Vec<_>>())?;
    let temporal = gap_pool(&segments.iter().map(|s| &s.temporal[..]).collect::<Vec<_>>())?;
    let spatial = gap_pool(&segments.iter().map(|s| &s.spatial[..]).collect::<Vec<_>>())?;
    let multimodal = [&semantic[..], &temporal[..], &spatial[..]].concat();
    Ok(FusedFeature {
        semantic,
        temporal,
        spatial,
        multimodal,
    })
}

/// Encoder outputs for one video.
///
/// Semantic records hold one vector per entry of
/// [`SegmentPlan::all_sampled_frames`]; `slowfast` and `swint` hold one
/// vector per segment.
#[derive(Clone, Debug)]
pub struct VideoEmbeddings {
    pub img: EmbeddingRecord,
    pub qlt: EmbeddingRecord,
    pub art: EmbeddingRecord,
    pub slowfast: EmbeddingRecord,
    pub swint: EmbeddingRecord,
    /// `[slow, fast]` widths inside each `slowfast` vector, when known.
    pub temporal_split: Option<[usize; 2]>,
}

fn expect_count(r: &EmbeddingRecord, want: usize, what: &str) -> Result<()> {
    if r.count() != want {
        return Err(Error::Dim(format!(
            "{}/{}: {} vectors, expected {want} ({what})",
            r.video_id,
            r.modality,
            r.count()
        )));
    }
    Ok(())
}

pub fn fuse_video(emb: &VideoEmbeddings, plan: &SegmentPlan) -> Result<FusedFeature> {
    let sampled = plan.all_sampled_frames();
    for r in [&emb.img, &emb.qlt, &emb.art] {
        expect_count(r, sampled.len(), "one per sampled frame")?;
    }
    for r in [&emb.slowfast, &emb.swint] {
        expect_count(r, plan.segment_count(), "one per segment")?;
    }
    let text_dim = emb.qlt.dim;
    if emb.art.dim != text_dim {
        return Err(Error::Dim(format!(
            "quality and artifact embeddings differ in width ({} vs {})",
            text_dim, emb.art.dim
        )));
    }
    if let Some([s, f]) = emb.temporal_split {
        if s + f != emb.slowfast.dim {
            return Err(Error::Dim(format!(
                "slowfast width {} does not split into {s} + {f}",
                emb.slowfast.dim
            )));
        }
    }

    let pick = |r: &EmbeddingRecord, frames: &[usize]| -> Result<Vec<f64>> {
        let rows: Vec<&[f32]> = frames
            .iter()
            .map(|f| &r.vectors[sampled.binary_search(f).expect("sampled frame")][..])
            .collect();
        gap_pool(&rows)
    };

    let segments = (0..plan.segment_count())
        .map(|i| {
            let frames = plan.sampled_frames(i);
            let semantic = fuse_semantic(
                &pick(&emb.img, &frames)?,
                &pick(&emb.qlt, &frames)?,
                &pick(&emb.art, &frames)?,
                emb.img.dim,
                text_dim,
            )?;
            let tm: Vec<f64> = emb.slowfast.vectors[i].iter().map(|&x| x as f64).collect();
            let temporal = match emb.temporal_split {
                Some([s, f]) => fuse_temporal(&tm[..s], &tm[s..], s, f)?,
                None => tm,
            };
            let spatial = emb.swint.vectors[i].iter().map(|&x| x as f64).collect();
            Ok(SegmentFeatures {
                semantic,
                temporal,
                spatial,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_video(&segments)
}
