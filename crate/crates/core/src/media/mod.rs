//! Frame and metadata ingest.
//!
//! Two input forms are supported: YUV4MPEG2 streams and directories of PNG
//! frames accompanied by a JSON manifest. Both produce a [`VideoClip`] of
//! interleaved 8-bit RGB frames.

mod frame_dir;
mod y4m;

pub use frame_dir::{load_frame_dir, read_png, write_png, FrameManifest};
pub use y4m::{
    decode_y4m, encode_y4m, load_y4m, rgb_to_yuv_bt601, yuv_to_rgb_bt601, Chroma, Y4mFrame,
    Y4mHeader, Y4mStream,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of interleaved channels in every [`FrameBuffer`].
pub const CHANNELS: usize = 3;

/// One decoded frame, row-major interleaved RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameBuffer {
    width: usize,
    height: usize,
    frame_index: usize,
    data: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize, frame_index: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InputTooSmall(format!(
                "frame must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width * height * CHANNELS;
        if data.len() != expected {
            return Err(Error::InvalidData(format!(
                "frame {width}x{height} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(FrameBuffer {
            width,
            height,
            frame_index,
            data,
        })
    }

    /// A frame where every channel of every pixel is `rgb`.
    pub fn filled(width: usize, height: usize, frame_index: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * CHANNELS)
            .collect();
        Self::new(width, height, frame_index, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = (y * self.width + x) * CHANNELS;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn same_shape(&self, other: &FrameBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Frame rate as an exact rational number of frames per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framerate {
    pub num: u32,
    pub den: u32,
}

impl Framerate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!(
                "framerate {num}/{den} must be positive"
            )));
        }
        let g = gcd(num, den);
        Ok(Framerate {
            num: num / g,
            den: den / g,
        })
    }

    /// Approximates a decimal rate with millesimal precision, e.g. `29.97`
    /// becomes `2997/100`.
    pub fn from_f64(fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Config(format!(
                "framerate must be positive, got {fps}"
            )));
        }
        let num = (fps * 1000.0).round();
        if num < 1.0 || num > u32::MAX as f64 {
            return Err(Error::Config(format!("framerate {fps} not representable")));
        }
        Self::new(num as u32, 1000)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Container-level facts about a video used for prompt hints and
/// segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMetadata {
    pub width: usize,
    pub height: usize,
    pub framerate: Framerate,
    /// Bits per second. Raw sources have none.
    pub bitrate: Option<f64>,
    pub duration: f64,
    pub frame_count: usize,
    pub source_id: String,
}

impl VideoMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.framerate.num == 0 || self.framerate.den == 0 {
            return Err(Error::Config("framerate must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::InputTooSmall("video has no frames".into()));
        }
        if let Some(b) = self.bitrate {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config(format!(
                    "bitrate must be non-negative, got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// A decoded video: metadata plus its frames in presentation order.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    metadata: VideoMetadata,
    frames: Vec<FrameBuffer>,
}

impl VideoClip {
    pub fn new(metadata: VideoMetadata, frames: Vec<FrameBuffer>) -> Result<Self> {
        metadata.validate()?;
        if frames.len() != metadata.frame_count {
            return Err(Error::InconsistentFrames(format!(
                "metadata declares {} frames, got {}",
                metadata.frame_count,
                frames.len()
            )));
        }
        let first = &frames[0];
        if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
            return Err(Error::InconsistentFrames(format!(
                "frame {} is {}x{}, expected {}x{}",
                bad.frame_index(),
                bad.width(),
                bad.height(),
                first.width(),
                first.height()
            )));
        }
        Ok(VideoClip { metadata, frames })
    }

    pub fn metadata(&self) -> &VideoMetadata {
        &self.metadata
    }

    pub fn frames(&self) -> &[FrameBuffer] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}
