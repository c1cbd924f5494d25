//! YUV4MPEG2 reader and writer for 8-bit 4:2:0 and 4:4:4 streams.

use std::path::Path;

use super::{FrameBuffer, Framerate, VideoClip, VideoMetadata, CHANNELS};
use crate::error::{read_file, Error, Result};

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chroma {
    C420,
    C444,
}

impl Chroma {
    fn parse(tag: &str) -> Result<Self> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Chroma::C420),
            "444" => Ok(Chroma::C444),
            other => Err(Error::Parse(format!("unsupported colorspace C{other}"))),
        }
    }

    fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        match self {
            Chroma::C420 => (width / 2, height / 2),
            Chroma::C444 => (width, height),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub framerate: Framerate,
    pub chroma: Chroma,
    /// Header parameters exactly as they appeared, so that re-encoding
    /// reproduces the original header byte for byte.
    pub params: Vec<String>,
}

impl Y4mHeader {
    pub fn new(width: usize, height: usize, framerate: Framerate, chroma: Chroma) -> Result<Self> {
        let tag = match chroma {
            Chroma::C420 => "420jpeg",
            Chroma::C444 => "444",
        };
        let params = vec![
            format!("W{width}"),
            format!("H{height}"),
            format!("F{}:{}", framerate.num, framerate.den),
            "Ip".to_string(),
            "A1:1".to_string(),
            format!("C{tag}"),
        ];
        let header = Y4mHeader {
            width,
            height,
            framerate,
            chroma,
            params,
        };
        header.check_dims()?;
        Ok(header)
    }

    fn check_dims(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parse(format!(
                "invalid dimensions {}x{}",
                self.width, self.height
            )));
        }
        if self.chroma == Chroma::C420 && (self.width % 2 != 0 || self.height % 2 != 0) {
            return Err(Error::Parse(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn plane_sizes(&self) -> (usize, usize) {
        let (cw, ch) = self.chroma.chroma_dims(self.width, self.height);
        (self.width * self.height, cw * ch)
    }

    fn parse(line: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(line)
            .map_err(|_| Error::Parse("header is not valid ASCII".into()))?;
        let mut tokens = text.split(' ');
        if tokens.next().map(str::as_bytes) != Some(MAGIC) {
            return Err(Error::Parse("missing YUV4MPEG2 signature".into()));
        }
        let params: Vec<String> = tokens.filter(|t| !t.is_empty()).map(String::from).collect();
        let (mut width, mut height, mut framerate, mut chroma) = (None, None, None, None);
        for p in &params {
            let first = p.chars().next().map_or(0, char::len_utf8);
            let (key, value) = p.split_at(first);
            match key {
                "W" => width = Some(parse_num::<usize>(value, "width")?),
                "H" => height = Some(parse_num::<usize>(value, "height")?),
                "F" => {
                    let (n, d) = value
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("bad framerate {value:?}")))?;
                    let fr = Framerate::new(parse_num(n, "framerate")?, parse_num(d, "framerate")?)
                        .map_err(|e| Error::Parse(e.to_string()))?;
                    framerate = Some(fr);
                }
                "C" => chroma = Some(Chroma::parse(value)?),
                // Interlacing, aspect ratio and extensions do not affect decoding.
                _ => {}
            }
        }
        let header = Y4mHeader {
            width: width.ok_or_else(|| Error::Parse("missing W".into()))?,
            height: height.ok_or_else(|| Error::Parse("missing H".into()))?,
            framerate: framerate.ok_or_else(|| Error::Parse("missing F".into()))?,
            chroma: chroma.unwrap_or(Chroma::C420),
            params,
        };
        header.check_dims()?;
        Ok(header)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad {what} value {s:?}")))
}

/// Raw planes of one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mFrame {
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mStream {
    pub header: Y4mHeader,
    pub frames: Vec<Y4mFrame>,
}

impl Y4mStream {
    /// Converts every frame to RGB.
    pub fn to_rgb_frames(&self) -> Result<Vec<FrameBuffer>> {
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| frame_to_rgb(&self.header, f, i))
            .collect()
    }

    /// Encodes RGB frames into a stream with the given chroma layout.
    /// 4:2:0 chroma takes the top-left sample of each 2x2 block.
    pub fn from_rgb_frames(
        frames: &[FrameBuffer],
        framerate: Framerate,
        chroma: Chroma,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InputTooSmall("no frames to encode".into()))?;
        let header = Y4mHeader::new(first.width(), first.height(), framerate, chroma)?;
        let (w, h) = (header.width, header.height);
        let (cw, ch) = chroma.chroma_dims(w, h);
        let step = w / cw;
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            if !f.same_shape(first) {
                return Err(Error::InconsistentFrames(format!(
                    "frame {} is {}x{}, expected {w}x{h}",
                    f.frame_index(),
                    f.width(),
                    f.height()
                )));
            }
            let mut y = Vec::with_capacity(w * h);
            let mut u = Vec::with_capacity(cw * ch);
            let mut v = Vec::with_capacity(cw * ch);
            for row in 0..h {
                for col in 0..w {
                    let [yy, uu, vv] = rgb_to_yuv_bt601(f.pixel(col, row));
                    y.push(yy);
                    if row % step == 0 && col % step == 0 {
                        u.push(uu);
                        v.push(vv);
                    }
                }
            }
            out.push(Y4mFrame { y, u, v });
        }
        Ok(Y4mStream {
            header,
            frames: out,
        })
    }
}

fn frame_to_rgb(header: &Y4mHeader, frame: &Y4mFrame, index: usize) -> Result<FrameBuffer> {
    let (w, h) = (header.width, header.height);
    let (cw, _) = header.chroma.chroma_dims(w, h);
    let step = w / cw;
    let mut data = Vec::with_capacity(w * h * CHANNELS);
    for row in 0..h {
        for col in 0..w {
            let ci = (row / step) * cw + col / step;
            data.extend_from_slice(&yuv_to_rgb_bt601(
                frame.y[row * w + col],
                frame.u[ci],
                frame.v[ci],
            ));
        }
    }
    FrameBuffer::new(w, h, index, data)
}

#[inline]
fn round_clamp(x: f64) -> u8 {
    // f64::round rounds half away from zero.
    x.round().clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 YCbCr to RGB.
pub fn yuv_to_rgb_bt601(y: u8, u: u8, v: u8) -> [u8; 3] {
    let y = y as f64;
    let cb = u as f64 - 128.0;
    let cr = v as f64 - 128.0;
    [
        round_clamp(y + 1.402 * cr),
        round_clamp(y - 0.344_136 * cb - 0.714_136 * cr),
        round_clamp(y + 1.772 * cb),
    ]
}

/// Full-range BT.601 RGB to YCbCr.
pub fn rgb_to_yuv_bt601([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    [
        round_clamp(0.299 * r + 0.587 * g + 0.114 * b),
        round_clamp(128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b),
        round_clamp(128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b),
    ]
}

/// Parses a complete YUV4MPEG2 stream held in memory.
pub fn decode_y4m(bytes: &[u8]) -> Result<Y4mStream> {
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("header is not newline-terminated".into()))?;
    let header = Y4mHeader::parse(&bytes[..header_end])?;
    let (luma, chroma) = header.plane_sizes();
    let payload = luma + 2 * chroma;

    let mut pos = header_end + 1;
    let mut frames = Vec::new();
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        let line_end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| {
            Error::TruncatedStream(format!("frame {} header is incomplete", frames.len()))
        })?;
        if !rest[..line_end].starts_with(FRAME_TAG) {
            return Err(Error::Parse(format!("expected FRAME marker at byte {pos}")));
        }
        pos += line_end + 1;
        if bytes.len() - pos < payload {
            return Err(Error::TruncatedStream(format!(
                "frame {} needs {payload} bytes, {} remain",
                frames.len(),
                bytes.len() - pos
            )));
        }
        let data = &bytes[pos..pos + payload];
        frames.push(Y4mFrame {
            y: data[..luma].to_vec(),
            u: data[luma..luma + chroma].to_vec(),
            v: data[luma + chroma..].to_vec(),
        });
        pos += payload;
    }
    Ok(Y4mStream { header, frames })
}

pub fn encode_y4m(stream: &Y4mStream) -> Vec<u8> {
    let (luma, chroma) = stream.header.plane_sizes();
    let mut out = Vec::with_capacity(64 + stream.frames.len() * (6 + luma + 2 * chroma));
    out.extend_from_slice(MAGIC);
    for p in &stream.header.params {
        out.push(b' ');
        out.extend_from_slice(p.as_bytes());
    }
    out.push(b'\n');
    for f in &stream.frames {
        out.extend_from_slice(FRAME_TAG);
        out.push(b'\n');
        out.extend_from_slice(&f.y);
        out.extend_from_slice(&f.u);
        out.extend_from_slice(&f.v);
    }
    out
}

/// Loads a Y4M file as an RGB clip. The source id is the file stem and the
/// bitrate is left unset.
pub fn load_y4m(path: &Path) -> Result<VideoClip> {
    let bytes = read_file(path)?;
    let stream = decode_y4m(&bytes)?;
    if stream.frames.is_empty() {
        return Err(Error::InputTooSmall(format!(
            "{} has no frames",
            path.display()
        )));
    }
    let frames = stream.to_rgb_frames()?;
    let fps = stream.header.framerate;
    let metadata = VideoMetadata {
        width: stream.header.width,
        height: stream.header.height,
        framerate: fps,
        bitrate: None,
        duration: frames.len() as f64 / fps.as_f64(),
        frame_count: frames.len(),
        source_id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    VideoClip::new(metadata, frames)
}
