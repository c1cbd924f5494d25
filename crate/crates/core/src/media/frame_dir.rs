use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FrameBuffer, Framerate, VideoClip, VideoMetadata, CHANNELS};
use crate::error::{read_file, read_json, write_file, Error, Result};

/// Sidecar JSON describing a PNG frame directory.
///
/// `frames` optionally fixes the frame order; otherwise every `*.png` in the
/// directory is used in lexicographic file-name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub framerate: Option<f64>,
    #[serde(default)]
    pub bitrate: Option<f64>,
    #[serde(default)]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<String>>,
}

pub fn load_frame_dir(dir: &Path, manifest: &Path) -> Result<VideoClip> {
    let m: FrameManifest = read_json(manifest)?;
    let fps = m
        .framerate
        .ok_or_else(|| Error::Config(format!("{}: missing framerate", manifest.display())))?;
    let framerate = Framerate::from_f64(fps)?;

    let paths: Vec<PathBuf> = match &m.frames {
        Some(names) => names.iter().map(|n| dir.join(n)).collect(),
        None => {
            let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            found.sort();
            found
        }
    };
    if paths.is_empty() {
        return Err(Error::InputTooSmall(format!(
            "{}: no PNG frames",
            dir.display()
        )));
    }

    let mut frames = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let frame = read_png(p, i)?;
        if let Some(first) = frames.first() {
            if !frame.same_shape(first) {
                let first: &FrameBuffer = first;
                return Err(Error::InconsistentFrames(format!(
                    "{} is {}x{}, first frame is {}x{}",
                    p.display(),
                    frame.width(),
                    frame.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        frames.push(frame);
    }

    let source_id = m.source_id.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let metadata = VideoMetadata {
        width: frames[0].width(),
        height: frames[0].height(),
        framerate,
        bitrate: m.bitrate,
        duration: frames.len() as f64 / framerate.as_f64(),
        frame_count: frames.len(),
        source_id,
    };
    VideoClip::new(metadata, frames)
}

/// Decodes a PNG of any color type into RGB8, dropping alpha.
pub fn read_png(path: &Path, frame_index: usize) -> Result<FrameBuffer> {
    let bytes = read_file(path)?;
    let png_err = |e: png::DecodingError| Error::Png(format!("{}: {e}", path.display()));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);

    let data = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|px| [px[0], px[0], px[0]])
            .collect(),
        png::ColorType::Indexed => {
            return Err(Error::Png(format!(
                "{}: palette was not expanded",
                path.display()
            )))
        }
    };
    FrameBuffer::new(w, h, frame_index, data)
}

/// Writes interleaved RGB8 pixels as a PNG.
pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height * CHANNELS);
    let png_err = |e: png::EncodingError| Error::Png(format!("{}: {e}", path.display()));
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(rgb).map_err(png_err)?;
    }
    write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(dir: &Path, name: &str, w: usize, h: usize, v: u8) {
        write_png(&dir.join(name), w, h, &vec![v; w * h * 3]).unwrap();
    }

    #[test]
    fn three_frames_no_bitrate() {
        let tmp = tempfile::tempdir().unwrap();
        for (i, name) in ["b.png", "a.png", "c.png"].iter().enumerate() {
            solid(tmp.path(), name, 16, 16, i as u8 * 10);
        }
        let manifest = tmp.path().join("manifest.json");
        std::fs::write(&manifest, r#"{"framerate": 30}"#).unwrap();
        let clip = load_frame_dir(tmp.path(), &manifest).unwrap();
        assert_eq!(clip.frame_count(), 3);
        assert_eq!(clip.metadata().bitrate, None);
        // lexicographic: a (10), b (0), c (20)
        assert_eq!(clip.frames()[0].data()[0], 10);
        assert_eq!(clip.frames()[1].data()[0], 0);
    }

    #[test]
    fn manifest_order_wins() {
        let tmp = tempfile::tempdir().unwrap();
        solid(tmp.path(), "a.png", 4, 4, 1);
        solid(tmp.path(), "b.png", 4, 4, 2);
        let manifest = tmp.path().join("m.json");
        std::fs::write(
            &manifest,
            r#"{"framerate": 25, "bitrate": 1000000, "source_id": "x", "frames": ["b.png", "a.png"]}"#,
        )
        .unwrap();
        let clip = load_frame_dir(tmp.path(), &manifest).unwrap();
        assert_eq!(clip.frames()[0].data()[0], 2);
        assert_eq!(clip.metadata().bitrate, Some(1e6));
        assert_eq!(clip.metadata().source_id, "x");
    }

    #[test]
    fn mixed_sizes() {
        let tmp = tempfile::tempdir().unwrap();
        solid(tmp.path(), "0.png", 16, 16, 0);
        solid(tmp.path(), "1.png", 32, 32, 0);
        let manifest = tmp.path().join("m.json");
        std::fs::write(&manifest, r#"{"framerate": 30}"#).unwrap();
        assert!(matches!(
            load_frame_dir(tmp.path(), &manifest),
            Err(Error::InconsistentFrames(_))
        ));
    }

    #[test]
    fn missing_framerate() {
        let tmp = tempfile::tempdir().unwrap();
        solid(tmp.path(), "0.png", 4, 4, 0);
        let manifest = tmp.path().join("m.json");
        std::fs::write(&manifest, r#"{"bitrate": null, "source_id": "v"}"#).unwrap();
        assert!(matches!(
            load_frame_dir(tmp.path(), &manifest),
            Err(Error::Config(_))
        ));
    }
}
