//! Interchange formats between the encoder process and the pipeline:
//! CVQF embedding files, caption records and the dataset manifest.

mod captions;
mod cvqf;
mod manifest;

pub use captions::{clean_caption, CaptionEntry, CaptionRecord, EMPTY_CAPTION};
pub use cvqf::{
    cvqf_file_name, decode_cvqf, encode_cvqf, read_cvqf, write_cvqf, EmbeddingRecord, Modality,
};
pub use manifest::{DatasetManifest, ManifestEntry};
