use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};

/// Replacement text for captions that are empty after cleaning.
pub const EMPTY_CAPTION: &str = "no degradation detected";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionEntry {
    /// Frame index the captions describe.
    pub t: usize,
    pub qlt: String,
    pub res: String,
    pub frag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
}

/// Captions for one video, serialized as `captions.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub video_id: String,
    pub entries: Vec<CaptionEntry>,
}

impl CaptionRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.entries.windows(2).find(|w| w[0].t >= w[1].t) {
            return Err(Error::InvalidData(format!(
                "{}: frame indices not increasing at t={}",
                self.video_id, w[1].t
            )));
        }
        for e in &self.entries {
            let texts = [
                Some(&e.qlt),
                Some(&e.res),
                Some(&e.frag),
                e.content.as_ref(),
            ];
            if texts.iter().flatten().any(|s| s.trim().is_empty()) {
                return Err(Error::InvalidData(format!(
                    "{}: empty caption at t={}",
                    self.video_id, e.t
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: CaptionRecord = read_json(path)?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits after each `.`, `!` or `?`, keeping the terminator.
fn sentences(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            out.push(s[start..i + c.len_utf8()].trim());
            start = i + c.len_utf8();
        }
    }
    out.push(s[start..].trim());
    out.retain(|x| !x.is_empty());
    out
}

fn clean_once(raw: &str, prompt: Option<&str>) -> String {
    let mut text = normalize_ws(raw);
    if let Some(p) = prompt.map(normalize_ws).filter(|p| !p.is_empty()) {
        while let Some(rest) = text.strip_prefix(p.as_str()) {
            text = rest.trim_start().to_string();
        }
    }
    let mut seen: Vec<&str> = Vec::new();
    for s in sentences(&text) {
        if !seen.contains(&s) {
            seen.push(s);
        }
    }
    seen.join(" ")
}

/// Normalizes generator output: collapses whitespace, strips an echo of the
/// prompt, and drops repeated sentences. Empty results become
/// [`EMPTY_CAPTION`]. Idempotent for a fixed prompt.
pub fn clean_caption(raw: &str, prompt: Option<&str>) -> String {
    if normalize_ws(raw) == EMPTY_CAPTION {
        return EMPTY_CAPTION.to_string();
    }
    let mut current = clean_once(raw, prompt);
    loop {
        let next = clean_once(&current, prompt);
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        EMPTY_CAPTION.to_string()
    } else {
        current
    }
}
