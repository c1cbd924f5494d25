//! Quality-aware captioning prompts built from container metadata.
//!
//! Resolution, bitrate and frame rate are each bucketed into a quality level
//! by a threshold table; every bucket carries a short descriptive hint. The
//! hints are substituted into prompt templates with `{slot}` placeholders.
//!
//! In training mode the quality prompt also carries a coarse quality level
//! quantized from the ground-truth score. In prediction mode that slot gets
//! a neutral placeholder, and no prompt ever contains a numeric score.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_json, Error, Result};
use crate::media::VideoMetadata;

const DEFAULT_THRESHOLDS: &str = include_str!("../assets/thresholds.json");
const DEFAULT_QUALITY: &str = include_str!("../assets/templates/quality.txt");
const DEFAULT_FRAGMENT: &str = include_str!("../assets/templates/fragment.txt");
const DEFAULT_RESIDUAL: &str = include_str!("../assets/templates/residual.txt");
const DEFAULT_CONTENT: &str = include_str!("../assets/templates/content.txt");

/// Text substituted for the level slot in prediction mode.
pub const PREDICT_PLACEHOLDER: &str = "undetermined";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Resolution,
    Bitrate,
    Framerate,
}

/// Breakpoints for one metadata dimension. Bucket `i` is the half-open
/// interval `[breaks[i-1], breaks[i])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintTable {
    pub breaks: Vec<f64>,
    pub hints: Vec<String>,
}

impl HintTable {
    /// Bucket index of `value`.
    pub fn level_of(&self, value: f64) -> usize {
        self.breaks.partition_point(|&b| b <= value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintThresholds {
    #[serde(default)]
    pub version: u32,
    pub level_labels: Vec<String>,
    /// Keyed on the shorter frame side, so portrait video is treated like
    /// its landscape equivalent.
    pub resolution: HintTable,
    /// Bits per second.
    pub bitrate: HintTable,
    /// Frames per second.
    pub framerate: HintTable,
}

impl Default for HintThresholds {
    fn default() -> Self {
        let t: HintThresholds =
            serde_json::from_str(DEFAULT_THRESHOLDS).expect("bundled thresholds parse");
        t.validate().expect("bundled thresholds are valid");
        t
    }
}

impl HintThresholds {
    pub fn load(path: &Path) -> Result<Self> {
        let t: HintThresholds = read_json(path)?;
        t.validate()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.level_labels.len();
        if n < 2 {
            return Err(Error::Config("need at least two level labels".into()));
        }
        for (name, table) in self.tables() {
            if table.breaks.len() + 1 != n {
                return Err(Error::Config(format!(
                    "{name:?}: {} breakpoints for {n} levels",
                    table.breaks.len()
                )));
            }
            if table.hints.len() != n {
                return Err(Error::Config(format!(
                    "{name:?}: {} hints for {n} levels",
                    table.hints.len()
                )));
            }
            if table.breaks.iter().any(|b| !b.is_finite())
                || table.breaks.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::Config(format!(
                    "{name:?}: breakpoints must be finite and strictly increasing"
                )));
            }
        }
        Ok(())
    }

    fn tables(&self) -> [(Dimension, &HintTable); 3] {
        [
            (Dimension::Resolution, &self.resolution),
            (Dimension::Bitrate, &self.bitrate),
            (Dimension::Framerate, &self.framerate),
        ]
    }

    pub fn level_count(&self) -> usize {
        self.level_labels.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub level: usize,
    pub label: String,
    pub text: String,
}

pub type Hints = BTreeMap<Dimension, Hint>;

/// Buckets each available metadata dimension. A missing bitrate omits that
/// dimension.
pub fn classify_metadata(meta: &VideoMetadata, thresholds: &HintThresholds) -> Hints {
    let mut values = vec![
        (Dimension::Resolution, meta.width.min(meta.height) as f64),
        (Dimension::Framerate, meta.framerate.as_f64()),
    ];
    if let Some(b) = meta.bitrate {
        values.push((Dimension::Bitrate, b));
    }
    values
        .into_iter()
        .map(|(dim, v)| {
            let table = match dim {
                Dimension::Resolution => &thresholds.resolution,
                Dimension::Bitrate => &thresholds.bitrate,
                Dimension::Framerate => &thresholds.framerate,
            };
            let level = table.level_of(v);
            let hint = Hint {
                level,
                label: thresholds.level_labels[level].clone(),
                text: table.hints[level].clone(),
            };
            (dim, hint)
        })
        .collect()
}

/// Uniformly quantizes `mos` on `[min, max]` into `levels` buckets; `max`
/// itself lands in the top bucket.
pub fn mos_to_level(mos: f64, (min, max): (f64, f64), levels: usize) -> Result<usize> {
    if !(min < max) || levels == 0 {
        return Err(Error::Config(format!(
            "invalid score scale ({min}, {max}) with {levels} levels"
        )));
    }
    if !(min..=max).contains(&mos) {
        return Err(Error::Range(format!("score {mos} outside [{min}, {max}]")));
    }
    let bucket = ((mos - min) * levels as f64 / (max - min)).floor() as usize;
    Ok(bucket.min(levels - 1))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PromptMode {
    /// Carries the quantized quality label.
    Train(String),
    Predict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplates {
    pub quality: String,
    pub fragment: String,
    pub residual: String,
    pub content: Option<String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            quality: DEFAULT_QUALITY.trim_end().to_string(),
            fragment: DEFAULT_FRAGMENT.trim_end().to_string(),
            residual: DEFAULT_RESIDUAL.trim_end().to_string(),
            content: Some(DEFAULT_CONTENT.trim_end().to_string()),
        }
    }
}

impl PromptTemplates {
    /// Reads `quality.txt`, `fragment.txt`, `residual.txt` and, if present,
    /// `content.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            std::fs::read_to_string(&p)
                .map(|s| s.trim_end().to_string())
                .map_err(|e| Error::Config(format!("template {}: {e}", p.display())))
        };
        let content_path = dir.join("content.txt");
        let t = PromptTemplates {
            quality: read("quality.txt")?,
            fragment: read("fragment.txt")?,
            residual: read("residual.txt")?,
            content: if content_path.exists() {
                Some(read("content.txt")?)
            } else {
                None
            },
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut all = vec![&self.quality, &self.fragment, &self.residual];
        all.extend(self.content.as_ref());
        for t in all {
            for slot in slots(t)? {
                if !SLOTS.contains(&slot) {
                    return Err(Error::Config(format!("unknown template slot {{{slot}}}")));
                }
            }
        }
        if !slots(&self.quality)?.contains(&"level") {
            return Err(Error::Config("quality template has no {level} slot".into()));
        }
        Ok(())
    }
}

const SLOTS: [&str; 5] = [
    "hints",
    "resolution_hint",
    "bitrate_hint",
    "framerate_hint",
    "level",
];

fn slots(template: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        if rest[open..].starts_with("{{") || rest[open..].starts_with("}}") {
            rest = &rest[open + 2..];
            continue;
        }
        if rest.as_bytes()[open] == b'}' {
            return Err(Error::Config("unbalanced '}' in template".into()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Config("unterminated '{' in template".into()))?;
        out.push(&rest[open + 1..open + close]);
        rest = &rest[open + close + 1..];
    }
    Ok(out)
}

fn render(template: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 128);
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        // Templates are validated before rendering.
        let close = tail.find('}').unwrap_or(tail.len() - 1);
        if let Some(v) = values.get(&tail[1..close]) {
            out.push_str(v);
        }
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    // An empty slot leaves a double space behind.
    out.split(' ')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// The instantiated prompts for one video. Serialized as `prompts.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PromptSetRepr", into = "PromptSetRepr")]
pub struct PromptSet {
    pub qlt: String,
    pub res: String,
    pub frag: String,
    pub content: Option<String>,
    pub mode: PromptMode,
}

#[derive(Serialize, Deserialize)]
struct PromptSetRepr {
    qlt: String,
    res: String,
    frag: String,
    content: Option<String>,
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<String>,
}

impl From<PromptSet> for PromptSetRepr {
    fn from(p: PromptSet) -> Self {
        let (mode, level) = match p.mode {
            PromptMode::Train(l) => ("train".to_string(), Some(l)),
            PromptMode::Predict => ("predict".to_string(), None),
        };
        PromptSetRepr {
            qlt: p.qlt,
            res: p.res,
            frag: p.frag,
            content: p.content,
            mode,
            level,
        }
    }
}

impl TryFrom<PromptSetRepr> for PromptSet {
    type Error = String;

    fn try_from(r: PromptSetRepr) -> std::result::Result<Self, String> {
        let mode = match (r.mode.as_str(), r.level) {
            ("predict", None) => PromptMode::Predict,
            ("train", Some(l)) => PromptMode::Train(l),
            (m, l) => return Err(format!("invalid mode {m:?} with level {l:?}")),
        };
        Ok(PromptSet {
            qlt: r.qlt,
            res: r.res,
            frag: r.frag,
            content: r.content,
            mode,
        })
    }
}

pub fn build_prompts(
    hints: &Hints,
    mode: &PromptMode,
    templates: &PromptTemplates,
) -> Result<PromptSet> {
    templates.validate()?;
    let text = |d: Dimension| hints.get(&d).map(|h| h.text.clone()).unwrap_or_default();
    let joined = [
        Dimension::Resolution,
        Dimension::Bitrate,
        Dimension::Framerate,
    ]
    .iter()
    .filter_map(|d| hints.get(d).map(|h| h.text.as_str()))
    .collect::<Vec<_>>()
    .join(" ");
    let level = match mode {
        PromptMode::Train(label) => label.clone(),
        PromptMode::Predict => PREDICT_PLACEHOLDER.to_string(),
    };
    let values: BTreeMap<&str, String> = [
        ("hints", joined),
        ("resolution_hint", text(Dimension::Resolution)),
        ("bitrate_hint", text(Dimension::Bitrate)),
        ("framerate_hint", text(Dimension::Framerate)),
        ("level", level),
    ]
    .into_iter()
    .collect();
    Ok(PromptSet {
        qlt: render(&templates.quality, &values),
        res: render(&templates.residual, &values),
        frag: render(&templates.fragment, &values),
        content: templates.content.as_ref().map(|c| render(c, &values)),
        mode: mode.clone(),
    })
}

/// Lower-cased alphanumeric words of `text`.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Framerate;
    use proptest::prelude::*;

    fn meta(height: usize, fps: f64, bitrate: Option<f64>) -> VideoMetadata {
        VideoMetadata {
            width: height * 16 / 9,
            height,
            framerate: Framerate::from_f64(fps).unwrap(),
            bitrate,
            duration: 10.0,
            frame_count: 300,
            source_id: "v".into(),
        }
    }

    fn level_tokens(text: &str, t: &HintThresholds) -> Vec<String> {
        tokens(text)
            .filter(|w| t.level_labels.contains(w))
            .collect()
    }

    #[test]
    fn top_level_everywhere() {
        let t = HintThresholds::default();
        let hints = classify_metadata(&meta(2160, 60.0, Some(20e6)), &t);
        assert_eq!(hints.len(), 3);
        assert!(hints
            .values()
            .all(|h| h.level == 4 && h.label == "excellent"));
    }

    #[test]
    fn bitrate_absent() {
        let hints = classify_metadata(&meta(720, 30.0, None), &HintThresholds::default());
        assert_eq!(
            hints.keys().copied().collect::<Vec<_>>(),
            [Dimension::Resolution, Dimension::Framerate]
        );
    }

    #[test]
    fn breakpoint_goes_up() {
        let t = HintThresholds::default();
        assert_eq!(
            classify_metadata(&meta(1080, 30.0, None), &t)[&Dimension::Resolution].level,
            3
        );
        assert_eq!(
            classify_metadata(&meta(1079, 30.0, None), &t)[&Dimension::Resolution].level,
            2
        );
        assert_eq!(t.framerate.level_of(28.0), 2);
        assert_eq!(t.bitrate.level_of(499_999.0), 0);
    }

    #[test]
    fn invalid_tables() {
        let mut t = HintThresholds::default();
        t.bitrate.breaks = vec![1.0, 3.0, 2.0, 4.0];
        assert!(t.validate().is_err());
        let mut t = HintThresholds::default();
        t.framerate.breaks.pop();
        assert!(t.validate().is_err());
    }

    #[test]
    fn mos_levels() {
        assert_eq!(mos_to_level(5.0, (1.0, 5.0), 5).unwrap(), 4);
        assert_eq!(mos_to_level(1.0, (1.0, 5.0), 5).unwrap(), 0);
        assert_eq!(mos_to_level(2.6, (1.0, 5.0), 5).unwrap(), 2);
        assert!(matches!(
            mos_to_level(5.1, (1.0, 5.0), 5),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            mos_to_level(0.9, (1.0, 5.0), 5),
            Err(Error::Range(_))
        ));
        assert!(mos_to_level(1.0, (5.0, 1.0), 5).is_err());
    }

    #[test]
    fn predict_has_no_level_token() {
        let t = HintThresholds::default();
        for h in [240, 480, 720, 1080, 2160] {
            for fps in [15.0, 24.0, 30.0, 50.0, 60.0] {
                for b in [None, Some(1e5), Some(1e6), Some(4e6), Some(1e7), Some(3e7)] {
                    let hints = classify_metadata(&meta(h, fps, b), &t);
                    let p =
                        build_prompts(&hints, &PromptMode::Predict, &PromptTemplates::default())
                            .unwrap();
                    for text in [&p.qlt, &p.res, &p.frag, p.content.as_ref().unwrap()] {
                        assert!(level_tokens(text, &t).is_empty(), "{text}");
                    }
                }
            }
        }
    }

    #[test]
    fn train_has_exactly_one_level_token() {
        let t = HintThresholds::default();
        let hints = classify_metadata(&meta(480, 25.0, Some(1e6)), &t);
        let p = build_prompts(
            &hints,
            &PromptMode::Train("poor".into()),
            &PromptTemplates::default(),
        )
        .unwrap();
        assert_eq!(level_tokens(&p.qlt, &t), ["poor"]);
    }

    #[test]
    fn modes_differ_only_in_level_slot() {
        let t = HintThresholds::default();
        let hints = classify_metadata(&meta(720, 30.0, Some(3e6)), &t);
        let tpl = PromptTemplates::default();
        let a = build_prompts(&hints, &PromptMode::Predict, &tpl).unwrap();
        let b = build_prompts(&hints, &PromptMode::Train("good".into()), &tpl).unwrap();
        assert_eq!((&a.res, &a.frag, &a.content), (&b.res, &b.frag, &b.content));
        // Word-level diff: exactly one position differs.
        let (wa, wb): (Vec<_>, Vec<_>) = (a.qlt.split(' ').collect(), b.qlt.split(' ').collect());
        assert_eq!(wa.len(), wb.len());
        let diffs: Vec<_> = wa.iter().zip(&wb).filter(|(x, y)| x != y).collect();
        assert_eq!(diffs, [(&"undetermined.", &"good.")]);
    }

    #[test]
    fn prompts_json_shape() {
        let hints = classify_metadata(&meta(720, 30.0, None), &HintThresholds::default());
        let p = build_prompts(&hints, &PromptMode::Predict, &PromptTemplates::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["mode"], "predict");
        assert!(v.get("level").is_none());
        for k in ["qlt", "res", "frag", "content"] {
            assert!(v[k].is_string());
        }
        let back: PromptSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn template_errors() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            PromptTemplates::load_dir(tmp.path()),
            Err(Error::Config(_))
        ));
        std::fs::write(tmp.path().join("quality.txt"), "{level} {nope}").unwrap();
        std::fs::write(tmp.path().join("fragment.txt"), "f").unwrap();
        std::fs::write(tmp.path().join("residual.txt"), "r").unwrap();
        assert!(matches!(
            PromptTemplates::load_dir(tmp.path()),
            Err(Error::Config(_))
        ));
        std::fs::write(tmp.path().join("quality.txt"), "level {level} {{literal}}").unwrap();
        let t = PromptTemplates::load_dir(tmp.path()).unwrap();
        assert_eq!(t.content, None);
        let p = build_prompts(&Hints::new(), &PromptMode::Predict, &t).unwrap();
        assert_eq!(p.qlt, "level undetermined {literal}");
    }

    proptest! {
        #[test]
        fn classification_is_monotone(h in 1usize..5000, dh in 0usize..2000, fps in 1.0f64..120.0, dfps in 0.0f64..60.0, b in 0.0f64..5e7, db in 0.0f64..5e7) {
            let t = HintThresholds::default();
            let lo = classify_metadata(&meta(h, fps, Some(b)), &t);
            let hi = classify_metadata(&meta(h + dh, fps + dfps, Some(b + db)), &t);
            for (d, hint) in &lo {
                prop_assert!(hi[d].level >= hint.level);
            }
        }

        #[test]
        fn prompts_are_deterministic(h in 1usize..5000, fps in 1.0f64..120.0, b in proptest::option::of(1.0f64..5e7)) {
            let t = HintThresholds::default();
            let build = || {
                let hints = classify_metadata(&meta(h, fps, b), &t);
                let p = build_prompts(&hints, &PromptMode::Predict, &PromptTemplates::default()).unwrap();
                serde_json::to_vec(&p).unwrap()
            };
            prop_assert_eq!(build(), build());
        }

    }
}
