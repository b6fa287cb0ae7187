//! Labeled motion datasets: manifest loading, validation, shuffling, reports
//! and single-file archives.
//!
//! A motion is stored as a UTF-8 CSV frame file:
//!
//! ```text
//! # sample_rate_hz: 100
//! root_pos,root_rot,joint_pos
//! 3,3,40
//! 0.1,0.2,...
//! ```
//!
//! Optional `#` comment lines come first (only `sample_rate_hz` is
//! interpreted), followed by the channel-name line, the channel-width line
//! and one row per frame. Channels named `segment.<name>` with width 19 carry
//! per-segment dynamics (mass, CoM, CoM velocity, row-major inertia tensor,
//! angular velocity) and are parsed into a [`SegmentBlock`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;
pub const SEGMENT_PREFIX: &str = "segment.";
pub const SEGMENT_WIDTH: usize = 19;
const ARCHIVE_FORMAT: &str = "motionhmm-archive";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub width: usize,
}

impl Channel {
    pub fn new(name: impl Into<String>, width: usize) -> Self {
        Channel {
            name: name.into(),
            width,
        }
    }
}

/// Dynamics of one body segment at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentState {
    pub mass: f64,
    pub com: [f64; 3],
    pub com_vel: [f64; 3],
    pub inertia: [[f64; 3]; 3],
    pub ang_vel: [f64; 3],
}

impl SegmentState {
    fn from_slice(v: &[f64]) -> Self {
        let mut inertia = [[0.0; 3]; 3];
        for (r, row) in inertia.iter_mut().enumerate() {
            row.copy_from_slice(&v[7 + 3 * r..10 + 3 * r]);
        }
        SegmentState {
            mass: v[0],
            com: [v[1], v[2], v[3]],
            com_vel: [v[4], v[5], v[6]],
            inertia,
            ang_vel: [v[16], v[17], v[18]],
        }
    }

    fn to_values(self) -> [f64; SEGMENT_WIDTH] {
        let mut out = [0.0; SEGMENT_WIDTH];
        out[0] = self.mass;
        out[1..4].copy_from_slice(&self.com);
        out[4..7].copy_from_slice(&self.com_vel);
        for r in 0..3 {
            out[7 + 3 * r..10 + 3 * r].copy_from_slice(&self.inertia[r]);
        }
        out[16..19].copy_from_slice(&self.ang_vel);
        out
    }
}

/// Per-frame, per-segment dynamics. `frames[t][i]` is segment `i` at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBlock {
    pub names: Vec<String>,
    pub frames: Vec<Vec<SegmentState>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionRecord {
    pub id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<Channel>,
    pub frames: Array2<f64>,
    pub segments: Option<SegmentBlock>,
}

impl MotionRecord {
    pub fn new(
        id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<Channel>,
        frames: Array2<f64>,
        segments: Option<SegmentBlock>,
    ) -> Result<Self> {
        let record = MotionRecord {
            id: id.into(),
            sample_rate_hz,
            channels,
            frames,
            segments,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("motion `{}`: {msg}", self.id)));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return fail(format!("sample rate {} is not positive", self.sample_rate_hz));
        }
        let mut seen = HashSet::new();
        for c in &self.channels {
            if c.width == 0 {
                return fail(format!("channel `{}` has zero width", c.name));
            }
            if c.name.starts_with(SEGMENT_PREFIX) {
                return fail(format!("channel `{}` uses the reserved segment prefix", c.name));
            }
            if !seen.insert(c.name.as_str()) {
                return fail(format!("duplicate channel `{}`", c.name));
            }
        }
        let width = self.raw_width();
        if self.frames.ncols() != width {
            return fail(format!(
                "frames have {} columns but channels declare {width}",
                self.frames.ncols()
            ));
        }
        if self.frames.nrows() < 2 {
            return fail(format!("{} frames, at least 2 required", self.frames.nrows()));
        }
        if let Some(seg) = &self.segments {
            if seg.frames.len() != self.frames.nrows() {
                return fail("segment block length differs from frame count".into());
            }
            let mut names = HashSet::new();
            for n in &seg.names {
                if !names.insert(n.as_str()) || seen.contains(format!("{SEGMENT_PREFIX}{n}").as_str()) {
                    return fail(format!("duplicate segment `{n}`"));
                }
            }
            for row in &seg.frames {
                if row.len() != seg.names.len() {
                    return fail("segment row has the wrong segment count".into());
                }
                for (name, s) in seg.names.iter().zip(row) {
                    if !(s.mass > 0.0) {
                        return fail(format!("segment `{name}` has non-positive mass"));
                    }
                    let i = &s.inertia;
                    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                        let tol = 1e-9 * i[a][b].abs().max(i[b][a].abs()).max(1.0);
                        if (i[a][b] - i[b][a]).abs() > tol {
                            return fail(format!("segment `{name}` inertia tensor is not symmetric"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn raw_width(&self) -> usize {
        self.channels.iter().map(|c| c.width).sum()
    }

    /// View of the columns belonging to one named channel.
    pub fn channel(&self, name: &str) -> Option<ArrayView2<'_, f64>> {
        let mut offset = 0;
        for c in &self.channels {
            if c.name == name {
                return Some(self.frames.slice(s![.., offset..offset + c.width]));
            }
            offset += c.width;
        }
        None
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.iter().any(|c| c.name == name)
    }

    fn schema(&self) -> (Vec<Channel>, Vec<String>) {
        let segs = self.segments.as_ref().map(|s| s.names.clone()).unwrap_or_default();
        (self.channels.clone(), segs)
    }
}

/// Parses a CSV frame file.
pub fn parse_frames(text: &str, id: &str, path: &Path) -> Result<MotionRecord> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut sample_rate = DEFAULT_SAMPLE_RATE_HZ;
    let mut lines = text.lines().enumerate().peekable();
    while let Some((n, line)) = lines.peek().copied() {
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            break;
        };
        if let Some((key, value)) = comment.split_once(':') {
            if key.trim() == "sample_rate_hz" {
                sample_rate = value
                    .trim()
                    .parse()
                    .map_err(|_| perr(n + 1, format!("bad sample rate `{}`", value.trim())))?;
            }
        }
        lines.next();
    }
    let (n_names, names) = lines
        .next()
        .ok_or_else(|| perr(1, "missing channel-name line".into()))?;
    let (n_widths, widths) = lines
        .next()
        .ok_or_else(|| perr(n_names + 2, "missing channel-width line".into()))?;
    let names: Vec<&str> = names.split(',').map(str::trim).collect();
    let widths: Vec<usize> = widths
        .split(',')
        .map(|w| w.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| perr(n_widths + 1, format!("bad channel width: {e}")))?;
    if names.len() != widths.len() {
        return Err(perr(
            n_widths + 1,
            format!("{} channel names but {} widths", names.len(), widths.len()),
        ));
    }
    let total: usize = widths.iter().sum();
    let mut values = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| perr(n + 1, format!("bad number `{}`", field.trim())))?;
            if !v.is_finite() {
                return Err(perr(n + 1, format!("non-finite value `{}`", field.trim())));
            }
            values.push(v);
        }
        if values.len() - before != total {
            return Err(perr(
                n + 1,
                format!("row has {} values, header declares {total}", values.len() - before),
            ));
        }
        rows += 1;
    }
    let all = Array2::from_shape_vec((rows, total), values).expect("row lengths checked");

    let mut channels = Vec::new();
    let mut keep_cols = Vec::new();
    let mut seg_names = Vec::new();
    let mut seg_cols = Vec::new();
    let mut offset = 0;
    for (name, width) in names.iter().zip(&widths) {
        if let Some(seg) = name.strip_prefix(SEGMENT_PREFIX) {
            if *width != SEGMENT_WIDTH {
                return Err(perr(
                    n_widths + 1,
                    format!("segment channel `{name}` must have width {SEGMENT_WIDTH}"),
                ));
            }
            seg_names.push(seg.to_string());
            seg_cols.push(offset);
        } else {
            channels.push(Channel::new(*name, *width));
            keep_cols.extend(offset..offset + width);
        }
        offset += width;
    }
    let frames = all.select(ndarray::Axis(1), &keep_cols);
    let segments = if seg_names.is_empty() {
        None
    } else {
        let frames = (0..rows)
            .map(|t| {
                seg_cols
                    .iter()
                    .map(|&c| {
                        let row = all.slice(s![t, c..c + SEGMENT_WIDTH]);
                        SegmentState::from_slice(row.as_slice().expect("contiguous row"))
                    })
                    .collect()
            })
            .collect();
        Some(SegmentBlock {
            names: seg_names,
            frames,
        })
    };
    MotionRecord::new(id, sample_rate, channels, frames, segments)
}

/// Canonical CSV text for a record: regular channels first, then segments.
/// Numbers use the shortest representation that parses back to the same bits.
pub fn write_frames(record: &MotionRecord) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "# sample_rate_hz: {}", record.sample_rate_hz).unwrap();
    let mut names: Vec<String> = record.channels.iter().map(|c| c.name.clone()).collect();
    let mut widths: Vec<usize> = record.channels.iter().map(|c| c.width).collect();
    if let Some(seg) = &record.segments {
        for n in &seg.names {
            names.push(format!("{SEGMENT_PREFIX}{n}"));
            widths.push(SEGMENT_WIDTH);
        }
    }
    writeln!(out, "{}", names.join(",")).unwrap();
    writeln!(
        out,
        "{}",
        widths.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    )
    .unwrap();
    for t in 0..record.len() {
        let mut fields: Vec<String> = record.frames.row(t).iter().map(|v| format!("{v:?}")).collect();
        if let Some(seg) = &record.segments {
            for s in &seg.frames[t] {
                fields.extend(s.to_values().iter().map(|v| format!("{v:?}")));
            }
        }
        writeln!(out, "{}", fields.join(",")).unwrap();
    }
    out
}

pub fn read_motion_file(path: &Path, id: &str) -> Result<MotionRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frames(&text, id, path)
}

pub fn write_motion_file(record: &MotionRecord, path: &Path) -> Result<()> {
    std::fs::write(path, write_frames(record)).map_err(|e| Error::io(path, e))
}

/// Sorted, duplicate-free label names.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for LabelVocabulary {
    fn from(labels: Vec<String>) -> Self {
        LabelVocabulary::new(labels)
    }
}

impl From<LabelVocabulary> for Vec<String> {
    fn from(v: LabelVocabulary) -> Self {
        v.labels
    }
}

impl LabelVocabulary {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let labels: Vec<String> = set.into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        LabelVocabulary { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn encode<S: AsRef<str>>(&self, names: &[S]) -> Result<LabelVector> {
        let mut bits = vec![false; self.len()];
        for n in names {
            let i = self
                .position(n.as_ref())
                .ok_or_else(|| Error::Validation(format!("unknown label `{}`", n.as_ref())))?;
            bits[i] = true;
        }
        Ok(LabelVector::new(bits))
    }

    pub fn decode(&self, labels: &LabelVector) -> Vec<String> {
        labels
            .bits()
            .iter()
            .zip(&self.labels)
            .filter(|(b, _)| **b)
            .map(|(_, l)| l.clone())
            .collect()
    }
}

/// Binary label vector aligned to a [`LabelVocabulary`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector {
    bits: Vec<bool>,
}

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        LabelVector { bits }
    }

    pub fn zeros(len: usize) -> Self {
        LabelVector { bits: vec![false; len] }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut bits = vec![false; len];
        bits[index] = true;
        LabelVector { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: MotionRecord,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub vocabulary: LabelVocabulary,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    file: PathBuf,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Archive {
    format: String,
    version: u32,
    vocabulary: Vec<String>,
    samples: Vec<ArchiveSample>,
}

#[derive(Serialize, Deserialize)]
struct ArchiveSample {
    id: String,
    labels: Vec<String>,
    frames: String,
}

impl Dataset {
    /// Builds a dataset from `(record, label names)` pairs; the vocabulary is
    /// the sorted union of all labels.
    pub fn from_labeled<S: AsRef<str>>(items: Vec<(MotionRecord, Vec<S>)>) -> Result<Self> {
        let vocabulary = LabelVocabulary::new(items.iter().flat_map(|(_, l)| l.iter().map(|s| s.as_ref().to_string())));
        let mut samples = Vec::with_capacity(items.len());
        for (record, labels) in items {
            if labels.is_empty() {
                return Err(Error::Validation(format!("motion `{}` has no labels", record.id)));
            }
            let labels = vocabulary.encode(&labels)?;
            samples.push(Sample { record, labels });
        }
        let dataset = Dataset { vocabulary, samples };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Checks cross-sample invariants: unique ids, one channel schema, labels present.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.record.id.as_str()) {
                return Err(Error::Validation(format!("duplicate motion id `{}`", s.record.id)));
            }
            if s.labels.len() != self.vocabulary.len() {
                return Err(Error::Validation(format!(
                    "motion `{}` label vector has length {}, vocabulary has {}",
                    s.record.id,
                    s.labels.len(),
                    self.vocabulary.len()
                )));
            }
            if s.labels.count_ones() == 0 {
                return Err(Error::Validation(format!("motion `{}` has no labels", s.record.id)));
            }
        }
        if let Some(first) = self.samples.first() {
            let (ch0, seg0) = first.record.schema();
            for s in &self.samples[1..] {
                let (ch, seg) = s.record.schema();
                if ch != ch0 || seg != seg0 {
                    let describe = |c: &[Channel]| -> BTreeSet<String> {
                        c.iter().map(|c| format!("{}[{}]", c.name, c.width)).collect()
                    };
                    let a = describe(&ch0);
                    let b = describe(&ch);
                    let mut diff: Vec<String> = a.symmetric_difference(&b).cloned().collect();
                    if seg != seg0 {
                        diff.push("segment block".into());
                    }
                    if diff.is_empty() {
                        diff.push("channel order".into());
                    }
                    return Err(Error::Validation(format!(
                        "motion `{}` channel schema differs from `{}`: {}",
                        s.record.id,
                        first.record.id,
                        diff.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Loads a JSON manifest; frame-file paths are relative to the manifest.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut items = Vec::with_capacity(entries.len());
        for e in entries {
            let file = base.join(&e.file);
            let record = read_motion_file(&file, &e.id)?;
            items.push((record, e.labels));
        }
        Dataset::from_labeled(items)
    }

    /// Opens either a manifest (JSON array) or an exported archive (JSON object).
    pub fn open(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            Dataset::import(path)
        } else {
            Dataset::load_manifest(path)
        }
    }

    /// Seeded Fisher-Yates permutation of the samples.
    pub fn shuffle(&self, seed: u64) -> Dataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        self.subset(&order)
    }

    /// The samples at `indices`, in that order, with the full vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            vocabulary: self.vocabulary.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn label_matrix(&self) -> Vec<LabelVector> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn report(&self) -> DatasetReport {
        let mut label_counts: Vec<(String, usize)> = self
            .vocabulary
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), self.samples.iter().filter(|s| s.labels.get(i)).count()))
            .collect();
        label_counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut combos: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for s in &self.samples {
            *combos.entry(self.vocabulary.decode(&s.labels)).or_default() += 1;
        }
        let mut combination_counts: Vec<(Vec<String>, usize)> = combos.into_iter().collect();
        combination_counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        DatasetReport {
            samples: self.len(),
            label_counts,
            combination_counts,
        }
    }

    pub fn to_archive_string(&self) -> Result<String> {
        let archive = Archive {
            format: ARCHIVE_FORMAT.into(),
            version: 1,
            vocabulary: self.vocabulary.labels().to_vec(),
            samples: self
                .samples
                .iter()
                .map(|s| ArchiveSample {
                    id: s.record.id.clone(),
                    labels: self.vocabulary.decode(&s.labels),
                    frames: write_frames(&s.record),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&archive)?;
        text.push('\n');
        Ok(text)
    }

    /// Writes the whole dataset into one JSON archive with embedded CSV blocks.
    pub fn export(&self, path: &Path) -> Result<()> {
        let text = self.to_archive_string()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn import(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let archive: Archive = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if archive.format != ARCHIVE_FORMAT {
            return Err(Error::Validation(format!(
                "{} is not a dataset archive (format `{}`)",
                path.display(),
                archive.format
            )));
        }
        let vocabulary = LabelVocabulary::new(archive.vocabulary);
        let mut samples = Vec::with_capacity(archive.samples.len());
        for s in archive.samples {
            let record = parse_frames(&s.frames, &s.id, path)?;
            let labels = vocabulary.encode(&s.labels)?;
            samples.push(Sample { record, labels });
        }
        let dataset = Dataset { vocabulary, samples };
        dataset.validate()?;
        Ok(dataset)
    }
}

/// Per-label and per-combination sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub samples: usize,
    pub label_counts: Vec<(String, usize)>,
    pub combination_counts: Vec<(Vec<String>, usize)>,
}

impl fmt::Display for DatasetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} samples", self.samples)?;
        writeln!(f)?;
        writeln!(f, "Samples\tLabel")?;
        for (label, n) in &self.label_counts {
            writeln!(f, "{n}\t{label}")?;
        }
        writeln!(f)?;
        writeln!(f, "Samples\tLabel combination")?;
        for (combo, n) in &self.combination_counts {
            writeln!(f, "{n}\t{}", combo.join(", "))?;
        }
        Ok(())
    }
}
