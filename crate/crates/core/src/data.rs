//! Dataset handling: static-image and event-frame samples, synthetic
//! generators, spike encoding, and the SRKD binary file format.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How samples turn into per-timestep network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Samples are images [c,h,w], fed as constant current every timestep.
    StaticCurrent,
    /// Samples are pre-integrated frame sequences [T,2,h,w].
    EventFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: usize,
    pub sample_shape: Vec<usize>,
    pub train_count: usize,
    pub test_count: usize,
    pub encoding: Encoding,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// An in-memory dataset: manifest plus per-split samples and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub manifest: DatasetManifest,
    pub train_samples: Vec<Tensor>,
    pub train_labels: Vec<usize>,
    pub test_samples: Vec<Tensor>,
    pub test_labels: Vec<usize>,
}

impl DatasetHandle {
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.classes < 2 {
            return Err(Error::Config(format!(
                "dataset declares {} classes, need at least 2",
                m.classes
            )));
        }
        if self.train_samples.len() != m.train_count
            || self.train_labels.len() != m.train_count
            || self.test_samples.len() != m.test_count
            || self.test_labels.len() != m.test_count
        {
            return Err(Error::Config(format!(
                "split sizes do not match manifest ({} train, {} test declared)",
                m.train_count, m.test_count
            )));
        }
        for (name, samples, labels) in [
            ("train", &self.train_samples, &self.train_labels),
            ("test", &self.test_samples, &self.test_labels),
        ] {
            for (i, s) in samples.iter().enumerate() {
                if s.shape() != m.sample_shape {
                    return Err(Error::Config(format!(
                        "{name} sample {i} has shape {:?}, manifest says {:?}",
                        s.shape(),
                        m.sample_shape
                    )));
                }
            }
            for (i, &l) in labels.iter().enumerate() {
                if l >= m.classes {
                    return Err(Error::Config(format!(
                        "{name} label {l} at index {i} out of range for {} classes",
                        m.classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn samples(&self, split: Split) -> (&[Tensor], &[usize]) {
        match split {
            Split::Train => (&self.train_samples, &self.train_labels),
            Split::Test => (&self.test_samples, &self.test_labels),
        }
    }

    /// Shape of the tensor entering the network at each single timestep.
    pub fn step_input_shape(&self) -> Vec<usize> {
        match self.manifest.encoding {
            Encoding::StaticCurrent => self.manifest.sample_shape.clone(),
            Encoding::EventFrames => self.manifest.sample_shape[1..].to_vec(),
        }
    }

    /// The full [t_steps, ...] input sequence for one sample.
    pub fn input_sequence(&self, split: Split, index: usize, t_steps: usize) -> Result<Tensor> {
        let (samples, _) = self.samples(split);
        let sample = samples.get(index).ok_or_else(|| {
            Error::Index(format!("sample index {index} out of range ({})", samples.len()))
        })?;
        match self.manifest.encoding {
            Encoding::StaticCurrent => encode_static(sample, t_steps),
            Encoding::EventFrames => {
                if self.manifest.sample_shape[0] != t_steps {
                    return Err(Error::Config(format!(
                        "event dataset has {} frames per sample, network expects {t_steps}",
                        self.manifest.sample_shape[0]
                    )));
                }
                Ok(sample.clone())
            }
        }
    }
}

/// Repeat a [0,1]-valued image as constant input current: output[t] == image
/// for every t.
pub fn encode_static(image: &Tensor, t_steps: usize) -> Result<Tensor> {
    if t_steps == 0 {
        return Err(Error::Parameter("t_steps must be >= 1".into()));
    }
    if let Some(bad) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Parameter(format!(
            "pixel value {bad} outside [0,1]"
        )));
    }
    let mut shape = vec![t_steps];
    shape.extend_from_slice(image.shape());
    let mut data = Vec::with_capacity(t_steps * image.len());
    for _ in 0..t_steps {
        data.extend_from_slice(image.data());
    }
    Tensor::new(shape, data)
}

/// One event-camera event. Timestamps are microseconds and must be
/// non-decreasing in stream order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: u64,
    pub x: u32,
    pub y: u32,
    pub polarity: u8,
}

/// Post-binning treatment of event counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventNorm {
    Raw,
    #[default]
    PerBinMax,
}

/// Bin events into [t_steps, 2, height, width] count frames over the span
/// [0, t_steps * window_us). Events at or past the span end are ignored.
/// In PerBinMax mode each bin is divided by its own maximum count.
///
/// Format errors report the offending record's index in their offset field.
pub fn integrate_events(
    events: &[EventRecord],
    width: usize,
    height: usize,
    t_steps: usize,
    window_us: u64,
    norm: EventNorm,
) -> Result<Tensor> {
    if t_steps == 0 || window_us == 0 {
        return Err(Error::Parameter(
            "t_steps and window must both be >= 1".into(),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parameter("width and height must be >= 1".into()));
    }
    let mut out = Tensor::zeros(&[t_steps, 2, height, width]);
    let span = t_steps as u64 * window_us;
    let mut last_t = 0u64;
    for (i, ev) in events.iter().enumerate() {
        if ev.t < last_t {
            return Err(Error::format(
                i as u64,
                format!("event {i} timestamp {} decreases (previous {last_t})", ev.t),
            ));
        }
        last_t = ev.t;
        if ev.polarity > 1 {
            return Err(Error::format(
                i as u64,
                format!("event {i} polarity {} is not 0 or 1", ev.polarity),
            ));
        }
        if ev.x as usize >= width || ev.y as usize >= height {
            return Err(Error::format(
                i as u64,
                format!(
                    "event {i} at ({}, {}) outside {width}x{height}",
                    ev.x, ev.y
                ),
            ));
        }
        if ev.t >= span {
            continue;
        }
        let bin = (ev.t / window_us) as usize;
        let idx = ((bin * 2 + ev.polarity as usize) * height + ev.y as usize) * width
            + ev.x as usize;
        out.data_mut()[idx] += 1.0;
    }
    if norm == EventNorm::PerBinMax {
        let per_bin = 2 * height * width;
        for bin in 0..t_steps {
            let slice = &mut out.data_mut()[bin * per_bin..(bin + 1) * per_bin];
            let max = slice.iter().fold(0.0f64, |m, &v| m.max(v));
            if max > 0.0 {
                for v in slice {
                    *v /= max;
                }
            }
        }
    }
    Ok(out)
}

/// JSON sidecar accompanying an event CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSidecar {
    pub width: usize,
    pub height: usize,
}

/// Read events from CSV lines `t,x,y,polarity` plus the `<path>.json`
/// sidecar declaring sensor geometry. Returns (events, width, height).
pub fn load_event_csv(path: &Path) -> Result<(Vec<EventRecord>, usize, usize)> {
    let sidecar_path = {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        std::path::PathBuf::from(s)
    };
    let sidecar: EventSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.lines().enumerate() {
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format(
                line_offset,
                format!("line {}: expected t,x,y,polarity", lineno + 1),
            ));
        }
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.trim().parse::<u64>().map_err(|e| {
                Error::format(line_offset, format!("line {}: bad {what}: {e}", lineno + 1))
            })
        };
        let t = parse(fields[0], "timestamp")?;
        let x = parse(fields[1], "x")?;
        let y = parse(fields[2], "y")?;
        let polarity = parse(fields[3], "polarity")?;
        if polarity > 1 {
            return Err(Error::format(
                line_offset,
                format!("line {}: polarity {polarity} is not 0 or 1", lineno + 1),
            ));
        }
        if x >= sidecar.width as u64 || y >= sidecar.height as u64 {
            return Err(Error::format(
                line_offset,
                format!(
                    "line {}: pixel ({x}, {y}) outside {}x{}",
                    lineno + 1,
                    sidecar.width,
                    sidecar.height
                ),
            ));
        }
        events.push(EventRecord {
            t,
            x: x as u32,
            y: y as u32,
            polarity: polarity as u8,
        });
    }
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].t < pair[0].t {
            return Err(Error::format(
                0,
                format!("events not time-sorted at record {}", i + 1),
            ));
        }
    }
    Ok((events, sidecar.width, sidecar.height))
}

/// Synthetic dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Blobs,
    SpikePatterns,
}

/// Frames per sample and bin width used by the spike-patterns generator.
pub const SPIKE_PATTERN_T_STEPS: usize = 16;
pub const SPIKE_PATTERN_WINDOW_US: u64 = 1_000;

/// The class template for the blobs family: a Gaussian bump whose center
/// sits on a circle around the image center at angle 2*pi*class/classes.
/// Deterministic in (classes, class, shape) alone.
pub fn class_template(classes: usize, class: usize, shape: &[usize]) -> Tensor {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let min_side = h.min(w) as f64;
    let radius = min_side / 4.0;
    let sigma = min_side / 4.0;
    let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
    let cy = (h as f64 - 1.0) / 2.0 + radius * angle.sin();
    let cx = (w as f64 - 1.0) / 2.0 + radius * angle.cos();
    let mut data = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        for y in 0..h {
            for x in 0..w {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                data.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    Tensor::new(shape.to_vec(), data).expect("template shape is consistent")
}

/// Generate a labeled synthetic dataset, fully determined by `seed`.
///
/// Blobs: class templates plus clamped Gaussian pixel noise, static
/// encoding, `shape` = [c,h,w]. Spike-patterns: per-class event sweeps in
/// distinct directions, integrated into [16,2,h,w] frames; `noise` jitters
/// event positions and times.
pub fn gen_synthetic(
    kind: SyntheticKind,
    classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    shape: &[usize],
    noise: f64,
    seed: u64,
) -> Result<DatasetHandle> {
    if classes < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if shape.len() != 3 {
        return Err(Error::Parameter(format!(
            "shape must be [channels, height, width], got {shape:?}"
        )));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Parameter(format!(
            "noise must be in [0,1], got {noise}"
        )));
    }
    let mut rng = Rng::new(seed);
    match kind {
        SyntheticKind::Blobs => {
            let templates: Vec<Tensor> =
                (0..classes).map(|k| class_template(classes, k, shape)).collect();
            let mut make_split = |per_class: usize| {
                let mut samples = Vec::with_capacity(classes * per_class);
                let mut labels = Vec::with_capacity(classes * per_class);
                for (k, template) in templates.iter().enumerate() {
                    for _ in 0..per_class {
                        let sample = template
                            .map(|v| (v + rng.normal(0.0, noise)).clamp(0.0, 1.0));
                        samples.push(sample);
                        labels.push(k);
                    }
                }
                (samples, labels)
            };
            let (train_samples, train_labels) = make_split(train_per_class);
            let (test_samples, test_labels) = make_split(test_per_class);
            let handle = DatasetHandle {
                manifest: DatasetManifest {
                    classes,
                    sample_shape: shape.to_vec(),
                    train_count: train_samples.len(),
                    test_count: test_samples.len(),
                    encoding: Encoding::StaticCurrent,
                    source: format!(
                        "blobs(classes={classes}, shape={shape:?}, noise={noise}, seed={seed})"
                    ),
                },
                train_samples,
                train_labels,
                test_samples,
                test_labels,
            };
            handle.validate()?;
            Ok(handle)
        }
        SyntheticKind::SpikePatterns => {
            let (h, w) = (shape[1], shape[2]);
            let t_steps = SPIKE_PATTERN_T_STEPS;
            let window = SPIKE_PATTERN_WINDOW_US;
            let span = t_steps as u64 * window;
            let events_per_sample = 6 * t_steps;
            let mut make_split = |per_class: usize| -> Result<(Vec<Tensor>, Vec<usize>)> {
                let mut samples = Vec::with_capacity(classes * per_class);
                let mut labels = Vec::with_capacity(classes * per_class);
                for k in 0..classes {
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
                    let (dy, dx) = (angle.sin(), angle.cos());
                    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
                    let reach = (h.min(w) as f64 - 1.0) / 2.0;
                    for _ in 0..per_class {
                        let mut events = Vec::with_capacity(events_per_sample);
                        for e in 0..events_per_sample {
                            let frac = e as f64 / events_per_sample as f64;
                            // Sweep from one edge through the center to the
                            // opposite edge along the class direction.
                            let pos = 2.0 * frac - 1.0;
                            let fy = cy + pos * reach * dy + rng.normal(0.0, noise * 1.5);
                            let fx = cx + pos * reach * dx + rng.normal(0.0, noise * 1.5);
                            let jitter = rng.uniform(-(noise * window as f64), noise * window as f64);
                            let t = ((frac * span as f64) + jitter)
                                .clamp(0.0, span as f64 - 1.0) as u64;
                            events.push(EventRecord {
                                t,
                                x: (fx.round().clamp(0.0, w as f64 - 1.0)) as u32,
                                y: (fy.round().clamp(0.0, h as f64 - 1.0)) as u32,
                                polarity: ((e + k) % 2) as u8,
                            });
                        }
                        events.sort_by_key(|ev| ev.t);
                        samples.push(integrate_events(
                            &events,
                            w,
                            h,
                            t_steps,
                            window,
                            EventNorm::PerBinMax,
                        )?);
                        labels.push(k);
                    }
                }
                Ok((samples, labels))
            };
            let (train_samples, train_labels) = make_split(train_per_class)?;
            let (test_samples, test_labels) = make_split(test_per_class)?;
            let handle = DatasetHandle {
                manifest: DatasetManifest {
                    classes,
                    sample_shape: vec![t_steps, 2, h, w],
                    train_count: train_samples.len(),
                    test_count: test_samples.len(),
                    encoding: Encoding::EventFrames,
                    source: format!(
                        "spike-patterns(classes={classes}, shape={shape:?}, noise={noise}, seed={seed})"
                    ),
                },
                train_samples,
                train_labels,
                test_samples,
                test_labels,
            };
            handle.validate()?;
            Ok(handle)
        }
    }
}

const DATASET_MAGIC: &[u8; 4] = b"SRKD";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileManifest {
    manifest: DatasetManifest,
    train_labels: Vec<usize>,
    test_labels: Vec<usize>,
}

/// Write a dataset: magic, version, manifest length, JSON manifest, then
/// every sample as raw little-endian f64 in train-then-test order.
pub fn save_dataset(handle: &DatasetHandle, path: &Path) -> Result<()> {
    handle.validate()?;
    let manifest = serde_json::to_vec(&FileManifest {
        manifest: handle.manifest.clone(),
        train_labels: handle.train_labels.clone(),
        test_labels: handle.test_labels.clone(),
    })?;
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&(manifest.len() as u64).to_le_bytes())?;
    out.write_all(&manifest)?;
    for sample in handle.train_samples.iter().chain(&handle.test_samples) {
        for &v in sample.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a dataset written by `save_dataset`. Malformed files produce format
/// errors carrying the byte offset of the problem.
pub fn load_dataset(path: &Path) -> Result<DatasetHandle> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = Cursor::new(&bytes);
    cursor.expect_magic(DATASET_MAGIC)?;
    let version = cursor.read_u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported dataset version {version}, expected {DATASET_VERSION}"),
        ));
    }
    let manifest_len = cursor.read_u64()? as usize;
    let manifest_bytes = cursor.read_slice(manifest_len, "manifest")?;
    let file_manifest: FileManifest = serde_json::from_slice(manifest_bytes)
        .map_err(|e| Error::format(16, format!("manifest JSON: {e}")))?;
    let m = &file_manifest.manifest;
    let sample_len: usize = m.sample_shape.iter().product();
    let mut read_samples = |count: usize| -> Result<Vec<Tensor>> {
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let offset = cursor.at;
            let raw = cursor.read_slice(sample_len * 8, "sample data")?;
            let mut data = Vec::with_capacity(sample_len);
            for chunk in raw.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
            }
            samples.push(
                Tensor::new(m.sample_shape.clone(), data)
                    .map_err(|e| Error::format(offset as u64, e.to_string()))?,
            );
        }
        Ok(samples)
    };
    let train_samples = read_samples(m.train_count)?;
    let test_samples = read_samples(m.test_count)?;
    if cursor.at != bytes.len() {
        return Err(Error::format(
            cursor.at as u64,
            format!("{} trailing bytes after sample data", bytes.len() - cursor.at),
        ));
    }
    let handle = DatasetHandle {
        manifest: file_manifest.manifest,
        train_samples,
        train_labels: file_manifest.train_labels,
        test_samples,
        test_labels: file_manifest.test_labels,
    };
    handle
        .validate()
        .map_err(|e| Error::format(16, e.to_string()))?;
    Ok(handle)
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pub(crate) at: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, at: 0 }
    }

    pub(crate) fn read_slice(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::format(
                self.at as u64,
                format!(
                    "truncated file: wanted {n} bytes of {what}, {} left",
                    self.bytes.len() - self.at
                ),
            ));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.read_slice(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                0,
                format!("bad magic {got:?}, expected {magic:?}"),
            ));
        }
        Ok(())
    }

    pub(crate) fn read_u32(&mut self) -> Result<u32> {
        let s = self.read_slice(4, "u32")?;
        Ok(u32::from_le_bytes(s.try_into().expect("4-byte slice")))
    }

    pub(crate) fn read_u64(&mut self) -> Result<u64> {
        let s = self.read_slice(8, "u64")?;
        Ok(u64::from_le_bytes(s.try_into().expect("8-byte slice")))
    }
}

const EPOCH_STREAM: u64 = 0x45504f43_00000000;

/// Sample visit order for one training epoch: a seeded Fisher-Yates
/// shuffle, a pure function of (seed, epoch).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::stream(seed, EPOCH_STREAM ^ epoch as u64);
    rng.shuffle(&mut order);
    order
}
