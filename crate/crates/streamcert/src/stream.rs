//! Labeled streams, sliding windows, CSV ingestion and synthetic generation.
//!
//! A stream is a finite, in-memory sequence of fixed-dimension feature
//! vectors with one ground-truth class label per time step. Time steps are
//! 1-based throughout, matching the windowing convention: the window at step
//! `i` holds the last `min(i, w)` items.

use crate::error::{Error, Result};
use crate::rng::{substream, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One stream element: a feature vector plus its 1-based time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub features: Vec<f64>,
    pub index: usize,
}

/// An ordered stream of items with per-step ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    items: Vec<StreamItem>,
    labels: Vec<usize>,
    num_classes: usize,
}

/// The last `min(i, w)` items ending at step `i`, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowView {
    pub items: Vec<StreamItem>,
    pub w: usize,
}

impl WindowView {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Builds a window directly from feature vectors (newest last), for
    /// windows that do not come from a stored stream (e.g. attack traces).
    pub fn from_features(features: Vec<Vec<f64>>, end_step: usize, w: usize) -> Self {
        let s = features.len();
        let items = features
            .into_iter()
            .enumerate()
            .map(|(k, f)| StreamItem {
                features: f,
                index: end_step + 1 + k - s,
            })
            .collect();
        WindowView { items, w }
    }
}

impl LabeledStream {
    pub fn new(items: Vec<StreamItem>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if items.is_empty() || items.len() != labels.len() {
            return Err(Error::domain(format!(
                "stream needs equal, nonzero item and label counts (got {} items, {} labels)",
                items.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::domain("num_classes must be positive"));
        }
        let dim = items[0].features.len();
        if dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        for (k, item) in items.iter().enumerate() {
            if item.features.len() != dim {
                return Err(Error::domain(format!(
                    "item {} has dimension {}, expected {dim}",
                    k + 1,
                    item.features.len()
                )));
            }
            if item.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("item {} has non-finite features", k + 1)));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::domain(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledStream {
            items,
            labels,
            num_classes,
        })
    }

    /// Number of time steps `t`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items[0].features.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn items(&self) -> &[StreamItem] {
        &self.items
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Features of the item at 1-based step `i`.
    pub fn features_at(&self, i: usize) -> &[f64] {
        &self.items[i - 1].features
    }

    /// Label of the item at 1-based step `i`.
    pub fn label_at(&self, i: usize) -> usize {
        self.labels[i - 1]
    }
}

/// Extracts the window ending at 1-based step `i`.
pub fn window_at(stream: &LabeledStream, i: usize, w: usize) -> Result<WindowView> {
    if w == 0 {
        return Err(Error::domain("window size must be at least 1"));
    }
    if i == 0 || i > stream.len() {
        return Err(Error::domain(format!(
            "step {i} out of range for stream of length {}",
            stream.len()
        )));
    }
    let s = i.min(w);
    let items = stream.items[i - s..i].to_vec();
    Ok(WindowView { items, w })
}

/// Ground-truth label of the window ending at step `i`: the majority label,
/// ties broken toward the class of the most recent tied item.
pub fn window_label(stream: &LabeledStream, i: usize, w: usize) -> Result<usize> {
    if i == 0 || i > stream.len() {
        return Err(Error::domain(format!(
            "step {i} out of range for stream of length {}",
            stream.len()
        )));
    }
    let s = i.min(w.max(1));
    let slice = &stream.labels[i - s..i];
    let mut counts = vec![0usize; stream.num_classes];
    let mut last_seen = vec![0usize; stream.num_classes];
    for (pos, &l) in slice.iter().enumerate() {
        counts[l] += 1;
        last_seen[l] = pos + 1;
    }
    let best = counts.iter().max().copied().unwrap_or(0);
    let winner = (0..stream.num_classes)
        .filter(|&c| counts[c] == best)
        .max_by_key(|&c| last_seen[c])
        .expect("nonempty window");
    Ok(winner)
}

/// Configuration for the synthetic stream generator: piecewise-constant label
/// segments with class-conditional Gaussian features around per-class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub len: usize,
    pub segment_len: SegmentLen,
    /// Distance scale between class mean vectors.
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub within_noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLen {
    Fixed(usize),
    UniformRange { min: usize, max: usize },
}

fn class_mean(class: usize, num_classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    if dim == 1 {
        mean[0] = separation * class as f64;
    } else {
        // Classes sit on a circle of radius `separation` in the first two
        // coordinates; pairwise distances are within a small factor of it.
        let theta = 2.0 * std::f64::consts::PI * class as f64 / num_classes as f64;
        mean[0] = separation * theta.cos();
        mean[1] = separation * theta.sin();
    }
    mean
}

/// Generates a synthetic labeled stream, deterministic given the seed.
pub fn generate_synthetic_stream(config: &GeneratorConfig) -> Result<LabeledStream> {
    if config.len == 0 || config.dim == 0 || config.num_classes < 2 {
        return Err(Error::domain(
            "generator needs len >= 1, dim >= 1 and at least two classes",
        ));
    }
    if !(config.separation.is_finite() && config.separation >= 0.0)
        || !(config.within_noise.is_finite() && config.within_noise >= 0.0)
    {
        return Err(Error::domain(
            "separation and within-class noise must be finite and nonnegative",
        ));
    }
    match config.segment_len {
        SegmentLen::Fixed(0) => return Err(Error::domain("segment length must be positive")),
        SegmentLen::UniformRange { min, max } if min == 0 || min > max => {
            return Err(Error::domain("segment range needs 1 <= min <= max"))
        }
        _ => {}
    }

    let means: Vec<Vec<f64>> = (0..config.num_classes)
        .map(|c| class_mean(c, config.num_classes, config.dim, config.separation))
        .collect();

    let mut rng = substream(config.seed, &[tag::STREAM_GEN]);
    let mut items = Vec::with_capacity(config.len);
    let mut labels = Vec::with_capacity(config.len);
    let mut current_class = rng.random_range(0..config.num_classes);
    let mut remaining = 0usize;
    for step in 1..=config.len {
        if remaining == 0 {
            remaining = match config.segment_len {
                SegmentLen::Fixed(n) => n,
                SegmentLen::UniformRange { min, max } => rng.random_range(min..=max),
            };
            if step > 1 {
                // Move to a different class so segments are genuine.
                let shift = rng.random_range(1..config.num_classes);
                current_class = (current_class + shift) % config.num_classes;
            }
        }
        remaining -= 1;
        let features = means[current_class]
            .iter()
            .map(|&m| m + config.within_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        items.push(StreamItem {
            features,
            index: step,
        });
        labels.push(current_class);
    }
    LabeledStream::new(items, labels, config.num_classes)
}

/// Per-coordinate centering/scaling record from [`standardize_stream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeRecord {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Coordinates whose raw variance was zero; these were centered only.
    pub zero_variance: Vec<bool>,
}

/// Standardizes each coordinate to empirical mean 0 and variance 1
/// (population variance). Zero-variance coordinates are centered and flagged.
pub fn standardize_stream(stream: &LabeledStream) -> Result<(LabeledStream, StandardizeRecord)> {
    let t = stream.len();
    if t < 2 {
        return Err(Error::domain("standardization needs at least two steps"));
    }
    let dim = stream.dim();
    let mut mean = vec![0.0; dim];
    for item in stream.items() {
        for (m, &x) in mean.iter_mut().zip(&item.features) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= t as f64;
    }
    let mut var = vec![0.0; dim];
    for item in stream.items() {
        for ((v, &x), &m) in var.iter_mut().zip(&item.features).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    for v in &mut var {
        *v /= t as f64;
    }
    let zero_variance: Vec<bool> = var.iter().map(|&v| v == 0.0).collect();
    let std: Vec<f64> = var
        .iter()
        .map(|&v| if v == 0.0 { 1.0 } else { v.sqrt() })
        .collect();
    let items = stream
        .items()
        .iter()
        .map(|item| StreamItem {
            features: item
                .features
                .iter()
                .zip(&mean)
                .zip(&std)
                .map(|((&x, &m), &s)| (x - m) / s)
                .collect(),
            index: item.index,
        })
        .collect();
    let standardized = LabeledStream::new(items, stream.labels().to_vec(), stream.num_classes())?;
    Ok((
        standardized,
        StandardizeRecord {
            mean,
            std,
            zero_variance,
        },
    ))
}

/// Loads a stream from CSV with header `f0,...,f{D-1},label`.
///
/// `num_classes` defaults to `max label + 1` when not supplied.
pub fn load_csv_stream(
    path: impl AsRef<Path>,
    dim: usize,
    num_classes: Option<usize>,
) -> Result<LabeledStream> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_stream_from(BufReader::new(file), dim, num_classes)
}

fn load_csv_stream_from(
    reader: impl BufRead,
    dim: usize,
    num_classes: Option<usize>,
) -> Result<LabeledStream> {
    if dim == 0 {
        return Err(Error::domain("feature count must be positive"));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    {
        let headers = csv_reader
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                msg: e.to_string(),
            })?
            .clone();
        let mut expected: Vec<String> = (0..dim).map(|k| format!("f{k}")).collect();
        expected.push("label".to_string());
        let got: Vec<&str> = headers.iter().collect();
        if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            let missing = expected
                .iter()
                .find(|e| !got.contains(&e.as_str()))
                .cloned()
                .unwrap_or_else(|| "unexpected extra column".to_string());
            return Err(Error::Parse {
                row: 0,
                msg: format!("header mismatch: expected {expected:?}, missing or wrong: {missing}"),
            });
        }
    }
    let mut items = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        let mut features = Vec::with_capacity(dim);
        for k in 0..dim {
            let cell = &record[k];
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("non-numeric cell in column f{k}: {cell:?}"),
            })?;
            features.push(value);
        }
        let label_cell = &record[dim];
        let label: usize = label_cell.trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("non-integer label: {label_cell:?}"),
        })?;
        items.push(StreamItem {
            features,
            index: row,
        });
        labels.push(label);
    }
    if items.is_empty() {
        return Err(Error::domain("stream file has no data rows"));
    }
    let inferred = labels.iter().max().copied().unwrap_or(0) + 1;
    let num_classes = num_classes.unwrap_or(inferred);
    LabeledStream::new(items, labels, num_classes)
}

/// Writes a stream in the CSV format read by [`load_csv_stream`].
///
/// Features are printed with 17 significant digits, which round-trips f64
/// exactly through text.
pub fn emit_csv_stream(stream: &LabeledStream, mut out: impl Write) -> Result<()> {
    let dim = stream.dim();
    let header: Vec<String> = (0..dim)
        .map(|k| format!("f{k}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (item, &label) in stream.items().iter().zip(stream.labels()) {
        for value in &item.features {
            write!(out, "{value:.16e},")?;
        }
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// Convenience wrapper writing to a file path.
pub fn emit_csv_stream_to_path(stream: &LabeledStream, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    emit_csv_stream(stream, std::io::BufWriter::new(file))
}
