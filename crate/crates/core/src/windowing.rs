//! Moving-window segmentation, forecast labels and the supervised dataset.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusId, EventRecord, GridTopology, SimulationTrace};
use crate::seed::{digest_hex, rng};

/// Paper-default window length in slots.
pub const DEFAULT_WINDOW: usize = 166;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Window length A in slots.
    pub window: usize,
    pub stride: usize,
    /// Forecast horizon in slots after the window end.
    pub horizon: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: 10,
            horizon: 30,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::arg("window", "must be at least 1"));
        }
        if self.stride < 1 {
            return Err(Error::arg("stride", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWindow {
    /// Row-major A×B block: all features of slot 0, then slot 1, …
    pub data: Vec<f64>,
    pub rows: usize,
    pub start_slot: usize,
    pub feature_order: Vec<(BusId, String)>,
}

impl MeasurementWindow {
    pub fn cols(&self) -> usize {
        self.feature_order.len()
    }

    /// Last slot covered by the window.
    pub fn end_slot(&self) -> usize {
        self.start_slot + self.rows - 1
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn unflatten(flat: &[f64], rows: usize, feature_order: Vec<(BusId, String)>, start_slot: usize) -> Result<Self> {
        if flat.len() != rows * feature_order.len() {
            return Err(Error::DimensionMismatch {
                expected: rows * feature_order.len(),
                got: flat.len(),
            });
        }
        Ok(Self {
            data: flat.to_vec(),
            rows,
            start_slot,
            feature_order,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }
}

/// Contingency label: bit 0 is the normal state, bit c the trip of candidate c.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelVector(pub Vec<u8>);

impl LabelVector {
    pub fn normal(n_candidates: usize) -> Self {
        let mut bits = vec![0; n_candidates + 1];
        bits[0] = 1;
        LabelVector(bits)
    }

    pub fn is_normal(&self) -> bool {
        self.0[0] == 1
    }

    pub fn n_set(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Normal xor at least one trip bit, exactly.
    pub fn is_valid(&self) -> bool {
        let trips = self.0[1..].iter().filter(|&&b| b == 1).count();
        self.0.iter().all(|&b| b <= 1) && ((self.0[0] == 1) == (trips == 0))
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|b| char::from(b'0' + b)).collect()
    }
}

/// Result of segmenting one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub windows: Vec<MeasurementWindow>,
    /// Set when the trace was too short for a single labelled window.
    pub warning: Option<String>,
}

pub fn segment(trace: &SimulationTrace, window: usize, stride: usize, horizon: usize) -> Result<Segmentation> {
    WindowConfig { window, stride, horizon }.validate()?;
    let t = trace.n_slots;
    if t < window + horizon {
        return Ok(Segmentation {
            windows: Vec::new(),
            warning: Some(format!(
                "trace of {t} slots is shorter than window {window} + horizon {horizon}"
            )),
        });
    }
    let order = trace.feature_order();
    let b = order.len();
    let mut windows = Vec::new();
    let mut start = 0;
    while start + window + horizon <= t {
        let end = start + window - 1;
        let has_trip = trace
            .events
            .iter()
            .any(|e| e.trip_time >= start && e.trip_time <= end);
        if !has_trip {
            windows.push(MeasurementWindow {
                data: trace.data[start * b..(end + 1) * b].to_vec(),
                rows: window,
                start_slot: start,
                feature_order: order.clone(),
            });
        }
        start += stride;
    }
    Ok(Segmentation {
        windows,
        warning: None,
    })
}

/// Marks every candidate tripping in `(window_end, window_end + horizon]`.
pub fn label_window(
    window: &MeasurementWindow,
    events: &[EventRecord],
    horizon: usize,
    topology: &GridTopology,
) -> LabelVector {
    label_for_end(window.end_slot(), events, horizon, &topology.candidate_lines)
}

pub(crate) fn label_for_end(end: usize, events: &[EventRecord], horizon: usize, candidates: &[u32]) -> LabelVector {
    let mut bits = vec![0u8; candidates.len() + 1];
    for e in events {
        if e.trip_time > end && e.trip_time <= end + horizon {
            if let Some(c) = candidates.iter().position(|&l| l == e.line) {
                bits[c + 1] = 1;
            }
        }
    }
    if bits[1..].iter().all(|&b| b == 0) {
        bits[0] = 1;
    }
    LabelVector(bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "A")]
    pub window: usize,
    #[serde(rename = "B")]
    pub n_channels: usize,
    #[serde(rename = "C")]
    pub n_candidates: usize,
    pub horizon: usize,
    pub stride: usize,
    pub feature_order: Vec<(BusId, String)>,
    /// Label pattern of every class id, one-hot patterns first.
    pub patterns: Vec<LabelVector>,
    pub source_seed: u64,
    pub fingerprint: String,
    pub folds: Vec<usize>,
    pub warnings: Vec<String>,
}

impl DatasetMeta {
    /// Digest of everything a fitted model depends on: window shape, feature
    /// order, horizon and candidate count.
    pub fn layout_fingerprint(&self) -> String {
        let key = serde_json::json!({
            "A": self.window,
            "feature_order": self.feature_order,
            "C": self.n_candidates,
            "horizon": self.horizon,
        });
        digest_hex(key.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: LabelVector,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.meta.window * self.meta.n_channels
    }

    pub fn n_classes(&self) -> usize {
        self.meta.patterns.len()
    }

    pub fn classes(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class).collect()
    }

    /// Sample count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for s in &self.samples {
            counts[s.class] += 1;
        }
        counts
    }

    pub fn n_folds(&self) -> usize {
        self.meta.folds.iter().max().map_or(0, |m| m + 1)
    }

    /// Builds a dataset from already-flattened samples and label vectors.
    pub fn from_parts(
        features: Vec<Vec<f64>>,
        labels: Vec<LabelVector>,
        mut meta: DatasetMeta,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let d = meta.window * meta.n_channels;
        for label in &labels {
            if label.0.len() != meta.n_candidates + 1 || !label.is_valid() {
                return Err(Error::schema("label", format!("invalid label {}", label.to_bit_string())));
            }
        }
        meta.patterns = class_patterns(meta.n_candidates, &labels);
        let index: BTreeMap<&LabelVector, usize> =
            meta.patterns.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let samples = features
            .into_iter()
            .zip(labels.iter())
            .map(|(f, l)| {
                if f.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: f.len() });
                }
                Ok(Sample {
                    features: f,
                    class: index[l],
                    label: l.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples, meta })
    }
}

/// One-hot patterns take class ids 0..=C; observed multi-hot patterns follow
/// in ascending bit order.
pub fn class_patterns(n_candidates: usize, observed: &[LabelVector]) -> Vec<LabelVector> {
    let mut patterns: Vec<LabelVector> = (0..=n_candidates)
        .map(|c| {
            let mut bits = vec![0u8; n_candidates + 1];
            bits[c] = 1;
            LabelVector(bits)
        })
        .collect();
    let mut multi: Vec<LabelVector> = observed.iter().filter(|l| l.n_set() > 1).cloned().collect();
    // ascending as a binary number, bit 0 most significant
    multi.sort();
    multi.dedup();
    patterns.extend(multi);
    patterns
}

/// Segments and labels every trace, flattening windows slot-major.
pub fn assemble(
    traces: &[SimulationTrace],
    topology: &GridTopology,
    config: &WindowConfig,
    source_seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    let first = traces
        .first()
        .ok_or_else(|| Error::arg("traces", "nothing to assemble"))?;
    let order = first.feature_order();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut warnings = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        if t.feature_order() != order {
            return Err(Error::schema(
                "feature_order",
                format!("trace {i} differs from trace 0"),
            ));
        }
        let seg = segment(t, config.window, config.stride, config.horizon)?;
        if let Some(w) = seg.warning {
            warnings.push(format!("trace {i}: {w}"));
        }
        for w in seg.windows {
            labels.push(label_window(&w, &t.events, config.horizon, topology));
            features.push(w.data);
        }
    }
    let meta = DatasetMeta {
        window: config.window,
        n_channels: order.len(),
        n_candidates: topology.candidate_lines.len(),
        horizon: config.horizon,
        stride: config.stride,
        feature_order: order,
        patterns: Vec::new(),
        source_seed,
        fingerprint: String::new(),
        folds: Vec::new(),
        warnings,
    };
    let ds = Dataset::from_parts(features, labels, meta)?;
    log::info!("assembled {} samples, class counts {:?}", ds.len(), ds.class_counts());
    Ok(ds)
}

/// Stratified fold assignment: samples are grouped by class, shuffled within
/// the group and dealt round-robin with a counter shared across groups, so
/// fold sizes differ by at most one.
pub fn split_folds(dataset: &mut Dataset, k: usize, seed: u64) -> Result<()> {
    if k < 2 {
        return Err(Error::arg("folds", "need at least 2 folds"));
    }
    if dataset.len() < k {
        return Err(Error::arg(
            "folds",
            format!("{} samples cannot fill {k} folds", dataset.len()),
        ));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        groups.entry(s.class).or_default().push(i);
    }
    let mut r = rng(seed);
    let mut folds = vec![0; dataset.len()];
    let mut next = 0usize;
    for members in groups.values_mut() {
        members.shuffle(&mut r);
        for &i in members.iter() {
            folds[i] = next % k;
            next += 1;
        }
    }
    dataset.meta.folds = folds;
    Ok(())
}

/// Writes one row per sample: `f0..f{D-1}` then `y0..yC`.
pub fn write_dataset_csv<W: Write>(out: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = dataset.n_features();
    let header: Vec<String> = (0..d)
        .map(|i| format!("f{i}"))
        .chain((0..=dataset.meta.n_candidates).map(|c| format!("y{c}")))
        .collect();
    w.write_record(&header)?;
    for s in &dataset.samples {
        let row: Vec<String> = s
            .features
            .iter()
            .map(|v| v.to_string())
            .chain(s.label.0.iter().map(|b| b.to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("dataset csv", e))?;
    Ok(())
}

/// Reads feature rows from CSV. Columns named `f*` are features; `y*` columns,
/// when present, are label bits.
pub fn read_feature_csv<R: Read>(input: R) -> Result<(Vec<Vec<f64>>, Option<Vec<LabelVector>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let mut f_cols = Vec::new();
    let mut y_cols = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if let Some(rest) = name.strip_prefix('f') {
            let idx: usize = rest
                .parse()
                .map_err(|_| Error::schema(name, "feature column must be f<index>"))?;
            if idx != f_cols.len() {
                return Err(Error::schema(name, "feature columns out of order"));
            }
            f_cols.push(i);
        } else if let Some(rest) = name.strip_prefix('y') {
            let idx: usize = rest
                .parse()
                .map_err(|_| Error::schema(name, "label column must be y<index>"))?;
            if idx != y_cols.len() {
                return Err(Error::schema(name, "label columns out of order"));
            }
            y_cols.push(i);
        } else {
            return Err(Error::schema(name, "unexpected column"));
        }
    }
    if f_cols.is_empty() {
        return Err(Error::schema("header", "no feature columns"));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = f_cols
            .iter()
            .map(|&i| {
                rec[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::schema(format!("row {} {}", row_no + 1, &header[i]), "not a finite number")
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        if !y_cols.is_empty() {
            let bits = y_cols
                .iter()
                .map(|&i| match &rec[i] {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::schema(
                        format!("row {} {}", row_no + 1, &header[i]),
                        format!("label bit `{other}` is not 0/1"),
                    )),
                })
                .collect::<Result<Vec<u8>>>()?;
            labels.push(LabelVector(bits));
        }
    }
    Ok((features, if y_cols.is_empty() { None } else { Some(labels) }))
}

/// Reassembles a dataset from its CSV body and JSON sidecar.
pub fn read_dataset<R: Read>(csv_input: R, meta: DatasetMeta) -> Result<Dataset> {
    let (features, labels) = read_feature_csv(csv_input)?;
    let labels = labels.ok_or_else(|| Error::schema("header", "dataset CSV lacks label columns"))?;
    let expected_folds = meta.folds.clone();
    let patterns = meta.patterns.clone();
    let ds = Dataset::from_parts(features, labels, meta)?;
    if !expected_folds.is_empty() && expected_folds.len() != ds.len() {
        return Err(Error::schema("folds", "length differs from sample count"));
    }
    if !patterns.is_empty() && patterns != ds.meta.patterns {
        return Err(Error::schema("patterns", "class table does not match the labels"));
    }
    Ok(ds)
}
