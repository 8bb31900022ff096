//! Domain records, the feature schema, dataset assembly and the 70/30 split
//! shared by the encoder and predictor stages.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::contextual::ContextualEncoding;
use crate::features::kinematics::{KinematicFeatures, KINEMATIC_NAMES};
use crate::features::semantic::{semantic_value, STANDARD_NAMES};
use crate::geo::{haversine_m, GeoPoint};
use crate::ingest::{ComplexityScore, ContextualRecord, SemanticStats};
use crate::kde::DensityLabel;
use crate::numfmt::sig9;
use crate::rng::SplitMix64;

pub const COMPLEXITY_INDEX: &str = "complexity_index";
pub const COMPLEXITY_INDEX_CROWD: &str = "complexity_index_crowd";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("frame ({trip_id}, {frame_index}) is missing feature `{name}`")]
    MissingFeature { trip_id: String, frame_index: usize, name: String },
    #[error("frame ({trip_id}, {frame_index}) has no density label")]
    UnlabeledFrame { trip_id: String, frame_index: usize },
    #[error("feature `{name}` of frame ({trip_id}, {frame_index}) is not finite")]
    NonFinite { trip_id: String, frame_index: usize, name: String },
    #[error("need at least 2 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("trip `{trip_id}` needs at least 2 samples, got {count}")]
    TooFewSamples { trip_id: String, count: usize },
    #[error("trip `{trip_id}`: sample {index} does not advance in time")]
    NonMonotonicTime { trip_id: String, index: usize },
    #[error("trip `{trip_id}`: invalid sample {index}")]
    InvalidSample { trip_id: String, index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed matrix csv: {0}")]
    MalformedCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Highway,
    Rural,
    Urban,
    Bridge,
    Overpass,
    Hotspot,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Highway, Scenario::Rural, Scenario::Urban, Scenario::Bridge, Scenario::Overpass, Scenario::Hotspot];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Highway => "highway",
            Scenario::Rural => "rural",
            Scenario::Urban => "urban",
            Scenario::Bridge => "bridge",
            Scenario::Overpass => "overpass",
            Scenario::Hotspot => "hotspot",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|sc| sc.as_str() == s).ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Seconds since clip start.
    pub t: f64,
    pub pos: GeoPoint,
    /// m/s, non-negative.
    pub speed: f64,
    /// Longitudinal acceleration, m/s².
    pub accel_lon: f64,
}

/// Time-ordered telemetry for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripSeries {
    trip_id: String,
    scenario: Scenario,
    samples: Vec<TelemetrySample>,
}

impl TripSeries {
    pub fn new(
        trip_id: impl Into<String>,
        scenario: Scenario,
        samples: Vec<TelemetrySample>,
    ) -> Result<Self, DatasetError> {
        let trip_id = trip_id.into();
        if samples.len() < 2 {
            return Err(DatasetError::TooFewSamples { trip_id, count: samples.len() });
        }
        for (index, s) in samples.iter().enumerate() {
            let finite = s.t.is_finite() && s.speed.is_finite() && s.accel_lon.is_finite();
            if !finite || s.speed < 0.0 || !s.pos.is_valid() {
                return Err(DatasetError::InvalidSample { trip_id, index });
            }
            if index > 0 && s.t <= samples[index - 1].t {
                return Err(DatasetError::NonMonotonicTime { trip_id, index });
            }
        }
        Ok(Self { trip_id, scenario, samples })
    }

    pub fn trip_id(&self) -> &str {
        &self.trip_id
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn samples(&self) -> &[TelemetrySample] {
        &self.samples
    }

    pub fn path_length_m(&self) -> f64 {
        self.samples.windows(2).map(|w| haversine_m(w[0].pos, w[1].pos)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Semantic,
    Kinematic,
    Contextual,
    ComplexityInfused,
    ComplexityIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub group: FeatureGroup,
}

/// Ordered, uniquely named feature columns. The order is the canonical
/// column order of every matrix built from the schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureColumn>", into = "Vec<FeatureColumn>")]
pub struct FeatureSchema {
    columns: Vec<FeatureColumn>,
}

impl TryFrom<Vec<FeatureColumn>> for FeatureSchema {
    type Error = DatasetError;

    fn try_from(columns: Vec<FeatureColumn>) -> Result<Self, Self::Error> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::DuplicateFeature(c.name.clone()));
            }
        }
        Ok(Self { columns })
    }
}

impl From<FeatureSchema> for Vec<FeatureColumn> {
    fn from(s: FeatureSchema) -> Self {
        s.columns
    }
}

impl FeatureSchema {
    pub fn new<I, S>(columns: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = (S, FeatureGroup)>,
        S: Into<String>,
    {
        columns
            .into_iter()
            .map(|(name, group)| FeatureColumn { name: name.into(), group })
            .collect::<Vec<_>>()
            .try_into()
    }

    pub fn empty() -> Self {
        Self { columns: Vec::new() }
    }

    /// 17 semantic + 9 kinematic + 19 contextual columns.
    pub fn standard() -> Self {
        Self::with_parts(STANDARD_NAMES.iter().map(|s| s.to_string()), &ContextualEncoding::default())
    }

    /// Given semantic names, the nine kinematic columns and the encoding's
    /// contextual columns.
    pub fn with_parts(semantic: impl IntoIterator<Item = String>, enc: &ContextualEncoding) -> Self {
        let mut cols: Vec<(String, FeatureGroup)> = semantic.into_iter().map(|n| (n, FeatureGroup::Semantic)).collect();
        cols.extend(KINEMATIC_NAMES.iter().map(|n| (n.to_string(), FeatureGroup::Kinematic)));
        cols.extend(enc.column_names().into_iter().map(|n| (n, FeatureGroup::Contextual)));
        Self::new(cols).expect("semantic, kinematic and contextual names are disjoint")
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn group_names(&self, group: FeatureGroup) -> Vec<String> {
        self.columns.iter().filter(|c| c.group == group).map(|c| c.name.clone()).collect()
    }

    pub fn count(&self, group: FeatureGroup) -> usize {
        self.columns.iter().filter(|c| c.group == group).count()
    }

    pub fn push(&mut self, name: impl Into<String>, group: FeatureGroup) -> Result<(), DatasetError> {
        let name = name.into();
        if self.position(&name).is_some() {
            return Err(DatasetError::DuplicateFeature(name));
        }
        self.columns.push(FeatureColumn { name, group });
        Ok(())
    }

    /// Columns whose names appear in `names`, in `names` order.
    pub fn select(&self, names: &[String]) -> Result<Self, DatasetError> {
        let cols = names
            .iter()
            .map(|n| {
                self.position(n).map(|i| self.columns[i].clone()).ok_or_else(|| DatasetError::UnknownColumn(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        cols.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Complexity index per annotation source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScores {
    pub machine: Option<ComplexityScore>,
    pub crowd: Option<ComplexityScore>,
}

/// One sampled frame and everything known about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub trip_id: String,
    pub frame_index: usize,
    pub anchor: GeoPoint,
    pub odometer_m: f64,
    pub semantic: Option<SemanticStats>,
    pub contextual: Option<ContextualRecord>,
    pub kinematic: Option<KinematicFeatures>,
    pub complexity: ComplexityScores,
    pub density_raw: Option<f64>,
    pub density_norm: Option<f64>,
    pub label: Option<DensityLabel>,
}

impl FrameRecord {
    pub fn new(trip_id: impl Into<String>, frame_index: usize, anchor: GeoPoint, odometer_m: f64) -> Self {
        Self {
            trip_id: trip_id.into(),
            frame_index,
            anchor,
            odometer_m,
            semantic: None,
            contextual: None,
            kinematic: None,
            complexity: ComplexityScores::default(),
            density_raw: None,
            density_norm: None,
            label: None,
        }
    }

    pub fn key(&self) -> RowKey {
        RowKey { trip_id: self.trip_id.clone(), frame_index: self.frame_index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub trip_id: String,
    pub frame_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitFlag {
    Train,
    Test,
}

impl fmt::Display for SplitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitFlag::Train => "train",
            SplitFlag::Test => "test",
        })
    }
}

/// Dense row-major feature table with labels and an optional frozen split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    keys: Vec<RowKey>,
    data: Vec<f64>,
    labels: Vec<DensityLabel>,
    split: Option<Vec<SplitFlag>>,
    split_seed: Option<u64>,
}

impl FeatureMatrix {
    pub fn new(
        schema: FeatureSchema,
        keys: Vec<RowKey>,
        data: Vec<f64>,
        labels: Vec<DensityLabel>,
    ) -> Result<Self, DatasetError> {
        let n = keys.len();
        if labels.len() != n || data.len() != n * schema.len() {
            return Err(DatasetError::Shape(format!(
                "{} keys, {} labels, {} values for {} columns",
                n,
                labels.len(),
                data.len(),
                schema.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            let d = schema.len().max(1);
            return Err(DatasetError::NonFinite {
                trip_id: keys[i / d].trip_id.clone(),
                frame_index: keys[i / d].frame_index,
                name: schema.columns[i % d].name.clone(),
            });
        }
        Ok(Self { schema, keys, data, labels, split: None, split_seed: None })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.data[i * self.n_cols() + j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, DatasetError> {
        let j = self.schema.position(name).ok_or_else(|| DatasetError::UnknownColumn(name.into()))?;
        Ok(self.column(j))
    }

    pub fn labels(&self) -> &[DensityLabel] {
        &self.labels
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn split(&self) -> Option<&[SplitFlag]> {
        self.split.as_deref()
    }

    pub fn split_seed(&self) -> Option<u64> {
        self.split_seed
    }

    fn rows_flagged(&self, flag: SplitFlag) -> Vec<usize> {
        match &self.split {
            Some(s) => s.iter().enumerate().filter(|(_, f)| **f == flag).map(|(i, _)| i).collect(),
            None => Vec::new(),
        }
    }

    pub fn train_rows(&self) -> Vec<usize> {
        self.rows_flagged(SplitFlag::Train)
    }

    pub fn test_rows(&self) -> Vec<usize> {
        self.rows_flagged(SplitFlag::Test)
    }

    /// Installs a split produced elsewhere (e.g. the encoder stage's flags).
    pub fn with_split(mut self, flags: Vec<SplitFlag>, seed: Option<u64>) -> Result<Self, DatasetError> {
        if flags.len() != self.n_rows() {
            return Err(DatasetError::Shape(format!("{} split flags for {} rows", flags.len(), self.n_rows())));
        }
        self.split = Some(flags);
        self.split_seed = seed;
        Ok(self)
    }

    /// Sub-matrix with the named columns, keeping keys, labels and split.
    pub fn select(&self, names: &[String]) -> Result<Self, DatasetError> {
        let schema = self.schema.select(names)?;
        let idx: Vec<usize> = names.iter().map(|n| self.schema.position(n).unwrap()).collect();
        let mut data = Vec::with_capacity(self.n_rows() * idx.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Ok(Self {
            schema,
            keys: self.keys.clone(),
            data,
            labels: self.labels.clone(),
            split: self.split.clone(),
            split_seed: self.split_seed,
        })
    }

    /// Appends columns; `values` is row-major with `names.len()` entries per row.
    pub fn append_columns(&self, names: &[String], group: FeatureGroup, values: &[f64]) -> Result<Self, DatasetError> {
        let k = names.len();
        if values.len() != k * self.n_rows() {
            return Err(DatasetError::Shape(format!(
                "{} appended values for {} rows x {} columns",
                values.len(),
                self.n_rows(),
                k
            )));
        }
        let mut schema = self.schema.clone();
        for n in names {
            schema.push(n.clone(), group)?;
        }
        let mut data = Vec::with_capacity(self.n_rows() * schema.len());
        for i in 0..self.n_rows() {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(&values[i * k..(i + 1) * k]);
        }
        let mut out = Self::new(schema, self.keys.clone(), data, self.labels.clone())?;
        out.split = self.split.clone();
        out.split_seed = self.split_seed;
        Ok(out)
    }

    /// CSV with header `<schema names>,label,split`; floats at 9 significant
    /// digits. An optional comment becomes a leading `# ...` line.
    pub fn write_csv<W: Write>(&self, w: W, comment: Option<&str>) -> Result<(), DatasetError> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}").map_err(csv::Error::from)?;
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.schema.names().collect();
        header.push("label");
        header.push("split");
        out.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| sig9(*v)).collect();
            rec.push(self.labels[i].to_string());
            rec.push(self.split.as_ref().map(|s| s[i].to_string()).unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Parses [`write_csv`](Self::write_csv) output against a known schema.
    /// Row keys are not part of the format and come back as `("", row)`.
    pub fn read_csv<R: Read>(r: R, schema: &FeatureSchema) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let expected: Vec<String> =
            schema.names().map(str::to_string).chain(["label".to_string(), "split".to_string()]).collect();
        if header != expected {
            return Err(DatasetError::MalformedCsv("header does not match schema".into()));
        }
        let d = schema.len();
        let (mut data, mut labels, mut flags, mut keys) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for j in 0..d {
                let v: f64 = rec[j].parse().map_err(|_| DatasetError::MalformedCsv(format!("row {i} column {j}")))?;
                data.push(v);
            }
            labels.push(rec[d].parse().map_err(DatasetError::MalformedCsv)?);
            flags.push(match &rec[d + 1] {
                "train" => Some(SplitFlag::Train),
                "test" => Some(SplitFlag::Test),
                "" => None,
                other => return Err(DatasetError::MalformedCsv(format!("split `{other}`"))),
            });
            keys.push(RowKey { trip_id: String::new(), frame_index: i });
        }
        let mut m = Self::new(schema.clone(), keys, data, labels)?;
        if !flags.is_empty() && flags.iter().all(Option::is_some) {
            m.split = Some(flags.into_iter().map(Option::unwrap).collect());
        }
        Ok(m)
    }
}

fn frame_order(a: &FrameRecord, b: &FrameRecord) -> Ordering {
    a.trip_id.cmp(&b.trip_id).then(a.frame_index.cmp(&b.frame_index))
}

fn feature_value(frame: &FrameRecord, col: &FeatureColumn, enc: &ContextualEncoding) -> Result<f64, DatasetError> {
    let missing = || DatasetError::MissingFeature {
        trip_id: frame.trip_id.clone(),
        frame_index: frame.frame_index,
        name: col.name.clone(),
    };
    match col.group {
        FeatureGroup::Semantic => {
            let stats = frame.semantic.as_ref().ok_or_else(missing)?;
            Ok(semantic_value(stats, &col.name))
        }
        FeatureGroup::Kinematic => frame.kinematic.as_ref().and_then(|k| k.get(&col.name)).ok_or_else(missing),
        FeatureGroup::Contextual => {
            let rec = frame.contextual.as_ref().ok_or_else(missing)?;
            enc.column_value(rec, &col.name).ok_or_else(missing)
        }
        FeatureGroup::ComplexityIndex => {
            let score = match col.name.as_str() {
                COMPLEXITY_INDEX => frame.complexity.machine.as_ref(),
                COMPLEXITY_INDEX_CROWD => frame.complexity.crowd.as_ref(),
                _ => None,
            };
            score.map(|s| s.value).ok_or_else(missing)
        }
        FeatureGroup::ComplexityInfused => Err(missing()),
    }
}

/// Builds the feature matrix for `frames`, rows ordered by
/// `(trip_id, frame_index)`.
pub fn assemble_dataset(
    frames: &[FrameRecord],
    schema: &FeatureSchema,
    enc: &ContextualEncoding,
) -> Result<FeatureMatrix, DatasetError> {
    let mut ordered: Vec<&FrameRecord> = frames.iter().collect();
    ordered.sort_by(|a, b| frame_order(a, b));
    let mut data = Vec::with_capacity(frames.len() * schema.len());
    let mut labels = Vec::with_capacity(frames.len());
    for f in &ordered {
        let label = f
            .label
            .ok_or_else(|| DatasetError::UnlabeledFrame { trip_id: f.trip_id.clone(), frame_index: f.frame_index })?;
        for col in schema.columns() {
            let v = feature_value(f, col, enc)?;
            if !v.is_finite() {
                return Err(DatasetError::NonFinite {
                    trip_id: f.trip_id.clone(),
                    frame_index: f.frame_index,
                    name: col.name.clone(),
                });
            }
            data.push(v);
        }
        labels.push(label);
    }
    let keys = ordered.iter().map(|f| f.key()).collect();
    FeatureMatrix::new(schema.clone(), keys, data, labels)
}

/// Number of training rows: `floor(train_frac · n)`.
pub fn train_count(n: usize, train_frac: f64) -> usize {
    // The epsilon keeps products such as 0.7 · 10 from flooring to 6.
    ((train_frac * n as f64) + 1e-9).floor() as usize
}

/// Split flags for `n` rows: Fisher-Yates shuffle of `0..n` with
/// `SplitMix64(seed)`, the first `train_count` shuffled rows are train.
pub fn split_flags(n: usize, seed: u64, train_frac: f64) -> Vec<SplitFlag> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let mut flags = vec![SplitFlag::Test; n];
    for &i in &order[..train_count(n, train_frac)] {
        flags[i] = SplitFlag::Train;
    }
    flags
}

/// Frame-wise seeded split.
pub fn split_dataset(m: FeatureMatrix, seed: u64, train_frac: f64) -> Result<FeatureMatrix, DatasetError> {
    if m.n_rows() < 2 {
        return Err(DatasetError::TooFewRows(m.n_rows()));
    }
    let flags = split_flags(m.n_rows(), seed, train_frac);
    m.with_split(flags, Some(seed))
}

/// Trip-wise variant: trips are shuffled and assigned to train until the
/// train row count reaches `floor(train_frac · n)`. Every frame of a trip
/// lands on the same side, so the realized fraction is only approximate.
pub fn split_dataset_by_trip(m: FeatureMatrix, seed: u64, train_frac: f64) -> Result<FeatureMatrix, DatasetError> {
    if m.n_rows() < 2 {
        return Err(DatasetError::TooFewRows(m.n_rows()));
    }
    let mut per_trip: BTreeMap<&str, usize> = BTreeMap::new();
    for k in m.keys() {
        *per_trip.entry(k.trip_id.as_str()).or_default() += 1;
    }
    let mut trips: Vec<&str> = per_trip.keys().copied().collect();
    SplitMix64::new(seed).shuffle(&mut trips);
    let target = train_count(m.n_rows(), train_frac);
    let mut train_trips = HashSet::new();
    let mut taken = 0;
    for t in trips {
        if taken >= target {
            break;
        }
        taken += per_trip[t];
        train_trips.insert(t.to_string());
    }
    let flags = m
        .keys()
        .iter()
        .map(|k| if train_trips.contains(&k.trip_id) { SplitFlag::Train } else { SplitFlag::Test })
        .collect();
    m.with_split(flags, Some(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::contextual::default_record;
    use crate::features::kinematics::kinematics;
    use crate::ingest::ComplexitySource;

    fn frame(trip: &str, idx: usize) -> FrameRecord {
        let mut f = FrameRecord::new(trip, idx, GeoPoint { lat: 42.0, lon: -71.0 }, 20.0 * idx as f64);
        let mut stats = SemanticStats::new(100, 40);
        stats.full.insert("road".into(), 50);
        stats.lead_car.insert("road".into(), 10);
        stats.counts_full.insert("car".into(), 2);
        f.semantic = Some(stats);
        let seg = [TelemetrySample { t: 0.0, pos: f.anchor, speed: 10.0, accel_lon: 0.5 }];
        f.kinematic = Some(kinematics(&seg, 10.0).unwrap());
        f.contextual = Some(default_record());
        f.complexity.machine = Some(ComplexityScore::new(ComplexitySource::Machine, 5.0, None));
        f.label = Some(DensityLabel::Medium);
        f
    }

    #[test]
    fn standard_schema_counts() {
        let s = FeatureSchema::standard();
        assert_eq!(s.len(), 45);
        assert_eq!(s.count(FeatureGroup::Semantic), 17);
        assert_eq!(s.count(FeatureGroup::Kinematic), 9);
        assert_eq!(s.count(FeatureGroup::Contextual), 19);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = FeatureSchema::new([("a", FeatureGroup::Semantic), ("a", FeatureGroup::Kinematic)]);
        assert!(matches!(r, Err(DatasetError::DuplicateFeature(_))));
    }

    #[test]
    fn schema_json_round_trip_keeps_order() {
        let s = FeatureSchema::standard();
        let back = FeatureSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
        assert!(
            FeatureSchema::from_json(r#"[{"name":"x","group":"semantic"},{"name":"x","group":"semantic"}]"#).is_err()
        );
    }

    #[test]
    fn assembles_in_key_order() {
        let schema = FeatureSchema::standard()
            .select(&[
                "road".to_string(),
                "car_count".to_string(),
                "speed_mean".to_string(),
                "weather_clear".to_string(),
            ])
            .unwrap();
        let mut schema = schema;
        schema.push(COMPLEXITY_INDEX, FeatureGroup::ComplexityIndex).unwrap();
        let frames = vec![frame("tripB", 0), frame("tripA", 1), frame("tripA", 0)];
        let m = assemble_dataset(&frames, &schema, &ContextualEncoding::default()).unwrap();
        assert_eq!(m.n_rows(), 3);
        let order: Vec<(&str, usize)> = m.keys().iter().map(|k| (k.trip_id.as_str(), k.frame_index)).collect();
        assert_eq!(order, vec![("tripA", 0), ("tripA", 1), ("tripB", 0)]);
        assert_eq!(m.row(0), &[0.5, 2.0, 10.0, 1.0, 5.0]);
    }

    #[test]
    fn missing_contextual_is_an_error() {
        let mut f = frame("t", 0);
        f.contextual = None;
        let r = assemble_dataset(&[f], &FeatureSchema::standard(), &ContextualEncoding::default());
        assert!(matches!(r, Err(DatasetError::MissingFeature { .. })));
    }

    #[test]
    fn unlabeled_frame_is_an_error() {
        let mut f = frame("t", 0);
        f.label = None;
        let r = assemble_dataset(&[f], &FeatureSchema::standard(), &ContextualEncoding::default());
        assert!(matches!(r, Err(DatasetError::UnlabeledFrame { .. })));
    }

    #[test]
    fn empty_input_keeps_schema() {
        let s = FeatureSchema::standard();
        let m = assemble_dataset(&[], &s, &ContextualEncoding::default()).unwrap();
        assert_eq!(m.n_rows(), 0);
        assert_eq!(m.schema(), &s);
    }

    #[test]
    fn split_counts() {
        assert_eq!(train_count(10, 0.7), 7);
        assert_eq!(train_count(10_407, 0.7), 7284);
        let flags = split_flags(10, 7, 0.7);
        assert_eq!(flags.iter().filter(|f| **f == SplitFlag::Train).count(), 7);
        assert_eq!(flags, split_flags(10, 7, 0.7));
        let big = split_flags(10_407, 1, 0.7);
        assert_eq!(big.iter().filter(|f| **f == SplitFlag::Train).count(), 7284);
    }

    #[test]
    fn split_needs_two_rows() {
        let m = assemble_dataset(&[frame("a", 0)], &FeatureSchema::standard(), &ContextualEncoding::default()).unwrap();
        assert!(matches!(split_dataset(m, 1, 0.7), Err(DatasetError::TooFewRows(1))));
    }

    #[test]
    fn trip_split_keeps_trips_together() {
        let frames: Vec<_> = (0..6).flat_map(|t| (0..5).map(move |i| frame(&format!("trip{t}"), i))).collect();
        let m = assemble_dataset(&frames, &FeatureSchema::standard(), &ContextualEncoding::default()).unwrap();
        let m = split_dataset_by_trip(m, 3, 0.7).unwrap();
        let flags = m.split().unwrap();
        for t in 0..6 {
            let f: HashSet<_> =
                m.keys().iter().zip(flags).filter(|(k, _)| k.trip_id == format!("trip{t}")).map(|(_, f)| *f).collect();
            assert_eq!(f.len(), 1);
        }
    }

    #[test]
    fn csv_round_trip() {
        let frames: Vec<_> = (0..4).map(|i| frame("a", i)).collect();
        let s = FeatureSchema::standard();
        let m = assemble_dataset(&frames, &s, &ContextualEncoding::default()).unwrap();
        let m = split_dataset(m, 2, 0.5).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, Some("config_hash=abc")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash=abc\ncar_count,road,"));
        let back = FeatureMatrix::read_csv(buf.as_slice(), &s).unwrap();
        assert_eq!(back.data(), m.data());
        assert_eq!(back.split(), m.split());
        assert_eq!(back.labels(), m.labels());
    }

    #[test]
    fn select_and_append() {
        let frames: Vec<_> = (0..3).map(|i| frame("a", i)).collect();
        let m = assemble_dataset(&frames, &FeatureSchema::standard(), &ContextualEncoding::default()).unwrap();
        let m = split_dataset(m, 1, 0.7).unwrap();
        let sub = m.select(&["road".to_string()]).unwrap();
        assert_eq!(sub.n_cols(), 1);
        assert_eq!(sub.split(), m.split());
        let ext =
            sub.append_columns(&["ci_00".to_string()], FeatureGroup::ComplexityInfused, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ext.row(2), &[0.5, 3.0]);
        assert!(sub.append_columns(&["road".to_string()], FeatureGroup::Semantic, &[0.0; 3]).is_err());
    }

    #[test]
    fn trip_series_validation() {
        let p = GeoPoint { lat: 1.0, lon: 1.0 };
        let s = |t| TelemetrySample { t, pos: p, speed: 1.0, accel_lon: 0.0 };
        assert!(TripSeries::new("x", Scenario::Urban, vec![s(0.0)]).is_err());
        assert!(matches!(
            TripSeries::new("x", Scenario::Urban, vec![s(0.0), s(0.0)]),
            Err(DatasetError::NonMonotonicTime { index: 1, .. })
        ));
        assert!(TripSeries::new("x", Scenario::Urban, vec![s(0.0), s(1.0)]).is_ok());
    }
}
