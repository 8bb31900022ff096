//! Crash density from historical crash points: a quartic kernel of fixed
//! radius in a local plane, rasters, 0–10 normalization and Low/Medium/High
//! labels.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FrameRecord;
use crate::geo::{GeoError, GeoPoint, LocalProjection};
use crate::numfmt::sig9;

pub const DEFAULT_RADIUS_M: f64 = 1000.0;
pub const NORMALIZED_MAX: f64 = 10.0;
/// Largest value written to a PGM export.
pub const PGM_MAX: u32 = 65_535;

#[derive(Debug, Error)]
pub enum KdeError {
    #[error(transparent)]
    Projection(#[from] GeoError),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("cell size must be positive, got {0}")]
    BadCellSize(f64),
    #[error("bounding box is empty")]
    EmptyBBox,
    #[error("cannot normalize: all {0} densities are equal")]
    DegenerateRange(usize),
    #[error("normalized density {0} is outside [0, 10]")]
    OutOfScale(f64),
    #[error("bin thresholds must satisfy 0 < medium < high < 10")]
    BadThresholds,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DensityLabel {
    Low,
    Medium,
    High,
}

impl DensityLabel {
    pub const ALL: [DensityLabel; 3] = [DensityLabel::Low, DensityLabel::Medium, DensityLabel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DensityLabel::Low => "Low",
            DensityLabel::Medium => "Medium",
            DensityLabel::High => "High",
        }
    }
}

impl fmt::Display for DensityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DensityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// Lower bounds of Medium and High on the 0–10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub medium: f64,
    pub high: f64,
}

impl Default for BinThresholds {
    fn default() -> Self {
        Self { medium: 0.5, high: 2.0 }
    }
}

impl BinThresholds {
    pub fn validate(&self) -> Result<(), KdeError> {
        if 0.0 < self.medium && self.medium < self.high && self.high < NORMALIZED_MAX {
            Ok(())
        } else {
            Err(KdeError::BadThresholds)
        }
    }

    /// `[0, medium)` Low, `[medium, high)` Medium, `[high, 10]` High.
    pub fn bin(&self, d: f64) -> Result<DensityLabel, KdeError> {
        if !(0.0..=NORMALIZED_MAX).contains(&d) {
            return Err(KdeError::OutOfScale(d));
        }
        Ok(if d < self.medium {
            DensityLabel::Low
        } else if d < self.high {
            DensityLabel::Medium
        } else {
            DensityLabel::High
        })
    }
}

/// Bins with the default 0.5 / 2.0 thresholds.
pub fn bin_density(d: f64) -> Result<DensityLabel, KdeError> {
    BinThresholds::default().bin(d)
}

/// Kernel weight of one point at distance `dist` (zero at and beyond `radius`).
pub fn kernel(dist: f64, radius: f64) -> f64 {
    if dist < radius {
        let u = dist / radius;
        let w = 1.0 - u * u;
        3.0 / std::f64::consts::PI * w * w
    } else {
        0.0
    }
}

type Cell = (i64, i64);

/// Crash points with a fixed kernel radius. Points are bucketed on a grid of
/// radius-sized cells; a query sums its candidates in point order, so the
/// result equals the plain sum over all points.
#[derive(Debug, Clone)]
pub struct DensityField {
    points: Vec<GeoPoint>,
    radius_m: f64,
    proj: LocalProjection,
    xy: Vec<(f64, f64)>,
    buckets: HashMap<Cell, Vec<usize>>,
}

impl DensityField {
    pub fn new(points: Vec<GeoPoint>, radius_m: f64, origin: GeoPoint) -> Result<Self, KdeError> {
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(KdeError::BadRadius(radius_m));
        }
        let proj = LocalProjection::new(origin);
        let xy = points.iter().map(|p| proj.project(*p)).collect::<Result<Vec<_>, _>>()?;
        let mut buckets: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in xy.iter().enumerate() {
            buckets.entry(Self::cell_of(x, y, radius_m)).or_default().push(i);
        }
        Ok(Self { points, radius_m, proj, xy, buckets })
    }

    /// Field whose projection origin is the centroid of `points` (or `fallback`
    /// when there are none).
    pub fn centred(points: Vec<GeoPoint>, radius_m: f64, fallback: GeoPoint) -> Result<Self, KdeError> {
        let origin = if points.is_empty() {
            fallback
        } else {
            let n = points.len() as f64;
            GeoPoint {
                lat: points.iter().map(|p| p.lat).sum::<f64>() / n,
                lon: points.iter().map(|p| p.lon).sum::<f64>() / n,
            }
        };
        Self::new(points, radius_m, origin)
    }

    fn cell_of(x: f64, y: f64, r: f64) -> Cell {
        ((x / r).floor() as i64, (y / r).floor() as i64)
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn origin(&self) -> GeoPoint {
        self.proj.origin()
    }

    pub fn projection(&self) -> &LocalProjection {
        &self.proj
    }

    /// Density at a planar location.
    pub fn density_xy(&self, x: f64, y: f64) -> f64 {
        let r = self.radius_m;
        let (cx, cy) = Self::cell_of(x, y, r);
        let mut cand: Vec<usize> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(b) = self.buckets.get(&(cx + dx, cy + dy)) {
                    cand.extend_from_slice(b);
                }
            }
        }
        cand.sort_unstable();
        let mut sum = 0.0;
        for i in cand {
            let (px, py) = self.xy[i];
            let d = ((px - x).powi(2) + (py - y).powi(2)).sqrt();
            if d < r {
                sum += kernel(d, r);
            }
        }
        sum / (r * r)
    }

    pub fn density_at(&self, q: GeoPoint) -> Result<f64, KdeError> {
        let (x, y) = self.proj.project(q)?;
        Ok(self.density_xy(x, y))
    }

    /// Evaluates the density at every cell centre of a grid covering `bbox`.
    /// Row 0 is the northernmost row.
    pub fn rasterize(&self, bbox: BBox, cell_size_m: f64) -> Result<HeatmapRaster, KdeError> {
        if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
            return Err(KdeError::BadCellSize(cell_size_m));
        }
        let (x0, y0) = self.proj.project(bbox.south_west)?;
        let (x1, y1) = self.proj.project(bbox.north_east)?;
        if !(x1 > x0 && y1 > y0) {
            return Err(KdeError::EmptyBBox);
        }
        // Round-off from unprojected corners must not add a sliver column.
        let cells = |span: f64| ((span / cell_size_m) - 1e-9).ceil().max(1.0) as usize;
        let (width, height) = (cells(x1 - x0), cells(y1 - y0));
        let mut raster = HeatmapRaster {
            origin: self.origin(),
            cell_size_m,
            x0,
            y1,
            width,
            height,
            values: Vec::with_capacity(width * height),
            note: None,
        };
        for row in 0..height {
            for col in 0..width {
                let (x, y) = raster.cell_center(row, col);
                raster.values.push(self.density_xy(x, y));
            }
        }
        Ok(raster)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub south_west: GeoPoint,
    pub north_east: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRaster {
    pub origin: GeoPoint,
    pub cell_size_m: f64,
    /// Planar x of the western edge.
    pub x0: f64,
    /// Planar y of the northern edge.
    pub y1: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, north to south.
    pub values: Vec<f64>,
    /// Appended to the header line.
    pub note: Option<String>,
}

impl HeatmapRaster {
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.x0 + (col as f64 + 0.5) * self.cell_size_m, self.y1 - (row as f64 + 0.5) * self.cell_size_m)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn header(&self) -> String {
        let mut h = format!(
            "origin={},{} cell_size_m={} x0={} y1={} scale_max={}",
            sig9(self.origin.lat),
            sig9(self.origin.lon),
            sig9(self.cell_size_m),
            sig9(self.x0),
            sig9(self.y1),
            sig9(self.max())
        );
        if let Some(n) = &self.note {
            h.push(' ');
            h.push_str(n);
        }
        h
    }

    /// Plain PGM (P2) with values scaled so the raster max is 65535.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), KdeError> {
        let max = self.max();
        writeln!(w, "P2\n# {}\n{} {}\n{PGM_MAX}", self.header(), self.width, self.height)?;
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row
                .iter()
                .map(|v| if max > 0.0 { ((v / max) * PGM_MAX as f64).round() as u32 } else { 0 })
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// CSV grid, one raster row per line, behind a `#` header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), KdeError> {
        writeln!(w, "# {}", self.header())?;
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| sig9(*v)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Min-max rescaling to `[0, 10]` over the given corpus.
pub fn normalize_density(values: &[f64]) -> Result<Vec<f64>, KdeError> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max <= min {
        return Err(KdeError::DegenerateRange(values.len()));
    }
    Ok(values.iter().map(|d| NORMALIZED_MAX * (d - min) / (max - min)).collect())
}

/// Sets raw density, normalized density and label on every frame.
/// Normalization spans the frames given.
pub fn label_frames(
    frames: &mut [FrameRecord],
    field: &DensityField,
    thresholds: BinThresholds,
) -> Result<(), KdeError> {
    thresholds.validate()?;
    let raw = frames.iter().map(|f| field.density_at(f.anchor)).collect::<Result<Vec<_>, _>>()?;
    let norm = normalize_density(&raw)?;
    for ((f, r), n) in frames.iter_mut().zip(raw).zip(norm) {
        f.density_raw = Some(r);
        f.density_norm = Some(n);
        f.label = Some(thresholds.bin(n)?);
    }
    Ok(())
}

/// `trip_id,frame_index,density_raw,density_norm,label` for labeled frames.
pub fn write_labels_csv<W: Write>(w: W, frames: &[FrameRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trip_id", "frame_index", "density_raw", "density_norm", "label"])?;
    for f in frames {
        let (Some(raw), Some(norm), Some(label)) = (f.density_raw, f.density_norm, f.label) else {
            continue;
        };
        out.write_record(&[f.trip_id.clone(), f.frame_index.to_string(), sig9(raw), sig9(norm), label.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
