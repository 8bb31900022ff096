use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, IngestError};

/// Object kinds counted per region.
pub const COUNTED_OBJECTS: [&str; 5] = ["car", "pedestrian", "bus", "bicycle", "motorcycle"];

/// Precomputed per-frame segmentation statistics for the full frame and the
/// lead-car region. Class names are kept verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticStats {
    pub total_pixels: u64,
    /// Pixel count of the lead-car region.
    pub lead_pixels: u64,
    pub full: BTreeMap<String, u64>,
    pub lead_car: BTreeMap<String, u64>,
    pub counts_full: BTreeMap<String, u64>,
    pub counts_lead: BTreeMap<String, u64>,
}

impl SemanticStats {
    pub fn new(total_pixels: u64, lead_pixels: u64) -> Self {
        Self {
            total_pixels,
            lead_pixels,
            full: BTreeMap::new(),
            lead_car: BTreeMap::new(),
            counts_full: BTreeMap::new(),
            counts_lead: BTreeMap::new(),
        }
    }

    pub fn validate(&self, frame: usize) -> Result<(), IngestError> {
        if self.full.values().sum::<u64>() > self.total_pixels {
            return Err(IngestError::PixelOverflow { frame, region: "full-frame" });
        }
        if self.lead_car.values().sum::<u64>() > self.lead_pixels {
            return Err(IngestError::PixelOverflow { frame, region: "lead-car" });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SemanticEntry {
    frame: usize,
    total_pixels: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lead_pixels: Option<u64>,
    full: BTreeMap<String, u64>,
    lead_car: BTreeMap<String, u64>,
    counts_full: BTreeMap<String, u64>,
    counts_lead: BTreeMap<String, u64>,
}

/// Parses a semantic summary. When `lead_pixels` is absent the lead-car
/// region size is taken to be the sum of its class pixels.
pub fn read_semantic_summary<R: Read>(r: R) -> Result<BTreeMap<usize, SemanticStats>, IngestError> {
    let entries: Vec<SemanticEntry> = serde_json::from_reader(r)?;
    let mut out = BTreeMap::new();
    for e in entries {
        let lead_pixels = e.lead_pixels.unwrap_or_else(|| e.lead_car.values().sum());
        let stats = SemanticStats {
            total_pixels: e.total_pixels,
            lead_pixels,
            full: e.full,
            lead_car: e.lead_car,
            counts_full: e.counts_full,
            counts_lead: e.counts_lead,
        };
        stats.validate(e.frame)?;
        if out.insert(e.frame, stats).is_some() {
            return Err(IngestError::DuplicateFrame(e.frame));
        }
    }
    Ok(out)
}

pub fn parse_semantic_summary(path: &Path) -> Result<BTreeMap<usize, SemanticStats>, IngestError> {
    read_semantic_summary(open(path)?)
}

pub fn write_semantic_summary<W: Write>(w: W, frames: &BTreeMap<usize, SemanticStats>) -> Result<(), IngestError> {
    let entries: Vec<SemanticEntry> = frames
        .iter()
        .map(|(frame, s)| SemanticEntry {
            frame: *frame,
            total_pixels: s.total_pixels,
            lead_pixels: Some(s.lead_pixels),
            full: s.full.clone(),
            lead_car: s.lead_car.clone(),
            counts_full: s.counts_full.clone(),
            counts_lead: s.counts_lead.clone(),
        })
        .collect();
    serde_json::to_writer(w, &entries)?;
    Ok(())
}
