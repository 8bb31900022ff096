use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{open, record_line, IngestError};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub pos: GeoPoint,
    pub year: i32,
}

/// Inclusive range of crash years to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub first: i32,
    pub last: i32,
}

impl Default for YearWindow {
    fn default() -> Self {
        Self { first: 2018, last: 2022 }
    }
}

impl YearWindow {
    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrashFile {
    pub records: Vec<CrashRecord>,
    /// Well-formed rows whose year fell outside the window.
    pub dropped_out_of_window: usize,
}

/// Parses `lat,lon,year` rows, keeping those inside `window`.
pub fn read_crashes<R: Read>(r: R, window: YearWindow) -> Result<CrashFile, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut out = CrashFile::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != 3 {
            return Err(IngestError::MalformedRow { line, reason: "expected lat,lon,year".into() });
        }
        let bad = |what: &str| IngestError::MalformedRow { line, reason: format!("bad {what}") };
        let lat: f64 = rec[0].trim().parse().map_err(|_| bad("lat"))?;
        let lon: f64 = rec[1].trim().parse().map_err(|_| bad("lon"))?;
        let year: i32 = rec[2].trim().parse().map_err(|_| bad("year"))?;
        let pos = GeoPoint::new(lat, lon).map_err(|e| IngestError::MalformedRow { line, reason: e.to_string() })?;
        if window.contains(year) {
            out.records.push(CrashRecord { pos, year });
        } else {
            out.dropped_out_of_window += 1;
        }
    }
    Ok(out)
}

pub fn parse_crashes(path: &Path, window: YearWindow) -> Result<CrashFile, IngestError> {
    read_crashes(open(path)?, window)
}

pub fn write_crashes<W: Write>(w: W, records: &[CrashRecord]) -> Result<(), IngestError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lat", "lon", "year"])?;
    for c in records {
        out.write_record(&[c.pos.lat.to_string(), c.pos.lon.to_string(), c.year.to_string()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
