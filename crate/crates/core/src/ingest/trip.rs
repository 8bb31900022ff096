use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{open, record_line, IngestError};
use crate::dataset::{Scenario, TelemetrySample, TripSeries};
use crate::geo::GeoPoint;

const TRIP_HEADER: [&str; 5] = ["t", "lat", "lon", "speed", "accel_lon"];

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64, IngestError> {
    let raw = rec
        .get(i)
        .ok_or_else(|| IngestError::MalformedRow { line, reason: format!("missing column `{}`", TRIP_HEADER[i]) })?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| IngestError::MalformedRow { line, reason: format!("`{raw}` is not a number") })?;
    if !v.is_finite() {
        return Err(IngestError::MalformedRow { line, reason: format!("`{raw}` is not finite") });
    }
    Ok(v)
}

/// Parses a `t,lat,lon,speed,accel_lon` trip log. Rows are time-sorted after
/// validation; repeated timestamps are rejected.
pub fn read_trip_log<R: Read>(r: R, trip_id: &str, scenario: Scenario) -> Result<TripSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != TRIP_HEADER {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("expected header {}", TRIP_HEADER.join(",")),
        });
    }
    let mut rows: Vec<(u64, TelemetrySample)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != TRIP_HEADER.len() {
            return Err(IngestError::MalformedRow { line, reason: format!("expected 5 columns, got {}", rec.len()) });
        }
        let t = field(&rec, 0, line)?;
        let pos = GeoPoint::new(field(&rec, 1, line)?, field(&rec, 2, line)?)
            .map_err(|e| IngestError::MalformedRow { line, reason: e.to_string() })?;
        let speed = field(&rec, 3, line)?;
        if speed < 0.0 {
            return Err(IngestError::MalformedRow { line, reason: "negative speed".into() });
        }
        let accel_lon = field(&rec, 4, line)?;
        rows.push((line, TelemetrySample { t, pos, speed, accel_lon }));
    }
    rows.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
    for w in rows.windows(2) {
        if w[1].1.t <= w[0].1.t {
            return Err(IngestError::NonMonotonicTime { line: w[0].0.max(w[1].0) });
        }
    }
    TripSeries::new(trip_id, scenario, rows.into_iter().map(|(_, s)| s).collect())
        .map_err(|e| IngestError::Invalid(e.to_string()))
}

pub fn parse_trip_log(path: &Path, trip_id: &str, scenario: Scenario) -> Result<TripSeries, IngestError> {
    read_trip_log(open(path)?, trip_id, scenario)
}

pub fn write_trip_log<W: Write>(w: W, trip: &TripSeries) -> Result<(), IngestError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIP_HEADER)?;
    for s in trip.samples() {
        out.write_record(&[
            s.t.to_string(),
            s.pos.lat.to_string(),
            s.pos.lon.to_string(),
            s.speed.to_string(),
            s.accel_lon.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Trip index `trip_id,scenario`, one row per trip log.
pub fn read_trip_index<R: Read>(r: R) -> Result<BTreeMap<String, Scenario>, IngestError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = record_line(&rec, i);
        if rec.len() != 2 {
            return Err(IngestError::MalformedRow { line, reason: "expected trip_id,scenario".into() });
        }
        let scenario = rec[1].trim().parse().map_err(|reason| IngestError::MalformedRow { line, reason })?;
        if out.insert(rec[0].trim().to_string(), scenario).is_some() {
            return Err(IngestError::MalformedRow { line, reason: format!("duplicate trip `{}`", &rec[0]) });
        }
    }
    Ok(out)
}

pub fn parse_trip_index(path: &Path) -> Result<BTreeMap<String, Scenario>, IngestError> {
    read_trip_index(open(path)?)
}

pub fn write_trip_index<W: Write>(w: W, index: &BTreeMap<String, Scenario>) -> Result<(), IngestError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trip_id", "scenario"])?;
    for (id, sc) in index {
        out.write_record([id.as_str(), sc.as_str()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TripSeries, IngestError> {
        read_trip_log(text.as_bytes(), "t1", Scenario::Rural)
    }

    #[test]
    fn two_rows() {
        let trip = parse("t,lat,lon,speed,accel_lon\n0,42.0,-71.0,10,0.1\n0.5,42.00004,-71.0,10.2,0.4\n").unwrap();
        assert_eq!(trip.samples().len(), 2);
        assert_eq!(trip.samples()[1].speed, 10.2);
    }

    #[test]
    fn negative_speed() {
        let r = parse("t,lat,lon,speed,accel_lon\n0,42,-71,10,0\n1,42,-71,-1,0\n");
        assert!(matches!(r, Err(IngestError::MalformedRow { line: 3, .. })));
    }

    #[test]
    fn duplicated_timestamp() {
        let r = parse("t,lat,lon,speed,accel_lon\n0,42,-71,10,0\n1,42,-71,10,0\n1,42,-71,11,0\n");
        assert!(matches!(r, Err(IngestError::NonMonotonicTime { line: 4 })));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let trip = parse("t,lat,lon,speed,accel_lon\n1,42,-71,11,0\n0,42,-71,10,0\n").unwrap();
        assert_eq!(trip.samples()[0].t, 0.0);
    }

    #[test]
    fn garbage_is_typed() {
        assert!(matches!(
            parse("t,lat,lon,speed,accel_lon\n0,x,-71,1,0\n0.1,42,-71,1,0\n"),
            Err(IngestError::MalformedRow { .. })
        ));
        assert!(matches!(parse("t,lat,lon,speed,accel_lon\n0,42,-71,1\n"), Err(IngestError::MalformedRow { .. })));
        assert!(matches!(parse("a,b\n1,2\n"), Err(IngestError::MalformedRow { line: 1, .. })));
        assert!(matches!(
            parse("t,lat,lon,speed,accel_lon\n0,95,-71,1,0\n1,42,-71,1,0\n"),
            Err(IngestError::MalformedRow { .. })
        ));
        assert!(parse("t,lat,lon,speed,accel_lon\n0,42,-71,1,0\n").is_err());
    }

    #[test]
    fn index_round_trip() {
        let mut idx = BTreeMap::new();
        idx.insert("a".to_string(), Scenario::Bridge);
        idx.insert("b".to_string(), Scenario::Hotspot);
        let mut buf = Vec::new();
        write_trip_index(&mut buf, &idx).unwrap();
        assert_eq!(read_trip_index(buf.as_slice()).unwrap(), idx);
    }
}
