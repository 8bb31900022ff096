use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use roadcx::dataset::{COMPLEXITY_INDEX, COMPLEXITY_INDEX_CROWD};
use roadcx::eval::grid::ALPHA;
use roadcx::eval::{accuracy, mcnemar, variant_matrix, EncoderVariant, Variant};
use roadcx::ingest::{parse_crashes, ComplexitySource};
use roadcx::kde::{label_frames, write_labels_csv, BBox};
use roadcx::pipeline::{self, Dataset};
use roadcx::synth::generate_world;
use roadcx::{FrameRecord, GeoPoint, GridReport, InputSet, ModelKind, PipelineConfig, TrainedEncoder, TrainedModel};
use serde::{Deserialize, Serialize};

use crate::artifacts::{check_hash, io_failure, read_stamped, write_file, write_stamped, CmdResult, Failure, RunLog};
use crate::EncoderArgs;

const INGEST_SUMMARY: &str = "ingest_summary.json";
const FRAMES: &str = "frames.json";
const LABELED_FRAMES: &str = "labeled_frames.json";
const LABELS_CSV: &str = "labels.csv";
const HEATMAP_CSV: &str = "heatmap.csv";
const HEATMAP_PGM: &str = "heatmap.pgm";
const MATRIX_CSV: &str = "matrix.csv";
const GRID_JSON: &str = "grid_report.json";
const GRID_TEXT: &str = "grid_report.txt";
const GRID_MAIN_CSV: &str = "grid_main.csv";
const GRID_ENCODERS_CSV: &str = "grid_encoders.csv";
const REPORT_TEXT: &str = "report.txt";

fn out(cfg: &PipelineConfig, rel: &str) -> PathBuf {
    cfg.output_dir.join(rel)
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

pub fn synth(cfg: &PipelineConfig, dir: Option<PathBuf>) -> CmdResult {
    let dir = dir.unwrap_or_else(|| cfg.inputs.crashes.parent().map(Path::to_path_buf).unwrap_or_default());
    let mut log = RunLog::new("synth");
    let world = log.stage("generate", || generate_world(&cfg.synth).map_err(|e| Failure::input(e.to_string())))?;
    log.stage("write", || world.write(&dir).map_err(|e| Failure::input(e.to_string())))?;
    log.output(&dir);
    println!(
        "wrote {} trips, {} frames, {} crashes to {}",
        world.trips.len(),
        world.manifest.frames.len(),
        world.crashes.len(),
        dir.display()
    );
    log.finish(cfg)
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    trips: usize,
    telemetry_samples: usize,
    semantic_frames: usize,
    contextual_frames: usize,
    machine_scores: usize,
    crowd_scores: Option<usize>,
    crashes: usize,
    crashes_outside_years: usize,
    speed_limit_roads: usize,
}

pub fn ingest(cfg: &PipelineConfig) -> CmdResult {
    let mut log = RunLog::new("ingest");
    let inputs = log.stage("load", || Ok(pipeline::load_inputs(&cfg.inputs, cfg.crash_years)?))?;
    let count = |m: &std::collections::BTreeMap<String, std::collections::BTreeMap<usize, _>>| {
        m.values().map(|v: &std::collections::BTreeMap<usize, _>| v.len()).sum::<usize>()
    };
    let summary = IngestSummary {
        trips: inputs.trips.len(),
        telemetry_samples: inputs.trips.iter().map(|t| t.samples().len()).sum(),
        semantic_frames: inputs.semantic.values().map(|m| m.len()).sum(),
        contextual_frames: inputs.contextual.values().map(|m| m.len()).sum(),
        machine_scores: count(&inputs.machine),
        crowd_scores: inputs.crowd.as_ref().map(count),
        crashes: inputs.crashes.records.len(),
        crashes_outside_years: inputs.crashes.dropped_out_of_window,
        speed_limit_roads: inputs.speed_limits.roads.len(),
    };
    let path = out(cfg, INGEST_SUMMARY);
    write_stamped(&path, &cfg.hash(), &summary)?;
    log.output(&path);
    println!("{} trips, {} crashes", summary.trips, summary.crashes);
    log.finish(cfg)
}

pub fn featurize(cfg: &PipelineConfig) -> CmdResult {
    let mut log = RunLog::new("featurize");
    let inputs = log.stage("load", || Ok(pipeline::load_inputs(&cfg.inputs, cfg.crash_years)?))?;
    let frames = log.stage("featurize", || Ok(pipeline::featurize(&inputs, cfg.sampling_interval_m)?))?;
    let path = out(cfg, FRAMES);
    write_stamped(&path, &cfg.hash(), &frames)?;
    log.output(&path);
    println!("{} frames", frames.len());
    log.finish(cfg)
}

/// Box around every frame and crash, padded by the kernel radius.
fn bounds(points: impl Iterator<Item = GeoPoint>, pad_m: f64) -> Option<BBox> {
    let (mut s, mut w, mut n, mut e) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        s = s.min(p.lat);
        n = n.max(p.lat);
        w = w.min(p.lon);
        e = e.max(p.lon);
    }
    if !s.is_finite() {
        return None;
    }
    let dlat = pad_m / 111_320.0;
    let dlon = pad_m / (111_320.0 * ((s + n) / 2.0).to_radians().cos());
    Some(BBox {
        south_west: GeoPoint { lat: s - dlat, lon: w - dlon },
        north_east: GeoPoint { lat: n + dlat, lon: e + dlon },
    })
}

pub fn kde(cfg: &PipelineConfig, cell_size_m: f64) -> CmdResult {
    let hash = cfg.hash();
    let mut log = RunLog::new("kde");
    let mut frames: Vec<FrameRecord> = read_stamped(&out(cfg, FRAMES), &hash, "featurize")?;
    let crashes = parse_crashes(&cfg.inputs.crashes, cfg.crash_years).map_err(|e| Failure::input(e.to_string()))?;
    let field = log.stage("label", || {
        let field = pipeline::density_field(&crashes, cfg.kde_radius_m)?;
        label_frames(&mut frames, &field, cfg.thresholds).map_err(|e| Failure::input(e.to_string()))?;
        Ok(field)
    })?;
    let path = out(cfg, LABELED_FRAMES);
    write_stamped(&path, &hash, &frames)?;
    log.output(&path);

    let path = out(cfg, LABELS_CSV);
    let mut w = create(&path)?;
    std::io::Write::write_all(&mut w, format!("# config {hash}\n").as_bytes()).map_err(|e| io_failure(&path, e))?;
    write_labels_csv(w, &frames).map_err(|e| io_failure(&path, e))?;
    log.output(&path);

    let points = frames.iter().map(|f| f.anchor).chain(crashes.records.iter().map(|c| c.pos));
    if let Some(bbox) = bounds(points, cfg.kde_radius_m) {
        let mut raster =
            log.stage("rasterize", || field.rasterize(bbox, cell_size_m).map_err(|e| Failure::input(e.to_string())))?;
        raster.note = Some(format!("config={hash}"));
        for (name, pgm) in [(HEATMAP_CSV, false), (HEATMAP_PGM, true)] {
            let path = out(cfg, name);
            let w = create(&path)?;
            let r = if pgm { raster.write_pgm(w) } else { raster.write_csv(w) };
            r.map_err(|e| io_failure(&path, e))?;
            log.output(&path);
        }
    }
    let mut counts = [0usize; 3];
    for f in &frames {
        if let Some(l) = f.label {
            counts[l.index()] += 1;
        }
    }
    println!("labels low/medium/high: {}/{}/{}", counts[0], counts[1], counts[2]);
    log.finish(cfg)
}

fn dataset(cfg: &PipelineConfig) -> CmdResult<Dataset> {
    let frames: Vec<FrameRecord> = read_stamped(&out(cfg, LABELED_FRAMES), &cfg.hash(), "kde")?;
    Ok(pipeline::assemble(frames, cfg)?)
}

fn variant_of(cfg: &PipelineConfig, a: &EncoderArgs) -> EncoderVariant {
    let m = cfg.grid.main_encoder;
    EncoderVariant {
        hidden: a.hidden.unwrap_or(m.hidden),
        head: a.head.unwrap_or(m.head),
        source: a.source.unwrap_or(m.source),
    }
}

fn encoder_path(cfg: &PipelineConfig, v: EncoderVariant, fs: InputSet) -> PathBuf {
    let name = v.config(fs, cfg.grid.encoder_epochs, cfg.grid.seed).name();
    out(cfg, &format!("encoders/{name}.json"))
}

fn save_encoder(cfg: &PipelineConfig, enc: &TrainedEncoder, path: &Path) -> CmdResult {
    let body: serde_json::Value = serde_json::from_str(&enc.to_json()).map_err(|e| io_failure(path, e))?;
    write_stamped(path, &cfg.hash(), &body)
}

/// A stored encoder, or `None` when there is none for this config.
fn stored_encoder(cfg: &PipelineConfig, v: EncoderVariant, fs: InputSet) -> CmdResult<Option<TrainedEncoder>> {
    let path = encoder_path(cfg, v, fs);
    if !path.exists() {
        return Ok(None);
    }
    let body: serde_json::Value = read_stamped(&path, &cfg.hash(), "train-encoder")?;
    let enc = TrainedEncoder::from_json(&body.to_string()).map_err(|e| io_failure(&path, e))?;
    let expected = v.config(fs, cfg.grid.encoder_epochs, cfg.grid.seed);
    Ok((enc.config == expected).then_some(enc))
}

fn load_encoder(cfg: &PipelineConfig, v: EncoderVariant, fs: InputSet) -> CmdResult<TrainedEncoder> {
    stored_encoder(cfg, v, fs)?.ok_or_else(|| {
        Failure::input(format!(
            "{} not found for this config (run `roadcx train-encoder` first)",
            encoder_path(cfg, v, fs).display()
        ))
    })
}

fn train_one(cfg: &PipelineConfig, ds: &Dataset, v: EncoderVariant, fs: InputSet) -> CmdResult<TrainedEncoder> {
    let scores = ds.grid.scores(v.source).map_err(|e| Failure::input(e.to_string()))?;
    let mut enc = TrainedEncoder::train(&ds.grid.matrix, scores, &v.config(fs, cfg.grid.encoder_epochs, cfg.grid.seed))
        .map_err(|e| Failure::input(e.to_string()))?;
    enc.quantize().map_err(|e| Failure::input(e.to_string()))?;
    Ok(enc)
}

fn write_matrix(cfg: &PipelineConfig, m: &roadcx::FeatureMatrix, path: &Path) -> CmdResult {
    let w = create(path)?;
    m.write_csv(w, Some(&format!("config {}", cfg.hash()))).map_err(|e| io_failure(path, e))
}

pub fn train_encoder(cfg: &PipelineConfig, args: &EncoderArgs, all: bool) -> CmdResult {
    let mut log = RunLog::new("train-encoder");
    let ds = log.stage("assemble", || dataset(cfg))?;
    let path = out(cfg, MATRIX_CSV);
    write_matrix(cfg, &ds.grid.matrix, &path)?;
    log.output(&path);
    let jobs: Vec<(EncoderVariant, InputSet)> = if all {
        let variants = cfg.grid.encoder_variants(ds.grid.crowd.is_some());
        variants.iter().flat_map(|&v| cfg.grid.feature_sets.iter().map(move |&fs| (v, fs))).collect()
    } else {
        vec![(variant_of(cfg, args), args.feature_set)]
    };
    for (v, fs) in jobs {
        let enc = log.stage(&encoder_path(cfg, v, fs).display().to_string(), || train_one(cfg, &ds, v, fs))?;
        let metrics = enc
            .evaluate(&ds.grid.matrix, ds.grid.scores(v.source).map_err(|e| Failure::input(e.to_string()))?)
            .map_err(|e| Failure::input(e.to_string()))?;
        let path = encoder_path(cfg, v, fs);
        save_encoder(cfg, &enc, &path)?;
        log.output(&path);
        println!("{}: train {:.4} test {:.4}", enc.config.name(), metrics.train_loss, metrics.test_loss);
    }
    log.finish(cfg)
}

pub fn extract(cfg: &PipelineConfig, args: &EncoderArgs) -> CmdResult {
    let mut log = RunLog::new("extract");
    let ds = log.stage("assemble", || dataset(cfg))?;
    let v = variant_of(cfg, args);
    let enc = load_encoder(cfg, v, args.feature_set)?;
    let m = log.stage("extract", || enc.append_to(&ds.grid.matrix).map_err(|e| Failure::input(e.to_string())))?;
    let path = out(cfg, &format!("infused/{}.csv", enc.config.name()));
    write_matrix(cfg, &m, &path)?;
    log.output(&path);
    println!("{} rows, {} columns", m.n_rows(), m.n_cols());
    log.finish(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredModel {
    model: ModelKind,
    feature_set: InputSet,
    variant: Variant,
    test_accuracy: f64,
    fitted: serde_json::Value,
}

fn model_path(cfg: &PipelineConfig, model: ModelKind, fs: InputSet, variant: Variant) -> PathBuf {
    out(cfg, &format!("models/{}-{}-{}.json", model.as_str(), fs.as_str(), variant.as_str()))
}

/// The matrix a classifier of `variant` sees, with the main encoder where needed.
fn predictor_matrix(
    cfg: &PipelineConfig,
    ds: &Dataset,
    fs: InputSet,
    variant: Variant,
) -> CmdResult<roadcx::FeatureMatrix> {
    let encoder = if variant.needs_encoder() { Some(load_encoder(cfg, cfg.grid.main_encoder, fs)?) } else { None };
    let name = match cfg.grid.index_source {
        ComplexitySource::Machine => COMPLEXITY_INDEX,
        ComplexitySource::Crowd => COMPLEXITY_INDEX_CROWD,
    };
    let index = match variant {
        Variant::PlusIndex => {
            Some((name, ds.grid.scores(cfg.grid.index_source).map_err(|e| Failure::input(e.to_string()))?))
        }
        _ => None,
    };
    variant_matrix(&ds.grid.matrix, fs, variant, encoder.as_ref(), index).map_err(|e| Failure::input(e.to_string()))
}

fn test_accuracy(m: &roadcx::FeatureMatrix, preds: &[usize]) -> CmdResult<f64> {
    let labels = m.label_indices();
    let truth: Vec<usize> = m.test_rows().iter().map(|&i| labels[i]).collect();
    accuracy(preds, &truth).map_err(|e| Failure::input(e.to_string()))
}

pub fn train_predictor(cfg: &PipelineConfig, model: ModelKind, fs: InputSet, variant: Variant) -> CmdResult {
    let mut log = RunLog::new("train-predictor");
    let ds = log.stage("assemble", || dataset(cfg))?;
    let m = predictor_matrix(cfg, &ds, fs, variant)?;
    let mc = cfg.grid.model_configs.clone().with_seed(cfg.grid.seed);
    let fitted = log.stage("fit", || TrainedModel::fit(model, &m, &mc).map_err(|e| Failure::input(e.to_string())))?;
    let acc = test_accuracy(&m, &fitted.predict_rows(&m, &m.test_rows()))?;
    let path = model_path(cfg, model, fs, variant);
    let body = serde_json::from_str(&fitted.to_json()).map_err(|e| io_failure(&path, e))?;
    let stored = StoredModel { model, feature_set: fs, variant, test_accuracy: acc, fitted: body };
    write_stamped(&path, &cfg.hash(), &stored)?;
    log.output(&path);
    println!("{} {} {}: test accuracy {acc:.2}%", model.as_str(), fs.as_str(), variant.as_str());
    log.finish(cfg)
}

#[derive(Debug, Serialize)]
struct Evaluation {
    model: ModelKind,
    feature_set: InputSet,
    baseline: f64,
    plus_infused: f64,
    b: usize,
    c: usize,
    chi2: f64,
    p_value: f64,
    exact: bool,
    alpha: f64,
    held: bool,
}

pub fn evaluate(cfg: &PipelineConfig, model: ModelKind, fs: InputSet, assert: bool) -> CmdResult {
    let hash = cfg.hash();
    let mut log = RunLog::new("evaluate");
    let ds = log.stage("assemble", || dataset(cfg))?;
    let mut preds = Vec::new();
    for variant in [Variant::Baseline, Variant::PlusInfused] {
        let path = model_path(cfg, model, fs, variant);
        let stored: StoredModel = read_stamped(&path, &hash, "train-predictor")?;
        let fitted = TrainedModel::from_json(&stored.fitted.to_string()).map_err(|e| io_failure(&path, e))?;
        let m = predictor_matrix(cfg, &ds, fs, variant)?;
        preds.push(log.stage(variant.as_str(), || Ok(fitted.predict_rows(&m, &m.test_rows())))?);
    }
    let m = &ds.grid.matrix;
    let labels = m.label_indices();
    let truth: Vec<usize> = m.test_rows().iter().map(|&i| labels[i]).collect();
    let cmp = mcnemar(&preds[0], &preds[1], &truth).map_err(|e| Failure::input(e.to_string()))?;
    let held = cmp.accuracy_b > cmp.accuracy_a && cmp.p_value < ALPHA;
    let eval = Evaluation {
        model,
        feature_set: fs,
        baseline: cmp.accuracy_a,
        plus_infused: cmp.accuracy_b,
        b: cmp.b,
        c: cmp.c,
        chi2: cmp.chi2,
        p_value: cmp.p_value,
        exact: cmp.exact,
        alpha: ALPHA,
        held,
    };
    let path = out(cfg, &format!("evaluation/{}-{}.json", model.as_str(), fs.as_str()));
    write_stamped(&path, &hash, &eval)?;
    log.output(&path);
    println!(
        "{} {}: baseline {:.2}% plus_infused {:.2}% b={} c={} p={:.4} {}",
        model.as_str(),
        fs.as_str(),
        eval.baseline,
        eval.plus_infused,
        eval.b,
        eval.c,
        eval.p_value,
        if held { "held" } else { "not held" }
    );
    log.finish(cfg)?;
    if assert && !held {
        return Err(Failure::hypothesis("infused model is not significantly better than the baseline"));
    }
    Ok(())
}

pub fn grid(cfg: &PipelineConfig, assert: bool) -> CmdResult {
    let hash = cfg.hash();
    let mut log = RunLog::new("grid");
    let ds = log.stage("assemble", || dataset(cfg))?;
    let mut encoders = roadcx::eval::TrainedEncoders::new();
    log.stage("encoders", || {
        for v in cfg.grid.encoder_variants(ds.grid.crowd.is_some()) {
            for &fs in &cfg.grid.feature_sets {
                let enc = match stored_encoder(cfg, v, fs)? {
                    Some(e) => e,
                    None => {
                        let e = train_one(cfg, &ds, v, fs)?;
                        save_encoder(cfg, &e, &encoder_path(cfg, v, fs))?;
                        e
                    }
                };
                encoders.insert(enc);
            }
        }
        Ok(())
    })?;
    let report = log.stage("grid", || {
        roadcx::run_experiment_grid(&ds.grid, &cfg.grid, &encoders, &hash).map_err(|e| Failure::input(e.to_string()))
    })?;
    let text = report.to_text();
    for (name, bytes) in [(GRID_JSON, report.to_json() + "\n"), (GRID_TEXT, text.clone())] {
        let path = out(cfg, name);
        write_file(&path, bytes)?;
        log.output(&path);
    }
    let path = out(cfg, GRID_MAIN_CSV);
    report.write_main_csv(create(&path)?).map_err(|e| io_failure(&path, e))?;
    log.output(&path);
    let path = out(cfg, GRID_ENCODERS_CSV);
    report.write_encoder_csv(create(&path)?).map_err(|e| io_failure(&path, e))?;
    log.output(&path);
    print!("{text}");
    log.finish(cfg)?;
    if assert && !report.hypothesis.held {
        return Err(Failure::hypothesis("improvement hypothesis did not hold"));
    }
    Ok(())
}

pub fn report(cfg: &PipelineConfig) -> CmdResult {
    let hash = cfg.hash();
    let mut log = RunLog::new("report");
    let path = out(cfg, GRID_JSON);
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::input(format!("{}: {e} (run `roadcx grid` first)", path.display())))?;
    let report = GridReport::from_json(&text).map_err(|e| io_failure(&path, e))?;
    check_hash(&path, &report.config_hash, &hash, "grid")?;
    // The labeled frames the report was built from must still be current.
    let _: serde_json::Value = read_stamped(&out(cfg, LABELED_FRAMES), &report.config_hash, "kde")?;
    let text = report.to_text();
    let path = out(cfg, REPORT_TEXT);
    write_file(&path, &text)?;
    log.output(&path);
    print!("{text}");
    log.finish(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_pad_both_axes() {
        let pts = [GeoPoint { lat: 42.0, lon: -71.0 }, GeoPoint { lat: 42.1, lon: -71.2 }];
        let b = bounds(pts.into_iter(), 1000.0).unwrap();
        assert!(b.south_west.lat < 42.0 && b.north_east.lat > 42.1);
        assert!(b.south_west.lon < -71.2 && b.north_east.lon > -71.0);
        assert!(bounds(std::iter::empty(), 1.0).is_none());
    }
}
