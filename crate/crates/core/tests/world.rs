use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use roadcx::encoder::{EncoderConfig, Head, InputSet, TrainedEncoder};
use roadcx::features::{SemanticMode, STANDARD_NAMES};
use roadcx::ingest::ComplexitySource;
use roadcx::pipeline::{build_dataset, InputPaths, PipelineConfig};
use roadcx::synth::{generate_world, WorldConfig};

fn small_world(seed: u64) -> WorldConfig {
    WorldConfig { seed, n_trips: 12, frames_target: 2400, ..WorldConfig::default() }
}

fn write_world(cfg: &WorldConfig, dir: &Path) -> roadcx::synth::World {
    let world = generate_world(cfg).unwrap();
    world.write(dir).unwrap();
    world
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_world(&small_world(3), a.path());
    write_world(&small_world(3), b.path());
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (path, bytes) in &fa {
        assert!(bytes == &fb[path], "{} differs", path.display());
    }

    let c = tempfile::tempdir().unwrap();
    write_world(&small_world(4), c.path());
    let crashes = Path::new("crashes.csv");
    assert_ne!(fa[crashes], files_under(c.path())[crashes]);
}

#[test]
fn density_labels_follow_the_latent_field() {
    let dir = tempfile::tempdir().unwrap();
    let world = write_world(&small_world(11), dir.path());
    let cfg = PipelineConfig { inputs: InputPaths::world(dir.path()), ..PipelineConfig::default() };
    let ds = build_dataset(&cfg).unwrap();
    let latent = world.manifest.latent_by_frame();
    let (mut labels, mut z) = (Vec::new(), Vec::new());
    for f in &ds.frames {
        labels.push(f.label.unwrap().index() as f64);
        z.push(latent[&(f.trip_id.clone(), f.frame_index)].z);
    }
    let rho = spearman(&labels, &z);
    assert!(rho > 0.3, "Spearman {rho}");
}

#[test]
fn noiseless_scores_are_learned_closely() {
    let dir = tempfile::tempdir().unwrap();
    write_world(&WorldConfig { complexity_noise: 0.0, ..WorldConfig::default() }, dir.path());
    let cfg = PipelineConfig { inputs: InputPaths::world(dir.path()), ..PipelineConfig::default() };
    let ds = build_dataset(&cfg).unwrap();
    let ec = EncoderConfig::new(InputSet::All, 32, Head::Continuous, ComplexitySource::Machine, 0);
    let enc = TrainedEncoder::train(&ds.grid.matrix, &ds.grid.machine, &ec).unwrap();
    let m = enc.evaluate(&ds.grid.matrix, &ds.grid.machine).unwrap();
    assert!(m.test_loss < 0.1, "test RMSE {}", m.test_loss);
}

#[test]
fn filter_recovers_the_live_semantic_features() {
    let dir = tempfile::tempdir().unwrap();
    let world = write_world(&small_world(2), dir.path());
    let cfg = PipelineConfig {
        inputs: InputPaths::world(dir.path()),
        semantic_mode: SemanticMode::Auto,
        ..PipelineConfig::default()
    };
    let ds = build_dataset(&cfg).unwrap();
    let kept = ds.grid.matrix.schema().group_names(roadcx::FeatureGroup::Semantic);
    let mut live = world.manifest.live_features.clone();
    live.sort();
    let mut sorted = kept.clone();
    sorted.sort();
    assert_eq!(sorted, live);
    let mut standard: Vec<String> = STANDARD_NAMES.iter().map(|s| s.to_string()).collect();
    standard.sort();
    assert_eq!(sorted, standard);
}
