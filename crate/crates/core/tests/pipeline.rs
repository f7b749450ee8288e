use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dynsplat::io::read_gaussians_ply;
use dynsplat::pipeline::{
    read_trajectories, run_pipeline, run_stage, verify, OutputLayout, PipelineConfig, PipelineError, ProviderKind,
    Stage, StageManifest,
};
use dynsplat::synthetic::{demo_scene, write_dataset, DatasetPaths};

const FRAMES: usize = 24;

fn small_config(dataset: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        dataset: dataset.to_path_buf(),
        seed: 5,
        ..PipelineConfig::default()
    };
    // 24 frames cannot carry 32 harmonics; 4 still spans the demo motion.
    cfg.encode.d_fourier = 4;
    cfg.init.n_per_frame = 300;
    cfg
}

fn dataset(root: &Path, tracks: usize) -> PathBuf {
    let ds = root.join("dataset");
    let scene = demo_scene(FRAMES, 1).build().unwrap();
    write_dataset(&scene, &ds, tracks).unwrap();
    ds
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(snapshot(&p));
        } else {
            out.insert(p.clone(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn small_scene_runs_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 600);
    let cfg = small_config(&ds);
    let layout = OutputLayout::new(tmp.path().join("out"));
    let manifests = run_pipeline(&cfg, &layout).unwrap();
    assert_eq!(manifests.iter().map(|m| m.stage).collect::<Vec<_>>(), Stage::ALL);
    let report = verify(&cfg, &layout).unwrap();
    assert!(report.passed, "{}", report.render());
    assert!(report.dynamic_gaussians > 0);

    let records = read_gaussians_ply(layout.gaussians()).unwrap();
    let n_static = records.iter().filter(|r| r.motion.is_none()).count();
    // Frames 0 and 20 are sampled with the default stride.
    assert_eq!(n_static, 2 * cfg.init.n_per_frame);
}

#[test]
fn stages_rerun_in_isolation_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 300);
    let cfg = small_config(&ds);
    let layout = OutputLayout::new(tmp.path().join("out"));
    run_pipeline(&cfg, &layout).unwrap();
    let before = snapshot(&layout.root);

    // Encode and init consume only files written by earlier stages.
    std::fs::remove_dir_all(layout.stage_dir(Stage::Encode)).unwrap();
    std::fs::remove_dir_all(layout.stage_dir(Stage::Init)).unwrap();
    run_stage(Stage::Encode, &cfg, &layout).unwrap();
    run_stage(Stage::Init, &cfg, &layout).unwrap();
    assert_eq!(snapshot(&layout.root), before);
}

#[test]
fn manifests_hash_inputs_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 200);
    let cfg = small_config(&ds);
    let layout = OutputLayout::new(tmp.path().join("out"));
    run_pipeline(&cfg, &layout).unwrap();
    let text = std::fs::read(layout.manifest(Stage::Flow)).unwrap();
    let m: StageManifest = serde_json::from_slice(&text).unwrap();
    assert_eq!(m.config, cfg);
    assert!(m.inputs.contains_key("dataset/tracks.csv"));
    assert!(m.inputs.contains_key("track/masks/00000.pgm"));
    assert!(m.outputs.contains_key("flow/trajectories.csv"));
    assert!(m.outputs.values().all(|h| h.len() == 64));
}

#[test]
fn missing_flow_names_detect_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 50);
    std::fs::remove_dir_all(DatasetPaths::new(&ds).flow_dir()).unwrap();
    let cfg = small_config(&ds);
    let err = run_pipeline(&cfg, &OutputLayout::new(tmp.path().join("out"))).unwrap_err();
    match &err {
        PipelineError::MissingInput { stage, path } => {
            assert_eq!(*stage, Stage::Detect);
            assert!(path.ends_with("flow"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().starts_with("detect stage"));
}

#[test]
fn failed_stage_keeps_earlier_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 50);
    std::fs::remove_file(DatasetPaths::new(&ds).depth(3)).unwrap();
    let cfg = small_config(&ds);
    let layout = OutputLayout::new(tmp.path().join("out"));
    let err = run_pipeline(&cfg, &layout).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Flow));
    assert!(layout.manifest(Stage::Detect).exists());
    assert!(layout.manifest(Stage::Track).exists());
    assert!(!layout.manifest(Stage::Flow).exists());
}

#[test]
fn files_provider_matches_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 100);
    let oracle = small_config(&ds);
    let mut files = oracle.clone();
    files.track.provider = ProviderKind::Files;
    files.track.provider_dir = DatasetPaths::new(&ds).gt_masks_dir().display().to_string();
    let a = OutputLayout::new(tmp.path().join("a"));
    let b = OutputLayout::new(tmp.path().join("b"));
    for (cfg, layout) in [(&oracle, &a), (&files, &b)] {
        run_stage(Stage::Detect, cfg, layout).unwrap();
        run_stage(Stage::Track, cfg, layout).unwrap();
    }
    for f in 0..FRAMES {
        assert_eq!(std::fs::read(a.track_mask(f)).unwrap(), std::fs::read(b.track_mask(f)).unwrap());
    }
}

#[test]
fn tracks_are_sampled_from_spec_when_absent() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 10);
    std::fs::remove_file(DatasetPaths::new(&ds).tracks()).unwrap();
    let mut cfg = small_config(&ds);
    cfg.flow.query_points = 250;
    let layout = OutputLayout::new(tmp.path().join("out"));
    for s in [Stage::Detect, Stage::Track, Stage::Flow] {
        run_stage(s, &cfg, &layout).unwrap();
    }
    let trajectories = read_trajectories(&layout.trajectories(), FRAMES).unwrap();
    assert_eq!(trajectories.len(), 250);
    assert!(trajectories.iter().all(|t| t.is_total() && t.instance_id != 0));
}

#[test]
fn wrong_ground_truth_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path(), 100);
    let cfg = small_config(&ds);
    let layout = OutputLayout::new(tmp.path().join("out"));
    run_pipeline(&cfg, &layout).unwrap();
    let gt = DatasetPaths::new(&ds).gt_trajectories();
    let text = std::fs::read_to_string(&gt).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Shift one coordinate of one ground-truth row by a full unit.
    let mut cols: Vec<String> = lines[1].split(',').map(String::from).collect();
    cols[3] = (cols[3].parse::<f64>().unwrap() + 1.0).to_string();
    lines[1] = cols.join(",");
    std::fs::write(&gt, lines.join("\n") + "\n").unwrap();
    let report = verify(&cfg, &layout).unwrap();
    assert!(!report.passed);
    assert!(report.max_error > 0.9);
}
