use dynsplat::detection::{detect_frame, epipolar_errors};
use dynsplat::io::{read_cameras, read_flo, read_pfm, read_tracks, DepthMap};
use dynsplat::scene_flow::{assign_tracks, lift_tracks};
use dynsplat::synthetic::{demo_scene, load_ground_truth, render_frame, write_dataset, DatasetPaths};

#[test]
fn lifted_tracks_match_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = demo_scene(12, 4).build().unwrap();
    write_dataset(&scene, tmp.path(), 800).unwrap();
    let paths = DatasetPaths::new(tmp.path());
    let cams = read_cameras(paths.cameras()).unwrap();
    let depths: Vec<DepthMap> = (0..12)
        .map(|f| DepthMap::new(f, read_pfm(paths.depth(f)).unwrap()).unwrap())
        .collect();
    let tracks = read_tracks(paths.tracks(), 128, 128).unwrap();
    let gt = load_ground_truth(&paths, 12).unwrap();

    let mut worst = 0.0f64;
    let mut lifted_count = 0;
    for tr in lift_tracks(&tracks, &depths, &cams) {
        let (_, truth) = &gt.trajectories[&tr.track_id];
        for (f, p) in tr.positions.iter().enumerate() {
            if let Some(p) = p {
                worst = worst.max((p - truth[f]).norm());
                lifted_count += 1;
            }
        }
    }
    assert!(lifted_count > 800);
    assert!(worst < 1e-6, "{worst}");

    // Every track lands on its own object's label.
    let assignment = assign_tracks(&tracks, &gt.masks);
    for (track, id) in assignment {
        assert_eq!(id, gt.trajectories[&track].0);
    }
}

#[test]
fn written_flow_keeps_static_pixels_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = demo_scene(6, 0).build().unwrap();
    write_dataset(&scene, tmp.path(), 10).unwrap();
    let paths = DatasetPaths::new(tmp.path());
    let cams = read_cameras(paths.cameras()).unwrap();
    for t in 0..5 {
        let flow = read_flo(paths.flow(t)).unwrap();
        let labels = render_frame(&scene, t).masks;
        let err = epipolar_errors(&flow, &cams[t], &cams[t + 1]).unwrap().unwrap();
        for (e, id) in err.errors.data.iter().zip(&labels.ids.data) {
            if *id == 0 && !e.is_nan() {
                assert!(*e < 1e-6);
            }
        }
        let regions = detect_frame(&flow, &cams[t], &cams[t + 1], 3.0, 8).unwrap();
        assert_eq!(regions.boxes.len(), 2, "frame {t}");
    }
}

#[test]
fn datasets_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        write_dataset(&demo_scene(4, 9).build().unwrap(), dir.path(), 50).unwrap();
    }
    for rel in ["cameras.json", "tracks.csv", "gt/trajectories.csv", "flow/00002.flo", "images/00003.png"] {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}
