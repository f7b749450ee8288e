//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dynsplat::detection::epipolar_errors;
use dynsplat::encoding::{BasisSpec, DeformationParams, PolyFourierCurve, TrajectoryFitter};
use dynsplat::init::GaussianRecord;
use dynsplat::io::{
    decode_flo, decode_gaussians_ply, decode_pfm, encode_flo, encode_gaussians_ply, encode_pfm, read_masks,
    read_tracks, write_masks, write_tracks, FlowField, InstanceMaskFrame, TrackObservation, TrackTable,
};
use dynsplat::losses::pearson_depth_loss;
use dynsplat::pipeline::PipelineConfig;
use dynsplat::scene_flow::{estimate_rigid, reconstruct, Provenance, QueryPoint, RefineConfig, Trajectory3D};
use dynsplat::synthetic::{demo_scene, render_flow, render_frame, MotionScript};
use dynsplat::{Quaternion, Raster, RigidTransform};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
            return *q.to_rotation_matrix().matrix();
        }
    }
}

fn random_quaternion(rng: &mut impl Rng) -> Quaternion {
    let v = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    Quaternion::from_vector(&v).normalize().unwrap_or_else(Quaternion::identity)
}

fn epipolar_exactness() -> Outcome {
    let start = Instant::now();
    let scene = demo_scene(60, 0).build().map_err(|e| e.to_string())?;
    let per_pair: Vec<(usize, usize, f64, usize, usize)> = (0..scene.frame_count() - 1)
        .into_par_iter()
        .map(|t| {
            let r = render_frame(&scene, t);
            let flow = render_flow(&scene, t, &r).unwrap();
            let err = epipolar_errors(&flow, &scene.cameras[t], &scene.cameras[t + 1])
                .unwrap()
                .expect("moving camera");
            let (mut n_static, mut n_nan, mut worst) = (0, 0, 0.0f64);
            let (mut n_dyn, mut n_flagged) = (0, 0);
            for (k, e) in err.errors.data.iter().enumerate() {
                let uv = flow.flow.data[k];
                if r.masks.ids.data[k] == 0 {
                    if e.is_nan() {
                        n_nan += 1;
                    } else {
                        n_static += 1;
                        worst = worst.max(*e);
                    }
                } else if (uv[0] as f64).hypot(uv[1] as f64) >= 2.0 {
                    n_dyn += 1;
                    n_flagged += usize::from(*e > 3.0);
                }
            }
            (n_static, n_nan, worst, n_dyn, n_flagged)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let n_static: usize = per_pair.iter().map(|p| p.0).sum();
    let n_nan: usize = per_pair.iter().map(|p| p.1).sum();
    let worst = per_pair.iter().map(|p| p.2).fold(0.0, f64::max);
    let n_dyn: usize = per_pair.iter().map(|p| p.3).sum();
    let n_flagged: usize = per_pair.iter().map(|p| p.4).sum();
    let recall = n_flagged as f64 / n_dyn.max(1) as f64;
    check(
        worst < 1e-6 && n_dyn > 0 && recall >= 0.99 && elapsed < 10.0,
        format!(
            "static max {worst:.2e} over {n_static} px ({n_nan} leave the image), \
             dynamic recall {:.4} of {n_dyn} px, {elapsed:.2}s",
            recall
        ),
    )
}

fn rigid_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 1000;
    let (mut worst_clean, mut robust_ok) = ((0.0f64, 0.0f64), 0);
    for trial in 0..trials {
        let truth = RigidTransform {
            rotation: random_rotation(&mut rng),
            translation: Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
        };
        let src: Vec<Vector3<f64>> = (0..50).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let mut dst: Vec<Vector3<f64>> = src.iter().map(|p| truth.apply(p)).collect();
        let tol = 0.02 * (2.0 * 3f64.sqrt());
        let clean = estimate_rigid(&src, &dst, tol, 256, trial).map_err(|e| e.to_string())?;
        let (dr, dt) = clean.transform.distance(&truth);
        worst_clean = (worst_clean.0.max(dr), worst_clean.1.max(dt));

        let picks = rand::seq::index::sample(&mut rng, 50, 15);
        for i in picks {
            dst[i] = Vector3::from_fn(|_, _| rng.random_range(-7.0..7.0));
        }
        let noisy = estimate_rigid(&src, &dst, tol, 256, trial).map_err(|e| e.to_string())?;
        let (dr, dt) = noisy.transform.distance(&truth);
        robust_ok += usize::from(dr < 1e-6 && dt < 1e-6);
    }
    let rate = robust_ok as f64 / trials as f64;
    check(
        worst_clean.0 < 1e-9 && worst_clean.1 < 1e-9 && rate >= 0.99,
        format!(
            "clean worst rot {:.2e} trans {:.2e}; 30% outliers within 1e-6 in {:.1}% of trials",
            worst_clean.0,
            worst_clean.1,
            100.0 * rate
        ),
    )
}

fn occlusion_fill() -> Outcome {
    let frames = 60;
    let appear = 10;
    let hidden = 25..35;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let axis = Vector3::new(0.3, 1.0, 0.2).normalize();
    // Constant screw motion: spin about the axis plus drift along it.
    let script = MotionScript {
        axis: axis.into(),
        pivot: [0.0, 0.0, 5.0],
        turns: 1,
        velocity: (axis * 0.8).into(),
        amplitude: [0.0; 3],
        harmonic: 0,
        hold_until: 0,
    };
    let n = 100;
    let rest: Vec<Vector3<f64>> = (0..n)
        .map(|_| Vector3::new(0.0, 0.0, 5.0) + Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
        .collect();
    let truth = |i: usize, f: usize| script.pose(f, frames).apply(&rest[i]);
    let occluded: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n, n / 5).into_iter().collect();
    let trajectories: Vec<Trajectory3D> = (0..n)
        .map(|i| {
            let mut tr = Trajectory3D::new(i as u32, frames);
            tr.instance_id = 1;
            for f in appear..frames {
                if !(occluded.contains(&i) && hidden.contains(&f)) {
                    tr.set(f, truth(i, f), Provenance::Observed);
                }
            }
            tr.query = Some(QueryPoint { frame: appear, x: 0.0, y: 0.0 });
            tr
        })
        .collect();
    let (refined, _) = reconstruct(trajectories, &RefineConfig::default()).map_err(|e| e.to_string())?;
    let (mut sq_occ, mut n_occ, mut sq_pre, mut n_pre) = (0.0, 0, 0.0, 0);
    let mut wrong_source = 0;
    for tr in &refined {
        let i = tr.track_id as usize;
        for f in 0..frames {
            let p = tr.positions[f].ok_or("undefined position after refinement")?;
            let e2 = (p - truth(i, f)).norm_squared();
            if f < appear {
                sq_pre += e2;
                n_pre += 1;
                wrong_source += usize::from(tr.provenance[f] != Some(Provenance::RigidBackward));
            } else if occluded.contains(&i) && hidden.contains(&f) {
                sq_occ += e2;
                n_occ += 1;
                wrong_source += usize::from(tr.provenance[f] != Some(Provenance::RigidForward));
            }
        }
    }
    let rmse_occ = (sq_occ / n_occ as f64).sqrt();
    let rmse_pre = (sq_pre / n_pre as f64).sqrt();
    check(
        rmse_occ < 1e-5 && rmse_pre < 1e-5 && wrong_source == 0,
        format!("occluded RMSE {rmse_occ:.2e} ({n_occ} cells), pre-appearance RMSE {rmse_pre:.2e} ({n_pre} cells)"),
    )
}

fn poly_fourier_recovery() -> Outcome {
    let spec = BasisSpec::new(3, 8, std::f64::consts::TAU, 100).map_err(|e| e.to_string())?;
    let fitter = TrajectoryFitter::new(spec, 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut coef_err, mut resid) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let curve = PolyFourierCurve {
            spec,
            coefficients: DMatrix::from_fn(3, spec.dim(), |_, _| rng.random_range(-1.0..1.0)),
        };
        let samples: Vec<Vector3<f64>> = (0..spec.frame_count).map(|f| curve.evaluate3(spec.tau(f))).collect();
        let fit = fitter.fit(&samples).map_err(|e| e.to_string())?;
        coef_err = coef_err.max((&fit.curve.coefficients - &curve.coefficients).abs().max());
        for (f, s) in samples.iter().enumerate() {
            resid = resid.max((fit.curve.evaluate3(spec.tau(f)) - s).abs().max());
        }
    }
    check(
        coef_err < 1e-8 && resid < 1e-10,
        format!("max coefficient error {coef_err:.2e}, max evaluation residual {resid:.2e} (cond {:.2e})", fitter.condition()),
    )
}

fn default_deformation(rng: &mut impl Rng, scale: f64) -> DeformationParams {
    let spec = BasisSpec::new(3, 32, std::f64::consts::TAU, 100).unwrap();
    let mut d = DeformationParams::from_position_curve(PolyFourierCurve {
        spec,
        coefficients: DMatrix::from_fn(3, spec.dim(), |_, _| rng.random_range(-1.0..1.0)),
    });
    d.rotation = DMatrix::from_fn(4, spec.dim() - 1, |_, _| rng.random_range(-scale..scale));
    d.q0 = random_quaternion(rng);
    d
}

fn rotation_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    let mut d = default_deformation(&mut rng, 1.0);
    for k in 0..100_000 {
        if k % 100 == 0 {
            d = default_deformation(&mut rng, 1.0);
        }
        let tau = rng.random_range(0.0..=1.0);
        match d.eval_rotation(tau) {
            Ok(q) => worst = worst.max((q.norm() - 1.0).abs()),
            Err(_) => degenerate += 1,
        }
    }
    let mut exact = true;
    for _ in 0..1000 {
        let mut z = default_deformation(&mut rng, 1.0);
        z.rotation.fill(0.0);
        let tau = rng.random_range(0.0..=1.0);
        exact &= z.eval_rotation(tau).map(|q| q == z.q0).unwrap_or(false);
    }
    check(
        worst <= 1e-12 && degenerate == 0 && exact,
        format!("max |‖q‖ − 1| {worst:.2e} over 1e5 samples, {degenerate} degenerate, zero deformation exact: {exact}"),
    )
}

fn normwise(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1e-300)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let (mut worst_pos, mut worst_rot) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = default_deformation(&mut rng, 0.1);
        let tau = rng.random_range(0.0..=1.0);

        let base = d.position_vector();
        let mut fd = DMatrix::zeros(3, base.len());
        for k in 0..base.len() {
            let eval = |s: f64| {
                let mut e = d.clone();
                let mut v = base.clone();
                v[k] += s;
                e.set_position_vector(&v);
                e.eval_position(tau)
            };
            fd.set_column(k, &((eval(h) - eval(-h)) / (2.0 * h)));
        }
        worst_pos = worst_pos.max(normwise(&d.jacobian_position(tau), &fd));

        let base = d.rotation_vector();
        let mut fd = DMatrix::zeros(4, base.len());
        for k in 0..base.len() {
            let eval = |s: f64| -> DVector<f64> {
                let mut e = d.clone();
                let mut v = base.clone();
                v[k] += s;
                e.set_rotation_vector(&v);
                DVector::from_column_slice(e.eval_rotation(tau).unwrap().to_vector().as_slice())
            };
            fd.set_column(k, &((eval(h) - eval(-h)) / (2.0 * h)));
        }
        let analytic = d.jacobian_rotation(tau).map_err(|e| e.to_string())?;
        worst_rot = worst_rot.max(normwise(&analytic, &fd));
    }
    check(
        worst_pos < 1e-5 && worst_rot < 1e-5,
        format!("max relative error: position {worst_pos:.2e}, rotation {worst_rot:.2e}"),
    )
}

fn pearson_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_pos, mut worst_neg) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (w, h) = (rng.random_range(4..40), rng.random_range(4..40));
        let d = Raster::from_vec(w, h, (0..w * h).map(|_| rng.random_range(0.5..20.0)).collect()).unwrap();
        let a = rng.random_range(0.01..10.0);
        let b = rng.random_range(-5.0..5.0);
        let pos = pearson_depth_loss(&d, &d.map(|v| a * v + b), None).map_err(|e| e.to_string())?;
        let neg = pearson_depth_loss(&d, &d.map(|v| -a * v + b), None).map_err(|e| e.to_string())?;
        worst_pos = worst_pos.max(pos.abs());
        worst_neg = worst_neg.max((neg - 2.0).abs());
    }
    check(
        worst_pos < 1e-9 && worst_neg <= 1e-9,
        format!("affine max loss {worst_pos:.2e}, anti-correlated max |loss − 2| {worst_neg:.2e}"),
    )
}

fn random_finite_f32(rng: &mut impl Rng) -> f32 {
    loop {
        let v = f32::from_bits(rng.random());
        if v.is_finite() {
            return v;
        }
    }
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fail = |name: &'static str, ok: bool| {
        let e = failures.entry(name).or_insert(0);
        *e += usize::from(!ok);
    };
    let bits = |r: &Raster<f32>| r.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for k in 0..50 {
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));

        let depth = Raster::from_vec(w, h, (0..w * h).map(|_| random_finite_f32(&mut rng)).collect()).unwrap();
        let bytes = encode_pfm(&depth);
        let back = decode_pfm(&bytes).map_err(|e| e.to_string())?;
        fail("pfm", bits(&back) == bits(&depth) && encode_pfm(&back) == bytes);

        let bound = w.max(h) as f32;
        let uv: Vec<[f32; 2]> = (0..w * h)
            .map(|_| [rng.random_range(-bound..bound) * 0.999, rng.random_range(-bound..bound) * 0.999])
            .collect();
        let flow = FlowField::new(Raster::from_vec(w, h, uv).unwrap()).map_err(|e| e.to_string())?;
        let bytes = encode_flo(&flow);
        let back = decode_flo(&bytes).map_err(|e| e.to_string())?;
        let same = back.flow.data.iter().zip(&flow.flow.data).all(|(a, b)| {
            a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()
        });
        fail("flo", same && encode_flo(&back) == bytes);

        let mut masks = InstanceMaskFrame::empty(k, w, h);
        for v in masks.ids.data.iter_mut() {
            *v = [0, 0, 1, 2, 7, 65535][rng.random_range(0..6)];
        }
        for id in masks.present_ids() {
            masks.confidence.insert(id, rng.random());
        }
        let path = dir.path().join(format!("m{k}.pgm"));
        write_masks(&path, &masks).map_err(|e| e.to_string())?;
        let first = std::fs::read(&path).unwrap();
        let back = read_masks(&path, k).map_err(|e| e.to_string())?;
        write_masks(&path, &back).map_err(|e| e.to_string())?;
        fail("pgm", back == masks && std::fs::read(&path).unwrap() == first);

        let mut observations = Vec::new();
        for track in 0..rng.random_range(1..20u32) {
            for frame in 0..rng.random_range(1..10usize) {
                observations.push(TrackObservation {
                    track_id: track * 3,
                    frame,
                    x: rng.random_range(-0.5..w as f64 - 0.5),
                    y: rng.random_range(-0.5..h as f64 - 0.5),
                    visible: rng.random_bool(0.7),
                });
            }
        }
        let table = TrackTable::new(w, h, observations).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("t{k}.csv"));
        write_tracks(&path, &table).map_err(|e| e.to_string())?;
        let first = std::fs::read(&path).unwrap();
        let back = read_tracks(&path, w, h).map_err(|e| e.to_string())?;
        write_tracks(&path, &back).map_err(|e| e.to_string())?;
        fail("tracks", back == table && std::fs::read(&path).unwrap() == first);

        let spec = BasisSpec::new(rng.random_range(0..4), rng.random_range(0..6), 6.0, 50).unwrap();
        let records: Vec<GaussianRecord> = (0..rng.random_range(0..40))
            .map(|i| {
                let color = [rng.random(), rng.random(), rng.random()];
                let scale = rng.random_range(1e-3..1.0);
                let mut r = if rng.random_bool(0.5) {
                    GaussianRecord::new_static(Vector3::from_fn(|_, _| rng.random_range(-9.0..9.0)), scale, 0.1, color)
                } else {
                    let mut d = DeformationParams::from_position_curve(PolyFourierCurve {
                        spec,
                        coefficients: DMatrix::from_fn(3, spec.dim(), |_, _| rng.random_range(-2.0..2.0)),
                    });
                    d.rotation = DMatrix::from_fn(4, spec.dim() - 1, |_, _| rng.random_range(-0.1..0.1));
                    d.q0 = random_quaternion(&mut rng);
                    GaussianRecord::new_dynamic(d, rng.random_range(1..9), i, scale, 0.1, color)
                };
                r.rotation = random_quaternion(&mut rng);
                r
            })
            .collect();
        let bytes = encode_gaussians_ply(&records).map_err(|e| e.to_string())?;
        let back = decode_gaussians_ply(&bytes).map_err(|e| e.to_string())?;
        let again = encode_gaussians_ply(&back).map_err(|e| e.to_string())?;
        let stable = decode_gaussians_ply(&again).map_err(|e| e.to_string())? == back;
        fail("ply", again == bytes && stable && back.len() == records.len());
    }
    let total: usize = failures.values().sum();
    let summary = failures.iter().map(|(k, v)| format!("{k} {}/50", 50 - v)).collect::<Vec<_>>().join(", ");
    check(total == 0, summary)
}

fn dir_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dynsplat");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = dir.path().join("dataset");
    let run = |args: &[&str]| -> Result<std::process::Output, String> {
        Command::new(bin)
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())
    };
    let ds_s = ds.to_str().unwrap();
    let synth = run(&["synth", "--out", ds_s, "--frames", "80", "--seed", "11"])?;
    if !synth.status.success() {
        return Err(format!("synth failed: {}", String::from_utf8_lossy(&synth.stderr)));
    }
    let mut timings = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let start = Instant::now();
        let r = run(&["run", "--dataset", ds_s, "--out", out.to_str().unwrap(), "--seed", "11"])?;
        timings.push(start.elapsed().as_secs_f64());
        if !r.status.success() {
            return Err(format!("run failed: {}", String::from_utf8_lossy(&r.stderr)));
        }
    }
    let (a, b) = (dir_contents(&dir.path().join("a")), dir_contents(&dir.path().join("b")));
    let identical = a == b && !a.is_empty();
    let v = run(&["verify", "--out", dir.path().join("a").to_str().unwrap(), "--json"])?;
    let report: serde_json::Value = serde_json::from_slice(&v.stdout).map_err(|e| format!("verify output: {e}"))?;
    let rmse = report["rmse"].as_f64().unwrap_or(f64::INFINITY);
    let min_iou = report["iou"]
        .as_array()
        .map(|a| a.iter().filter_map(|i| i["min_iou"].as_f64()).fold(1.0, f64::min))
        .unwrap_or(0.0);
    let n_dyn = report["dynamic_gaussians"].as_u64().unwrap_or(0);
    let wall = timings.iter().copied().fold(0.0, f64::max);
    check(
        identical && v.status.code() == Some(0) && rmse < 1e-4 && min_iou == 1.0 && n_dyn > 0 && wall < 120.0,
        format!(
            "{} files identical: {identical}; RMSE {rmse:.2e} over {n_dyn} dynamic Gaussians; min IoU {min_iou}; \
             run {wall:.2}s; verify exit {:?}",
            a.len(),
            v.status.code()
        ),
    )
}

fn constants_conformance() -> Outcome {
    let text = PipelineConfig::default().to_toml().map_err(|e| e.to_string())?;
    let v: toml::Value = toml::from_str(&text).map_err(|e| e.to_string())?;
    let get = |section: &str, key: &str| v.get(section).and_then(|s| s.get(key)).cloned();
    let expected: [(&str, &str, toml::Value); 8] = [
        ("detect", "tau_epi", 3.0.into()),
        ("track", "tau_mask", 0.8.into()),
        ("encode", "d_pol", 3.into()),
        ("encode", "d_fourier", 32.into()),
        ("loss", "lambda_ssim", 0.2.into()),
        ("loss", "lambda_depth", 0.2.into()),
        ("init", "static_stride", 20.into()),
        ("flow", "query_points", 10000.into()),
    ];
    let wrong: Vec<String> = expected
        .iter()
        .filter(|(s, k, want)| get(s, k).as_ref() != Some(want))
        .map(|(s, k, want)| format!("{s}.{k}: expected {want}, found {:?}", get(s, k)))
        .collect();
    check(wrong.is_empty(), if wrong.is_empty() { "all 8 defaults match".into() } else { wrong.join("; ") })
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("epipolar exactness", epipolar_exactness),
        ("rigid recovery", rigid_recovery),
        ("occlusion fill", occlusion_fill),
        ("poly-fourier exact recovery", poly_fourier_recovery),
        ("rotation contract", rotation_contract),
        ("gradient checks", gradient_checks),
        ("pearson affine invariance", pearson_invariance),
        ("format round trips", format_round_trips),
        ("end-to-end determinism", end_to_end),
        ("constants conformance", constants_conformance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
