use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::io::{read_gaussians_ply, read_masks, InstanceMaskFrame};
use crate::synthetic::{load_ground_truth, DatasetPaths};

use super::{fail, require, OutputLayout, PipelineConfig, PipelineError, Stage};

/// Largest trajectory RMSE accepted by [`verify`], in scene units.
pub const VERIFY_RMSE_TOL: f64 = 1e-4;

/// Mask agreement of one ground-truth instance with its matched prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceIou {
    pub gt_id: u16,
    /// `None` when no predicted instance overlaps it.
    pub predicted_id: Option<u16>,
    pub mean_iou: f64,
    pub min_iou: f64,
    /// Frames where either mask is non-empty.
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub dynamic_gaussians: usize,
    /// Dynamic Gaussians whose track has no ground truth.
    pub unmatched_tracks: usize,
    /// Per predicted instance: (RMSE, count).
    pub rmse_by_instance: BTreeMap<u16, (f64, usize)>,
    pub rmse: f64,
    pub max_error: f64,
    pub iou: Vec<InstanceIou>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn min_iou(&self) -> f64 {
        self.iou.iter().map(|i| i.min_iou).fold(1.0, f64::min)
    }

    /// Human-readable tables.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("instance  gaussians  rmse\n");
        for (id, (rmse, n)) in &self.rmse_by_instance {
            s.push_str(&format!("{id:>8}  {n:>9}  {rmse:.3e}\n"));
        }
        s.push_str(&format!(
            "all       {:>9}  {:.3e}  (max {:.3e}, unmatched {})\n\n",
            self.dynamic_gaussians, self.rmse, self.max_error, self.unmatched_tracks
        ));
        s.push_str("gt_id  predicted  frames  mean_iou  min_iou\n");
        for i in &self.iou {
            let pred = i.predicted_id.map_or("-".to_string(), |p| p.to_string());
            s.push_str(&format!(
                "{:>5}  {pred:>9}  {:>6}  {:.6}  {:.6}\n",
                i.gt_id, i.frames, i.mean_iou, i.min_iou
            ));
        }
        s.push_str(if self.passed { "PASS\n" } else { "FAIL\n" });
        s
    }
}

fn pixel_counts(gt: &[InstanceMaskFrame], pred: &[InstanceMaskFrame]) -> BTreeMap<(u16, u16), usize> {
    let mut joint = BTreeMap::new();
    for (g, p) in gt.iter().zip(pred) {
        for (&a, &b) in g.ids.data.iter().zip(&p.ids.data) {
            *joint.entry((a, b)).or_insert(0) += 1;
        }
    }
    joint
}

/// Greedy one-to-one matching by sequence-level IoU, best pair first.
fn match_instances(gt: &[InstanceMaskFrame], pred: &[InstanceMaskFrame]) -> BTreeMap<u16, u16> {
    let joint = pixel_counts(gt, pred);
    let mut area_g: BTreeMap<u16, usize> = BTreeMap::new();
    let mut area_p: BTreeMap<u16, usize> = BTreeMap::new();
    for (&(a, b), &n) in &joint {
        *area_g.entry(a).or_insert(0) += n;
        *area_p.entry(b).or_insert(0) += n;
    }
    let mut pairs: Vec<(f64, u16, u16)> = joint
        .iter()
        .filter(|((a, b), n)| *a != 0 && *b != 0 && **n > 0)
        .map(|(&(a, b), &n)| (n as f64 / (area_g[&a] + area_p[&b] - n) as f64, a, b))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_g = BTreeSet::new();
    let mut used_p = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (_, a, b) in pairs {
        if !used_g.contains(&a) && !used_p.contains(&b) {
            used_g.insert(a);
            used_p.insert(b);
            out.insert(a, b);
        }
    }
    out
}

fn frame_iou(g: &InstanceMaskFrame, p: &InstanceMaskFrame, gt_id: u16, pred_id: Option<u16>) -> Option<f64> {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in g.ids.data.iter().zip(&p.ids.data) {
        let in_g = a == gt_id;
        let in_p = pred_id == Some(b);
        inter += usize::from(in_g && in_p);
        union += usize::from(in_g || in_p);
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

/// Compares pipeline outputs with a synthetic dataset's ground truth:
/// dynamic Gaussian trajectories by track ID, instance masks by greedy
/// matching. Passes when the RMSE is below [`VERIFY_RMSE_TOL`] and every
/// matched instance has IoU 1 on every frame.
pub fn verify(cfg: &PipelineConfig, layout: &OutputLayout) -> Result<VerifyReport, PipelineError> {
    const S: Stage = Stage::Init;
    let paths = DatasetPaths::new(&cfg.dataset);
    let cams = crate::io::read_cameras(require(S, paths.cameras())?).map_err(fail(S))?;
    let t = cams.len();
    require(S, paths.gt_trajectories())?;
    let gt = load_ground_truth(&paths, t).map_err(fail(S))?;
    let records = read_gaussians_ply(require(S, layout.gaussians())?).map_err(fail(S))?;

    let mut sums: BTreeMap<u16, (f64, usize)> = BTreeMap::new();
    let (mut total, mut count, mut max_error, mut unmatched, mut dynamic) = (0.0, 0usize, 0.0f64, 0usize, 0usize);
    for r in &records {
        let Some(motion) = &r.motion else { continue };
        dynamic += 1;
        let Some((_, path)) = gt.trajectories.get(&motion.track_id) else {
            unmatched += 1;
            continue;
        };
        let spec = motion.deformation.spec();
        let mut sq = 0.0;
        for (f, truth) in path.iter().enumerate() {
            let e = (r.position_at(spec.tau(f)) - truth).norm();
            max_error = max_error.max(e);
            sq += e * e;
        }
        total += sq;
        count += path.len();
        let entry = sums.entry(motion.instance_id).or_insert((0.0, 0));
        entry.0 += sq / path.len().max(1) as f64;
        entry.1 += 1;
    }
    let rmse = if count > 0 { (total / count as f64).sqrt() } else { f64::INFINITY };
    let rmse_by_instance = sums
        .into_iter()
        .map(|(id, (s, n))| (id, ((s / n as f64).sqrt(), n)))
        .collect();

    let pred = (0..t)
        .map(|f| read_masks(require(S, layout.track_mask(f))?, f).map_err(fail(S)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let matching = match_instances(&gt.masks, &pred);
    let gt_ids: BTreeSet<u16> = gt.masks.iter().flat_map(|m| m.present_ids()).collect();
    let iou: Vec<InstanceIou> = gt_ids
        .into_iter()
        .map(|gt_id| {
            let predicted_id = matching.get(&gt_id).copied();
            let per_frame: Vec<f64> = gt
                .masks
                .iter()
                .zip(&pred)
                .filter_map(|(g, p)| frame_iou(g, p, gt_id, predicted_id))
                .collect();
            InstanceIou {
                gt_id,
                predicted_id,
                mean_iou: per_frame.iter().sum::<f64>() / per_frame.len().max(1) as f64,
                min_iou: per_frame.iter().copied().fold(1.0, f64::min),
                frames: per_frame.len(),
            }
        })
        .collect();
    let extra_predictions = pred
        .iter()
        .flat_map(|m| m.present_ids())
        .any(|id| !matching.values().any(|&p| p == id));
    let mut report = VerifyReport {
        dynamic_gaussians: dynamic,
        unmatched_tracks: unmatched,
        rmse_by_instance,
        rmse,
        max_error,
        iou,
        passed: false,
    };
    report.passed = rmse < VERIFY_RMSE_TOL && unmatched == 0 && !extra_predictions && report.min_iou() >= 1.0;
    Ok(report)
}
