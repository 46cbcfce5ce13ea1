//! Detection, prediction and planning metrics.

use serde::{Deserialize, Serialize};

use crate::prediction::TrajectoryDistribution;
use crate::scenario::{obb_iou, obb_overlap, DetectionBox, Obb, ObjectState};

pub const DEFAULT_AP_IOU: f64 = 0.5;
pub const DEFAULT_TAU_EPA: f64 = 2.0;
pub const DEFAULT_EPA_ALPHA: f64 = 0.5;

/// Confidence-ordered greedy assignment of detections to ground truth of the
/// same class at IoU ≥ `iou_threshold`. Returns, per detection in input
/// order, the index of its ground-truth partner.
pub fn greedy_match(detections: &[DetectionBox], gt: &[ObjectState], iou_threshold: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
            .then(a.cmp(&b))
    });
    let gt_boxes: Vec<Obb> = gt.iter().map(ObjectState::footprint).collect();
    let mut taken = vec![false; gt.len()];
    let mut out = vec![None; detections.len()];
    for d in order {
        let det = &detections[d];
        let fp = det.footprint();
        let mut best: Option<(usize, f64)> = None;
        for (g, gb) in gt_boxes.iter().enumerate() {
            if taken[g] || gt[g].class != det.class {
                continue;
            }
            let iou = obb_iou(&fp, gb);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            out[d] = Some(g);
        }
    }
    out
}

/// `(confidence, is true positive)` for every detection of one frame.
pub fn score_detections(detections: &[DetectionBox], gt: &[ObjectState], iou_threshold: f64) -> Vec<(f64, bool)> {
    greedy_match(detections, gt, iou_threshold)
        .iter()
        .zip(detections)
        .map(|(m, d)| (d.confidence, m.is_some()))
        .collect()
}

/// All-point interpolated area under the precision–recall curve of pooled
/// scored detections. `None` without ground truth.
pub fn ap_from_scores(scored: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (k, (_, hit)) in sorted.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        points.push((tp as f64 / gt_count as f64, tp as f64 / (k + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..points.len() {
        let (recall, _) = points[k];
        if recall > prev_recall {
            let envelope = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    Some(ap)
}

pub fn average_precision(detections: &[DetectionBox], gt: &[ObjectState], iou_threshold: f64) -> Option<f64> {
    ap_from_scores(&score_detections(detections, gt, iou_threshold), gt.len())
}

/// Detection-level matching, with each pair's prediction error attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MatchResult {
    /// `(detection index, ground-truth index)`.
    pub pairs: Vec<(usize, usize)>,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// minFDE of each pair, `None` where no ground-truth future exists.
    pub pair_min_fde: Vec<Option<f64>>,
}

impl MatchResult {
    pub fn from_assignment(assignment: &[Option<usize>], gt_count: usize) -> Self {
        let pairs: Vec<(usize, usize)> = assignment
            .iter()
            .enumerate()
            .filter_map(|(d, g)| g.map(|g| (d, g)))
            .collect();
        Self {
            false_positives: assignment.len() - pairs.len(),
            false_negatives: gt_count - pairs.len(),
            pair_min_fde: vec![None; pairs.len()],
            pairs,
        }
    }

    pub fn gt_count(&self) -> usize {
        self.pairs.len() + self.false_negatives
    }

    pub fn recall(&self) -> Option<f64> {
        let n = self.gt_count();
        (n > 0).then(|| self.pairs.len() as f64 / n as f64)
    }
}

/// `(ADE, FDE)` of one mean path against a ground-truth path; compares the
/// common prefix.
pub fn displacement_errors(path: &[[f64; 2]], gt: &[[f64; 2]]) -> Option<(f64, f64)> {
    let n = path.len().min(gt.len());
    if n == 0 {
        return None;
    }
    let d: Vec<f64> = path
        .iter()
        .zip(gt)
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect();
    Some((d.iter().sum::<f64>() / n as f64, d[n - 1]))
}

/// Per-object `(minADE, minFDE)`, each minimised over modes independently.
pub fn object_min_ade_fde(dist: &TrajectoryDistribution, object: usize, gt: &[[f64; 2]]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for mode in 0..dist.modes {
        let path: Vec<[f64; 2]> = dist.mode_path(mode, object).iter().map(|e| e.mean).collect();
        if let Some((ade, fde)) = displacement_errors(&path, gt) {
            best = Some(match best {
                None => (ade, fde),
                Some((a, f)) => (a.min(ade), f.min(fde)),
            });
        }
    }
    best
}

/// Mean over objects with a ground-truth future of the per-object
/// minADE and minFDE.
pub fn min_ade_fde(dist: &TrajectoryDistribution, gt: &[Option<Vec<[f64; 2]>>]) -> Option<(f64, f64)> {
    let per: Vec<(f64, f64)> = gt
        .iter()
        .enumerate()
        .take(dist.objects())
        .filter_map(|(i, g)| g.as_ref().and_then(|g| object_min_ade_fde(dist, i, g)))
        .collect();
    if per.is_empty() {
        return None;
    }
    let n = per.len() as f64;
    Some((
        per.iter().map(|p| p.0).sum::<f64>() / n,
        per.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

/// `(|N̂_TP| − α·N_FP) / N_GT` where `N̂_TP` counts pairs with minFDE below
/// `tau`. `None` without ground truth.
pub fn epa(matches: &MatchResult, tau: f64, alpha: f64) -> Option<f64> {
    let n_gt = matches.gt_count();
    if n_gt == 0 {
        return None;
    }
    let good = matches
        .pair_min_fde
        .iter()
        .filter(|f| f.is_some_and(|f| f < tau))
        .count();
    Some((good as f64 - alpha * matches.false_positives as f64) / n_gt as f64)
}

/// Whether the ego footprints collide with any ground-truth footprint at the
/// same sample index.
pub fn collides(ego: &[Obb], gt: &[Vec<Obb>]) -> bool {
    ego.iter()
        .zip(gt)
        .any(|(e, others)| others.iter().any(|o| obb_overlap(e, o)))
}

/// Fraction of scenarios flagged as colliding.
pub fn collision_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

/// Linear resampling of `(s, l, φ)` samples at spacing `from_dt` onto
/// `count` samples at spacing `to_dt`; holds the last sample past the end.
pub fn resample(samples: &[[f64; 3]], from_dt: f64, to_dt: f64, count: usize) -> Vec<[f64; 3]> {
    if samples.is_empty() {
        return vec![];
    }
    (0..count)
        .map(|k| {
            let x = k as f64 * to_dt / from_dt;
            let i = x.floor() as usize;
            if i + 1 >= samples.len() {
                return *samples.last().expect("non-empty");
            }
            let u = x - i as f64;
            let (a, b) = (samples[i], samples[i + 1]);
            [
                a[0] + u * (b[0] - a[0]),
                a[1] + u * (b[1] - a[1]),
                a[2] + u * (b[2] - a[2]),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::{Intention, ModeStep, Participant};
    use crate::scenario::ObjectClass;

    fn gt(id: u32, x: f64, y: f64) -> ObjectState {
        ObjectState::new(id, ObjectClass::Vehicle, x, y, 0.0, 5.0)
    }

    fn det(x: f64, y: f64, conf: f64) -> DetectionBox {
        let mut d = DetectionBox::from_state(&gt(0, x, y), 0, 0.0);
        d.confidence = conf;
        d
    }

    #[test]
    fn ap_examples() {
        let truth = vec![gt(1, 0.0, 0.0), gt(2, 20.0, 0.0)];
        let perfect = vec![det(0.0, 0.0, 0.9), det(20.0, 0.0, 0.8)];
        assert_eq!(average_precision(&perfect, &truth, 0.5), Some(1.0));
        let spurious = vec![det(50.0, 0.0, 0.9), det(60.0, 5.0, 0.8)];
        assert_eq!(average_precision(&spurious, &truth, 0.5), Some(0.0));
        assert_eq!(average_precision(&perfect, &[], 0.5), None);

        let one = vec![gt(1, 0.0, 0.0)];
        let good_first = vec![det(0.0, 0.0, 0.9), det(30.0, 0.0, 0.8)];
        assert_eq!(average_precision(&good_first, &one, 0.5), Some(1.0));
        let bad_first = vec![det(0.0, 0.0, 0.8), det(30.0, 0.0, 0.9)];
        assert_eq!(average_precision(&bad_first, &one, 0.5), Some(0.5));
    }

    #[test]
    fn greedy_match_is_one_to_one() {
        let truth = vec![gt(1, 0.0, 0.0)];
        let dets = vec![det(0.1, 0.0, 0.7), det(0.0, 0.0, 0.9)];
        assert_eq!(greedy_match(&dets, &truth, 0.5), vec![None, Some(0)]);
    }

    #[test]
    fn epa_examples() {
        let mut m = MatchResult {
            pairs: (0..8).map(|i| (i, i)).collect(),
            false_positives: 2,
            false_negatives: 2,
            pair_min_fde: vec![Some(0.5); 8],
        };
        assert_eq!(epa(&m, 2.0, 0.5), Some(0.7));
        for f in m.pair_min_fde.iter_mut().take(3) {
            *f = Some(2.0);
        }
        assert!((epa(&m, 2.0, 0.5).unwrap() - 0.4).abs() < 1e-15);
        let perfect = MatchResult {
            pairs: vec![(0, 0), (1, 1)],
            pair_min_fde: vec![Some(0.0); 2],
            ..Default::default()
        };
        assert_eq!(epa(&perfect, 2.0, 0.5), Some(1.0));
        assert_eq!(epa(&MatchResult::default(), 2.0, 0.5), None);
    }

    fn line_dist(offsets: &[f64]) -> TrajectoryDistribution {
        let cur = gt(1, 0.0, 0.0);
        let mut d = TrajectoryDistribution::empty(offsets.len(), 3);
        d.participants.push(Participant {
            track_id: 1,
            class: cur.class,
            length: cur.length,
            width: cur.width,
            mass: cur.mass,
            current: cur,
        });
        for off in offsets {
            for k in 1..=3 {
                d.entries.push(ModeStep {
                    mean: [k as f64, *off],
                    std: [1.0, 1.0],
                    corr: 0.0,
                    heading: 0.0,
                    speed: 2.0,
                });
            }
            d.weights.push(1.0 / offsets.len() as f64);
            d.intentions.push(Intention::KEEP);
        }
        d
    }

    #[test]
    fn min_ade_fde_examples() {
        let truth = Some(vec![[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        assert_eq!(min_ade_fde(&line_dist(&[0.0]), &[truth.clone()]), Some((0.0, 0.0)));
        assert_eq!(min_ade_fde(&line_dist(&[1.0]), &[truth.clone()]), Some((1.0, 1.0)));
        assert_eq!(min_ade_fde(&line_dist(&[2.0, 0.5]), &[truth]), Some((0.5, 0.5)));
        assert_eq!(min_ade_fde(&line_dist(&[0.0]), &[None]), None);
    }

    #[test]
    fn collision_examples() {
        let ego = vec![Obb::new(0.0, 0.0, 0.0, 4.5, 1.9)];
        let far = vec![vec![Obb::new(40.0, 40.0, 0.0, 4.5, 1.9)]];
        assert!(!collides(&ego, &far));
        let ego_path: Vec<Obb> = (0..5).map(|k| Obb::new(5.0 * k as f64, 0.0, 0.0, 4.5, 1.9)).collect();
        let stopped: Vec<Vec<Obb>> = (0..5).map(|_| vec![Obb::new(15.0, 0.0, 0.0, 4.5, 1.9)]).collect();
        assert!(collides(&ego_path, &stopped));
        assert_eq!(collision_rate(&[true, false, false, false]), 0.25);
    }

    #[test]
    fn resample_interpolates() {
        let s = vec![[0.0, 0.0, 0.0], [2.0, 1.0, 0.2]];
        let r = resample(&s, 1.0, 0.5, 4);
        assert_eq!(r[1], [1.0, 0.5, 0.1]);
        assert_eq!(r[3], [2.0, 1.0, 0.2]);
    }
}
