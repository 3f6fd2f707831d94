//! Class-agnostic instance segmentation metrics: AP at IoU thresholds,
//! AP25, AP50 and mAP over 0.50:0.05:0.95.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Point indices (sorted, unique) with a confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct InstancePrediction<T: Scalar> {
    pub points: Vec<u32>,
    pub confidence: T,
}

/// How the precision/recall curve is integrated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrIntegration {
    /// Exact area under the monotone precision envelope.
    #[default]
    Envelope,
    /// Mean of the envelope sampled at recall 0, 0.01, ..., 1.
    Sampled101,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Ground-truth instances with fewer points are ignored.
    pub min_gt_points: usize,
    pub integration: PrIntegration,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { min_gt_points: 1, integration: PrIntegration::Envelope }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ThresholdResult<T: Scalar> {
    pub threshold: T,
    pub ap: T,
    /// Precision and recall after each ranked prediction.
    pub precision: Vec<T>,
    pub recall: Vec<T>,
    /// (prediction index, ground-truth index) pairs.
    pub matches: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvaluationReport<T: Scalar> {
    #[serde(rename = "mAP")]
    pub map: T,
    #[serde(rename = "AP50")]
    pub ap50: T,
    #[serde(rename = "AP25")]
    pub ap25: T,
    pub num_predictions: usize,
    pub num_ground_truth: usize,
    pub per_threshold: Vec<ThresholdResult<T>>,
}

/// The ten thresholds 0.50, 0.55, ..., 0.95.
pub fn map_thresholds<T: Scalar>() -> Vec<T> {
    (0..10).map(|i| T::lit(0.5 + 0.05 * i as f64)).collect()
}

fn intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// IoU of two sorted point-index sets.
pub fn instance_iou<T: Scalar>(pred: &[u32], gt: &[u32]) -> Result<T> {
    if pred.is_empty() && gt.is_empty() {
        return Err(Error::InvalidParameter("IoU of two empty sets".into()));
    }
    let inter = intersection(pred, gt);
    Ok(T::from_count(inter) / T::from_count(pred.len() + gt.len() - inter))
}

/// IoU matrix, `preds.len()` rows by `gts.len()` columns.
pub fn iou_matrix<T: Scalar>(preds: &[InstancePrediction<T>], gts: &[Vec<u32>]) -> Vec<Vec<T>> {
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
    for (g, pts) in gts.iter().enumerate() {
        for &p in pts {
            owner.insert(p, g);
        }
    }
    preds
        .par_iter()
        .map(|pred| {
            let mut inter = vec![0usize; gts.len()];
            for p in &pred.points {
                if let Some(&g) = owner.get(p) {
                    inter[g] += 1;
                }
            }
            inter
                .iter()
                .zip(gts)
                .map(|(&i, gt)| {
                    let union = pred.points.len() + gt.len() - i;
                    if union == 0 {
                        T::zero()
                    } else {
                        T::from_count(i) / T::from_count(union)
                    }
                })
                .collect()
        })
        .collect()
}

/// Ranking: confidence descending, best IoU descending, point set
/// ascending, index ascending.
fn ranking<T: Scalar>(preds: &[InstancePrediction<T>], ious: &[Vec<T>]) -> Vec<usize> {
    let best: Vec<T> = ious.iter().map(|row| row.iter().copied().fold(T::zero(), T::max)).collect();
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .partial_cmp(&preds[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(best[b].partial_cmp(&best[a]).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| preds[a].points.cmp(&preds[b].points))
            .then(a.cmp(&b))
    });
    order
}

/// Area under the precision envelope for a ranked true/false-positive list.
pub fn ap_from_ranked<T: Scalar>(tp: &[bool], n_gt: usize, integration: PrIntegration) -> (T, Vec<T>, Vec<T>) {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(T::from_count(hits) / T::from_count(k + 1));
        recall.push(T::from_count(hits) / T::from_count(n_gt));
    }
    let mut envelope = precision.clone();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let ap = match integration {
        PrIntegration::Envelope => {
            let mut area = T::zero();
            let mut prev = T::zero();
            for (r, p) in recall.iter().zip(&envelope) {
                area += (*r - prev) * *p;
                prev = *r;
            }
            area
        }
        PrIntegration::Sampled101 => {
            let mut sum = T::zero();
            for i in 0..=100 {
                let r = T::lit(i as f64 / 100.0);
                let p = recall
                    .iter()
                    .zip(&envelope)
                    .find(|(rk, _)| **rk >= r - T::lit(1e-12))
                    .map_or(T::zero(), |(_, p)| *p);
                sum += p;
            }
            sum / T::lit(101.0)
        }
    };
    (ap.min(T::one()).max(T::zero()), precision, recall)
}

fn ap_with_matrix<T: Scalar>(
    n_gt: usize,
    ious: &[Vec<T>],
    order: &[usize],
    threshold: T,
    integration: PrIntegration,
) -> ThresholdResult<T> {
    let mut taken = vec![false; n_gt];
    let mut tp = Vec::with_capacity(order.len());
    let mut matches = Vec::new();
    for &p in order {
        let mut best: Option<(usize, T)> = None;
        for (g, &iou) in ious[p].iter().enumerate() {
            if !taken[g] && iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matches.push((p, g));
        }
        tp.push(best.is_some());
    }
    let (ap, precision, recall) = ap_from_ranked(&tp, n_gt, integration);
    ThresholdResult { threshold, ap, precision, recall, matches }
}

fn check_threshold<T: Scalar>(t: T) -> Result<()> {
    if t > T::zero() && t <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("IoU threshold must lie in (0,1], got {t}")))
    }
}

/// AP at one IoU threshold using greedy matching.
pub fn average_precision<T: Scalar>(
    preds: &[InstancePrediction<T>],
    gts: &[Vec<u32>],
    threshold: T,
    integration: PrIntegration,
) -> Result<ThresholdResult<T>> {
    check_threshold(threshold)?;
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let ious = iou_matrix(preds, gts);
    let order = ranking(preds, &ious);
    Ok(ap_with_matrix(gts.len(), &ious, &order, threshold, integration))
}

/// AP25, AP50 and mAP for a set of predictions.
pub fn evaluate<T: Scalar>(
    preds: &[InstancePrediction<T>],
    gts: &[Vec<u32>],
    options: &EvalOptions,
) -> Result<EvaluationReport<T>> {
    let gts: Vec<Vec<u32>> = gts.iter().filter(|g| g.len() >= options.min_gt_points.max(1)).cloned().collect();
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let ious = iou_matrix(preds, &gts);
    let order = ranking(preds, &ious);
    let mut thresholds = vec![T::lit(0.25)];
    thresholds.extend(map_thresholds::<T>());
    let per_threshold: Vec<ThresholdResult<T>> = thresholds
        .par_iter()
        .map(|&t| ap_with_matrix(gts.len(), &ious, &order, t, options.integration))
        .collect();
    let map = per_threshold[1..].iter().map(|r| r.ap).sum::<T>() / T::from_count(per_threshold.len() - 1);
    Ok(EvaluationReport {
        map,
        ap50: per_threshold[1].ap,
        ap25: per_threshold[0].ap,
        num_predictions: preds.len(),
        num_ground_truth: gts.len(),
        per_threshold,
    })
}

/// Groups point indices by non-negative label, ascending label order.
pub fn instances_from_labels(labels: &[i32]) -> Vec<(i32, Vec<u32>)> {
    let mut groups: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l).or_default().push(i as u32);
        }
    }
    groups.into_iter().collect()
}

/// Evaluates per-point labels. Negative ground-truth labels mark unannotated
/// points, which are removed from predictions before matching. Every
/// predicted instance gets confidence 1.
pub fn evaluate_labels<T: Scalar>(pred: &[i32], gt: &[i32], options: &EvalOptions) -> Result<EvaluationReport<T>> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} predicted labels for {} ground-truth points", pred.len(), gt.len())));
    }
    let masked: Vec<i32> = pred.iter().zip(gt).map(|(&p, &g)| if g < 0 { -1 } else { p }).collect();
    let preds: Vec<InstancePrediction<T>> = instances_from_labels(&masked)
        .into_iter()
        .map(|(_, points)| InstancePrediction { points, confidence: T::one() })
        .collect();
    let gts: Vec<Vec<u32>> = instances_from_labels(gt).into_iter().map(|(_, p)| p).collect();
    evaluate(&preds, &gts, options)
}

/// Best AP over every one-to-one assignment of predictions to ground truth
/// with IoU at or above the threshold. Exponential; for small inputs only.
pub fn exhaustive_average_precision<T: Scalar>(
    preds: &[InstancePrediction<T>],
    gts: &[Vec<u32>],
    threshold: T,
    integration: PrIntegration,
) -> Result<T> {
    check_threshold(threshold)?;
    if gts.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let ious = iou_matrix(preds, gts);
    let order = ranking(preds, &ious);
    fn search<T: Scalar>(
        k: usize,
        order: &[usize],
        ious: &[Vec<T>],
        threshold: T,
        taken: &mut Vec<bool>,
        tp: &mut Vec<bool>,
        n_gt: usize,
        integration: PrIntegration,
        best: &mut T,
    ) {
        if k == order.len() {
            let (ap, _, _) = ap_from_ranked::<T>(tp, n_gt, integration);
            *best = best.max(ap);
            return;
        }
        let p = order[k];
        tp.push(false);
        search(k + 1, order, ious, threshold, taken, tp, n_gt, integration, best);
        tp.pop();
        for g in 0..n_gt {
            if !taken[g] && ious[p][g] >= threshold {
                taken[g] = true;
                tp.push(true);
                search(k + 1, order, ious, threshold, taken, tp, n_gt, integration, best);
                tp.pop();
                taken[g] = false;
            }
        }
    }
    let mut best = T::zero();
    search(0, &order, &ious, threshold, &mut vec![false; gts.len()], &mut Vec::new(), gts.len(), integration, &mut best);
    Ok(best)
}
