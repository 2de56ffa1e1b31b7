use std::collections::HashMap;

use super::Detection;

/// Keeps detections whose confidence is at least `tau_c`, in input order.
pub fn filter_confidence(dets: &[Detection], tau_c: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= tau_c).cloned().collect()
}

/// Greedy per-class non-maximum suppression.
///
/// Within each class, detections are visited by descending confidence (ties
/// keep input order) and a detection survives iff its IoU with every
/// already-kept detection of the same class is below `tau_nms`. Survivors are
/// returned in input order.
pub fn nms(dets: &[Detection], tau_nms: f64) -> Vec<Detection> {
    let mut by_class: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        by_class.entry(d.class_name.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; dets.len()];
    for mut idx in by_class.into_values() {
        // stable sort keeps input order among equal confidences
        idx.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
        let mut kept: Vec<usize> = Vec::with_capacity(idx.len());
        for i in idx {
            if kept.iter().all(|&k| dets[i].bbox.iou(&dets[k].bbox) < tau_nms) {
                kept.push(i);
                keep[i] = true;
            }
        }
    }
    dets.iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then(|| d.clone()))
        .collect()
}
