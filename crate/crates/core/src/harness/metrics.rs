//! Answer judging and the precision/recall/F1 bookkeeping.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Gold;
use crate::executor::Value;
use crate::geometry::BBox;
use crate::tools::{EditRecord, OverlayKind};

pub use crate::geometry::iou;

pub const IOU_THRESHOLD: f64 = 0.5;

/// How a predicted tag is compared with the gold label.
#[derive(Clone, Default)]
pub enum TagMatcher {
    /// Lowercase, drop punctuation and articles, compare.
    #[default]
    NormalizedExact,
    /// Any similarity scorer; a score above 0.5 is a match.
    Plugin(Arc<dyn Fn(&str, &str) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for TagMatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TagMatcher::NormalizedExact => f.write_str("NormalizedExact"),
            TagMatcher::Plugin(_) => f.write_str("Plugin"),
        }
    }
}

fn normalize_tag(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn match_tag(pred: &str, gold: &str, matcher: &TagMatcher) -> bool {
    match matcher {
        TagMatcher::NormalizedExact => normalize_tag(pred) == normalize_tag(gold),
        TagMatcher::Plugin(score) => score(pred, gold) > 0.5,
    }
}

/// Counts behind precision and recall.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prf {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn new(true_positives: usize, predicted: usize, gold: usize) -> Self {
        Self {
            true_positives,
            predicted,
            gold,
        }
    }

    pub fn add(&mut self, o: Prf) {
        self.true_positives += o.true_positives;
        self.predicted += o.predicted;
        self.gold += o.gold;
    }

    /// 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.predicted as f64
        }
    }

    /// 0 when there is nothing to find.
    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.true_positives as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

/// One-to-one greedy matching of predicted boxes against gold boxes in
/// prediction order; `accept` decides whether a pair may match.
fn greedy<P, G>(preds: &[P], golds: &[G], accept: impl Fn(&P, &G) -> bool) -> usize {
    let mut used = vec![false; golds.len()];
    let mut tp = 0;
    for p in preds {
        if let Some(i) = (0..golds.len()).find(|i| !used[*i] && accept(p, &golds[*i])) {
            used[i] = true;
            tp += 1;
        }
    }
    tp
}

/// Tagging counts: a prediction is correct iff it overlaps an unmatched
/// gold region with IoU >= 0.5 and its label matches that region's label.
pub fn tag_counts(gold: &[(BBox, String)], predicted: &[(BBox, String)], matcher: &TagMatcher) -> Prf {
    let tp = greedy(predicted, gold, |(pb, pl), (gb, gl)| {
        iou(pb, gb) >= IOU_THRESHOLD && match_tag(pl, gl, matcher)
    });
    Prf::new(tp, predicted.len(), gold.len())
}

/// Localization counts: IoU only.
pub fn region_counts(gold: &[BBox], predicted: &[BBox]) -> Prf {
    let tp = greedy(predicted, gold, |p, g| iou(p, g) >= IOU_THRESHOLD);
    Prf::new(tp, predicted.len(), gold.len())
}

/// The tag overlays of an output image, in drawing order.
pub fn predicted_tags(v: &Value) -> Vec<(BBox, String)> {
    v.as_image()
        .map(|img| {
            img.overlays
                .iter()
                .filter(|o| o.kind == OverlayKind::Tag)
                .map(|o| (o.bbox, o.label.clone()))
                .collect()
        })
        .unwrap_or_default()
}

/// An edit log satisfies the spec when it holds exactly one edit of the
/// right kind whose prompt matches and whose regions pair one-to-one with
/// the gold regions at IoU >= 0.5.
pub fn edit_satisfied(gold: &Gold, edits: &[EditRecord]) -> bool {
    let Gold::Edit { kind, boxes, prompt } = gold else {
        return false;
    };
    let [e] = edits else { return false };
    e.kind == *kind
        && e.prompt.as_deref().is_some_and(|p| normalize_tag(p) == normalize_tag(prompt))
        && e.boxes.len() == boxes.len()
        && region_counts(boxes, &e.boxes).true_positives == boxes.len()
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Whether a program's final value answers `gold`.
pub fn judge(gold: &Gold, v: &Value, matcher: &TagMatcher) -> bool {
    match gold {
        Gold::Answer { text } => normalize_answer(&v.answer_text()) == normalize_answer(text),
        Gold::Index { index } => v.as_number().is_some_and(|n| n == *index as f64),
        Gold::Box { bbox } => v
            .boxes()
            .and_then(|b| b.first())
            .is_some_and(|b| iou(b, bbox) >= IOU_THRESHOLD),
        Gold::Tags { pairs } => {
            let pred = predicted_tags(v);
            let c = tag_counts(pairs, &pred, matcher);
            c.true_positives == pairs.len() && pred.len() == pairs.len()
        }
        Gold::Edit { .. } => v.as_image().is_some_and(|img| edit_satisfied(gold, &img.edits)),
    }
}

/// Precision/recall counts an output contributes, for tasks that report
/// them.
pub fn counts_for(gold: &Gold, v: Option<&Value>, matcher: &TagMatcher) -> Option<Prf> {
    match gold {
        Gold::Tags { pairs } => {
            let pred = v.map(predicted_tags).unwrap_or_default();
            Some(tag_counts(pairs, &pred, matcher))
        }
        Gold::Box { bbox } => {
            let pred = v.and_then(Value::boxes).map(<[BBox]>::to_vec).unwrap_or_default();
            Some(region_counts(&[*bbox], &pred))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_units() {
        let b = BBox::new(0, 0, 10, 10);
        assert_eq!(iou(&b, &b), 1.0);
        assert_eq!(iou(&b, &BBox::new(20, 20, 30, 30)), 0.0);
        assert!((iou(&b, &BBox::new(5, 0, 15, 10)) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn tag_normalization() {
        let m = TagMatcher::default();
        assert!(match_tag("The Eiffel Tower", "eiffel tower", &m));
        assert!(!match_tag("Obama", "Biden", &m));
        let plugin = TagMatcher::Plugin(Arc::new(|_, _| 0.6));
        assert!(match_tag("Obama", "Biden", &plugin));
        let low = TagMatcher::Plugin(Arc::new(|_, _| 0.5));
        assert!(!match_tag("x", "x", &low));
    }

    #[test]
    fn tagging_needs_both_iou_and_label() {
        let m = TagMatcher::default();
        let gold = vec![(BBox::new(0, 0, 10, 10), "ada lovelace".to_string())];
        let right_place_wrong_name = vec![(BBox::new(0, 0, 10, 10), "alan turing".to_string())];
        let right_name_wrong_place = vec![(BBox::new(5, 0, 15, 10), "Ada Lovelace".to_string())];
        let both = vec![(BBox::new(1, 0, 10, 10), "Ada Lovelace".to_string())];
        assert_eq!(tag_counts(&gold, &right_place_wrong_name, &m).true_positives, 0);
        assert_eq!(tag_counts(&gold, &right_name_wrong_place, &m).true_positives, 0);
        assert_eq!(tag_counts(&gold, &both, &m).true_positives, 1);
    }

    #[test]
    fn fifteen_of_twenty() {
        let c = Prf::new(15, 20, 20);
        assert_eq!(c.precision(), 0.75);
        assert_eq!(c.recall(), 0.75);
        assert!((c.f1() - 0.75).abs() < 1e-12);
        assert_eq!(Prf::new(0, 0, 5).f1(), 0.0);
    }

    #[test]
    fn gold_matching_is_one_to_one() {
        let gold = [BBox::new(0, 0, 10, 10)];
        let twice = [BBox::new(0, 0, 10, 10), BBox::new(0, 0, 10, 10)];
        assert_eq!(region_counts(&gold, &twice), Prf::new(1, 2, 1));
    }

    #[test]
    fn judging() {
        let m = TagMatcher::default();
        assert!(judge(&Gold::Answer { text: "Yes".into() }, &Value::text("yes "), &m));
        assert!(judge(&Gold::Answer { text: "3".into() }, &Value::Number(3.0), &m));
        assert!(judge(&Gold::Index { index: 4 }, &Value::Number(4.0), &m));
        assert!(!judge(&Gold::Index { index: 4 }, &Value::text("4"), &m));
        let g = Gold::Box { bbox: BBox::new(0, 0, 10, 10) };
        assert!(judge(&g, &Value::BoxList(vec![BBox::new(0, 0, 10, 9)]), &m));
        assert!(!judge(&g, &Value::BoxList(vec![]), &m));
        assert!(!judge(&g, &Value::Null, &m));
    }
}
