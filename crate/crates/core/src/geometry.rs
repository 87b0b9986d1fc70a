//! Integer pixel boxes shared by the scene model, the executor and the metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Axis-aligned box `[x1, y1, x2, y2]` in pixel coordinates, half-open on the
/// right and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl BBox {
    pub const fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Box covering a whole `width` x `height` image.
    pub const fn full(width: i64, height: i64) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn width(&self) -> i64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> i64 {
        if self.is_valid() {
            self.width() * self.height()
        } else {
            0
        }
    }

    /// Integer center, truncated the same way `int((x1 + x2) / 2)` does for
    /// non-negative coordinates.
    pub fn center(&self) -> (i64, i64) {
        ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)
    }

    /// Real-valued center.
    pub fn center_f(&self) -> (f64, f64) {
        (
            (self.x1 + self.x2) as f64 / 2.0,
            (self.y1 + self.y2) as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        );
        b.is_valid().then_some(b)
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 as f64 && x < self.x2 as f64 && y >= self.y1 as f64 && y < self.y2 as f64
    }

    pub fn translate(&self, dx: i64, dy: i64) -> BBox {
        BBox::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Clamp to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: i64, height: i64) -> BBox {
        BBox::new(
            self.x1.clamp(0, width),
            self.y1.clamp(0, height),
            self.x2.clamp(0, width),
            self.y2.clamp(0, height),
        )
    }

    pub fn to_array(self) -> [i64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl From<[i64; 4]> for BBox {
    fn from(a: [i64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Grow `b` about its center by `factor` and clamp to the image, using the
/// integer arithmetic of the reference modules:
/// `dw = int(factor * w / 2)`, `cx = int((x1 + x2) / 2)`.
pub fn expand_box(b: BBox, image_size: (i64, i64), factor: f64) -> BBox {
    let (w, h) = image_size;
    let dw = (factor * (b.x2 - b.x1) as f64 / 2.0).trunc() as i64;
    let dh = (factor * (b.y2 - b.y1) as f64 / 2.0).trunc() as i64;
    let (cx, cy) = b.center();
    BBox::new(
        (cx - dw).max(0),
        (cy - dh).max(0),
        (cx + dw).min(w),
        (cy + dh).min(h),
    )
}

/// Intersection over union; 0 when the boxes are disjoint or degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map(|i| i.area()).unwrap_or(0);
    let union = a.area() + b.area() - inter;
    if union <= 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_box_matches_hand_arithmetic() {
        // dw = int(1.5 * 20 / 2) = 15, cx = 50 -> [35, 65]
        let b = expand_box(BBox::new(40, 40, 60, 60), (100, 100), 1.5);
        assert_eq!(b, BBox::new(35, 35, 65, 65));
    }

    #[test]
    fn expand_box_clamps_at_border() {
        let b = expand_box(BBox::new(0, 90, 20, 100), (100, 100), 1.5);
        // dw = 15, cx = 10; dh = 7, cy = 95
        assert_eq!(b, BBox::new(0, 88, 25, 100));
    }

    #[test]
    fn expand_box_factor_one_floors() {
        // odd extents lose at most one pixel to integer truncation
        let b = expand_box(BBox::new(10, 10, 21, 31), (100, 100), 1.0);
        assert_eq!(b, BBox::new(10, 10, 20, 30));
        let even = expand_box(BBox::new(10, 10, 20, 30), (100, 100), 1.0);
        assert_eq!(even, BBox::new(10, 10, 20, 30));
    }

    #[test]
    fn iou_hand_cases() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20, 20, 30, 30)), 0.0);
        let third = iou(&a, &BBox::new(5, 0, 15, 10));
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn serde_as_array() {
        let b: BBox = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(b, BBox::new(1, 2, 3, 4));
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
    }
}
