//! Image-plane primitives and the unit → pixel mapping of a conv layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position on the image plane, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        self.sub(other).norm_sq()
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// Clamps into the closed rectangle `[0, w] x [0, h]`.
    pub fn clamp_to(self, w: f64, h: f64) -> Point {
        Point::new(self.x.clamp(0.0, w), self.y.clamp(0.0, h))
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned box `[x1, y1, x2, y2]` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Closed-box membership: points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// An image region: a center plus a (width, height) scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Point,
    pub scale: Point,
}

impl Region {
    pub fn new(center: Point, scale: Point) -> Self {
        Self { center, scale }
    }

    pub fn from_bbox(b: &BBox) -> Self {
        Region::new(b.center(), Point::new(b.width(), b.height()))
    }

    pub fn bbox(&self) -> BBox {
        let hw = 0.5 * self.scale.x;
        let hh = 0.5 * self.scale.y;
        BBox::new(
            self.center.x - hw,
            self.center.y - hh,
            self.center.x + hw,
            self.center.y + hh,
        )
    }
}

/// Receptive-field geometry of one exported conv layer.
///
/// Unit `(ix, iy)` is centered at `offset_px + stride_px * (ix, iy)` on the
/// image plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub layer_id: u32,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub stride_px: f32,
    pub rf_size_px: f32,
    pub offset_px: f32,
}

impl LayerGeometry {
    pub fn unit_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn element_count(&self) -> usize {
        self.channels as usize * self.unit_count()
    }

    /// Image-plane center of unit `(ix, iy)`.
    pub fn unit_center(&self, ix: i64, iy: i64) -> Result<Point> {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            return Err(Error::Index {
                layer_id: self.layer_id,
                ix,
                iy,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.center_unchecked(ix as u32, iy as u32))
    }

    #[inline]
    pub(crate) fn center_unchecked(&self, ix: u32, iy: u32) -> Point {
        let s = f64::from(self.stride_px);
        let o = f64::from(self.offset_px);
        Point::new(o + s * f64::from(ix), o + s * f64::from(iy))
    }

    /// Unit whose center is closest to `p`, clamped to the feature extent.
    pub fn nearest_unit(&self, p: Point) -> (u32, u32) {
        let s = f64::from(self.stride_px);
        let o = f64::from(self.offset_px);
        let snap = |v: f64, n: u32| -> u32 {
            let i = ((v - o) / s).round();
            i.clamp(0.0, f64::from(n - 1)) as u32
        };
        (snap(p.x, self.width), snap(p.y, self.height))
    }

    /// Units whose centers lie in the closed square of side `side_px`
    /// centered at `center`, in row-major order.
    pub fn units_in_square(&self, center: Point, side_px: f64) -> Vec<(u32, u32)> {
        let (xs, ys) = self.square_span(center, side_px);
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for &iy in &ys {
            for &ix in &xs {
                out.push((ix, iy));
            }
        }
        out
    }

    fn square_span(&self, center: Point, side_px: f64) -> (Vec<u32>, Vec<u32>) {
        let half = 0.5 * side_px;
        let axis = |c: f64, n: u32| -> Vec<u32> {
            let s = f64::from(self.stride_px);
            let o = f64::from(self.offset_px);
            let lo = ((c - half - o) / s).floor().max(0.0) as i64 - 1;
            let hi = ((c + half - o) / s).ceil().min(f64::from(n)) as i64 + 1;
            (lo.max(0)..=hi.min(i64::from(n) - 1))
                .map(|i| i as u32)
                .filter(|&i| (o + s * f64::from(i) - c).abs() <= half)
                .collect()
        };
        (axis(center.x, self.width), axis(center.y, self.height))
    }
}
