use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane. All lengths are dimensionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub const fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        Rect { xmin, xmax, ymin, ymax }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// True when `inner` sits strictly inside `self` with a positive margin.
    pub fn strictly_contains(&self, inner: &Rect) -> bool {
        inner.xmin > self.xmin && inner.xmax < self.xmax && inner.ymin > self.ymin && inner.ymax < self.ymax
    }

    /// Smallest gap between the boundaries of `self` and a nested rectangle.
    pub fn boundary_gap(&self, inner: &Rect) -> f64 {
        let gaps = [
            inner.xmin - self.xmin,
            self.xmax - inner.xmax,
            inner.ymin - self.ymin,
            self.ymax - inner.ymax,
        ];
        gaps.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Circle delimiting the reconstruction region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub const fn new(center: Point2, radius: f64) -> Self {
        Circle { center, radius }
    }

    pub fn signed_dist(&self, p: &Point2) -> f64 {
        p.dist(&self.center) - self.radius
    }

    pub fn contains(&self, p: &Point2) -> bool {
        self.signed_dist(p) <= 0.0
    }

    /// Smallest gap between the circle and the boundary of an enclosing rectangle.
    pub fn boundary_gap(&self, outer: &Rect) -> f64 {
        let gaps = [
            self.center.x - self.radius - outer.xmin,
            outer.xmax - (self.center.x + self.radius),
            self.center.y - self.radius - outer.ymin,
            outer.ymax - (self.center.y + self.radius),
        ];
        gaps.into_iter().fold(f64::INFINITY, f64::min)
    }
}
