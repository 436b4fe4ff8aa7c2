use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Absolute tolerance for orientation and incidence predicates.
pub const GEOM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }

    /// Counterclockwise normal of unit length; zero vector maps to zero.
    pub fn unit_normal(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            Point::default()
        } else {
            Point::new(-self.y / n, self.x / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Twice the signed area of (a, b, c); positive when counterclockwise.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

pub fn sign(v: f64) -> i8 {
    if v > GEOM_EPS {
        1
    } else if v < -GEOM_EPS {
        -1
    } else {
        0
    }
}

/// Distance from `p` to the closed segment `[a, b]` and the segment parameter of the foot.
pub fn segment_distance(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (p.dist(a), 0.0);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p.dist(a + ab * t), t)
}

pub fn on_segment(p: Point, a: Point, b: Point) -> bool {
    segment_distance(p, a, b).0 <= GEOM_EPS.max(1e-10 * (a.dist(b)))
}

/// True when the open segments cross at a single interior point of both.
pub fn segments_cross(p: Point, q: Point, a: Point, b: Point) -> bool {
    let o1 = sign(orient(p, q, a));
    let o2 = sign(orient(p, q, b));
    let o3 = sign(orient(a, b, p));
    let o4 = sign(orient(a, b, q));
    o1 * o2 < 0 && o3 * o4 < 0
}

/// True when the closed segments share at least one point.
pub fn segments_touch(p: Point, q: Point, a: Point, b: Point) -> bool {
    let o1 = sign(orient(p, q, a));
    let o2 = sign(orient(p, q, b));
    let o3 = sign(orient(a, b, p));
    let o4 = sign(orient(a, b, q));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    on_segment(a, p, q) || on_segment(b, p, q) || on_segment(p, a, b) || on_segment(q, a, b)
}

/// Signed area of a closed ring (positive for counterclockwise order).
pub fn ring_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| ring[i].cross(ring[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// Winding-number test; points on the ring count as inside.
pub fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut wn = 0i32;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

/// Strictly inside (not on) the ring.
pub fn point_strictly_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    for i in 0..n {
        if on_segment(p, ring[i], ring[(i + 1) % n]) {
            return false;
        }
    }
    point_in_ring(p, ring)
}

/// Interior angle at vertex `i` of a counterclockwise ring, in (0, 2π).
pub fn interior_angle(ring: &[Point], i: usize) -> f64 {
    let n = ring.len();
    let prev = ring[(i + n - 1) % n];
    let cur = ring[i];
    let next = ring[(i + 1) % n];
    let a = prev - cur;
    let b = next - cur;
    // angle swept counterclockwise from (next - cur) to (prev - cur)
    let ang = b.cross(a).atan2(b.dot(a));
    if ang <= 0.0 {
        ang + 2.0 * std::f64::consts::PI
    } else {
        ang
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square() -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]
    }

    #[test]
    fn crossing_and_touching() {
        let (p, q) = (Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        assert!(segments_cross(p, q, Point::new(0.0, 1.0), Point::new(1.0, 0.0)));
        // shared endpoint is a touch, not a cross
        assert!(!segments_cross(p, q, Point::new(1.0, 1.0), Point::new(2.0, 0.0)));
        assert!(segments_touch(p, q, Point::new(1.0, 1.0), Point::new(2.0, 0.0)));
        assert!(!segments_touch(p, q, Point::new(2.0, 2.5), Point::new(3.0, 0.0)));
    }

    #[test]
    fn ring_queries() {
        let sq = square();
        assert!((ring_area(&sq) - 1.0).abs() < 1e-15);
        assert!(point_in_ring(Point::new(0.5, 0.5), &sq));
        assert!(point_in_ring(Point::new(1.0, 0.5), &sq));
        assert!(!point_strictly_in_ring(Point::new(1.0, 0.5), &sq));
        assert!(!point_in_ring(Point::new(1.5, 0.5), &sq));
        for i in 0..4 {
            assert!((interior_angle(&sq, i) - PI / 2.0).abs() < 1e-12);
        }
        let l = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.5),
            Point::new(0.5, 0.5),
            Point::new(0.5, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert!((interior_angle(&l, 3) - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn point_segment_distance() {
        let (d, t) = segment_distance(Point::new(0.6, 0.4), Point::new(0.5, 0.0), Point::new(0.5, 0.5));
        assert!((d - 0.1).abs() < 1e-15);
        assert!((t - 0.8).abs() < 1e-15);
    }
}
