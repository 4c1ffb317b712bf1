//! Planar vectors, rigid poses and convex polygons.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Planar pose: position plus heading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pos: [f64; 2],
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { pos: [x, y], yaw }
    }

    /// Maps a body-frame point into the world frame.
    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.yaw) + Vec2::from(self.pos)
    }

    /// Maps a world-frame point into the body frame.
    pub fn inverse_apply(&self, p: Vec2) -> Vec2 {
        (p - Vec2::from(self.pos)).rotate(-self.yaw)
    }
}

/// Convex polygon, counter-clockwise, with cached outward edge normals.
#[derive(Clone, Debug)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    normals: Vec<Vec2>,
}

/// Circle–polygon overlap, all quantities in the polygon frame.
#[derive(Clone, Copy, Debug)]
pub struct CircleContact {
    /// Unit normal pointing from the polygon surface toward the circle center.
    pub normal: Vec2,
    pub depth: f64,
    /// Contact point on the polygon surface.
    pub point: Vec2,
}

impl ConvexPolygon {
    /// Builds a polygon, reordering clockwise input to counter-clockwise.
    /// Returns `None` unless the vertices form a strictly convex polygon with at least three corners.
    pub fn new(mut vertices: Vec<Vec2>) -> Option<Self> {
        let n = vertices.len();
        if n < 3 || vertices.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= 0.0 {
                return None;
            }
        }
        let normals = (0..n)
            .map(|i| {
                let e = vertices[(i + 1) % n] - vertices[i];
                Vec2::new(e.y, -e.x) * (1.0 / e.norm())
            })
            .collect();
        Some(Self { vertices, normals })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Vec2 {
        let v = &self.vertices;
        let n = v.len();
        let mut c = Vec2::ZERO;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            c += (a + b) * a.cross(b);
        }
        c * (1.0 / (6.0 * self.area()))
    }

    /// Polar second moment of area about the frame origin.
    pub fn polar_moment(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut j = 0.0;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            j += a.cross(b) * (a.dot(a) + a.dot(b) + b.dot(b));
        }
        j / 12.0
    }

    pub fn translated(&self, d: Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
            normals: self.normals.clone(),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.vertices
            .iter()
            .zip(&self.normals)
            .all(|(&v, &n)| (p - v).dot(n) <= 0.0)
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Penetration of a circle into the polygon, if any.
    pub fn circle_contact(&self, center: Vec2, radius: f64) -> Option<CircleContact> {
        let n = self.vertices.len();
        let mut max_sep = f64::NEG_INFINITY;
        let mut max_edge = 0;
        for i in 0..n {
            let s = (center - self.vertices[i]).dot(self.normals[i]);
            if s > max_sep {
                max_sep = s;
                max_edge = i;
            }
        }
        if max_sep > radius {
            return None;
        }
        if max_sep <= 0.0 {
            let normal = self.normals[max_edge];
            return Some(CircleContact {
                normal,
                depth: radius - max_sep,
                point: center - normal * max_sep,
            });
        }
        let mut best = (f64::INFINITY, Vec2::ZERO);
        for i in 0..n {
            let q = closest_on_segment(center, self.vertices[i], self.vertices[(i + 1) % n]);
            let d = (center - q).norm();
            if d < best.0 {
                best = (d, q);
            }
        }
        let (d, q) = best;
        if d >= radius || d == 0.0 {
            return None;
        }
        Some(CircleContact {
            normal: (center - q) * (1.0 / d),
            depth: radius - d,
            point: q,
        })
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>() * 0.5
}

fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    a + ab * t
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` as a vertex list.
pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}
