//! Gaze ray / AOI surface intersection and per-sample AOI classification.

use std::ops::{Add, Mul, Neg, Sub};

use crate::model::{AoiModel, GazeSample, OTH};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    /// Angle between two vectors, radians.
    pub fn angle_to(self, o: Self) -> T {
        // atan2 form stays accurate for nearly parallel vectors.
        self.cross(o).norm().atan2(self.dot(o))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Copy> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
        }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

/// Planar parallelogram `origin + u * e1 + v * e2`, `u, v` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad<T> {
    pub origin: Vec3<T>,
    pub e1: Vec3<T>,
    pub e2: Vec3<T>,
}

impl<T: Real> Quad<T> {
    pub fn new(origin: Vec3<T>, e1: Vec3<T>, e2: Vec3<T>) -> Self {
        Self { origin, e1, e2 }
    }

    pub fn normal(&self) -> Vec3<T> {
        self.e1.cross(self.e2)
    }

    pub fn is_non_degenerate(&self) -> bool {
        let n = self.normal().norm();
        let scale = self.e1.norm() * self.e2.norm();
        n > T::zero() && n > scale * T::lit(1e-12)
    }

    pub fn point_at(&self, u: T, v: T) -> Vec3<T> {
        self.origin + self.e1 * u + self.e2 * v
    }
}

/// Where a ray meets a quad: surface coordinates and ray parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadHit<T> {
    pub u: T,
    pub v: T,
    pub distance: T,
}

/// Intersects the ray `origin + t * dir` (t > 0) with `quad`.
///
/// `dir` is expected to be unit length so that `distance` is in the same
/// units as the scene. Rays parallel to the plane never hit.
pub fn ray_quad_intersect<T: Real>(
    origin: Vec3<T>,
    dir: Vec3<T>,
    quad: &Quad<T>,
) -> Option<QuadHit<T>> {
    let n = quad.normal();
    let nn = n.dot(n);
    let denom = dir.dot(n);
    if denom.abs() <= T::lit(1e-12) * nn.sqrt() * dir.norm() {
        return None;
    }
    let t = (quad.origin - origin).dot(n) / denom;
    if !(t > T::zero()) {
        return None;
    }
    let d = origin + dir * t - quad.origin;
    let u = d.cross(quad.e2).dot(n) / nn;
    let v = quad.e1.cross(d).dot(n) / nn;
    let unit = T::zero()..=T::one();
    if unit.contains(&u) && unit.contains(&v) {
        Some(QuadHit { u, v, distance: t })
    } else {
        None
    }
}

/// Hit on a named AOI surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceHit {
    pub surface_id: String,
    pub uv: (f64, f64),
    pub distance_m: f64,
}

/// Gaze sample annotated with its AOI label and surface hit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedSample {
    pub t_ms: u64,
    pub dir: [f64; 3],
    pub label: String,
    pub hit: Option<SurfaceHit>,
}

pub const DEFAULT_QUALITY_FLOOR: f64 = 0.2;

/// Nearest surface hit by the sample's gaze ray. Exact distance ties
/// (within 1e-9) go to the lexicographically smaller surface id.
pub fn nearest_hit(sample: &GazeSample, model: &AoiModel) -> Option<SurfaceHit> {
    let origin = Vec3::from(sample.origin);
    let dir = Vec3::from(sample.dir);
    let mut best: Option<(QuadHit<f64>, &str)> = None;
    for s in &model.surfaces {
        let Some(h) = ray_quad_intersect(origin, dir, &s.quad()) else {
            continue;
        };
        best = match best {
            None => Some((h, &s.id)),
            Some((b, bid)) => {
                let tie = (h.distance - b.distance).abs() <= 1e-9 * b.distance.max(1.0);
                if (tie && s.id.as_str() < bid) || (!tie && h.distance < b.distance) {
                    Some((h, &s.id))
                } else {
                    Some((b, bid))
                }
            }
        };
    }
    best.map(|(h, id)| SurfaceHit {
        surface_id: id.to_string(),
        uv: (h.u, h.v),
        distance_m: h.distance,
    })
}

/// Full classification of one sample: deepest AOI label plus the hit.
///
/// Samples below `quality_floor` are labelled OTH (they are kept so that
/// dwell percentages stay relative to the full session duration).
pub fn classify(sample: &GazeSample, model: &AoiModel, quality_floor: f64) -> ClassifiedSample {
    let hit = if sample.quality < quality_floor {
        None
    } else {
        nearest_hit(sample, model)
    };
    let label = match &hit {
        None => OTH.to_string(),
        Some(h) => {
            let surface = model
                .surface(&h.surface_id)
                .expect("hit surface comes from the model");
            match surface.child_at(h.uv.0, h.uv.1) {
                Some(c) => surface.child_label(c),
                None => surface.id.clone(),
            }
        }
    };
    ClassifiedSample {
        t_ms: sample.t_ms,
        dir: sample.dir,
        label,
        hit,
    }
}

/// AOI label of a sample with the default quality floor.
pub fn classify_sample(sample: &GazeSample, model: &AoiModel) -> String {
    classify(sample, model, DEFAULT_QUALITY_FLOOR).label
}

pub fn classify_all(
    samples: &[GazeSample],
    model: &AoiModel,
    quality_floor: f64,
) -> Vec<ClassifiedSample> {
    samples
        .iter()
        .map(|s| classify(s, model, quality_floor))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_aoi_model;
    use approx::assert_relative_eq;

    fn unit_quad() -> Quad<f64> {
        Quad::new(
            Vec3::new(-1.0, -1.0, 1.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        )
    }

    fn gaze(dir: [f64; 3]) -> GazeSample {
        let d = Vec3::from(dir).normalized().unwrap();
        GazeSample {
            t_ms: 0,
            origin: [0.0; 3],
            dir: d.into(),
            pupil_mm: None,
            eyelid_open: None,
            quality: 1.0,
            low_quality: false,
        }
    }

    #[test]
    fn centre_hit() {
        let h = ray_quad_intersect(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), &unit_quad())
            .unwrap();
        assert_relative_eq!(h.u, 0.5);
        assert_relative_eq!(h.v, 0.5);
        assert_relative_eq!(h.distance, 1.0);
    }

    #[test]
    fn parallel_ray_misses() {
        assert!(ray_quad_intersect(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), &unit_quad())
            .is_none());
    }

    #[test]
    fn behind_origin_misses() {
        assert!(ray_quad_intersect(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0), &unit_quad())
            .is_none());
    }

    #[test]
    fn oblique_hit() {
        // z = 1 is reached at t = sqrt(6)/2, landing on (0.5, 0.5, 1).
        let dir = Vec3::new(1.0, 1.0, 2.0).normalized().unwrap();
        let h = ray_quad_intersect(Vec3::new(0.0, 0.0, 0.0), dir, &unit_quad()).unwrap();
        assert_relative_eq!(h.u, 0.75, epsilon = 1e-12);
        assert_relative_eq!(h.v, 0.75, epsilon = 1e-12);
        assert_relative_eq!(h.distance, 6f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let q: Quad<f32> = Quad::new(
            Vec3::new(-1.0, -1.0, 1.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        );
        let h = ray_quad_intersect(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), &q).unwrap();
        assert!((h.u - 0.5).abs() < 1e-6);
    }

    const TWO_LAYERS: &str = r#"{"surfaces":[
        {"id":"OTW","origin":[-1,-1,1],"e1":[2,0,0],"e2":[0,2,0],"px":[100,100]},
        {"id":"PFD","origin":[-1,-1,2],"e1":[2,0,0],"e2":[0,2,0],"px":[200,200],
         "children":[{"id":"A3","rect":[0.4,0.4,0.6,0.6]}]}]}"#;

    #[test]
    fn nearer_surface_wins() {
        let m = load_aoi_model(TWO_LAYERS).unwrap();
        assert_eq!(classify_sample(&gaze([0.0, 0.0, 1.0]), &m), "OTW");
    }

    #[test]
    fn deepest_child_label() {
        let m = load_aoi_model(
            r#"{"surfaces":[{"id":"PFD","origin":[-1,-1,2],"e1":[2,0,0],"e2":[0,2,0],"px":[200,200],
            "children":[{"id":"A3","rect":[0.4,0.4,0.6,0.6]}]}]}"#,
        )
        .unwrap();
        assert_eq!(classify_sample(&gaze([0.0, 0.0, 1.0]), &m), "PFD.A3");
        assert_eq!(classify_sample(&gaze([0.3, 0.0, 1.0]), &m), "PFD");
        assert_eq!(classify_sample(&gaze([0.0, 1.0, 0.0]), &m), OTH);
    }

    #[test]
    fn equal_distance_tie_breaks_by_id() {
        let m = load_aoi_model(
            r#"{"surfaces":[
            {"id":"B","origin":[-1,-1,1],"e1":[2,0,0],"e2":[0,2,0],"px":[10,10]},
            {"id":"A","origin":[-1,-1,1],"e1":[2,0,0],"e2":[0,2,0],"px":[10,10]}]}"#,
        )
        .unwrap();
        assert_eq!(classify_sample(&gaze([0.0, 0.0, 1.0]), &m), "A");
    }

    #[test]
    fn low_quality_is_oth() {
        let m = load_aoi_model(TWO_LAYERS).unwrap();
        let mut s = gaze([0.0, 0.0, 1.0]);
        s.quality = 0.1;
        let c = classify(&s, &m, 0.2);
        assert_eq!(c.label, OTH);
        assert!(c.hit.is_none());
    }
}
