//! Analytic street geometry: ray casting for exact depth/LiDAR and surface
//! sampling for the ground-truth Gaussian field.

use crate::math::{Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    /// Asphalt with lane markings; `lane_offset` is the lateral position of the dashed lines.
    Road { half_width: f64, lane_offset: f64 },
    Sidewalk,
    Facade { base: [f64; 3] },
    Pole { band: [f64; 3] },
    Car { body: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    /// Rectangle of the ground plane `z = 0`.
    Ground { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Oriented box; `rotation` maps box axes to world axes.
    Box {
        center: Vec3,
        half: Vec3,
        rotation: Mat3,
        /// Faces sampled for primitives, in order −x, +x, −y, +y, −z, +z.
        faces: [bool; 6],
    },
    /// Vertical cylinder standing on the ground.
    Cylinder { x: f64, y: f64, radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub material: Material,
    /// Dynamic object the shape belongs to.
    pub object: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub shape: usize,
}

const EPS: f64 = 1e-9;

fn intersect_box(center: &Vec3, half: &Vec3, rot: &Mat3, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
    let lo = rot.transpose() * (o - center);
    let ld = rot.transpose() * d;
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    let mut axis = 0;
    let mut sign = 1.0;
    for i in 0..3 {
        if ld[i].abs() < 1e-15 {
            if lo[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let t1 = (-half[i] - lo[i]) / ld[i];
        let t2 = (half[i] - lo[i]) / ld[i];
        let (near, far) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if near > t_enter {
            t_enter = near;
            axis = i;
            sign = if ld[i] > 0.0 { -1.0 } else { 1.0 };
        }
        t_exit = t_exit.min(far);
    }
    if t_enter > t_exit || t_enter <= EPS {
        return None;
    }
    let mut n = Vec3::zeros();
    n[axis] = sign;
    Some((t_enter, rot * n))
}

fn intersect_cylinder(x: f64, y: f64, r: f64, h: f64, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    let (ox, oy) = (o.x - x, o.y - y);
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = 2.0 * (ox * d.x + oy * d.y);
        let c = ox * ox + oy * oy - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let z = o.z + t * d.z;
            if t > EPS && (0.0..=h).contains(&z) {
                let n = Vec3::new(ox + t * d.x, oy + t * d.y, 0.0) / r;
                best = Some((t, n));
            }
        }
    }
    if d.z < -1e-15 {
        let t = (h - o.z) / d.z;
        let p = o + d * t;
        let inside = (p.x - x).powi(2) + (p.y - y).powi(2) <= r * r;
        if t > EPS && inside && best.map_or(true, |b| t < b.0) {
            best = Some((t, Vec3::z()));
        }
    }
    best
}

impl Shape {
    /// Distance along the unit direction `d` and outward normal of the first hit.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
        match self.kind {
            ShapeKind::Ground { x0, x1, y0, y1 } => {
                if d.z >= -1e-15 || o.z <= 0.0 {
                    return None;
                }
                let t = -o.z / d.z;
                let p = o + d * t;
                (p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1).then_some((t, Vec3::z()))
            }
            ShapeKind::Box { center, half, rotation, .. } => intersect_box(&center, &half, &rotation, o, d),
            ShapeKind::Cylinder { x, y, radius, height } => intersect_cylinder(x, y, radius, height, o, d),
        }
    }

    /// Surface color at a world point of this shape.
    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        match self.material {
            Material::Road { half_width, lane_offset } => road_color(p, half_width, lane_offset),
            Material::Sidewalk => sidewalk_color(p),
            Material::Facade { base } => facade_color(p, base),
            Material::Pole { band } => {
                if (2.0..2.6).contains(&p.z) {
                    band
                } else {
                    [0.3, 0.31, 0.33]
                }
            }
            Material::Car { body } => match self.kind {
                ShapeKind::Box { center, half, rotation, .. } => car_color(&(rotation.transpose() * (p - center)), &half, body),
                _ => body,
            },
        }
    }
}

fn road_color(p: &Vec3, half_width: f64, lane_offset: f64) -> [f64; 3] {
    let base = 0.3 + 0.035 * (0.9 * p.x + 0.4 * p.y).sin() * (0.6 * p.y - 0.2 * p.x).cos();
    let dashed = ((p.y.abs() - lane_offset).abs() < 0.18) && p.x.rem_euclid(6.0) < 3.0;
    let edge = (p.y.abs() - (half_width - 0.3)).abs() < 0.15;
    if dashed || edge {
        [0.88, 0.88, 0.84]
    } else {
        [base, base, base + 0.01]
    }
}

fn sidewalk_color(p: &Vec3) -> [f64; 3] {
    let joint = p.x.rem_euclid(1.5) < 0.12 || p.y.rem_euclid(1.5) < 0.12;
    let v = 0.05 * (0.5 * p.x).sin() * (0.8 * p.y).cos();
    if joint {
        [0.42, 0.4, 0.37]
    } else {
        [0.6 + v, 0.57 + v, 0.52 + v]
    }
}

fn facade_color(p: &Vec3, base: [f64; 3]) -> [f64; 3] {
    // along-facade coordinate: x for facades parallel to the road, y for side walls
    let u = p.x + p.y;
    if p.z < 3.0 {
        let shade = 0.7;
        let door = u.rem_euclid(7.0) < 1.6 && p.z < 2.4;
        return if door {
            [0.25, 0.18, 0.12]
        } else {
            [base[0] * shade, base[1] * shade, base[2] * shade]
        };
    }
    let column = u.rem_euclid(2.4);
    let floor = (p.z - 3.0).rem_euclid(3.0);
    if (0.6..1.8).contains(&column) && (0.7..2.3).contains(&floor) {
        [0.14, 0.18, 0.26]
    } else {
        base
    }
}

fn car_color(local: &Vec3, half: &Vec3, body: [f64; 3]) -> [f64; 3] {
    let zf = (local.z + half.z) / (2.0 * half.z);
    if zf < 0.22 {
        [0.08, 0.08, 0.08]
    } else if zf > 0.62 && local.x.abs() < 0.75 * half.x {
        [0.1, 0.13, 0.17]
    } else {
        body
    }
}

/// Nearest hit among `shapes`.
pub fn raycast(shapes: &[Shape], o: &Vec3, d: &Vec3) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, s) in shapes.iter().enumerate() {
        if let Some((t, n)) = s.intersect(o, d) {
            if best.map_or(true, |b| t < b.distance) {
                best = Some(Hit {
                    distance: t,
                    point: o + d * t,
                    normal: n,
                    shape: i,
                });
            }
        }
    }
    best
}

/// A sample of a surface: position, in-plane axes and normal (right-handed).
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub tangent: Vec3,
    pub bitangent: Vec3,
    pub normal: Vec3,
}

fn grid(len_u: f64, len_v: f64, spacing: f64) -> impl Iterator<Item = (f64, f64)> {
    let nu = (len_u / spacing).round().max(1.0) as usize;
    let nv = (len_v / spacing).round().max(1.0) as usize;
    let (du, dv) = (len_u / nu as f64, len_v / nv as f64);
    (0..nv).flat_map(move |j| (0..nu).map(move |i| ((i as f64 + 0.5) * du, (j as f64 + 0.5) * dv)))
}

/// Regular samples over the visible surface of a shape, roughly `spacing` apart.
pub fn sample_surface(shape: &Shape, spacing: f64) -> Vec<SurfaceSample> {
    let mut out = Vec::new();
    match shape.kind {
        ShapeKind::Ground { x0, x1, y0, y1 } => {
            for (u, v) in grid(x1 - x0, y1 - y0, spacing) {
                out.push(SurfaceSample {
                    point: Vec3::new(x0 + u, y0 + v, 0.0),
                    tangent: Vec3::x(),
                    bitangent: Vec3::y(),
                    normal: Vec3::z(),
                });
            }
        }
        ShapeKind::Box { center, half, rotation, faces } => {
            for (f, enabled) in faces.iter().enumerate() {
                if !enabled {
                    continue;
                }
                let axis = f / 2;
                let sign = if f % 2 == 0 { -1.0 } else { 1.0 };
                let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut n = Vec3::zeros();
                n[axis] = sign;
                let mut ta = Vec3::zeros();
                ta[a] = 1.0;
                let mut tb = Vec3::zeros();
                tb[b] = sign;
                for (u, v) in grid(2.0 * half[a], 2.0 * half[b], spacing) {
                    let mut local = Vec3::zeros();
                    local[axis] = sign * half[axis];
                    local[a] = u - half[a];
                    local[b] = v - half[b];
                    out.push(SurfaceSample {
                        point: center + rotation * local,
                        tangent: rotation * ta,
                        bitangent: rotation * tb,
                        normal: rotation * n,
                    });
                }
            }
        }
        ShapeKind::Cylinder { x, y, radius, height } => {
            let circumference = 2.0 * std::f64::consts::PI * radius;
            for (u, v) in grid(circumference, height, spacing) {
                let ang = u / radius;
                let n = Vec3::new(ang.cos(), ang.sin(), 0.0);
                out.push(SurfaceSample {
                    point: Vec3::new(x, y, 0.0) + n * radius + Vec3::z() * v,
                    tangent: Vec3::z().cross(&n),
                    bitangent: Vec3::z(),
                    normal: n,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_distance() {
        let g = Shape {
            kind: ShapeKind::Ground { x0: -10.0, x1: 10.0, y0: -10.0, y1: 10.0 },
            material: Material::Sidewalk,
            object: None,
        };
        let d = Vec3::new(1.0, 0.0, -1.0).normalize();
        let (t, _) = g.intersect(&Vec3::new(0.0, 0.0, 2.0), &d).unwrap();
        assert!((t - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_and_cylinder_hits() {
        let b = Shape {
            kind: ShapeKind::Box { center: Vec3::new(10.0, 0.0, 1.0), half: Vec3::new(1.0, 1.0, 1.0), rotation: Mat3::identity(), faces: [true; 6] },
            material: Material::Sidewalk,
            object: None,
        };
        let (t, n) = b.intersect(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x()).unwrap();
        assert!((t - 9.0).abs() < 1e-12 && (n + Vec3::x()).norm() < 1e-12);
        let c = Shape {
            kind: ShapeKind::Cylinder { x: 5.0, y: 0.0, radius: 0.5, height: 3.0 },
            material: Material::Sidewalk,
            object: None,
        };
        let (t, _) = c.intersect(&Vec3::new(0.0, 0.0, 1.0), &Vec3::x()).unwrap();
        assert!((t - 4.5).abs() < 1e-12);
        assert!(c.intersect(&Vec3::new(0.0, 0.0, 4.0), &Vec3::x()).is_none());
    }

    #[test]
    fn surface_frames_are_right_handed() {
        let b = Shape {
            kind: ShapeKind::Box { center: Vec3::zeros(), half: Vec3::new(2.0, 1.0, 0.5), rotation: Mat3::identity(), faces: [true; 6] },
            material: Material::Sidewalk,
            object: None,
        };
        for s in sample_surface(&b, 0.5) {
            assert!((s.tangent.cross(&s.bitangent) - s.normal).norm() < 1e-12);
        }
    }
}
