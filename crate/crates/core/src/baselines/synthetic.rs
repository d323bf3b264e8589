use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{truth_f_from_cameras, CameraMatrix, PointMatchSet};
use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, HomPoint};
use crate::imaging::GrayImage;

/// Geometry knobs for [`make_synthetic_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Distance between the two camera centers, in scene units (the wall
    /// recedes from about 3 to 12 units).
    pub baseline: f64,
    /// 1 = an oblique wall, 2 = + floor, 3 = + ceiling.
    pub planes: usize,
    pub matches: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 512,
            height: 512,
            focal: 600.0,
            baseline: 0.3,
            planes: 3,
            matches: 200,
        }
    }
}

impl SceneParams {
    /// A cheap-to-render variant for tests that only need matches.
    pub fn small() -> Self {
        SceneParams {
            width: 160,
            height: 120,
            focal: 190.0,
            matches: 120,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::DomainError("synthetic images must be at least 16x16".into()));
        }
        if !(1..=3).contains(&self.planes) {
            return Err(Error::DomainError(format!("planes must be 1..=3, got {}", self.planes)));
        }
        if !(self.focal > 0.0) || !(self.baseline > 0.0) {
            return Err(Error::DomainError("focal and baseline must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cams: [CameraMatrix; 2],
    pub images: [GrayImage; 2],
    pub truth_f: FundamentalMatrix,
    pub matches: PointMatchSet,
}

#[derive(Debug, Clone)]
struct Texture {
    seed: u64,
    cell: f64,
    base: f64,
    contrast: f64,
}

#[derive(Debug, Clone)]
struct Plane {
    origin: Vector3<f64>,
    normal: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    half_extent: Option<(f64, f64)>,
    texture: Texture,
}

impl Plane {
    fn new(origin: Vector3<f64>, normal: Vector3<f64>, half_extent: Option<(f64, f64)>, texture: Texture) -> Self {
        let normal = normal.normalize();
        let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = normal.cross(&helper).normalize();
        let v = normal.cross(&u);
        Plane {
            origin,
            normal,
            u,
            v,
            half_extent,
            texture,
        }
    }

    /// Ray parameter of the hit, if any.
    fn hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(d);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.origin - o)) / denom;
        if t <= 1e-9 {
            return None;
        }
        if let Some((hu, hv)) = self.half_extent {
            let rel = o + d * t - self.origin;
            if rel.dot(&self.u).abs() > hu || rel.dot(&self.v).abs() > hv {
                return None;
            }
        }
        Some(t)
    }

    fn shade(&self, x: &Vector3<f64>) -> f64 {
        let rel = x - self.origin;
        let (s, t) = (rel.dot(&self.u), rel.dot(&self.v));
        let tex = &self.texture;
        let mut acc = 0.0;
        let mut amp = 1.0;
        let mut norm = 0.0;
        let mut cell = tex.cell;
        for octave in 0..OCTAVES {
            acc += amp * value_noise(tex.seed.wrapping_add(octave * 7919), s / cell, t / cell);
            norm += amp;
            amp *= 0.5;
            cell *= 0.5;
        }
        tex.base + tex.contrast * acc / norm
    }
}

const OCTAVES: u64 = 3;

fn hash(seed: u64, i: i64, j: i64) -> f64 {
    // splitmix64 over the packed lattice coordinates
    let mut z = seed
        .wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (i, j) = (xf as i64, yf as i64);
    let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
    let (u, v) = (fade(x - xf), fade(y - yf));
    let a = hash(seed, i, j) * (1.0 - u) + hash(seed, i + 1, j) * u;
    let b = hash(seed, i, j + 1) * (1.0 - u) + hash(seed, i + 1, j + 1) * u;
    a * (1.0 - v) + b * v
}

struct View {
    k_inv: Matrix3<f64>,
    r: Matrix3<f64>,
    center: Vector3<f64>,
}

impl View {
    fn ray(&self, x: f64, y: f64) -> Vector3<f64> {
        self.r.transpose() * (self.k_inv * Vector3::new(x, y, 1.0))
    }
}

fn nearest(planes: &[Plane], o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(usize, f64)> {
    planes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.hit(o, d).map(|t| (i, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn render(view: &View, planes: &[Plane], w: usize, h: usize) -> Result<GrayImage> {
    const SUB: [f64; 2] = [-0.25, 0.25];
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut acc = 0.0;
                    for dy in SUB {
                        for dx in SUB {
                            let d = view.ray(x as f64 + dx, y as f64 + dy);
                            acc += match nearest(planes, &view.center, &d) {
                                Some((i, t)) => planes[i].shade(&(view.center + d * t)),
                                None => 128.0,
                            };
                        }
                    }
                    (acc / 4.0).round().clamp(0.0, 255.0)
                })
                .collect()
        })
        .collect();
    GrayImage::new(w, h, rows.concat())
}

/// Two cameras looking at up to three procedurally textured planes.
///
/// Camera 1 sits at the origin looking down +z; camera 2 is displaced
/// sideways (and slightly up and forward) and turned toward the scene
/// center. Images are rendered with 2x2 supersampling and quantized to 8
/// bits, so saving and reloading them is lossless.
pub fn make_synthetic_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);
    let k = Matrix3::new(
        params.focal,
        0.0,
        (w as f64 - 1.0) / 2.0,
        0.0,
        params.focal,
        (h as f64 - 1.0) / 2.0,
        0.0,
        0.0,
        1.0,
    );
    let k_inv = k.try_inverse().expect("focal > 0");

    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let dir = Vector3::new(side, rng.random_range(-0.35..0.35), rng.random_range(0.15..0.45)).normalize();
    let c2 = dir * params.baseline;
    let target = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), 9.0);
    let z2 = (target - c2).normalize();
    let x2 = Vector3::y().cross(&z2).normalize();
    let y2 = z2.cross(&x2);
    let look = Matrix3::from_rows(&[x2.transpose(), y2.transpose(), z2.transpose()]);
    let roll = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::z()), rng.random_range(-0.05..0.05));
    let r2 = roll.matrix() * look;

    let texture = |rng: &mut ChaCha8Rng, cell: f64| Texture {
        seed: rng.random(),
        cell,
        base: rng.random_range(110.0..150.0),
        contrast: rng.random_range(150.0..200.0),
    };
    let mut planes = Vec::new();
    // A corridor: one long wall running obliquely away from the camera,
    // with a floor and a ceiling. Along the roughly horizontal epipolar
    // lines depth then changes in one direction only, while most other
    // lines cross two or three surfaces.
    // the wall recedes toward the side camera 2 moved to, so image 2 sees it
    // stretched rather than compressed and disparity grows along epipolar
    // lines, as the order constraint requires
    let mirror = side;
    let near = Vector3::new(-3.0 * mirror, 0.0, rng.random_range(3.0..4.0));
    let far = Vector3::new(3.0 * mirror, 0.0, rng.random_range(11.0..13.0));
    let along = (far - near).normalize();
    let wall_normal = Vector3::new(along.z, rng.random_range(-0.1..0.1), -along.x);
    planes.push(Plane::new(near, wall_normal, None, texture(&mut rng, 1.6)));
    if params.planes >= 2 {
        let floor_y = 1.5 + rng.random_range(-0.2..0.2);
        planes.push(Plane::new(
            Vector3::new(0.0, floor_y, 0.0),
            Vector3::new(0.0, -1.0, rng.random_range(-0.05..0.05)),
            None,
            texture(&mut rng, 1.0),
        ));
    }
    if params.planes >= 3 {
        let ceiling_y = -1.8 + rng.random_range(-0.2..0.2);
        planes.push(Plane::new(
            Vector3::new(0.0, ceiling_y, 0.0),
            Vector3::new(0.0, 1.0, rng.random_range(-0.05..0.05)),
            None,
            texture(&mut rng, 1.2),
        ));
    }

    let views = [
        View {
            k_inv,
            r: Matrix3::identity(),
            center: Vector3::zeros(),
        },
        View { k_inv, r: r2, center: c2 },
    ];
    let cams = [
        CameraMatrix::from_krt(&k, &views[0].r, &views[0].center)?,
        CameraMatrix::from_krt(&k, &views[1].r, &views[1].center)?,
    ];
    let truth_f = truth_f_from_cameras(&cams[0], &cams[1])?;
    let images = [render(&views[0], &planes, w, h)?, render(&views[1], &planes, w, h)?];

    let margin = 4.0;
    let (max_x, max_y) = (w as f64 - 1.0, h as f64 - 1.0);
    let inside = |p: [f64; 2]| p[0] >= margin && p[0] <= max_x - margin && p[1] >= margin && p[1] <= max_y - margin;
    let mut matches = Vec::with_capacity(params.matches);
    let mut attempts = 0;
    while matches.len() < params.matches && attempts < params.matches * 200 {
        attempts += 1;
        let (x, y) = (rng.random_range(margin..max_x - margin), rng.random_range(margin..max_y - margin));
        let d = views[0].ray(x, y);
        let Some((_, t)) = nearest(&planes, &views[0].center, &d) else { continue };
        let xw = views[0].center + d * t;
        // visibility from camera 2: the first hit along its ray must be xw
        let d2 = xw - views[1].center;
        match nearest(&planes, &views[1].center, &d2) {
            Some((_, t2)) if (t2 - 1.0).abs() < 1e-9 => {}
            _ => continue,
        }
        let (Some(p1), Some(p2)) = (cams[0].project_point(&xw), cams[1].project_point(&xw)) else { continue };
        let (Some(a), Some(b)) = (p1.to_pixel(), p2.to_pixel()) else { continue };
        if inside(a) && inside(b) {
            matches.push((HomPoint::from_pixel(a[0], a[1]), HomPoint::from_pixel(b[0], b[1])));
        }
    }
    if matches.len() < params.matches {
        return Err(Error::degenerate(format!(
            "only {} of {} visible matches could be placed",
            matches.len(),
            params.matches
        )));
    }

    Ok(SyntheticScene {
        cams,
        images,
        truth_f,
        matches: PointMatchSet::new(matches)?,
    })
}
