//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code it is used to check.

#![allow(dead_code)]

use epiline::geometry::{HomLine, HomPoint};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive minimum of the line-matching energy over every disparity
/// vector in `{-d_max..d_max}^n` (non-decreasing ones only when
/// `monotonic`). Plain depth-first enumeration; the only shortcut is
/// dropping a branch once its partial sum already reaches the best total,
/// which is exact because every term is non-negative.
pub fn brute_force_cost(a: &[f64], b: &[f64], r: f64, lambda: f64, alpha: f64, d_max: i32, monotonic: bool) -> f64 {
    let n = a.len();
    let phi = |i: usize, d: i32| {
        let j = (i as i32 + d).clamp(0, n as i32 - 1) as usize;
        ((a[i] - b[j]).powi(2)).min(r)
    };
    let psi = |d: i32, prev: i32| (lambda * ((d - prev) as f64).powi(2)).min(alpha);

    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: usize,
        prev: i32,
        acc: f64,
        n: usize,
        d_max: i32,
        monotonic: bool,
        phi: &dyn Fn(usize, i32) -> f64,
        psi: &dyn Fn(i32, i32) -> f64,
        best: &mut f64,
    ) {
        if acc >= *best {
            return;
        }
        if i == n {
            *best = best.min(acc);
            return;
        }
        let lo = if monotonic { prev } else { -d_max };
        for d in lo..=d_max {
            walk(i + 1, d, acc + phi(i, d) + psi(d, prev), n, d_max, monotonic, phi, psi, best);
        }
    }

    let mut best = f64::INFINITY;
    for d0 in -d_max..=d_max {
        walk(1, d0, phi(0, d0), n, d_max, monotonic, &phi, &psi, &mut best);
    }
    best
}

/// Monte-Carlo estimate of the area of `[0,w] x [0,h]` where the two lines
/// disagree on which side a point lies, with normals first turned to agree.
pub fn mc_area_between(l: &HomLine, m: &HomLine, w: f64, h: f64, samples: usize, seed: u64) -> f64 {
    let (u, mut v) = (l.coords(), m.coords());
    if u.x * v.x + u.y * v.y < 0.0 {
        v = -v;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let p = Vector3::new(rng.random_range(0.0..w), rng.random_range(0.0..h), 1.0);
        if (u.dot(&p) >= 0.0) != (v.dot(&p) >= 0.0) {
            hits += 1;
        }
    }
    w * h * hits as f64 / samples as f64
}

/// Distance from pixel `p` to the line `l = (a, b, c)`.
pub fn point_line_distance(l: &Vector3<f64>, p: [f64; 2]) -> f64 {
    (l.x * p[0] + l.y * p[1] + l.z).abs() / l.x.hypot(l.y)
}

/// Symmetric epipolar distance of one match written out by hand: the mean
/// of the image-2 distance to `F x1` and the image-1 distance to `Fᵀ x2`.
pub fn sed_one(f: &Matrix3<f64>, x1: [f64; 2], x2: [f64; 2]) -> f64 {
    let h1 = Vector3::new(x1[0], x1[1], 1.0);
    let h2 = Vector3::new(x2[0], x2[1], 1.0);
    0.5 * (point_line_distance(&(f * h1), x2) + point_line_distance(&(f.transpose() * h2), x1))
}

pub fn pixel(p: &HomPoint) -> [f64; 2] {
    p.to_pixel().expect("finite point")
}

/// `f` scaled to unit Frobenius norm with a fixed sign, for comparing
/// matrices defined up to scale.
pub fn canonical(f: &Matrix3<f64>) -> Matrix3<f64> {
    let n = f / f.norm();
    let pivot = n.iter().cloned().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        -n
    } else {
        n
    }
}

/// Index of the first match at least `min_px` from `p` in image 1.
pub fn far_match(matches: &[(HomPoint, HomPoint)], p: &(HomPoint, HomPoint), min_px: f64) -> (HomPoint, HomPoint) {
    let a = pixel(&p.0);
    *matches
        .iter()
        .find(|m| {
            let b = pixel(&m.0);
            let c = pixel(&m.1);
            let d = pixel(&p.1);
            (a[0] - b[0]).hypot(a[1] - b[1]) >= min_px && (c[0] - d[0]).hypot(c[1] - d[1]) >= min_px
        })
        .expect("a distant match exists")
}
