use nalgebra::{Complex, DMatrix, Matrix3, Vector3};

use super::PointMatchSet;
use crate::error::{Error, Result};
use crate::geometry::{enforce_rank2, FundamentalMatrix};

/// Similarity moving the centroid to the origin and the mean distance to √2.
fn normalizing_transform(pts: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    if !(mean > 1e-12) {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

struct Normalized {
    a: DMatrix<f64>,
    t1: Matrix3<f64>,
    t2: Matrix3<f64>,
}

/// Stacks the rows of `x2^T F x1 = 0` in normalized coordinates, padded with
/// zero rows to at least 9 so that the SVD yields a full right basis.
fn constraint_matrix(m: &PointMatchSet) -> Result<Normalized> {
    let px = m.pixels();
    let p1: Vec<[f64; 2]> = px.iter().map(|p| p.0).collect();
    let p2: Vec<[f64; 2]> = px.iter().map(|p| p.1).collect();
    let t1 = normalizing_transform(&p1)?;
    let t2 = normalizing_transform(&p2)?;
    let rows = px.len().max(9);
    let mut a = DMatrix::zeros(rows, 9);
    for (i, (x1, x2)) in px.iter().enumerate() {
        let u = t1 * Vector3::new(x1[0], x1[1], 1.0);
        let v = t2 * Vector3::new(x2[0], x2[1], 1.0);
        let row = [
            v.x * u.x,
            v.x * u.y,
            v.x,
            v.y * u.x,
            v.y * u.y,
            v.y,
            u.x,
            u.y,
            1.0,
        ];
        for (j, val) in row.iter().enumerate() {
            a[(i, j)] = *val;
        }
    }
    Ok(Normalized { a, t1, t2 })
}

/// Right singular vectors sorted by ascending singular value, with the
/// singular values.
fn null_basis(a: &DMatrix<f64>) -> (Vec<f64>, Vec<[f64; 9]>) {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut idx: Vec<usize> = (0..9).collect();
    idx.sort_by(|i, j| svd.singular_values[*i].total_cmp(&svd.singular_values[*j]));
    let sv = idx.iter().map(|i| svd.singular_values[*i]).collect();
    let vecs = idx
        .iter()
        .map(|i| {
            let mut out = [0.0; 9];
            for (j, o) in out.iter_mut().enumerate() {
                *o = vt[(*i, j)];
            }
            out
        })
        .collect();
    (sv, vecs)
}

fn to_matrix(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

/// Normalized eight-point algorithm with rank-2 enforcement.
pub fn eight_point(m: &PointMatchSet) -> Result<FundamentalMatrix> {
    if m.len() < 8 {
        return Err(Error::InsufficientPoints {
            needed: 8,
            available: m.len(),
        });
    }
    let sys = constraint_matrix(m)?;
    let (sv, vecs) = null_basis(&sys.a);
    if sv[1] <= 1e-10 * sv[8] {
        return Err(Error::DegenerateConfiguration("constraint null space has dimension > 1".into()));
    }
    let fhat = enforce_rank2(&to_matrix(&vecs[0]));
    let f = sys.t2.transpose() * fhat * sys.t1;
    FundamentalMatrix::from_matrix(&enforce_rank2(&(f / f.norm())))
}

/// Seven-point algorithm: every real root of `det(a F1 + (1 - a) F2) = 0`.
pub fn seven_point(m: &PointMatchSet) -> Result<Vec<FundamentalMatrix>> {
    if m.len() != 7 {
        return Err(Error::DomainError(format!("seven_point needs exactly 7 matches, got {}", m.len())));
    }
    let sys = constraint_matrix(m)?;
    let (sv, vecs) = null_basis(&sys.a);
    if sv[2] <= 1e-10 * sv[8] {
        return Err(Error::DegenerateConfiguration("constraint null space has dimension > 2".into()));
    }
    let f1 = to_matrix(&vecs[0]);
    let f2 = to_matrix(&vecs[1]);

    // det(a f1 + (1 - a) f2) sampled at four points determines the cubic
    let det_at = |a: f64| (f1 * a + f2 * (1.0 - a)).determinant();
    let (d0, d1, dm1, d2) = (det_at(0.0), det_at(1.0), det_at(-1.0), det_at(2.0));
    let c0 = d0;
    let c2 = (d1 + dm1) / 2.0 - c0;
    let odd = (d1 - dm1) / 2.0;
    let c3 = (d2 - 4.0 * c2 - c0 - 2.0 * odd) / 6.0;
    let c1 = odd - c3;

    let scale = c0.abs().max(c1.abs()).max(c2.abs()).max(c3.abs());
    // f1, f2 have unit norm, so a vanishing cubic means every member of the
    // pencil is singular (e.g. six of the seven points coplanar)
    if scale <= 1e-12 {
        return Err(Error::DegenerateConfiguration("every solution in the null space has rank 2".into()));
    }
    let mut candidates: Vec<Matrix3<f64>> = Vec::new();
    if c3.abs() <= 1e-12 * scale {
        // the root at infinity corresponds to f1 - f2
        candidates.push(f1 - f2);
        candidates.extend(quadratic_roots(c2, c1, c0).into_iter().map(|a| f1 * a + f2 * (1.0 - a)));
    } else {
        for a in cubic_roots(c3, c2, c1, c0) {
            candidates.push(f1 * a + f2 * (1.0 - a));
        }
    }

    let out: Vec<FundamentalMatrix> = candidates
        .iter()
        .filter_map(|fhat| {
            let f = sys.t2.transpose() * fhat * sys.t1;
            FundamentalMatrix::from_matrix(&(f / f.norm())).ok()
        })
        .collect();
    if out.is_empty() {
        return Err(Error::DegenerateConfiguration("no rank-2 solution".into()));
    }
    Ok(out)
}

/// Real roots of `c3 a³ + c2 a² + c1 a + c0` from the companion matrix,
/// polished with Newton steps.
fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let (b2, b1, b0) = (c2 / c3, c1 / c3, c0 / c3);
    let companion = Matrix3::new(-b2, -b1, -b0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let eig: Vec<Complex<f64>> = companion.complex_eigenvalues().iter().cloned().collect();
    let poly = |a: f64| ((c3 * a + c2) * a + c1) * a + c0;
    let dpoly = |a: f64| (3.0 * c3 * a + 2.0 * c2) * a + c1;
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * z.re.abs().max(1.0))
        .map(|z| {
            let mut a = z.re;
            for _ in 0..3 {
                let d = dpoly(a);
                if d == 0.0 {
                    break;
                }
                let next = a - poly(a) / d;
                if !next.is_finite() {
                    break;
                }
                a = next;
            }
            a
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    roots
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{make_synthetic_scene, CameraMatrix, SceneParams};
    use crate::geometry::HomPoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene_matches(seed: u64) -> (FundamentalMatrix, PointMatchSet) {
        let scene = make_synthetic_scene(seed, &SceneParams::small()).unwrap();
        (scene.truth_f, scene.matches)
    }

    /// Farthest-point subset. Most scene points lie on the wall, so fixed
    /// indices can pick a near-coplanar (degenerate) sample.
    fn spread(m: &PointMatchSet, k: usize) -> PointMatchSet {
        let px = m.pixels();
        let gap = |i: usize, idx: &[usize]| {
            idx.iter()
                .map(|&j| (px[i].0[0] - px[j].0[0]).hypot(px[i].0[1] - px[j].0[1]))
                .fold(f64::INFINITY, f64::min)
        };
        let mut idx = vec![0usize];
        while idx.len() < k {
            let next = (0..px.len()).max_by(|&a, &b| gap(a, &idx).total_cmp(&gap(b, &idx))).unwrap();
            idx.push(next);
        }
        m.subset(&idx)
    }

    #[test]
    fn cubic_roots_of_known_polynomial() {
        // (a - 1)(a + 2)(a - 0.5)
        let r = cubic_roots(1.0, 0.5, -2.5, 1.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-2.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // a³ + a has a single real root
        assert_eq!(cubic_roots(1.0, 0.0, 1.0, 0.0).len(), 1);
    }

    #[test]
    fn eight_point_recovers_truth_from_exact_matches() {
        for seed in 0..3 {
            let (truth, m) = scene_matches(seed);
            let f = eight_point(&spread(&m, 8)).unwrap();
            assert!(f.aligned_distance(&truth) < 1e-6, "{}", f.aligned_distance(&truth));
        }
    }

    #[test]
    fn seven_point_contains_truth_and_fits_inputs() {
        for seed in 0..3 {
            let (truth, m) = scene_matches(seed);
            let sub = spread(&m, 7);
            let roots = seven_point(&sub).unwrap();
            assert!(!roots.is_empty() && roots.len() <= 3);
            let best = roots.iter().map(|f| f.aligned_distance(&truth)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "{best}");
            for f in &roots {
                assert!(f.determinant().abs() < 1e-9);
                for (a, b) in sub.matches() {
                    assert!(f.residual(a, b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pairs: Vec<([f64; 2], [f64; 2])> = (0..10)
            .map(|i| ([i as f64 * 10.0, 5.0 + i as f64 * 3.0], [i as f64 * 9.0 + 2.0, 8.0 + i as f64 * 2.5]))
            .collect();
        let m = PointMatchSet::from_pixels(&pairs).unwrap();
        assert!(matches!(eight_point(&m), Err(Error::DegenerateConfiguration(_))));
        assert!(matches!(seven_point(&m.subset(&[0, 1, 2, 3, 4, 5, 6])), Err(Error::DegenerateConfiguration(_))));
        assert!(matches!(eight_point(&m.subset(&[0, 1, 2])), Err(Error::InsufficientPoints { .. })));
    }

    #[test]
    fn six_coplanar_points_leave_seven_point_undetermined() {
        let k = Matrix3::new(500.0, 0.0, 250.0, 0.0, 500.0, 250.0, 0.0, 0.0, 1.0);
        let r2 = nalgebra::Rotation3::from_euler_angles(0.02, -0.05, 0.01).into_inner();
        let c1 = CameraMatrix::from_krt(&k, &Matrix3::identity(), &Vector3::zeros()).unwrap();
        let c2 = CameraMatrix::from_krt(&k, &r2, &Vector3::new(0.4, 0.1, 0.0)).unwrap();
        let mut world: Vec<Vector3<f64>> = [(-1.0, -1.0), (1.0, -0.8), (0.9, 1.1), (-1.2, 0.7), (0.1, 0.2), (-0.3, -0.6)]
            .iter()
            .map(|&(x, y)| Vector3::new(x, y, 5.0 + 0.3 * x))
            .collect();
        world.push(Vector3::new(0.5, -0.4, 3.0));
        let pairs: Vec<(HomPoint, HomPoint)> = world
            .iter()
            .map(|x| (c1.project_point(x).unwrap(), c2.project_point(x).unwrap()))
            .collect();
        let m = PointMatchSet::new(pairs.clone()).unwrap();
        assert!(matches!(seven_point(&m), Err(Error::DegenerateConfiguration(_))));

        // moving the sixth point off the plane makes the sample generic again
        world[5].z += 1.5;
        let pairs: Vec<(HomPoint, HomPoint)> = world
            .iter()
            .map(|x| (c1.project_point(x).unwrap(), c2.project_point(x).unwrap()))
            .collect();
        let truth = crate::baselines::truth_f_from_cameras(&c1, &c2).unwrap();
        let roots = seven_point(&PointMatchSet::new(pairs).unwrap()).unwrap();
        let best = roots.iter().map(|f| f.aligned_distance(&truth)).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "{best}");
    }

    #[test]
    fn eight_point_is_similarity_covariant() {
        let (_, m) = scene_matches(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noisy: Vec<([f64; 2], [f64; 2])> = m
            .pixels()
            .iter()
            .take(20)
            .map(|(a, b)| {
                (
                    [a[0] + rng.random_range(-1.0..1.0), a[1] + rng.random_range(-1.0..1.0)],
                    [b[0] + rng.random_range(-1.0..1.0), b[1] + rng.random_range(-1.0..1.0)],
                )
            })
            .collect();
        let base = eight_point(&PointMatchSet::from_pixels(&noisy).unwrap()).unwrap();

        let (s, th, tx, ty): (f64, f64, f64, f64) = (1.7, 0.4, 33.0, -12.0);
        let sim = Matrix3::new(s * th.cos(), -s * th.sin(), tx, s * th.sin(), s * th.cos(), ty, 0.0, 0.0, 1.0);
        let moved: Vec<(HomPoint, HomPoint)> = noisy
            .iter()
            .map(|(a, b)| {
                let p = sim * Vector3::new(a[0], a[1], 1.0);
                (HomPoint::from_pixel(p.x, p.y), HomPoint::from_pixel(b[0], b[1]))
            })
            .collect();
        let moved = eight_point(&PointMatchSet::new(moved).unwrap()).unwrap();
        let expected = FundamentalMatrix::from_matrix(&(base.matrix() * sim.try_inverse().unwrap())).unwrap();
        assert!(moved.aligned_distance(&expected) < 1e-9, "{}", moved.aligned_distance(&expected));
    }
}
