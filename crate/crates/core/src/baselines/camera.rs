use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{skew, FundamentalMatrix, HomPoint};

/// 3x4 projection matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMatrix {
    p: Matrix3x4<f64>,
}

impl CameraMatrix {
    pub fn new(p: Matrix3x4<f64>) -> Result<Self> {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::degenerate("camera matrix has non-finite entries"));
        }
        let sv = p.svd(false, false).singular_values;
        if sv[2] <= 1e-12 * sv[0] {
            return Err(Error::degenerate("camera matrix is not rank 3"));
        }
        Ok(CameraMatrix { p })
    }

    /// `K [R | -R C]`.
    pub fn from_krt(k: &Matrix3<f64>, r: &Matrix3<f64>, center: &Vector3<f64>) -> Result<Self> {
        let t = -(r * center);
        let mut p = Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k * r));
        p.set_column(3, &(k * t));
        Self::new(p)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    /// Homogeneous camera center (right null vector).
    pub fn center(&self) -> Vector4<f64> {
        let m = self.p;
        // cofactor expansion is exact for a rank-3 3x4 matrix
        let minor = |skip: usize| {
            let cols: Vec<usize> = (0..4).filter(|c| *c != skip).collect();
            Matrix3::from_columns(&[m.column(cols[0]), m.column(cols[1]), m.column(cols[2])]).determinant()
        };
        Vector4::new(minor(0), -minor(1), minor(2), -minor(3))
    }

    pub fn project(&self, x: &Vector4<f64>) -> Option<HomPoint> {
        HomPoint::from_vector(self.p * x).ok()
    }

    pub fn project_point(&self, x: &Vector3<f64>) -> Option<HomPoint> {
        self.project(&x.push(1.0))
    }
}

/// Fundamental matrix of two cameras: `F = [e2]x P2 P1^+` with `e2 = P2 C1`.
pub fn truth_f_from_cameras(c1: &CameraMatrix, c2: &CameraMatrix) -> Result<FundamentalMatrix> {
    let center1 = c1.center();
    let e2 = c2.p * center1;
    let scale = c2.p.norm() * center1.norm();
    if e2.norm() <= 1e-12 * scale {
        return Err(Error::degenerate("camera centers coincide"));
    }
    let p1 = c1.p;
    let pinv = p1.transpose() * (p1 * p1.transpose()).try_inverse().ok_or_else(|| Error::degenerate("P1 P1^T is singular"))?;
    let e2p = HomPoint::from_vector(e2)?;
    let f = skew(&e2p).matrix() * c2.p * pinv;
    FundamentalMatrix::from_matrix(&f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> Matrix3<f64> {
        Matrix3::new(500.0, 0.0, 320.0, 0.0, 500.0, 240.0, 0.0, 0.0, 1.0)
    }

    fn rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        *nalgebra::Rotation3::new(axis * 0.2).matrix()
    }

    #[test]
    fn pure_x_translation_gives_horizontal_lines() {
        let c1 = CameraMatrix::from_krt(&k(), &Matrix3::identity(), &Vector3::zeros()).unwrap();
        let c2 = CameraMatrix::from_krt(&k(), &Matrix3::identity(), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let f = truth_f_from_cameras(&c1, &c2).unwrap();
        assert!(f.e2().same_up_to_scale(&HomPoint::new(1.0, 0.0, 0.0), 1e-12));
        let l = f.line_in_second(&HomPoint::from_pixel(100.0, 77.0)).unwrap();
        let d = l.direction();
        assert!(d[1].abs() < 1e-12);
        assert!(l.distance_to_pixel(0.0, 77.0) < 1e-9);
    }

    #[test]
    fn random_cameras_satisfy_incidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c1 = CameraMatrix::from_krt(&k(), &rotation(&mut rng), &Vector3::new(0.1, -0.2, 0.0)).unwrap();
            let center = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
            let c2 = CameraMatrix::from_krt(&k(), &rotation(&mut rng), &center).unwrap();
            let f = truth_f_from_cameras(&c1, &c2).unwrap();
            let e2 = c2.project(&c1.center()).unwrap();
            assert!(f.e2().same_up_to_scale(&e2, 1e-9));
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let x = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(4.0..12.0));
                let (a, b) = (c1.project_point(&x).unwrap(), c2.project_point(&x).unwrap());
                let a = HomPoint::from_pixel(a.to_pixel().unwrap()[0], a.to_pixel().unwrap()[1]);
                let b = HomPoint::from_pixel(b.to_pixel().unwrap()[0], b.to_pixel().unwrap()[1]);
                worst = worst.max(f.residual(&a, &b).abs());
            }
            assert!(worst < 1e-9, "{worst}");
        }
    }

    #[test]
    fn coincident_centers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Vector3::new(0.3, 0.1, -0.2);
        let c1 = CameraMatrix::from_krt(&k(), &rotation(&mut rng), &c).unwrap();
        let c2 = CameraMatrix::from_krt(&k(), &rotation(&mut rng), &c).unwrap();
        assert!(matches!(truth_f_from_cameras(&c1, &c2), Err(Error::DegenerateInput(_))));
    }
}
