use std::path::PathBuf;

use epiline_core::baselines::{eight_point as eight, make_synthetic_scene, seven_point as seven, PointMatchSet, SceneParams};
use epiline_core::estimator::{self, EstimateConfig, EstimateResult};
use epiline_core::geometry::{self as geom, FundamentalMatrix, HomPoint};
use epiline_core::imaging::GrayImage;
use epiline_core::stereo::{match_samples, StereoParams};
use epiline_core::Error;
use nalgebra::Matrix3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Mat3 = [[f64; 3]; 3];
type Match = (f64, f64, f64, f64);

fn err(e: Error) -> PyErr {
    match e {
        Error::NoCandidates | Error::NoValidHypothesis | Error::EmptyPencil => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A path to an image file, or rows of gray values.
#[derive(FromPyObject)]
enum ImageArg {
    Path(PathBuf),
    Rows(Vec<Vec<f64>>),
}

impl ImageArg {
    fn load(self) -> PyResult<GrayImage> {
        match self {
            ImageArg::Path(p) => GrayImage::load(p).map_err(err),
            ImageArg::Rows(rows) => {
                let h = rows.len();
                let w = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != w) {
                    return Err(PyValueError::new_err("image rows differ in length"));
                }
                GrayImage::new(w, h, rows.concat()).map_err(err)
            }
        }
    }
}

fn rows(img: &GrayImage) -> Vec<Vec<f64>> {
    img.data().chunks(img.width()).map(<[f64]>::to_vec).collect()
}

fn mat(f: &FundamentalMatrix) -> Mat3 {
    let m = f.matrix();
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn pair(m: &Match) -> (HomPoint, HomPoint) {
    (HomPoint::from_pixel(m.0, m.1), HomPoint::from_pixel(m.2, m.3))
}

fn matches(ms: &[Match]) -> PyResult<PointMatchSet> {
    PointMatchSet::new(ms.iter().map(pair).collect()).map_err(err)
}

fn config(json: Option<&str>, seed: Option<u64>) -> PyResult<EstimateConfig> {
    let mut cfg: EstimateConfig = match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("config: {e}")))?,
        None => EstimateConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

#[pyclass(frozen, module = "epiline")]
struct Estimate(EstimateResult);

#[pymethods]
impl Estimate {
    #[getter(F)]
    fn f(&self) -> Mat3 {
        mat(&self.0.f)
    }

    /// Epipole in image 1 as (x, y), or None when it lies at infinity.
    #[getter]
    fn e1(&self) -> Option<[f64; 2]> {
        self.0.hypothesis.e1.to_pixel()
    }

    #[getter]
    fn e2(&self) -> Option<[f64; 2]> {
        self.0.hypothesis.e2.to_pixel()
    }

    #[getter]
    fn full_score(&self) -> Option<f64> {
        self.0.hypothesis.full_score
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        let show = |e: Option<[f64; 2]>| e.map_or("None".to_string(), |[x, y]| format!("({x:.2}, {y:.2})"));
        format!("Estimate(e1={}, e2={})", show(self.e1()), show(self.e2()))
    }
}

/// Estimates F from two (or three) point matches given as (x1, y1, x2, y2).
/// With no points, runs the line-RANSAC baseline instead.
#[pyfunction]
#[pyo3(signature = (left, right, points=None, config=None, seed=None))]
fn estimate(
    py: Python<'_>,
    left: ImageArg,
    right: ImageArg,
    points: Option<Vec<Match>>,
    config: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Estimate> {
    let (a, b) = (left.load()?, right.load()?);
    let cfg = self::config(config, seed)?;
    let res = py.detach(|| match points.as_deref() {
        None => estimator::line_ransac_estimate(&a, &b, &cfg),
        Some([p, q]) => estimator::two_point_estimate(&a, &b, pair(p), pair(q), &cfg),
        Some([p, q, r]) => estimator::three_point_accelerated(&a, &b, pair(p), pair(q), pair(r), &cfg),
        Some(other) => Err(Error::DomainError(format!("expected 2 or 3 matches, got {}", other.len()))),
    });
    res.map(Estimate).map_err(err)
}

#[pyclass(frozen, get_all, module = "epiline")]
struct Scene {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    matches: Vec<Match>,
    truth_f: Mat3,
    cameras: [[[f64; 4]; 3]; 2],
}

/// Renders a textured synthetic stereo pair with known geometry.
#[pyfunction]
#[pyo3(signature = (seed=0, width=512, height=512, focal=600.0, baseline=0.3, planes=3, matches=200))]
fn synth(seed: u64, width: usize, height: usize, focal: f64, baseline: f64, planes: usize, matches: usize) -> PyResult<Scene> {
    let params = SceneParams { width, height, focal, baseline, planes, matches };
    let s = make_synthetic_scene(seed, &params).map_err(err)?;
    let cam = |k: usize| -> [[f64; 4]; 3] {
        let m = s.cams[k].matrix();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    };
    Ok(Scene {
        left: rows(&s.images[0]),
        right: rows(&s.images[1]),
        matches: s.matches.pixels().into_iter().map(|(p, q)| (p[0], p[1], q[0], q[1])).collect(),
        truth_f: mat(&s.truth_f),
        cameras: [cam(0), cam(1)],
    })
}

/// Optimal stereo cost between two profiles: (total, normalized, disparities).
#[pyfunction]
#[pyo3(signature = (a, b, r=2500.0, lam=2.0, alpha=3.0, d_max=32, monotonic=true))]
fn line_cost(a: Vec<f64>, b: Vec<f64>, r: f64, lam: f64, alpha: f64, d_max: usize, monotonic: bool) -> PyResult<(f64, f64, Vec<i32>)> {
    let p = StereoParams { r, lambda: lam, alpha, d_max, monotonic };
    let m = match_samples(&a, &b, &p).map_err(err)?;
    Ok((m.total, m.normalized, m.disparities.0))
}

#[pyfunction]
fn eight_point(matches: Vec<Match>) -> PyResult<Mat3> {
    eight(&self::matches(&matches)?).map(|f| mat(&f)).map_err(err)
}

#[pyfunction]
fn seven_point(matches: Vec<Match>) -> PyResult<Vec<Mat3>> {
    Ok(seven(&self::matches(&matches)?).map_err(err)?.iter().map(mat).collect())
}

/// Mean symmetric point-to-epipolar-line distance, in pixels.
#[pyfunction]
fn epipolar_distance(f: Mat3, matches: Vec<Match>) -> PyResult<f64> {
    let m = Matrix3::from_fn(|r, c| f[r][c]);
    let f = FundamentalMatrix::from_matrix(&m).map_err(err)?;
    let ms: Vec<_> = matches.iter().map(pair).collect();
    geom::symmetric_epipolar_distance(&f, &ms).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (inlier_ratio, confidence=0.99, sample_size=2))]
fn ransac_trials(inlier_ratio: f64, confidence: f64, sample_size: usize) -> PyResult<usize> {
    estimator::ransac_trials(inlier_ratio, confidence, sample_size).map_err(err)
}

#[pymodule]
fn epiline(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Estimate>()?;
    m.add_class::<Scene>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(line_cost, m)?)?;
    m.add_function(wrap_pyfunction!(eight_point, m)?)?;
    m.add_function(wrap_pyfunction!(seven_point, m)?)?;
    m.add_function(wrap_pyfunction!(epipolar_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ransac_trials, m)?)?;
    Ok(())
}
