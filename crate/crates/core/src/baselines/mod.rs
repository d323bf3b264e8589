//! Classical point-based estimators, ground truth from cameras, synthetic
//! scenes, dataset ingestion and the evaluation protocol.

mod camera;
mod dataset;
mod protocol;
mod solvers;
mod synthetic;

pub use camera::{truth_f_from_cameras, CameraMatrix};
pub use dataset::{load_vgg_dataset, parse_camera_file, parse_points_file, Dataset, Manifest, ManifestPair, StereoPair};
pub use protocol::{median, run_protocol, EvalReport, EvalRow, Method, MethodMedian, ProtocolConfig, Summary, SummaryRow};
pub use solvers::{eight_point, seven_point};
pub use synthetic::{make_synthetic_scene, SceneParams, SyntheticScene};

use crate::error::{Error, Result};
use crate::geometry::HomPoint;

/// Point correspondences in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatchSet {
    matches: Vec<(HomPoint, HomPoint)>,
}

impl PointMatchSet {
    pub fn new(matches: Vec<(HomPoint, HomPoint)>) -> Result<Self> {
        if matches.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, available: 0 });
        }
        if matches.iter().any(|(a, b)| a.to_pixel().is_none() || b.to_pixel().is_none()) {
            return Err(Error::degenerate("match set contains a point at infinity"));
        }
        Ok(PointMatchSet { matches })
    }

    pub fn from_pixels(pairs: &[([f64; 2], [f64; 2])]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(a, b)| (HomPoint::from_pixel(a[0], a[1]), HomPoint::from_pixel(b[0], b[1])))
                .collect(),
        )
    }

    pub fn matches(&self) -> &[(HomPoint, HomPoint)] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Pixel coordinates of both sides of every match.
    pub fn pixels(&self) -> Vec<([f64; 2], [f64; 2])> {
        self.matches
            .iter()
            .map(|(a, b)| (a.to_pixel().expect("finite"), b.to_pixel().expect("finite")))
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> PointMatchSet {
        PointMatchSet {
            matches: idx.iter().map(|i| self.matches[*i]).collect(),
        }
    }
}
