//! Pencils of candidate epipolar lines through a point, all-pairs stereo
//! scoring, and mutual-best selection.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HomLine, HomPoint};
use crate::imaging::{line_profile, GrayImage, IntensityProfile, LineSegment, DEFAULT_MIN_TEXTURE, DEFAULT_PROFILE_SAMPLES};
use crate::stereo::{cost_samples, StereoParams};

pub const DEFAULT_ANGLES: usize = 180;
pub const DEFAULT_MIN_CHORD: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PencilSpec {
    center: HomPoint,
    angles: Vec<f64>,
    pub min_chord: f64,
    pub min_texture: f64,
    pub samples: usize,
}

impl PencilSpec {
    pub fn new(center: HomPoint, angles: Vec<f64>, min_chord: f64, min_texture: f64) -> Result<Self> {
        if angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(Error::DomainError("pencil angles must lie in [0, pi)".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DomainError("pencil angles must be strictly increasing".into()));
        }
        Ok(PencilSpec {
            center,
            angles,
            min_chord,
            min_texture,
            samples: DEFAULT_PROFILE_SAMPLES,
        })
    }

    /// `count` angles `k·pi/count`.
    pub fn uniform(center: HomPoint, count: usize) -> Self {
        let angles = (0..count).map(|k| k as f64 * PI / count as f64).collect();
        PencilSpec::new(center, angles, DEFAULT_MIN_CHORD, DEFAULT_MIN_TEXTURE).expect("uniform angles are valid")
    }

    pub fn with_filters(mut self, min_chord: f64, min_texture: f64) -> Self {
        self.min_chord = min_chord;
        self.min_texture = min_texture;
        self
    }

    pub fn center(&self) -> HomPoint {
        self.center
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// A surviving pencil member with its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilLine {
    pub line: HomLine,
    pub angle: f64,
    pub segment: LineSegment,
    pub profile: IntensityProfile,
}

/// Lines through `spec.center` at each angle, dropping short or flat ones.
pub fn pencil_lines(spec: &PencilSpec, img: &GrayImage) -> Result<Vec<PencilLine>> {
    let c = spec.center.coords();
    let out: Vec<PencilLine> = spec
        .angles
        .iter()
        .filter_map(|&t| {
            // direction (cos t, sin t, 0) joined with the center
            let line = HomLine::from_vector(c.cross(&nalgebra::Vector3::new(t.cos(), t.sin(), 0.0))).ok()?;
            let (segment, profile) = line_profile(img, &line, spec.samples, spec.min_chord, spec.min_texture)?;
            Some(PencilLine {
                line,
                angle: t,
                segment,
                profile,
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyPencil);
    }
    Ok(out)
}

/// Cost of matching `a` against `b`, taking the better of the two
/// orientations of `b`. Returns the cost and whether `b` was reversed.
pub fn pair_cost(a: &IntensityProfile, b: &IntensityProfile, p: &StereoParams) -> Result<(f64, bool)> {
    let fwd = cost_samples(&a.samples, &b.samples, p)?;
    let rev: Vec<f64> = b.samples.iter().rev().copied().collect();
    let bwd = cost_samples(&a.samples, &rev, p)?;
    Ok(if bwd < fwd { (bwd, true) } else { (fwd, false) })
}

/// Dense cost matrix between two pencils, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub rows: usize,
    pub cols: usize,
    pub costs: Vec<f64>,
    pub reversed: Vec<bool>,
    pub lines1: Vec<HomLine>,
    pub lines2: Vec<HomLine>,
}

impl ScoreMatrix {
    pub fn from_costs(rows: usize, cols: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != rows * cols {
            return Err(Error::LengthMismatch(costs.len(), rows * cols));
        }
        let dummy = HomLine::new(0.0, 1.0, 0.0);
        Ok(ScoreMatrix {
            rows,
            cols,
            reversed: vec![false; costs.len()],
            costs,
            lines1: vec![dummy; rows],
            lines2: vec![dummy; cols],
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.cols + j]
    }
}

/// Every cross pair scored with [`pair_cost`]. Parallel over entries; each
/// entry is computed independently, so the matrix does not depend on
/// scheduling.
pub fn score_all(p1: &[PencilLine], p2: &[PencilLine], params: &StereoParams) -> Result<ScoreMatrix> {
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::EmptyPencil);
    }
    params.validate()?;
    let cols = p2.len();
    let entries: Vec<(f64, bool)> = (0..p1.len() * cols)
        .into_par_iter()
        .map(|k| pair_cost(&p1[k / cols].profile, &p2[k % cols].profile, params))
        .collect::<Result<_>>()?;
    Ok(ScoreMatrix {
        rows: p1.len(),
        cols,
        costs: entries.iter().map(|e| e.0).collect(),
        reversed: entries.iter().map(|e| e.1).collect(),
        lines1: p1.iter().map(|l| l.line).collect(),
        lines2: p2.iter().map(|l| l.line).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub l1: HomLine,
    pub l2: HomLine,
    pub cost: f64,
    /// 1-based rank of `l2` within the row of `l1`, and of `l1` within the
    /// column of `l2`.
    pub rank1: usize,
    pub rank2: usize,
    pub row: usize,
    pub col: usize,
}

/// Position of each entry in ascending (cost, index) order, 1-based.
fn ranks(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let v: Vec<f64> = values.collect();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]).then(a.cmp(b)));
    let mut r = vec![0; v.len()];
    for (pos, i) in idx.into_iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// Pairs that sit in each other's `k` best, sorted by cost.
pub fn mutual_best(m: &ScoreMatrix, k: usize) -> Result<Vec<CandidatePair>> {
    if k == 0 {
        return Err(Error::DomainError("k must be at least 1".into()));
    }
    let row_ranks: Vec<Vec<usize>> = (0..m.rows).map(|i| ranks((0..m.cols).map(|j| m.get(i, j)))).collect();
    let col_ranks: Vec<Vec<usize>> = (0..m.cols).map(|j| ranks((0..m.rows).map(|i| m.get(i, j)))).collect();
    let mut out = Vec::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            let (r1, r2) = (row_ranks[i][j], col_ranks[j][i]);
            if r1 <= k && r2 <= k && m.get(i, j).is_finite() {
                out.push(CandidatePair {
                    l1: m.lines1[i],
                    l2: m.lines2[j],
                    cost: m.get(i, j),
                    rank1: r1,
                    rank2: r2,
                    row: i,
                    col: j,
                });
            }
        }
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost).then((a.row, a.col).cmp(&(b.row, b.col))));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(120, 90, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    #[test]
    fn four_angles_through_center() {
        let img = noise(1);
        let c = HomPoint::from_pixel(60.0, 45.0);
        let spec = PencilSpec::new(c, vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0], 20.0, 4.0).unwrap();
        let lines = pencil_lines(&spec, &img).unwrap();
        assert_eq!(lines.len(), 4);
        for l in &lines {
            assert!(l.line.normalized_incidence(&c).abs() < 1e-9);
            assert!(l.segment.length() >= 20.0);
        }
    }

    #[test]
    fn flat_image_gives_empty_pencil() {
        let img = GrayImage::from_fn(64, 64, |_, _| 90.0).unwrap();
        let spec = PencilSpec::uniform(HomPoint::from_pixel(30.0, 30.0), 30);
        assert!(matches!(pencil_lines(&spec, &img), Err(Error::EmptyPencil)));
    }

    #[test]
    fn rejects_bad_angles() {
        let c = HomPoint::from_pixel(0.0, 0.0);
        assert!(PencilSpec::new(c, vec![0.5, 0.2], 1.0, 1.0).is_err());
        assert!(PencilSpec::new(c, vec![0.0, PI], 1.0, 1.0).is_err());
    }

    #[test]
    fn self_scoring_has_zero_diagonal() {
        let img = noise(2);
        let spec = PencilSpec::uniform(HomPoint::from_pixel(50.0, 40.0), 12).with_filters(10.0, 4.0);
        let mut lines = pencil_lines(&spec, &img).unwrap();
        for l in lines.iter_mut() {
            // shorter profiles keep the test quick
            l.profile = crate::imaging::resample(&img, &l.segment, 40).unwrap();
        }
        let m = score_all(&lines, &lines, &StereoParams::default()).unwrap();
        for i in 0..m.rows {
            assert_eq!(m.get(i, i), 0.0);
        }
        let best = mutual_best(&m, 1).unwrap();
        assert_eq!(best.len(), m.rows);
        assert!(best.iter().all(|c| c.row == c.col && c.cost == 0.0));
    }

    #[test]
    fn dominant_diagonal() {
        let n = 5;
        let costs = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 10.0 + k as f64 }).collect();
        let m = ScoreMatrix::from_costs(n, n, costs).unwrap();
        let best = mutual_best(&m, 1).unwrap();
        assert_eq!(best.iter().map(|c| (c.row, c.col)).collect::<Vec<_>>(), (0..n).map(|i| (i, i)).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn mutual_best_nested_and_partial(seed in 0u64..10_000, rows in 1usize..8, cols in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let costs = (0..rows * cols).map(|_| rng.random_range(0..20) as f64).collect();
            let m = ScoreMatrix::from_costs(rows, cols, costs).unwrap();
            let one = mutual_best(&m, 1).unwrap();
            // k = 1 is a partial matching
            let mut r: Vec<usize> = one.iter().map(|c| c.row).collect();
            let mut c: Vec<usize> = one.iter().map(|c| c.col).collect();
            r.sort();
            c.sort();
            r.dedup();
            c.dedup();
            prop_assert_eq!(r.len(), one.len());
            prop_assert_eq!(c.len(), one.len());
            for k in 1..4 {
                let small = mutual_best(&m, k).unwrap();
                let big = mutual_best(&m, k + 1).unwrap();
                for p in &small {
                    prop_assert!(big.iter().any(|q| q.row == p.row && q.col == p.col));
                }
                prop_assert!(small.windows(2).all(|w| w[0].cost <= w[1].cost));
            }
        }
    }
}
