//! Fundamental matrix from two point correspondences (plus the three-point
//! shortcut and the point-free line-RANSAC variant).

use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    mutual_best, pair_cost, pencil_lines, score_all, CandidatePair, PencilLine, PencilSpec, DEFAULT_ANGLES,
    DEFAULT_MIN_CHORD,
};
use crate::error::{Error, Result};
use crate::geometry::{
    angle_between, area_between_lines, clip_to_rect, fundamental_from_line_homography, intersect, line_homography_dlt,
    line_through, sample_pencil, FundamentalMatrix, HomLine, HomPoint, ImageBounds, ProjectiveMap, TOL_DLT_NOISY,
};
use crate::imaging::{line_profile, GrayImage, IntensityProfile, DEFAULT_MIN_TEXTURE, DEFAULT_PROFILE_SAMPLES};
use crate::stereo::{cost_samples_bounded, StereoParams};

/// Generating lines closer than this (degrees) give unstable epipoles.
pub const MIN_GENERATOR_ANGLE_DEG: f64 = 2.0;
/// Epipoles this close (pixels) to a generating point are rejected.
pub const MIN_EPIPOLE_DISTANCE_PX: f64 = 1.0;
/// Longest/shortest chord ratio beyond which a validation pair is skipped.
pub const MAX_CHORD_RATIO: f64 = 1.25;
/// Share of image-1 validation lines that must survive the transfer checks.
pub const MIN_VALIDATED_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PencilConfig {
    /// Lines per pencil, spread uniformly over [0, pi).
    pub angles: usize,
    /// Samples per intensity profile.
    pub samples: usize,
    /// Shortest clipped chord kept, pixels.
    pub min_chord: f64,
    /// Lowest profile standard deviation kept.
    pub min_texture: f64,
}

impl Default for PencilConfig {
    fn default() -> Self {
        PencilConfig {
            angles: DEFAULT_ANGLES,
            samples: DEFAULT_PROFILE_SAMPLES,
            min_chord: DEFAULT_MIN_CHORD,
            min_texture: DEFAULT_MIN_TEXTURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    /// Pencil centers per image side (grid x grid centers per image).
    pub grid: usize,
    /// Lines per grid pencil.
    pub angles: usize,
    pub trials: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            grid: 2,
            angles: 45,
            trials: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub stereo: StereoParams,
    pub pencil: PencilConfig,
    /// Candidate pairs must be within each other's k best.
    pub k_mutual: usize,
    pub max_hypotheses: usize,
    /// Lines used by the forward-backward screen (3 defining + uniform samples).
    pub screen_lines: usize,
    /// Pencil size for the third-line search and for full validation.
    pub validation_lines: usize,
    /// Share of screened hypotheses that get full validation.
    pub top_fraction: f64,
    /// Inlier threshold for line-RANSAC, px². Defaults to 3 x image width.
    pub inlier_area: Option<f64>,
    pub seed: u64,
    pub ransac: RansacConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            stereo: StereoParams::default(),
            pencil: PencilConfig::default(),
            k_mutual: 2,
            max_hypotheses: 2000,
            screen_lines: 9,
            validation_lines: 100,
            top_fraction: 0.05,
            inlier_area: None,
            seed: 0,
            ransac: RansacConfig::default(),
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        self.stereo.validate()?;
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::DomainError(format!("top_fraction must be in (0, 1], got {}", self.top_fraction)));
        }
        let counts = [
            ("k_mutual", self.k_mutual),
            ("max_hypotheses", self.max_hypotheses),
            ("screen_lines", self.screen_lines),
            ("validation_lines", self.validation_lines),
            ("pencil.angles", self.pencil.angles),
            ("ransac.grid", self.ransac.grid),
            ("ransac.angles", self.ransac.angles),
            ("ransac.trials", self.ransac.trials),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::DomainError(format!("{name} must be at least 1")));
            }
        }
        if self.pencil.samples < 2 {
            return Err(Error::DomainError("pencil.samples must be at least 2".into()));
        }
        if let Some(a) = self.inlier_area {
            if !(a > 0.0) {
                return Err(Error::DomainError("inlier_area must be positive".into()));
            }
        }
        Ok(())
    }

    fn spec(&self, center: HomPoint, angles: usize) -> PencilSpec {
        let mut s = PencilSpec::uniform(center, angles).with_filters(self.pencil.min_chord, self.pencil.min_texture);
        s.samples = self.pencil.samples;
        s
    }

    fn profile(&self, img: &GrayImage, l: &HomLine) -> Option<IntensityProfile> {
        line_profile(img, l, self.pencil.samples, self.pencil.min_chord, self.pencil.min_texture).map(|(_, p)| p)
    }
}

/// Number of random subsets needed to draw an all-inlier one with the given
/// confidence.
pub fn ransac_trials(inlier_ratio: f64, confidence: f64, sample_size: usize) -> Result<usize> {
    if !(inlier_ratio > 0.0 && inlier_ratio <= 1.0) {
        return Err(Error::DomainError(format!("inlier ratio {inlier_ratio} outside (0, 1]")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::DomainError(format!("confidence {confidence} outside (0, 1)")));
    }
    if sample_size == 0 {
        return Err(Error::DomainError("sample size must be positive".into()));
    }
    if inlier_ratio == 1.0 {
        return Ok(1);
    }
    let good = inlier_ratio.powi(sample_size as i32);
    let n = ((1.0 - confidence).ln() / (-good).ln_1p()).ceil();
    if !n.is_finite() || n > usize::MAX as f64 {
        return Err(Error::DomainError("trial count overflows".into()));
    }
    Ok(n as usize)
}

/// Line through `e` halfway (in angle) between `la` and `lb`, each taken in
/// the direction pointing from `e` toward the middle of its visible chord.
///
/// Works homogeneously: summing the oriented unit-normal forms keeps the
/// result in the pencil of `e`, and for an ideal `e` yields the midline.
pub fn bisector_line(e: &HomPoint, la: &HomLine, lb: &HomLine, b: ImageBounds) -> Result<HomLine> {
    if la.same_up_to_scale(lb, 1e-12) {
        return Err(Error::degenerate("bisector of coincident lines"));
    }
    let ev = e.coords();
    let oriented = |l: &HomLine| -> Result<nalgebra::Vector3<f64>> {
        let (p, q) = clip_to_rect(l, b).ok_or_else(|| Error::degenerate("generating line misses the image"))?;
        let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        let u = l.unit_normal_form().coords();
        // direction (b, -a) against the vector e -> m, scaled by w
        let (vx, vy) = (m[0] * ev.z - ev.x, m[1] * ev.z - ev.y);
        Ok(if u.y * vx - u.x * vy < 0.0 { -u } else { u })
    };
    let sum = oriented(la)? + oriented(lb)?;
    HomLine::from_vector(sum).map_err(|_| Error::degenerate("generating lines point in opposite directions"))
}

/// Member of the pencil through `e` whose profile best matches `target`.
pub fn best_line_through_epipole(
    e: &HomPoint,
    target: &IntensityProfile,
    img: &GrayImage,
    cfg: &EstimateConfig,
) -> Result<(HomLine, f64)> {
    search_pencil(e, target, img, cfg, None)
}

/// Pencil search visiting members closest to `hint` first. The result only
/// depends on the order through ties; a good hint just lets the bounded DP
/// give up sooner on the rest.
fn search_pencil(
    e: &HomPoint,
    target: &IntensityProfile,
    img: &GrayImage,
    cfg: &EstimateConfig,
    hint: Option<&HomLine>,
) -> Result<(HomLine, f64)> {
    let mut pencil = sample_pencil(e, img.bounds(), cfg.validation_lines);
    if let Some(h) = hint {
        pencil.sort_by(|a, b| angle_between(a, h).total_cmp(&angle_between(b, h)));
    }
    let mut best: Option<(HomLine, f64)> = None;
    let mut bound = f64::INFINITY;
    let rev: Vec<f64> = target.samples.iter().rev().copied().collect();
    for l in pencil {
        let Some(prof) = cfg.profile(img, &l) else { continue };
        if prof.samples.len() != target.samples.len() {
            return Err(Error::LengthMismatch(prof.samples.len(), target.samples.len()));
        }
        if best.is_none() {
            best = Some((l, f64::INFINITY));
        }
        for a in [&target.samples, &rev] {
            if let Some(c) = cost_samples_bounded(a, &prof.samples, &cfg.stereo, bound)? {
                if c < bound {
                    bound = c;
                    best = Some((l, c));
                }
            }
        }
    }
    best.ok_or(Error::EmptyPencil)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisSource {
    Candidates,
    Injected,
    Ransac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub index: usize,
    pub source: HypothesisSource,
    pub pair_p: CandidatePair,
    pub pair_q: CandidatePair,
    pub e1: HomPoint,
    pub e2: HomPoint,
    /// Third epipolar line pair (image 1, image 2).
    pub third: (HomLine, HomLine),
    /// Third pair of the mirrored construction used for `g`.
    pub mirrored_third: Option<(HomLine, HomLine)>,
    pub h: ProjectiveMap,
    pub g: Option<ProjectiveMap>,
    pub screen_score: Option<f64>,
    pub full_score: Option<f64>,
    pub inliers: Option<usize>,
}

impl Hypothesis {
    pub fn cost_sum(&self) -> f64 {
        self.pair_p.cost + self.pair_q.cost
    }

    /// The three image-1 lines that define `h`.
    pub fn defining_lines(&self) -> [HomLine; 3] {
        [self.pair_p.l1, self.pair_q.l1, self.third.0]
    }

    pub fn fundamental(&self) -> Result<FundamentalMatrix> {
        fundamental_from_line_homography(&self.h, &self.e1, &self.e2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub candidates_p: usize,
    pub candidates_q: usize,
    pub hypotheses: usize,
    pub rejected: usize,
    pub screened: usize,
    pub validated: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub candidates: Duration,
    pub hypotheses: Duration,
    pub validation: Duration,
}

/// Serialized without timings so that repeated runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    #[serde(rename = "F")]
    pub f: FundamentalMatrix,
    pub hypothesis: Hypothesis,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub timings: Timings,
}

impl EstimateResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Mean area between each screening line and its round trip `G·H·l`.
pub fn screen_hypothesis(h: &Hypothesis, b: ImageBounds, cfg: &EstimateConfig) -> f64 {
    let Some(g) = &h.g else { return f64::INFINITY };
    let defining = h.defining_lines();
    let extra = cfg.screen_lines.saturating_sub(defining.len());
    let lines: Vec<HomLine> = defining
        .iter()
        .take(cfg.screen_lines)
        .copied()
        .chain(sample_pencil(&h.e1, b, extra))
        .collect();
    let mut sum = 0.0;
    for l in &lines {
        let Some(back) = h.h.apply_line(l).and_then(|m| g.apply_line(&m)) else {
            return f64::INFINITY;
        };
        let a = area_between_lines(l, &back, b);
        if !a.is_finite() {
            return f64::INFINITY;
        }
        sum += a;
    }
    sum / lines.len() as f64
}

/// Mean normalized stereo cost between image-1 pencil lines through `e1`
/// and their `H` transfers.
///
/// Lines filtered out in image 1 are skipped, and so are transfers that miss
/// image 2 or whose chord differs in length by more than
/// [`MAX_CHORD_RATIO`]: both profiles have the same sample count, so such
/// pairs are compared at different scales and say little about `H`. If
/// fewer than [`MIN_VALIDATED_FRACTION`] of the image-1 lines remain the
/// score is infinite.
pub fn full_validate(h: &Hypothesis, img1: &GrayImage, img2: &GrayImage, cfg: &EstimateConfig) -> f64 {
    let lines = sample_pencil(&h.e1, img1.bounds(), cfg.validation_lines);
    let costs: Vec<Option<Option<f64>>> = lines
        .par_iter()
        .map(|l| {
            let (s1, p1) = line_profile(img1, l, cfg.pencil.samples, cfg.pencil.min_chord, cfg.pencil.min_texture)?;
            let Some((s2, p2)) = h
                .h
                .apply_line(l)
                .and_then(|t| line_profile(img2, &t, cfg.pencil.samples, 2.0, 0.0))
            else {
                return Some(None);
            };
            let ratio = s1.length().max(s2.length()) / s1.length().min(s2.length());
            if ratio > MAX_CHORD_RATIO {
                return Some(None);
            }
            Some(pair_cost(&p1, &p2, &cfg.stereo).ok().map(|c| c.0))
        })
        .collect();
    let survivors = costs.iter().flatten().count();
    let kept: Vec<f64> = costs.into_iter().flatten().flatten().collect();
    if kept.is_empty() || (kept.len() as f64) < MIN_VALIDATED_FRACTION * survivors as f64 {
        return f64::INFINITY;
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

fn pixel_distance(e: &HomPoint, p: &HomPoint) -> f64 {
    match (e.to_pixel(), p.to_pixel()) {
        (Some(a), Some(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
        _ => f64::INFINITY,
    }
}

/// Epipoles of two candidate pairs, after the degeneracy guards.
fn epipoles(a: &CandidatePair, b: &CandidatePair, gen1: [&HomPoint; 2], gen2: [&HomPoint; 2]) -> Result<(HomPoint, HomPoint)> {
    let min_angle = MIN_GENERATOR_ANGLE_DEG.to_radians();
    if angle_between(&a.l1, &b.l1) < min_angle || angle_between(&a.l2, &b.l2) < min_angle {
        return Err(Error::degenerate("generating lines are nearly parallel"));
    }
    let e1 = intersect(&a.l1, &b.l1)?;
    let e2 = intersect(&a.l2, &b.l2)?;
    if gen1.iter().any(|p| pixel_distance(&e1, p) < MIN_EPIPOLE_DISTANCE_PX)
        || gen2.iter().any(|p| pixel_distance(&e2, p) < MIN_EPIPOLE_DISTANCE_PX)
    {
        return Err(Error::degenerate("epipole coincides with a generating point"));
    }
    Ok((e1, e2))
}

/// Third line pair by the bisector-and-search construction: bisect in the
/// `from` image, then search the pencil of `e_to` in the other image. `la`,
/// `lb` are in `from`, `ma`, `mb` their partners in `to`.
#[allow(clippy::too_many_arguments)]
fn searched_third(
    e_from: &HomPoint,
    e_to: &HomPoint,
    (la, lb): (&HomLine, &HomLine),
    (ma, mb): (&HomLine, &HomLine),
    from: &GrayImage,
    to: &GrayImage,
    cfg: &EstimateConfig,
) -> Result<(HomLine, HomLine)> {
    let t_from = bisector_line(e_from, la, lb, from.bounds())?;
    let prof = cfg.profile(from, &t_from).ok_or(Error::EmptyPencil)?;
    let hint = bisector_line(e_to, ma, mb, to.bounds()).ok();
    let (t_to, _) = search_pencil(e_to, &prof, to, cfg, hint.as_ref())?;
    Ok((t_from, t_to))
}

#[allow(clippy::too_many_arguments)]
pub fn two_point_hypothesis(
    index: usize,
    a: &CandidatePair,
    b: &CandidatePair,
    p: &(HomPoint, HomPoint),
    q: &(HomPoint, HomPoint),
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &EstimateConfig,
) -> Result<Hypothesis> {
    let (e1, e2) = epipoles(a, b, [&p.0, &q.0], [&p.1, &q.1])?;
    let third = searched_third(&e1, &e2, (&a.l1, &b.l1), (&a.l2, &b.l2), img1, img2, cfg)?;
    let h = line_homography_dlt(&[(a.l1, a.l2), (b.l1, b.l2), third], TOL_DLT_NOISY)?;
    let (m2, m1) = searched_third(&e2, &e1, (&a.l2, &b.l2), (&a.l1, &b.l1), img2, img1, cfg)?;
    let g = line_homography_dlt(&[(a.l2, a.l1), (b.l2, b.l1), (m2, m1)], TOL_DLT_NOISY)?;
    let mut hyp = Hypothesis {
        index,
        source: HypothesisSource::Candidates,
        pair_p: *a,
        pair_q: *b,
        e1,
        e2,
        third,
        mirrored_third: Some((m1, m2)),
        h,
        g: Some(g),
        screen_score: None,
        full_score: None,
        inliers: None,
    };
    hyp.screen_score = finite(screen_hypothesis(&hyp, img1.bounds(), cfg));
    Ok(hyp)
}

/// Hypothesis defined directly by three corresponding line pairs, e.g. true
/// epipolar lines for oracle checks. `g` is fitted on the same pairs.
pub fn hypothesis_from_lines(
    lines: [(HomLine, HomLine); 3],
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &EstimateConfig,
) -> Result<Hypothesis> {
    let e1 = intersect(&lines[0].0, &lines[1].0)?;
    let e2 = intersect(&lines[0].1, &lines[1].1)?;
    let h = line_homography_dlt(&lines, TOL_DLT_NOISY)?;
    let mirrored = [(lines[0].1, lines[0].0), (lines[1].1, lines[1].0), (lines[2].1, lines[2].0)];
    let g = line_homography_dlt(&mirrored, TOL_DLT_NOISY)?;
    let pair = |k: usize| -> CandidatePair {
        let (l1, l2) = lines[k];
        let cost = match (cfg.profile(img1, &l1), cfg.profile(img2, &l2)) {
            (Some(a), Some(b)) => pair_cost(&a, &b, &cfg.stereo).map(|c| c.0).unwrap_or(cfg.stereo.r),
            _ => cfg.stereo.r,
        };
        CandidatePair {
            l1,
            l2,
            cost,
            rank1: 0,
            rank2: 0,
            row: 0,
            col: 0,
        }
    };
    let mut hyp = Hypothesis {
        index: 0,
        source: HypothesisSource::Injected,
        pair_p: pair(0),
        pair_q: pair(1),
        e1,
        e2,
        third: lines[2],
        mirrored_third: Some(lines[2]),
        h,
        g: Some(g),
        screen_score: None,
        full_score: None,
        inliers: None,
    };
    hyp.screen_score = finite(screen_hypothesis(&hyp, img1.bounds(), cfg));
    Ok(hyp)
}

/// Mutual-best line pairs through a point correspondence.
pub fn candidate_pairs(
    img1: &GrayImage,
    img2: &GrayImage,
    p: &(HomPoint, HomPoint),
    cfg: &EstimateConfig,
) -> Result<Vec<CandidatePair>> {
    let pencil = |img: &GrayImage, c: HomPoint| -> Result<Vec<PencilLine>> {
        match pencil_lines(&cfg.spec(c, cfg.pencil.angles), img) {
            Err(Error::EmptyPencil) => Ok(Vec::new()),
            other => other,
        }
    };
    let a = pencil(img1, p.0)?;
    let b = pencil(img2, p.1)?;
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    mutual_best(&score_all(&a, &b, &cfg.stereo)?, cfg.k_mutual)
}

/// Cross combinations of the two candidate lists in ascending cost-sum
/// order, truncated to `cap`.
fn ordered_combinations(cp: &[CandidatePair], cq: &[CandidatePair], cap: usize) -> Vec<(usize, usize)> {
    let mut combos: Vec<(f64, usize, usize)> = Vec::with_capacity(cp.len() * cq.len());
    for (i, a) in cp.iter().enumerate() {
        for (j, b) in cq.iter().enumerate() {
            combos.push((a.cost + b.cost, i, j));
        }
    }
    combos.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    combos.truncate(cap);
    combos.into_iter().map(|c| (c.1, c.2)).collect()
}

/// Screened pool -> top fraction -> full validation -> deterministic argmin.
fn select(
    mut pool: Vec<Hypothesis>,
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &EstimateConfig,
    diag: &mut Diagnostics,
) -> Result<Hypothesis> {
    pool.retain(|h| h.screen_score.is_some());
    diag.screened = pool.len();
    if pool.is_empty() {
        return Err(Error::NoValidHypothesis);
    }
    pool.sort_by(|a, b| {
        let (sa, sb) = (a.screen_score.unwrap_or(f64::INFINITY), b.screen_score.unwrap_or(f64::INFINITY));
        sa.total_cmp(&sb)
            .then(a.cost_sum().total_cmp(&b.cost_sum()))
            .then(a.index.cmp(&b.index))
    });
    let keep = ((pool.len() as f64 * cfg.top_fraction).ceil() as usize).clamp(1, pool.len());
    pool.truncate(keep);
    diag.validated = pool.len();
    let scores: Vec<f64> = pool.par_iter().map(|h| full_validate(h, img1, img2, cfg)).collect();
    for (h, s) in pool.iter_mut().zip(&scores) {
        h.full_score = finite(*s);
    }
    pool.into_iter()
        .filter(|h| h.full_score.is_some())
        .min_by(|a, b| {
            a.full_score
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.full_score.unwrap_or(f64::INFINITY))
                .then(a.index.cmp(&b.index))
        })
        .ok_or(Error::NoValidHypothesis)
}

fn finish(best: Hypothesis, diagnostics: Diagnostics, timings: Timings) -> Result<EstimateResult> {
    Ok(EstimateResult {
        f: best.fundamental()?,
        hypothesis: best,
        diagnostics,
        timings,
    })
}

fn check_inputs(img1: &GrayImage, img2: &GrayImage, pts: &[&(HomPoint, HomPoint)], cfg: &EstimateConfig) -> Result<()> {
    cfg.validate()?;
    for (a, b) in pts {
        for (pt, img) in [(a, img1), (b, img2)] {
            let Some([x, y]) = pt.to_pixel() else {
                return Err(Error::degenerate("input point at infinity"));
            };
            if !img.bounds().contains(x, y) {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    width: img.width(),
                    height: img.height(),
                });
            }
        }
    }
    Ok(())
}

pub fn two_point_estimate(
    img1: &GrayImage,
    img2: &GrayImage,
    p: (HomPoint, HomPoint),
    q: (HomPoint, HomPoint),
    cfg: &EstimateConfig,
) -> Result<EstimateResult> {
    two_point_estimate_with(img1, img2, p, q, cfg, Vec::new())
}

/// [`two_point_estimate`] with extra hypotheses added to the pool before
/// screening; they are indexed after the enumerated ones.
pub fn two_point_estimate_with(
    img1: &GrayImage,
    img2: &GrayImage,
    p: (HomPoint, HomPoint),
    q: (HomPoint, HomPoint),
    cfg: &EstimateConfig,
    injected: Vec<Hypothesis>,
) -> Result<EstimateResult> {
    check_inputs(img1, img2, &[&p, &q], cfg)?;
    let mut timings = Timings::default();
    let t0 = Instant::now();
    let cp = candidate_pairs(img1, img2, &p, cfg)?;
    let cq = candidate_pairs(img1, img2, &q, cfg)?;
    timings.candidates = t0.elapsed();
    let mut diag = Diagnostics {
        candidates_p: cp.len(),
        candidates_q: cq.len(),
        ..Default::default()
    };
    if cp.is_empty() || cq.is_empty() {
        return Err(Error::NoCandidates);
    }

    let t1 = Instant::now();
    let combos = ordered_combinations(&cp, &cq, cfg.max_hypotheses);
    diag.hypotheses = combos.len();
    let built: Vec<Result<Hypothesis>> = combos
        .par_iter()
        .enumerate()
        .map(|(k, (i, j))| two_point_hypothesis(k, &cp[*i], &cq[*j], &p, &q, img1, img2, cfg))
        .collect();
    let mut pool: Vec<Hypothesis> = built.into_iter().flatten().collect();
    diag.rejected = combos.len() - pool.len();
    let base = combos.len();
    pool.extend(injected.into_iter().enumerate().map(|(k, mut h)| {
        h.index = base + k;
        h.source = HypothesisSource::Injected;
        h
    }));
    timings.hypotheses = t1.elapsed();

    let t2 = Instant::now();
    let best = select(pool, img1, img2, cfg, &mut diag)?;
    timings.validation = t2.elapsed();
    finish(best, diag, timings)
}

/// Two-point pipeline where a third correspondence `r` fixes the third line
/// pair as the joins `r1 e1` / `r2 e2`, skipping the pencil search. Since
/// the mirrored map is then exactly `H^-1`, hypotheses are screened by the
/// stereo cost of that third pair instead.
pub fn three_point_accelerated(
    img1: &GrayImage,
    img2: &GrayImage,
    p: (HomPoint, HomPoint),
    q: (HomPoint, HomPoint),
    r: (HomPoint, HomPoint),
    cfg: &EstimateConfig,
) -> Result<EstimateResult> {
    check_inputs(img1, img2, &[&p, &q, &r], cfg)?;
    let mut timings = Timings::default();
    let t0 = Instant::now();
    let cp = candidate_pairs(img1, img2, &p, cfg)?;
    let cq = candidate_pairs(img1, img2, &q, cfg)?;
    timings.candidates = t0.elapsed();
    let mut diag = Diagnostics {
        candidates_p: cp.len(),
        candidates_q: cq.len(),
        ..Default::default()
    };
    if cp.is_empty() || cq.is_empty() {
        return Err(Error::NoCandidates);
    }

    let t1 = Instant::now();
    let combos = ordered_combinations(&cp, &cq, cfg.max_hypotheses);
    diag.hypotheses = combos.len();
    let built: Vec<Result<Hypothesis>> = combos
        .par_iter()
        .enumerate()
        .map(|(k, (i, j))| three_point_hypothesis(k, &cp[*i], &cq[*j], &p, &q, &r, img1, img2, cfg))
        .collect();
    // nothing built, and the third point is to blame for at least some of it
    let third_point_fault =
        |b: &Result<Hypothesis>| matches!(b, Err(Error::DegenerateInput(m)) if m.contains("third point"));
    if built.iter().all(|b| b.is_err()) && built.iter().any(third_point_fault) {
        return Err(Error::degenerate("third point lies on the generating lines of every hypothesis"));
    }
    let pool: Vec<Hypothesis> = built.into_iter().flatten().collect();
    diag.rejected = combos.len() - pool.len();
    timings.hypotheses = t1.elapsed();

    let t2 = Instant::now();
    let best = select(pool, img1, img2, cfg, &mut diag)?;
    timings.validation = t2.elapsed();
    finish(best, diag, timings)
}

#[allow(clippy::too_many_arguments)]
pub fn three_point_hypothesis(
    index: usize,
    a: &CandidatePair,
    b: &CandidatePair,
    p: &(HomPoint, HomPoint),
    q: &(HomPoint, HomPoint),
    r: &(HomPoint, HomPoint),
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &EstimateConfig,
) -> Result<Hypothesis> {
    let (e1, e2) = epipoles(a, b, [&p.0, &q.0], [&p.1, &q.1])?;
    for (l, pt) in [(&a.l1, &r.0), (&b.l1, &r.0), (&a.l2, &r.1), (&b.l2, &r.1)] {
        if let Some([x, y]) = pt.to_pixel() {
            if l.distance_to_pixel(x, y) < MIN_EPIPOLE_DISTANCE_PX {
                return Err(Error::degenerate("third point lies on a generating line"));
            }
        }
    }
    let third = (line_through(&r.0, &e1)?, line_through(&r.1, &e2)?);
    let h = line_homography_dlt(&[(a.l1, a.l2), (b.l1, b.l2), third], TOL_DLT_NOISY)?;
    let g = h.inverse().ok_or_else(|| Error::degenerate("singular line homography"))?;
    let screen = match (cfg.profile(img1, &third.0), cfg.profile(img2, &third.1)) {
        (Some(x), Some(y)) => pair_cost(&x, &y, &cfg.stereo)?.0,
        _ => f64::INFINITY,
    };
    Ok(Hypothesis {
        index,
        source: HypothesisSource::Candidates,
        pair_p: *a,
        pair_q: *b,
        e1,
        e2,
        third,
        mirrored_third: None,
        h,
        g: Some(g),
        screen_score: finite(screen),
        full_score: None,
        inliers: None,
    })
}

fn grid_lines(img: &GrayImage, cfg: &EstimateConfig) -> Vec<PencilLine> {
    let g = cfg.ransac.grid;
    let (w, h) = (img.bounds().max_x(), img.bounds().max_y());
    let mut out = Vec::new();
    for j in 0..g {
        for i in 0..g {
            let c = HomPoint::from_pixel((i as f64 + 0.5) / g as f64 * w, (j as f64 + 0.5) / g as f64 * h);
            if let Ok(lines) = pencil_lines(&cfg.spec(c, cfg.ransac.angles), img) {
                out.extend(lines);
            }
        }
    }
    out
}

/// Counts candidate pairs `(l, l')` with `l'` close to `H l` in area.
fn count_inliers(h: &ProjectiveMap, cands: &[CandidatePair], b: ImageBounds, thr: f64) -> usize {
    cands
        .iter()
        .filter(|c| h.apply_line(&c.l1).is_some_and(|t| area_between_lines(&c.l2, &t, b) < thr))
        .count()
}

/// Point-free estimation: global candidate pairs from a grid of pencils,
/// weighted sampling of two pairs per trial (weight 1/rank), consensus by
/// line-area inliers.
pub fn line_ransac_estimate(img1: &GrayImage, img2: &GrayImage, cfg: &EstimateConfig) -> Result<EstimateResult> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let t0 = Instant::now();
    let a = grid_lines(img1, cfg);
    let b = grid_lines(img2, cfg);
    let cands = if a.is_empty() || b.is_empty() {
        Vec::new()
    } else {
        mutual_best(&score_all(&a, &b, &cfg.stereo)?, cfg.k_mutual)?
    };
    timings.candidates = t0.elapsed();
    let mut diag = Diagnostics {
        candidates_p: cands.len(),
        candidates_q: cands.len(),
        ..Default::default()
    };
    if cands.len() < 2 {
        return Err(Error::NoCandidates);
    }

    let t1 = Instant::now();
    let weights: Vec<f64> = (1..=cands.len()).map(|r| 1.0 / r as f64).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<(usize, usize)> = (0..cfg.ransac.trials)
        .map(|_| {
            let i = dist.sample(&mut rng);
            let mut j = dist.sample(&mut rng);
            while j == i {
                j = dist.sample(&mut rng);
            }
            (i, j)
        })
        .collect();
    diag.hypotheses = draws.len();
    let thr = cfg.inlier_area.unwrap_or(3.0 * img1.width() as f64);
    let b1 = img1.bounds();
    let b2 = img2.bounds();
    let built: Vec<Result<Hypothesis>> = draws
        .par_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            let (ca, cb) = (&cands[*i], &cands[*j]);
            // the generating "points" are the chord midpoints
            let mid = |l: &HomLine, bb: ImageBounds| {
                clip_to_rect(l, bb)
                    .map(|(p, q)| HomPoint::from_pixel((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0))
                    .ok_or_else(|| Error::degenerate("candidate misses the image"))
            };
            let (e1, e2) = epipoles(ca, cb, [&mid(&ca.l1, b1)?, &mid(&cb.l1, b1)?], [&mid(&ca.l2, b2)?, &mid(&cb.l2, b2)?])?;
            let third = searched_third(&e1, &e2, (&ca.l1, &cb.l1), (&ca.l2, &cb.l2), img1, img2, cfg)?;
            let h = line_homography_dlt(&[(ca.l1, ca.l2), (cb.l1, cb.l2), third], TOL_DLT_NOISY)?;
            let inliers = count_inliers(&h, &cands, b2, thr);
            Ok(Hypothesis {
                index: k,
                source: HypothesisSource::Ransac,
                pair_p: *ca,
                pair_q: *cb,
                e1,
                e2,
                third,
                mirrored_third: None,
                h,
                g: None,
                screen_score: None,
                full_score: None,
                inliers: Some(inliers),
            })
        })
        .collect();
    let pool: Vec<Hypothesis> = built.into_iter().flatten().collect();
    diag.rejected = draws.len() - pool.len();
    diag.screened = pool.len();
    timings.hypotheses = t1.elapsed();
    let best = pool
        .into_iter()
        .max_by(|x, y| x.inliers.cmp(&y.inliers).then(y.index.cmp(&x.index)))
        .ok_or(Error::NoValidHypothesis)?;
    finish(best, diag, timings)
}
