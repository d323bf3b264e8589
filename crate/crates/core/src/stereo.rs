//! Line-to-line stereo matching similarity.
//!
//! Two intensity profiles are aligned by an integer disparity per sample of
//! the first profile. The cost of an alignment is a truncated squared
//! intensity difference per sample plus a truncated quadratic penalty on
//! disparity jumps; the similarity of two lines is the minimal cost, found by
//! dynamic programming over `(sample, disparity)` states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::IntensityProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    /// Truncation of the squared intensity difference.
    pub r: f64,
    /// Weight of the squared disparity jump.
    pub lambda: f64,
    /// Truncation of the smoothness penalty.
    pub alpha: f64,
    /// Largest admissible `|d_i|`, in samples.
    pub d_max: usize,
    /// Require non-decreasing disparities (order constraint).
    pub monotonic: bool,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams {
            r: 2500.0,
            lambda: 2.0,
            alpha: 3.0,
            d_max: 32,
            monotonic: true,
        }
    }
}

impl StereoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.lambda >= 0.0) || !(self.alpha >= 0.0) {
            return Err(Error::DomainError(format!(
                "stereo parameters need r > 0, lambda >= 0, alpha >= 0; got {self:?}"
            )));
        }
        if self.d_max > u16::MAX as usize / 2 - 1 {
            return Err(Error::DomainError(format!("d_max {} is too large", self.d_max)));
        }
        Ok(())
    }

    fn states(&self) -> usize {
        2 * self.d_max + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisparityVector(pub Vec<i32>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCost {
    pub total: f64,
    pub normalized: f64,
    pub disparities: DisparityVector,
}

#[inline]
pub fn data_term(i1: f64, i2: f64, p: &StereoParams) -> f64 {
    let d = i1 - i2;
    (d * d).min(p.r)
}

#[inline]
pub fn smooth_term(di: i32, dprev: i32, p: &StereoParams) -> f64 {
    let j = (di - dprev) as f64;
    (p.lambda * j * j).min(p.alpha)
}

/// Profile-2 lookup for sample `i` at disparity `d`, constant-extended past
/// either end.
#[inline]
fn clamped(n: usize, i: usize, d: i32) -> usize {
    (i as i64 + d as i64).clamp(0, n as i64 - 1) as usize
}

/// Cost of a given disparity assignment.
pub fn evaluate(a: &[f64], b: &[f64], d: &[i32], p: &StereoParams) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        total += data_term(a[i], b[clamped(n, i, d[i])], p);
    }
    for i in 1..n {
        total += smooth_term(d[i], d[i - 1], p);
    }
    total
}

/// Resamples `b` through a disparity vector: `out[i] = b[i + d_i]` (clamped).
pub fn warp(b: &[f64], d: &DisparityVector) -> Vec<f64> {
    let n = b.len();
    d.0.iter().enumerate().map(|(i, di)| b[clamped(n, i, *di)]).collect()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::DomainError(format!("profiles need at least 2 samples, got {}", a.len())));
    }
    Ok(())
}

/// Jump costs below the truncation, plus the first truncated jump length.
struct Transition {
    explicit: Vec<f64>,
    first_truncated: usize,
    alpha: f64,
}

impl Transition {
    fn new(p: &StereoParams) -> Self {
        let states = p.states();
        if p.lambda == 0.0 {
            return Transition {
                explicit: Vec::new(),
                first_truncated: 1,
                alpha: 0.0,
            };
        }
        let mut explicit = Vec::new();
        let mut j = 1usize;
        while j < states && (p.lambda * (j * j) as f64) < p.alpha {
            explicit.push(p.lambda * (j * j) as f64);
            j += 1;
        }
        Transition {
            first_truncated: explicit.len() + 1,
            explicit,
            alpha: p.alpha,
        }
    }
}

/// Scratch rows reused across DP steps.
struct Rows {
    prev: Vec<f64>,
    cur: Vec<f64>,
    prefix: Vec<f64>,
    prefix_arg: Vec<u16>,
    suffix: Vec<f64>,
    suffix_arg: Vec<u16>,
}

impl Rows {
    fn new(states: usize) -> Self {
        Rows {
            prev: vec![0.0; states],
            cur: vec![0.0; states],
            prefix: vec![0.0; states],
            prefix_arg: vec![0; states],
            suffix: vec![0.0; states],
            suffix_arg: vec![0; states],
        }
    }
}

/// Runs the DP; `back` (if given) receives the argmin predecessor of every
/// state. Returns `None` as soon as every partial cost exceeds `bound`.
fn run_dp(
    a: &[f64],
    b: &[f64],
    p: &StereoParams,
    bound: f64,
    mut back: Option<&mut Vec<u16>>,
) -> Option<(f64, usize)> {
    let n = a.len();
    let dmax = p.d_max;
    let states = p.states();
    let tr = Transition::new(p);
    let kt = tr.first_truncated;

    // b constant-extended by d_max on both sides: b index for (i, k) is i + k
    let mut padded = Vec::with_capacity(n + 2 * dmax);
    for t in 0..n + 2 * dmax {
        padded.push(b[(t as i64 - dmax as i64).clamp(0, n as i64 - 1) as usize]);
    }
    let r = p.r;

    let mut rows = Rows::new(states);
    for k in 0..states {
        let diff = a[0] - padded[k];
        rows.prev[k] = (diff * diff).min(r);
    }
    if let Some(back) = back.as_deref_mut() {
        back.clear();
        back.resize(n * states, 0);
    }

    for i in 1..n {
        let Rows {
            prev,
            cur,
            prefix,
            prefix_arg,
            suffix,
            suffix_arg,
        } = &mut rows;

        let mut best = f64::INFINITY;
        let mut arg = 0u16;
        for k in 0..states {
            if prev[k] < best {
                best = prev[k];
                arg = k as u16;
            }
            prefix[k] = best;
            prefix_arg[k] = arg;
        }
        if !p.monotonic {
            let mut best = f64::INFINITY;
            let mut arg = 0u16;
            for k in (0..states).rev() {
                if prev[k] < best {
                    best = prev[k];
                    arg = k as u16;
                }
                suffix[k] = best;
                suffix_arg[k] = arg;
            }
        }

        let ai = a[i];
        let brow = &padded[i..i + states];
        let mut row_min = f64::INFINITY;
        for k in 0..states {
            let mut m = prev[k];
            let mut arg = k as u16;
            for (jm1, cost) in tr.explicit.iter().enumerate() {
                let j = jm1 + 1;
                if k >= j {
                    let c = prev[k - j] + cost;
                    if c < m {
                        m = c;
                        arg = (k - j) as u16;
                    }
                }
                if !p.monotonic && k + j < states {
                    let c = prev[k + j] + cost;
                    if c < m {
                        m = c;
                        arg = (k + j) as u16;
                    }
                }
            }
            if k >= kt {
                let c = prefix[k - kt] + tr.alpha;
                if c < m {
                    m = c;
                    arg = prefix_arg[k - kt];
                }
            }
            if !p.monotonic && k + kt < states {
                let c = suffix[k + kt] + tr.alpha;
                if c < m {
                    m = c;
                    arg = suffix_arg[k + kt];
                }
            }
            let diff = ai - brow[k];
            let v = m + (diff * diff).min(r);
            cur[k] = v;
            if v < row_min {
                row_min = v;
            }
            if let Some(back) = back.as_deref_mut() {
                back[i * states + k] = arg;
            }
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut rows.prev, &mut rows.cur);
    }

    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, v) in rows.prev.iter().enumerate() {
        if *v < best {
            best = *v;
            arg = k;
        }
    }
    (best <= bound).then_some((best, arg))
}

#[inline(always)]
fn lesser(a: f64, b: f64) -> f64 {
    if b < a {
        b
    } else {
        a
    }
}

/// Cost-only DP for the monotonic case: no argmins, and each step is a few
/// whole-row passes that the compiler can vectorize.
fn run_cost_monotonic(a: &[f64], b: &[f64], p: &StereoParams, bound: f64) -> Option<f64> {
    let n = a.len();
    let dmax = p.d_max;
    let states = p.states();
    let tr = Transition::new(p);
    let kt = tr.first_truncated.min(states);
    let padded: Vec<f64> = (0..n + 2 * dmax)
        .map(|t| b[(t as i64 - dmax as i64).clamp(0, n as i64 - 1) as usize])
        .collect();
    let r = p.r;
    let mut prev: Vec<f64> = (0..states).map(|k| ((a[0] - padded[k]) * (a[0] - padded[k])).min(r)).collect();
    let mut cur = vec![0.0; states];
    let mut prefix = vec![0.0; states];
    for i in 1..n {
        let mut run = f64::INFINITY;
        for (pk, v) in prefix.iter_mut().zip(&prev) {
            run = lesser(run, *v);
            *pk = run;
        }
        cur.copy_from_slice(&prev);
        for (jm1, cost) in tr.explicit.iter().enumerate() {
            let j = jm1 + 1;
            for (c, v) in cur[j..].iter_mut().zip(&prev[..states - j]) {
                *c = lesser(*c, v + cost);
            }
        }
        for (c, v) in cur[kt..].iter_mut().zip(&prefix[..states - kt]) {
            *c = lesser(*c, v + tr.alpha);
        }
        let ai = a[i];
        for (c, bk) in cur.iter_mut().zip(&padded[i..i + states]) {
            let diff = ai - bk;
            *c += lesser(diff * diff, r);
        }
        if bound < f64::INFINITY {
            // four independent accumulators keep the reduction off the
            // critical path
            let mut acc = [f64::INFINITY; 4];
            let chunks = cur.chunks_exact(4);
            let tail = chunks.remainder().iter().copied().fold(f64::INFINITY, lesser);
            for c in chunks {
                for l in 0..4 {
                    acc[l] = lesser(acc[l], c[l]);
                }
            }
            if lesser(lesser(acc[0], acc[1]), lesser(lesser(acc[2], acc[3]), tail)) > bound {
                return None;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let best = prev.iter().copied().fold(f64::INFINITY, lesser);
    (best <= bound).then_some(best)
}

fn run_cost(a: &[f64], b: &[f64], p: &StereoParams, bound: f64) -> Option<f64> {
    if p.monotonic {
        run_cost_monotonic(a, b, p, bound)
    } else {
        run_dp(a, b, p, bound, None).map(|(c, _)| c)
    }
}

/// Optimal alignment of two sample sequences of equal length.
pub fn match_samples(a: &[f64], b: &[f64], p: &StereoParams) -> Result<MatchCost> {
    check_lengths(a, b)?;
    p.validate()?;
    let n = a.len();
    let states = p.states();
    let mut back = Vec::new();
    let (total, mut k) = run_dp(a, b, p, f64::INFINITY, Some(&mut back)).expect("unbounded DP always finishes");
    let mut d = vec![0i32; n];
    for i in (0..n).rev() {
        d[i] = k as i32 - p.d_max as i32;
        if i > 0 {
            k = back[i * states + k] as usize;
        }
    }
    Ok(MatchCost {
        total,
        normalized: total / n as f64,
        disparities: DisparityVector(d),
    })
}

/// Length-normalized optimal cost, without backtracking.
pub fn cost_samples(a: &[f64], b: &[f64], p: &StereoParams) -> Result<f64> {
    check_lengths(a, b)?;
    p.validate()?;
    let total = run_cost(a, b, p, f64::INFINITY).expect("unbounded DP always finishes");
    Ok(total / a.len() as f64)
}

/// Like [`cost_samples`] but gives up (returning `None`) once the normalized
/// cost is certain to exceed `bound`. Results below the bound are exact.
pub fn cost_samples_bounded(a: &[f64], b: &[f64], p: &StereoParams, bound: f64) -> Result<Option<f64>> {
    check_lengths(a, b)?;
    p.validate()?;
    let n = a.len() as f64;
    Ok(run_cost(a, b, p, bound * n).map(|total| total / n))
}

pub fn line_match(p1: &IntensityProfile, p2: &IntensityProfile, p: &StereoParams) -> Result<MatchCost> {
    match_samples(&p1.samples, &p2.samples, p)
}

pub fn line_match_cost_only(p1: &IntensityProfile, p2: &IntensityProfile, p: &StereoParams) -> Result<f64> {
    cost_samples(&p1.samples, &p2.samples, p)
}

/// Straightforward O(n·D²) dynamic program; kept as the correctness baseline
/// for the amortized transition above.
pub fn line_match_reference(a: &[f64], b: &[f64], p: &StereoParams) -> Result<MatchCost> {
    check_lengths(a, b)?;
    p.validate()?;
    let n = a.len();
    let dmax = p.d_max as i32;
    let states = p.states();
    let mut cost = vec![vec![0.0; states]; n];
    let mut back = vec![vec![0usize; states]; n];
    for k in 0..states {
        cost[0][k] = data_term(a[0], b[clamped(n, 0, k as i32 - dmax)], p);
    }
    for i in 1..n {
        for k in 0..states {
            let d = k as i32 - dmax;
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for kp in 0..states {
                if p.monotonic && kp > k {
                    continue;
                }
                let c = cost[i - 1][kp] + smooth_term(d, kp as i32 - dmax, p);
                if c < best {
                    best = c;
                    arg = kp;
                }
            }
            cost[i][k] = best + data_term(a[i], b[clamped(n, i, d)], p);
            back[i][k] = arg;
        }
    }
    let (mut k, total) = cost[n - 1]
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if *v < acc.1 { (k, *v) } else { acc });
    let mut d = vec![0; n];
    for i in (0..n).rev() {
        d[i] = k as i32 - dmax;
        k = back[i][k];
    }
    Ok(MatchCost {
        total,
        normalized: total / n as f64,
        disparities: DisparityVector(d),
    })
}
