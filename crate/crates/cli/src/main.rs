mod config;
mod draw;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use epiline::baselines::{
    load_vgg_dataset, make_synthetic_scene, parse_camera_file, run_protocol, truth_f_from_cameras, CameraMatrix, Method,
    ProtocolConfig, SceneParams,
};
use epiline::estimator::{line_ransac_estimate, three_point_accelerated, two_point_estimate, EstimateResult};
use epiline::geometry::{clip_to_rect, line_through, symmetric_epipolar_distance, FundamentalMatrix, HomLine, HomPoint};
use epiline::imaging::{line_profile, GrayImage};
use epiline::stereo::{line_match, warp};

use config::CliConfig;

/// Exit 2 for bad input, 3 when estimation runs but finds nothing.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Estimation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation failed: {m}"),
        }
    }
}

impl From<epiline::Error> for CliError {
    fn from(e: epiline::Error) -> Self {
        use epiline::Error as E;
        match e {
            E::NoValidHypothesis | E::NoCandidates | E::EmptyPencil => CliError::Estimation(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "epiline", version, about = "Fundamental matrix from two point matches via epipolar line stereo")]
struct Cli {
    /// Worker threads (default: $EPILINE_THREADS, else one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate F for one image pair and write the result as JSON.
    Estimate(EstimateArgs),
    /// Run the repeated-draw evaluation over a data set.
    Eval(EvalArgs),
    /// Write a synthetic textured stereo pair with ground truth.
    Synth(SynthArgs),
    /// Match two lines with the stereo DP and print the cost.
    MatchLines(MatchArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; see the key list below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set estimate.k_mutual=3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<CliConfig, CliError> {
        CliConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Rows "x1 y1 x2 y2": two of them, or three with --three-point.
    #[arg(long, required_unless_present = "ransac")]
    points: Option<PathBuf>,
    /// Use the third correspondence to fix the third line pair.
    #[arg(long)]
    three_point: bool,
    /// Point-free line RANSAC; --points is not needed.
    #[arg(long, conflicts_with_all = ["points", "three_point"])]
    ransac: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
    /// Directory for PNG overlays of the chosen epipolar lines.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Ground-truth camera files (left, right) for comparison and overlays.
    #[arg(long, num_args = 2, value_names = ["LEFT_P", "RIGHT_P"])]
    truth: Vec<PathBuf>,
    /// Held-out matches "x1 y1 x2 y2" for the symmetric epipolar distance.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Manifest file, a directory holding manifest.json, or a house-layout directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "two-point,7pt,8pt")]
    methods: String,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides eval.separation.
    #[arg(long)]
    separation: Option<f64>,
    /// Overrides eval.point_noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Where eval.csv and summary.json go.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of pairs; more than one goes into pair_N subdirectories.
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    #[arg(long, default_value_t = SceneParams::default().width)]
    width: usize,
    #[arg(long, default_value_t = SceneParams::default().height)]
    height: usize,
    #[arg(long, default_value_t = SceneParams::default().focal)]
    focal: f64,
    #[arg(long, default_value_t = SceneParams::default().baseline)]
    baseline: f64,
    /// 1 = wall, 2 = + floor, 3 = + ceiling.
    #[arg(long, default_value_t = SceneParams::default().planes)]
    planes: usize,
    #[arg(long, default_value_t = SceneParams::default().matches)]
    matches: usize,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Line in the left image as "a,b,c" (ax + by + c = 0).
    #[arg(long, allow_hyphen_values = true)]
    line1: String,
    /// Line in the right image as "a,b,c".
    #[arg(long, allow_hyphen_values = true)]
    line2: String,
    #[arg(long, default_value_t = epiline::imaging::DEFAULT_PROFILE_SAMPLES)]
    samples: usize,
    /// PNG of both profiles before and after warping by the disparities.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn load_image(p: &Path) -> Result<GrayImage, CliError> {
    GrayImage::load(p).map_err(CliError::from)
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| io_err(path, format!("line {}: not a number", i + 1)))?;
        if vals.len() != width {
            return Err(io_err(path, format!("line {}: expected {width} values, found {}", i + 1, vals.len())));
        }
        rows.push(vals);
    }
    Ok(rows)
}

fn read_matches(path: &Path) -> Result<Vec<(HomPoint, HomPoint)>, CliError> {
    Ok(read_rows(path, 4)?
        .into_iter()
        .map(|r| (HomPoint::from_pixel(r[0], r[1]), HomPoint::from_pixel(r[2], r[3])))
        .collect())
}

fn parse_line(spec: &str) -> Result<HomLine, CliError> {
    let v: Vec<f64> = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Input(format!("line {spec:?} is not \"a,b,c\"")))?;
    if v.len() != 3 {
        return Err(CliError::Input(format!("line {spec:?} needs exactly 3 coefficients")));
    }
    HomLine::from_vector([v[0], v[1], v[2]].into()).map_err(CliError::from)
}

/// Mean distance from points along the true epipolar chords in image 2 to
/// the estimated lines, over a grid of image-1 points.
fn truth_line_error(est: &FundamentalMatrix, truth: &FundamentalMatrix, img1: &GrayImage, img2: &GrayImage) -> Option<f64> {
    let (w, h) = (img1.width() as f64, img1.height() as f64);
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..10 {
        for i in 0..10 {
            let x1 = HomPoint::from_pixel((i as f64 + 0.5) / 10.0 * w, (j as f64 + 0.5) / 10.0 * h);
            let (Some(lt), Some(le)) = (truth.line_in_second(&x1), est.line_in_second(&x1)) else { continue };
            let Some((a, b)) = clip_to_rect(&lt, img2.bounds()) else { continue };
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                sum += le.distance_to_pixel(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn truth_f(paths: &[PathBuf]) -> Result<Option<(FundamentalMatrix, [CameraMatrix; 2])>, CliError> {
    if paths.is_empty() {
        return Ok(None);
    }
    let c1 = parse_camera_file(&paths[0])?;
    let c2 = parse_camera_file(&paths[1])?;
    Ok(Some((truth_f_from_cameras(&c1, &c2)?, [c1, c2])))
}

fn write_overlays(
    dir: &Path,
    res: &EstimateResult,
    truth: Option<&FundamentalMatrix>,
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &CliConfig,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let (mut o1, mut o2) = (draw::to_rgb(img1), draw::to_rgb(img2));
    let h = &res.hypothesis;
    let pairs = [(h.pair_p.l1, h.pair_p.l2), (h.pair_q.l1, h.pair_q.l2), h.third];
    for (l1, l2) in &pairs {
        if let Some(t) = truth {
            // the true lines through the middle of each estimated chord
            if let Some((a, b)) = clip_to_rect(l1, img1.bounds()) {
                let m = HomPoint::from_pixel((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0);
                if let Ok(tl1) = line_through(&t.e1(), &m) {
                    draw::line(&mut o1, &tl1, cfg.overlay.truth_color);
                }
                if let Some(tl2) = t.line_in_second(&m) {
                    draw::line(&mut o2, &tl2, cfg.overlay.truth_color);
                }
            }
        }
        draw::line(&mut o1, l1, cfg.overlay.estimate_color);
        draw::line(&mut o2, l2, cfg.overlay.estimate_color);
    }
    for (img, name) in [(o1, "left_overlay.png"), (o2, "right_overlay.png")] {
        let p = dir.join(name);
        img.save(&p).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let mut cfg = a.cfg.load()?;
    if let Some(s) = a.seed {
        cfg.estimate.seed = s;
    }
    let truth = truth_f(&a.truth)?;
    let held = a.matches.as_deref().map(read_matches).transpose()?;
    let (img1, img2) = (load_image(&a.left)?, load_image(&a.right)?);

    let res = if a.ransac {
        line_ransac_estimate(&img1, &img2, &cfg.estimate)?
    } else {
        let path = a.points.as_ref().expect("clap requires --points");
        let pts = read_matches(path)?;
        let want = if a.three_point { 3 } else { 2 };
        if pts.len() != want {
            return Err(io_err(path, format!("expected {want} correspondences, found {}", pts.len())));
        }
        if a.three_point {
            three_point_accelerated(&img1, &img2, pts[0], pts[1], pts[2], &cfg.estimate)?
        } else {
            two_point_estimate(&img1, &img2, pts[0], pts[1], &cfg.estimate)?
        }
    };

    let json = res.to_json()?;
    fs::write(&a.out, &json).map_err(|e| io_err(&a.out, e))?;
    let m = res.f.matrix();
    println!("F =");
    for r in 0..3 {
        println!("  {:>14.6e} {:>14.6e} {:>14.6e}", m[(r, 0)], m[(r, 1)], m[(r, 2)]);
    }
    let show = |p: &HomPoint| match p.to_pixel() {
        Some([x, y]) => format!("({x:.2}, {y:.2})"),
        None => "at infinity".to_string(),
    };
    println!("e1 {}  e2 {}", show(&res.hypothesis.e1), show(&res.hypothesis.e2));
    let d = &res.diagnostics;
    println!(
        "candidates {}/{}  hypotheses {}  rejected {}  screened {}  validated {}",
        d.candidates_p, d.candidates_q, d.hypotheses, d.rejected, d.screened, d.validated
    );
    if let Some(s) = res.hypothesis.full_score {
        println!("full score {s:.3}");
    }
    let t = &res.timings;
    println!(
        "time: candidates {:.2}s  hypotheses {:.2}s  validation {:.2}s",
        t.candidates.as_secs_f64(),
        t.hypotheses.as_secs_f64(),
        t.validation.as_secs_f64()
    );
    if let Some((tf, _)) = &truth {
        match truth_line_error(&res.f, tf, &img1, &img2) {
            Some(e) => println!("truth line error {e:.3} px"),
            None => println!("truth line error unavailable (no true epipolar line meets image 2)"),
        }
    }
    if let Some(h) = &held {
        println!("held-out symmetric epipolar distance {:.3} px over {} matches", symmetric_epipolar_distance(&res.f, h)?, h.len());
    }
    if let Some(dir) = &a.overlay {
        write_overlays(dir, &res, truth.as_ref().map(|t| &t.0), &img1, &img2, &cfg)?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = a.cfg.load()?;
    let methods: Vec<Method> = a
        .methods
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<_, _>>()?;
    let data = load_vgg_dataset(&a.manifest)?;
    let pc = ProtocolConfig {
        iterations: a.iters,
        separation: a.separation.unwrap_or(cfg.eval.separation),
        point_noise: a.noise.unwrap_or(cfg.eval.point_noise),
        seed: a.seed,
        estimate: cfg.estimate,
    };
    let report = run_protocol(&data, &methods, &pc)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let csv = a.out_dir.join("eval.csv");
    fs::write(&csv, report.to_csv()).map_err(|e| io_err(&csv, e))?;
    let summary = a.out_dir.join("summary.json");
    fs::write(&summary, report.summary_json()?).map_err(|e| io_err(&summary, e))?;
    print!("{}", report.table());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn camera_text(c: &CameraMatrix) -> String {
    let m = c.matrix();
    (0..3)
        .map(|r| format!("{} {} {} {}\n", m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]))
        .collect()
}

/// First match, then the first one at least 60 px from it in both images.
fn input_points(px: &[([f64; 2], [f64; 2])]) -> Vec<([f64; 2], [f64; 2])> {
    let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let first = px[0];
    let second = px.iter().find(|m| d(m.0, first.0) >= 60.0 && d(m.1, first.1) >= 60.0).copied();
    std::iter::once(first).chain(second).collect()
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let params = SceneParams {
        width: a.width,
        height: a.height,
        focal: a.focal,
        baseline: a.baseline,
        planes: a.planes,
        matches: a.matches,
    };
    if a.pairs == 0 {
        return Err(CliError::Input("--pairs must be at least 1".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut entries = Vec::new();
    for k in 0..a.pairs {
        let seed = a.seed + k as u64;
        let s = make_synthetic_scene(seed, &params)?;
        let (dir, prefix) = if a.pairs == 1 { (a.out.clone(), String::new()) } else { (a.out.join(format!("pair_{}", k + 1)), format!("pair_{}/", k + 1)) };
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for (img, name) in [(&s.images[0], "left.png"), (&s.images[1], "right.png")] {
            img.save_png(dir.join(name))?;
        }
        write_text(&dir.join("left.P"), &camera_text(&s.cams[0]))?;
        write_text(&dir.join("right.P"), &camera_text(&s.cams[1]))?;
        let px = s.matches.pixels();
        let pts = |side: usize| -> String {
            px.iter()
                .map(|m| {
                    let p = if side == 0 { m.0 } else { m.1 };
                    format!("{} {}\n", p[0], p[1])
                })
                .collect()
        };
        write_text(&dir.join("left.pts"), &pts(0))?;
        write_text(&dir.join("right.pts"), &pts(1))?;
        let rows = |ms: &[([f64; 2], [f64; 2])]| -> String {
            ms.iter().map(|(p, q)| format!("{} {} {} {}\n", p[0], p[1], q[0], q[1])).collect()
        };
        write_text(&dir.join("matches.txt"), &rows(&px))?;
        write_text(&dir.join("points.txt"), &rows(&input_points(&px)))?;
        write_text(&dir.join("truth_F.json"), &serde_json::to_string_pretty(&s.truth_f).expect("F serializes"))?;
        entries.push(serde_json::json!({
            "id": (k + 1).to_string(),
            "left": format!("{prefix}left.png"),
            "right": format!("{prefix}right.png"),
            "camera_left": format!("{prefix}left.P"),
            "camera_right": format!("{prefix}right.P"),
            "points_left": format!("{prefix}left.pts"),
            "points_right": format!("{prefix}right.pts"),
        }));
    }
    let manifest = serde_json::to_string_pretty(&serde_json::json!({ "pairs": entries })).expect("manifest serializes");
    write_text(&a.out.join("manifest.json"), &manifest)?;
    println!("wrote {} pair(s) to {}", a.pairs, a.out.display());
    Ok(())
}

fn cmd_match_lines(a: &MatchArgs) -> Result<(), CliError> {
    let cfg = a.cfg.load()?;
    let (l1, l2) = (parse_line(&a.line1)?, parse_line(&a.line2)?);
    let (img1, img2) = (load_image(&a.left)?, load_image(&a.right)?);
    let (_, p1) = line_profile(&img1, &l1, a.samples, 1.0, 0.0).ok_or_else(|| CliError::Input("line1 misses the left image".into()))?;
    let (_, p2) = line_profile(&img2, &l2, a.samples, 1.0, 0.0).ok_or_else(|| CliError::Input("line2 misses the right image".into()))?;
    let m = line_match(&p1, &p2, &cfg.estimate.stereo)?;
    println!("C* {}", m.total);
    println!("normalized {}", m.normalized);
    let d: Vec<String> = m.disparities.0.iter().map(|v| v.to_string()).collect();
    println!("disparities {}", d.join(" "));
    if let Some(path) = &a.plot {
        let warped = warp(&p2.samples, &m.disparities);
        draw::profile_plot(&p1.samples, &p2.samples, &warped)
            .save(path)
            .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("EPILINE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Input(format!("EPILINE_THREADS={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::MatchLines(a) => cmd_match_lines(a),
    }
}

fn main() -> ExitCode {
    let keys = config::keys_help();
    let command = Cli::command()
        .after_help(keys.clone())
        .mut_subcommand("estimate", |c| c.after_help(keys.clone()))
        .mut_subcommand("eval", |c| c.after_help(keys.clone()))
        .mut_subcommand("match-lines", |c| c.after_help(keys.clone()));
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
