use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3x4;
use serde::{Deserialize, Serialize};

use super::{truth_f_from_cameras, CameraMatrix, PointMatchSet};
use crate::error::{Error, Result};
use crate::geometry::{FundamentalMatrix, HomPoint};
use crate::imaging::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub left: PathBuf,
    pub right: PathBuf,
    #[serde(default)]
    pub camera_left: Option<PathBuf>,
    #[serde(default)]
    pub camera_right: Option<PathBuf>,
    pub points_left: PathBuf,
    pub points_right: PathBuf,
}

/// Dataset description; relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub pairs: Vec<ManifestPair>,
}

#[derive(Debug, Clone)]
pub struct StereoPair {
    pub id: String,
    pub left: GrayImage,
    pub right: GrayImage,
    pub cameras: Option<[CameraMatrix; 2]>,
    pub truth_f: Option<FundamentalMatrix>,
    pub matches: PointMatchSet,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<StereoPair>,
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn numbers(path: &Path, lineno: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, lineno, format!("not a finite number: {tok:?}")))
        })
        .collect()
}

/// Three non-blank lines of four whitespace-separated numbers.
pub fn parse_camera_file(path: &Path) -> Result<CameraMatrix> {
    let text = read(path)?;
    let mut rows = Vec::new();
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        last = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if rows.len() == 3 {
            return Err(parse_err(path, i + 1, "more than 3 rows"));
        }
        let v = numbers(path, i + 1, line)?;
        if v.len() != 4 {
            return Err(parse_err(path, i + 1, format!("expected 4 values, found {}", v.len())));
        }
        rows.push(v);
    }
    if rows.len() < 3 {
        return Err(parse_err(path, last + 1, format!("expected 3 rows, found {}", rows.len())));
    }
    let flat: Vec<f64> = rows.concat();
    CameraMatrix::new(Matrix3x4::from_row_slice(&flat)).map_err(|e| parse_err(path, 1, e.to_string()))
}

/// One "x y" per line. A line holding `*` or `nan` marks a point that is not
/// visible in this view; blank lines and `#` comments are skipped without
/// consuming an index.
pub fn parse_points_file(path: &Path) -> Result<Vec<Option<[f64; 2]>>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, i + 1, format!("expected \"x y\", found {} fields", toks.len())));
        }
        if toks.iter().all(|t| *t == "*" || t.eq_ignore_ascii_case("nan")) {
            out.push(None);
            continue;
        }
        let v = numbers(path, i + 1, line)?;
        out.push(Some([v[0], v[1]]));
    }
    Ok(out)
}

fn assemble(
    id: String,
    left: GrayImage,
    right: GrayImage,
    cameras: Option<[CameraMatrix; 2]>,
    pts: Vec<([f64; 2], [f64; 2])>,
    context: &Path,
) -> Result<StereoPair> {
    if pts.is_empty() {
        return Err(parse_err(context, 0, "pair has no common ground-truth points"));
    }
    let truth_f = match &cameras {
        Some([a, b]) => Some(truth_f_from_cameras(a, b)?),
        None => None,
    };
    Ok(StereoPair {
        id,
        left,
        right,
        cameras,
        truth_f,
        matches: PointMatchSet::from_pixels(&pts)?,
    })
}

fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = read(path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut pairs = Vec::new();
    for (i, mp) in manifest.pairs.iter().enumerate() {
        let left = GrayImage::load(resolve(&mp.left))?;
        let right = GrayImage::load(resolve(&mp.right))?;
        let cameras = match (&mp.camera_left, &mp.camera_right) {
            (Some(a), Some(b)) => Some([parse_camera_file(&resolve(a))?, parse_camera_file(&resolve(b))?]),
            _ => None,
        };
        let pl_path = resolve(&mp.points_left);
        let pl = parse_points_file(&pl_path)?;
        let pr = parse_points_file(&resolve(&mp.points_right))?;
        if pl.len() != pr.len() {
            return Err(parse_err(
                &pl_path,
                0,
                format!("{} points here but {} in {}", pl.len(), pr.len(), mp.points_right.display()),
            ));
        }
        let pts = pl.iter().zip(&pr).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
        let id = mp.id.clone().unwrap_or_else(|| (i + 1).to_string());
        pairs.push(assemble(id, left, right, cameras, pts, &pl_path)?);
    }
    if pairs.is_empty() {
        return Err(parse_err(path, 1, "manifest lists no pairs"));
    }
    Ok(Dataset { pairs })
}

/// `<stem>.NNN.pgm` + `<stem>.NNN.P` + `<stem>.NNN.corners` and a
/// `<stem>.nview-corners` table whose rows index into the per-view corner
/// lists (`*` where a track is not seen).
fn discover_house(dir: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut images: Vec<(String, String, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_string();
        let parts: Vec<&str> = name.split('.').collect();
        if parts.len() == 3 && parts[2] == "pgm" && parts[1].chars().all(|c| c.is_ascii_digit()) {
            images.push((parts[0].to_string(), parts[1].to_string(), path));
        }
    }
    images.sort();
    if images.len() < 2 {
        return Err(Error::MissingFile(dir.join("manifest.json")));
    }
    let stem = images[0].0.clone();
    let nview_path = dir.join(format!("{stem}.nview-corners"));
    let nview = read(&nview_path)?;
    let mut tracks: Vec<Vec<Option<usize>>> = Vec::new();
    for (i, line) in nview.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<Option<usize>> = line
            .split_whitespace()
            .map(|t| {
                if t == "*" {
                    Ok(None)
                } else {
                    t.parse::<usize>().map(Some).map_err(|_| parse_err(&nview_path, i + 1, format!("bad index {t:?}")))
                }
            })
            .collect::<Result<_>>()?;
        if row.len() != images.len() {
            return Err(parse_err(&nview_path, i + 1, format!("expected {} columns, found {}", images.len(), row.len())));
        }
        tracks.push(row);
    }

    let mut views = Vec::new();
    for (s, num, img_path) in &images {
        let corners_path = dir.join(format!("{s}.{num}.corners"));
        let corners = parse_points_file(&corners_path)?;
        let cam_path = dir.join(format!("{s}.{num}.P"));
        let cam = if cam_path.exists() { Some(parse_camera_file(&cam_path)?) } else { None };
        views.push((GrayImage::load(img_path)?, cam, corners, corners_path));
    }

    let mut pairs = Vec::new();
    for v in 0..views.len() - 1 {
        let (a, b) = (&views[v], &views[v + 1]);
        let mut pts = Vec::new();
        for (row, t) in tracks.iter().enumerate() {
            if let (Some(i), Some(j)) = (t[v], t[v + 1]) {
                let look = |corners: &Vec<Option<[f64; 2]>>, k: usize, path: &Path| {
                    corners
                        .get(k)
                        .copied()
                        .ok_or_else(|| parse_err(&nview_path, row + 1, format!("index {k} beyond {}", path.display())))
                };
                if let (Some(p), Some(q)) = (look(&a.2, i, &a.3)?, look(&b.2, j, &b.3)?) {
                    pts.push((p, q));
                }
            }
        }
        let cameras = match (a.1, b.1) {
            (Some(x), Some(y)) => Some([x, y]),
            _ => None,
        };
        pairs.push(assemble((v + 1).to_string(), a.0.clone(), b.0.clone(), cameras, pts, &nview_path)?);
    }
    Ok(Dataset { pairs })
}

/// Loads a manifest file, a directory containing `manifest.json`, or a
/// directory in the VGG house layout.
pub fn load_vgg_dataset(path: &Path) -> Result<Dataset> {
    if path.is_file() {
        return load_manifest(path);
    }
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let manifest = path.join("manifest.json");
    if manifest.is_file() {
        return load_manifest(&manifest);
    }
    discover_house(path)
}

impl StereoPair {
    pub fn pixel_matches(&self) -> Vec<(HomPoint, HomPoint)> {
        self.matches.matches().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn camera_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "c.P", "1 0 0 0\n0 1 0 0\n\n0 0 1 -1\n");
        let cam = parse_camera_file(&ok).unwrap();
        assert_eq!(cam.matrix()[(2, 3)], -1.0);

        let short = write(dir.path(), "short.P", "1 0 0 0\n0 1 0 0\n");
        match parse_camera_file(&short) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, short);
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
        let bad = write(dir.path(), "bad.P", "1 0 0 0\n0 1 x 0\n0 0 1 0\n");
        assert!(matches!(parse_camera_file(&bad), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_camera_file(&dir.path().join("none.P")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn points_file_handles_missing_entries() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.txt", "1 2\n# comment\n* *\n3.5 4e1\n");
        assert_eq!(parse_points_file(&p).unwrap(), vec![Some([1.0, 2.0]), None, Some([3.5, 40.0])]);
        let bad = write(dir.path(), "q.txt", "1 2 3\n");
        assert!(matches!(parse_points_file(&bad), Err(Error::Parse { line: 1, .. })));
    }
}
