//! Grayscale rasters and intensity profiles sampled along image lines.

use std::path::Path;

use image::{DynamicImage, GrayImage as Luma8Image};

use crate::error::{Error, Result};
use crate::geometry::{clip_to_rect, HomLine, ImageBounds};

/// Profiles per line; fixed so that costs compare across chord lengths.
pub const DEFAULT_PROFILE_SAMPLES: usize = 256;

/// Lines whose profile standard deviation falls below this are dropped.
pub const DEFAULT_MIN_TEXTURE: f64 = 4.0;

/// Row-major grayscale image with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        ImageBounds::new(width, height)?;
        if data.len() != width * height {
            return Err(Error::DomainError(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::DomainError(format!("intensity {v} outside [0, 255]")));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 255.0));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bounds(&self) -> ImageBounds {
        ImageBounds {
            width: self.width,
            height: self.height,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Decodes PNG or binary PGM; color is reduced with ITU-R 601 luma weights.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_dynamic(&img)
    }

    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = match img {
            DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|v| *v as f64).collect(),
            DynamicImage::ImageLuma16(g) => g.as_raw().iter().map(|v| *v as f64 / 257.0).collect(),
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).clamp(0.0, 255.0)
                })
                .collect(),
        };
        Self::new(w, h, data)
    }

    /// Rounds to 8 bits.
    pub fn to_luma8(&self) -> Luma8Image {
        let raw: Vec<u8> = self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Luma8Image::from_raw(self.width as u32, self.height as u32, raw).expect("buffer length matches")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Chord of a line inside the pixel-center domain of an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub parent: HomLine,
}

impl LineSegment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [(self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0]
    }
}

/// Intensities at `n` equidistant points of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    pub samples: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub spacing: f64,
}

impl IntensityProfile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same profile traversed from the other end.
    pub fn reversed(&self) -> IntensityProfile {
        IntensityProfile {
            samples: self.samples.iter().rev().copied().collect(),
            points: self.points.iter().rev().copied().collect(),
            spacing: self.spacing,
        }
    }
}

/// Maximal chord of `l` inside the image, or `None` when it misses the image
/// or is shorter than 2 px. Endpoint `a` has the smaller x (then smaller y).
pub fn clip_line(l: &HomLine, b: ImageBounds) -> Option<LineSegment> {
    let (a, q) = clip_to_rect(l, b)?;
    let seg = LineSegment { a, b: q, parent: *l };
    (seg.length() >= 2.0).then_some(seg)
}

pub fn bilinear(img: &GrayImage, x: f64, y: f64) -> Result<f64> {
    let (w, h) = (img.width, img.height);
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return Err(Error::OutOfBounds {
            x,
            y,
            width: w,
            height: h,
        });
    }
    Ok(bilinear_unchecked(img, x, y))
}

#[inline]
fn bilinear_unchecked(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = (x.floor() as usize).min(img.width - 2);
    let y0 = (y.floor() as usize).min(img.height - 2);
    let u = x - x0 as f64;
    let v = y - y0 as f64;
    let row0 = y0 * img.width + x0;
    let row1 = row0 + img.width;
    let d = &img.data;
    let top = d[row0] * (1.0 - u) + d[row0 + 1] * u;
    let bottom = d[row1] * (1.0 - u) + d[row1 + 1] * u;
    top * (1.0 - v) + bottom * v
}

/// Resamples `n >= 2` equidistant points from `seg.a` to `seg.b` inclusive.
pub fn resample(img: &GrayImage, seg: &LineSegment, n: usize) -> Result<IntensityProfile> {
    if n < 2 {
        return Err(Error::DomainError(format!("profiles need at least 2 samples, got {n}")));
    }
    let (mx, my) = ((img.width - 1) as f64, (img.height - 1) as f64);
    let step = 1.0 / (n - 1) as f64;
    let mut points = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * step;
        // clamp away round-off at the border
        let x = (seg.a[0] + t * (seg.b[0] - seg.a[0])).clamp(0.0, mx);
        let y = (seg.a[1] + t * (seg.b[1] - seg.a[1])).clamp(0.0, my);
        points.push([x, y]);
        samples.push(bilinear_unchecked(img, x, y));
    }
    Ok(IntensityProfile {
        samples,
        points,
        spacing: seg.length() / (n - 1) as f64,
    })
}

/// Population standard deviation of the samples.
pub fn texture_score(prof: &IntensityProfile) -> f64 {
    let n = prof.samples.len() as f64;
    let mean = prof.samples.iter().sum::<f64>() / n;
    let var = prof.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Clips, resamples and texture-filters a line in one go.
pub fn line_profile(
    img: &GrayImage,
    l: &HomLine,
    samples: usize,
    min_chord: f64,
    min_texture: f64,
) -> Option<(LineSegment, IntensityProfile)> {
    let seg = clip_line(l, img.bounds())?;
    if seg.length() < min_chord {
        return None;
    }
    let prof = resample(img, &seg, samples).ok()?;
    (texture_score(&prof) >= min_texture).then_some((seg, prof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_image(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    #[test]
    fn clip_cases() {
        let b = ImageBounds::new(768, 576).unwrap();
        let s = clip_line(&HomLine::new(0.0, 1.0, -10.0), b).unwrap();
        assert_eq!((s.a, s.b), ([0.0, 10.0], [767.0, 10.0]));
        assert!(clip_line(&HomLine::new(0.0, 1.0, 5.0), b).is_none());
        // grazing a corner gives a chord shorter than 2 px
        assert!(clip_line(&HomLine::new(1.0, 1.0, -0.5), b).is_none());
    }

    #[test]
    fn clip_random_lines_lands_on_border() {
        let b = ImageBounds::new(300, 200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let on_border = |p: [f64; 2]| {
            p[0].abs() < 1e-9 || (p[0] - 299.0).abs() < 1e-9 || p[1].abs() < 1e-9 || (p[1] - 199.0).abs() < 1e-9
        };
        let mut hits = 0;
        for _ in 0..500 {
            let ang: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (px, py) = (rng.random_range(-50.0..350.0), rng.random_range(-50.0..250.0));
            let l = HomLine::new(-ang.sin(), ang.cos(), ang.sin() * px - ang.cos() * py);
            if let Some(s) = clip_line(&l, b) {
                hits += 1;
                assert!(on_border(s.a) && on_border(s.b));
                assert!(l.distance_to_pixel(s.a[0], s.a[1]) < 1e-9);
                assert!(l.distance_to_pixel(s.b[0], s.b[1]) < 1e-9);
                assert!((s.a[0], s.a[1]) <= (s.b[0], s.b[1]));
            }
        }
        assert!(hits > 100);
    }

    #[test]
    fn bilinear_cases() {
        let img = GrayImage::new(2, 2, vec![0.0, 100.0, 100.0, 0.0]).unwrap();
        assert_eq!(bilinear(&img, 0.5, 0.5).unwrap(), 50.0);
        assert_eq!(bilinear(&img, 1.0, 0.0).unwrap(), 100.0);
        assert_eq!(bilinear(&img, 1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(bilinear(&img, 1.5, 0.0), Err(Error::OutOfBounds { .. })));

        let img = noise_image(10, 17, 11);
        for y in 0..11 {
            for x in 0..17 {
                assert_eq!(bilinear(&img, x as f64, y as f64).unwrap(), img.pixel(x, y));
            }
        }
    }

    #[test]
    fn bilinear_matches_weight_formula() {
        let img = noise_image(11, 20, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(0.0..18.999);
            let y: f64 = rng.random_range(0.0..13.999);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (u, v) = (x - x0 as f64, y - y0 as f64);
            let expected = img.pixel(x0, y0) * (1.0 - u) * (1.0 - v)
                + img.pixel(x0 + 1, y0) * u * (1.0 - v)
                + img.pixel(x0, y0 + 1) * (1.0 - u) * v
                + img.pixel(x0 + 1, y0 + 1) * u * v;
            assert!((bilinear(&img, x, y).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn bilinear_is_lipschitz() {
        let img = noise_image(13, 30, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..2000 {
            let (x, y) = (rng.random_range(1.0..28.0), rng.random_range(1.0..28.0));
            let (dx, dy): (f64, f64) = (rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
            let d = dx.hypot(dy);
            let a = bilinear(&img, x, y).unwrap();
            let b = bilinear(&img, x + dx, y + dy).unwrap();
            assert!((a - b).abs() <= 255.0 * 2.0 * d + 1e-9);
        }
    }

    #[test]
    fn resample_cases() {
        let flat = GrayImage::from_fn(64, 48, |_, _| 50.0).unwrap();
        let seg = clip_line(&HomLine::new(0.3, 1.0, -20.0), flat.bounds()).unwrap();
        let p = resample(&flat, &seg, 256).unwrap();
        assert!(p.samples.iter().all(|v| (*v - 50.0).abs() < 1e-12));

        let p2 = resample(&flat, &seg, 2).unwrap();
        assert_eq!(p2.points, vec![seg.a, seg.b]);

        let ramp = GrayImage::from_fn(101, 10, |x, _| x as f64 * 2.0).unwrap();
        let seg = clip_line(&HomLine::new(0.0, 1.0, -4.0), ramp.bounds()).unwrap();
        let p = resample(&ramp, &seg, 51).unwrap();
        for w in p.samples.windows(2) {
            assert!((w[1] - w[0] - 4.0).abs() < 1e-9);
        }
        assert!(resample(&ramp, &seg, 1).is_err());
    }

    #[test]
    fn resample_spacing_is_uniform() {
        let img = noise_image(15, 200, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100 {
            let ang: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let l = HomLine::new(-ang.sin(), ang.cos(), ang.sin() * 100.0 - ang.cos() * 60.0);
            let seg = clip_line(&l, img.bounds()).unwrap();
            let p = resample(&img, &seg, 256).unwrap();
            for w in p.points.windows(2) {
                let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                assert!((d - p.spacing).abs() < 1e-9 * p.spacing.max(1.0));
            }
        }
    }

    #[test]
    fn texture_cases() {
        let prof = |s: Vec<f64>| IntensityProfile {
            points: vec![[0.0, 0.0]; s.len()],
            samples: s,
            spacing: 1.0,
        };
        assert_eq!(texture_score(&prof(vec![7.0; 10])), 0.0);
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.0 } else { 255.0 }).collect();
        assert_eq!(texture_score(&prof(alt)), 127.5);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0, 1.0, 2.0, 300.0]).is_err());
        assert!(GrayImage::new(1, 2, vec![0.0; 2]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(9, 7, |x, y| (x * 20 + y) as f64).unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        assert_eq!(GrayImage::load(&path).unwrap(), img);
        assert!(matches!(GrayImage::load(dir.path().join("nope.png")), Err(Error::MissingFile(_))));
    }
}
