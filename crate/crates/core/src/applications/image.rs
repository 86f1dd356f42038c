use std::io::{BufRead, Write};

use rand::seq::index;
use rayon::prelude::*;

use super::barycentric_map;
use crate::costs::{seeded_rng, squared_distance, squared_euclidean_cost, PointCloud};
use crate::error::{Error, Result};
use crate::solver::{materialize_plan, solve};
use crate::types::{DiscreteDistribution, SinkhornConfig, SolveReport, SolveStatus};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    /// Channels are clamped into `[0, 1]`; non-finite channels are rejected.
    pub fn new(width: usize, height: usize, mut pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput);
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        for (index, p) in pixels.iter_mut().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteInput { index });
            }
            for c in p.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c * 255.0).round() as u8))
            .collect()
    }
}

fn header_token<R: BufRead>(reader: &mut R) -> Result<String> {
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8];
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(Error::Parse("unexpected end of PPM header".into()));
            }
            break;
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut comment = Vec::new();
                reader.read_until(b'\n', &mut comment)?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    break;
                }
            }
            b => token.push(b),
        }
    }
    String::from_utf8(token).map_err(|_| Error::Parse("non-ASCII PPM header".into()))
}

fn header_number<R: BufRead>(reader: &mut R, what: &str) -> Result<usize> {
    let token = header_token(reader)?;
    token
        .parse()
        .map_err(|_| Error::Parse(format!("bad PPM {what}: {token:?}")))
}

/// Reads a binary (`P6`) PPM with `maxval <= 255`.
pub fn read_ppm<R: BufRead>(mut reader: R) -> Result<RgbImage> {
    let magic = header_token(&mut reader)?;
    if magic != "P6" {
        return Err(Error::Parse(format!("expected P6 magic, found {magic:?}")));
    }
    let width = header_number(&mut reader, "width")?;
    let height = header_number(&mut reader, "height")?;
    let maxval = header_number(&mut reader, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PPM maxval {maxval}")));
    }
    let mut raw = vec![0u8; width * height * 3];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::Parse("truncated PPM pixel data".into()))?;
    let scale = maxval as f64;
    let pixels = raw
        .chunks_exact(3)
        .map(|p| [p[0] as f64 / scale, p[1] as f64 / scale, p[2] as f64 / scale])
        .collect();
    RgbImage::new(width, height, pixels)
}

/// Writes `P6\n<width> <height>\n255\n` followed by the raw RGB bytes.
pub fn write_ppm<W: Write>(mut writer: W, image: &RgbImage) -> Result<()> {
    write!(writer, "P6\n{} {}\n255\n", image.width, image.height)?;
    writer.write_all(&image.to_bytes())?;
    writer.flush()?;
    Ok(())
}

/// Recolored image plus the report of the underlying solve.
#[derive(Debug, Clone)]
pub struct ColorTransfer {
    pub image: RgbImage,
    pub report: SolveReport,
}

fn sample_colors(image: &RgbImage, count: usize, rng: &mut impl rand::Rng) -> Result<PointCloud> {
    let picked = index::sample(rng, image.pixels.len(), count);
    PointCloud::new(3, picked.iter().flat_map(|k| image.pixels[k]).collect())
}

fn nearest(samples: &PointCloud, color: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, s) in samples.points().enumerate() {
        let d = squared_distance(s, color);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Transfers the palette of `target` onto `source`.
///
/// `sample_count` pixels are drawn without replacement from each image
/// (source first, one seeded stream), the entropic plan between the two
/// uniform color samples is computed with `config`, each source sample is
/// moved to its barycentric image, and every source pixel takes the color of
/// its nearest source sample (lowest index on ties).
pub fn color_transfer(
    source: &RgbImage,
    target: &RgbImage,
    sample_count: usize,
    config: &SinkhornConfig,
    seed: u64,
) -> Result<ColorTransfer> {
    if sample_count == 0 || sample_count > source.pixels.len() || sample_count > target.pixels.len() {
        return Err(Error::InvalidArgument(format!(
            "sample count {sample_count} must lie in 1..={}",
            source.pixels.len().min(target.pixels.len())
        )));
    }
    let mut rng = seeded_rng(seed);
    let xs = sample_colors(source, sample_count, &mut rng)?;
    let ys = sample_colors(target, sample_count, &mut rng)?;
    let cost = squared_euclidean_cost(&xs, &ys)?;
    let weights = DiscreteDistribution::uniform(sample_count)?;
    let solution = solve(&cost, &weights, &weights, config)?;
    if solution.report.status == SolveStatus::NumericalFailure {
        return Err(Error::NumericalFailure);
    }
    let plan = materialize_plan(&cost, &weights, &weights, &solution.potentials, config.epsilon)?;
    let mapped = barycentric_map(&plan, &ys)?;

    let pixels = source
        .pixels
        .par_iter()
        .map(|p| {
            let m = mapped.point(nearest(&xs, p));
            [m[0], m[1], m[2]]
        })
        .collect();
    Ok(ColorTransfer {
        image: RgbImage::new(source.width, source.height, pixels)?,
        report: solution.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Precision;

    fn gradient(width: usize, height: usize) -> RgbImage {
        RgbImage::from_fn(width, height, |x, y| {
            let (u, v) = (x as f64 / (width - 1) as f64, y as f64 / (height - 1) as f64);
            [u, v, 0.5 * (1.0 - u) + 0.25 * v]
        })
        .unwrap()
    }

    #[test]
    fn ppm_layout_is_exact() {
        let img = RgbImage::new(2, 1, vec![[1.0, 0.0, 0.5], [0.2, 0.4, 0.6]]).unwrap();
        let mut buf = Vec::new();
        write_ppm(&mut buf, &img).unwrap();
        let mut want = b"P6\n2 1\n255\n".to_vec();
        want.extend_from_slice(&[255, 0, 128, 51, 102, 153]);
        assert_eq!(buf, want);
    }

    #[test]
    fn ppm_round_trip() {
        let img = gradient(17, 9);
        let mut buf = Vec::new();
        write_ppm(&mut buf, &img).unwrap();
        let back = read_ppm(buf.as_slice()).unwrap();
        assert_eq!((back.width(), back.height()), (17, 9));
        assert_eq!(back.to_bytes(), img.to_bytes());
    }

    #[test]
    fn ppm_header_comments_and_maxval() {
        let mut data = b"P6 # magic\n# a comment line\n1 1\n# another\n15\n".to_vec();
        data.extend_from_slice(&[15, 0, 5]);
        let img = read_ppm(data.as_slice()).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn ppm_rejects_malformed() {
        assert!(matches!(read_ppm(&b"P3\n1 1\n255\n"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_ppm(&b"P6\n2 2\n255\n\x00\x00"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_ppm(&b"P6\n1 1\n65535\n"[..]), Err(Error::Parse(_))));
        assert!(matches!(read_ppm(&b"P6\nx 1\n255\n"[..]), Err(Error::Parse(_))));
    }

    #[test]
    fn image_clamps_and_validates() {
        let img = RgbImage::new(1, 1, vec![[-0.5, 2.0, 0.3]]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 1.0, 0.3]);
        assert!(RgbImage::new(1, 1, vec![[f64::NAN, 0.0, 0.0]]).is_err());
        assert!(RgbImage::new(2, 1, vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn self_transfer_is_near_identity() {
        let img = gradient(48, 40);
        let config = SinkhornConfig::new(0.01).with_precision(Precision::Double);
        let out = color_transfer(&img, &img, 512, &config, 3).unwrap();
        assert!(out.report.converged());
        let close = img
            .pixels()
            .iter()
            .zip(out.image.pixels())
            .filter(|(a, b)| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 0.1))
            .count();
        assert!(close as f64 >= 0.95 * img.pixels().len() as f64, "{close}");
    }

    #[test]
    fn mapped_colors_stay_within_target_range() {
        let src = gradient(30, 20);
        let dst = RgbImage::from_fn(25, 25, |x, y| [0.2 + 0.02 * x as f64, 0.5, 0.9 - 0.03 * y as f64]).unwrap();
        let out = color_transfer(&src, &dst, 200, &SinkhornConfig::new(0.01), 8).unwrap();
        let mut rng = seeded_rng(8);
        let _ = sample_colors(&src, 200, &mut rng).unwrap();
        let ys = sample_colors(&dst, 200, &mut rng).unwrap();
        for k in 0..3 {
            let lo = ys.points().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = ys.points().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            for p in out.image.pixels() {
                assert!(p[k] >= lo - 1e-12 && p[k] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_source_gives_constant_output() {
        let src = RgbImage::from_fn(10, 10, |_, _| [0.5, 0.5, 0.5]).unwrap();
        let dst = gradient(12, 12);
        let out = color_transfer(&src, &dst, 64, &SinkhornConfig::new(0.05), 1).unwrap();
        let first = out.image.pixels()[0];
        assert!(out.image.pixels().iter().all(|p| *p == first));
    }

    #[test]
    fn transfer_is_seed_deterministic() {
        let src = gradient(20, 20);
        let dst = RgbImage::from_fn(16, 16, |x, _| [x as f64 / 15.0, 0.3, 0.1]).unwrap();
        let config = SinkhornConfig::new(0.02);
        let a = color_transfer(&src, &dst, 100, &config, 5).unwrap();
        let b = color_transfer(&src, &dst, 100, &config, 5).unwrap();
        assert_eq!(a.image, b.image);
        assert!(a.report.same_numerics(&b.report));
    }

    #[test]
    fn rejects_bad_sample_count() {
        let img = gradient(4, 4);
        let config = SinkhornConfig::new(0.1);
        assert!(color_transfer(&img, &img, 0, &config, 0).is_err());
        assert!(color_transfer(&img, &img, 17, &config, 0).is_err());
    }
}
