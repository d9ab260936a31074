use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::Real;

/// Interleaved row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T: Real> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL_DB: f64 = 99.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self { width, height, channels, data: vec![value; width * height * channels] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if (self.width, self.height, self.channels) != (other.width, other.height, other.channels) {
            return Err(Error::Dimension(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    /// 8-bit PNG (gray, RGB or RGBA by channel count).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> =
            self.data.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            c => return Err(Error::Image(format!("cannot write {c}-channel PNG"))),
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color)
            .map_err(|e| Error::Image(e.to_string()))
    }

    /// ASCII header line `W H C` followed by little-endian float32 samples.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.channels).into_bytes();
        out.reserve(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::parse("raw header", "missing newline"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse("raw header", "not utf-8"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse("raw header", "expected `W H C`"))?;
        let [w, h, c] = dims[..] else { return Err(Error::parse("raw header", "expected three dimensions")) };
        let body = &bytes[nl + 1..];
        if body.len() != w * h * c * 4 {
            return Err(Error::parse("raw body", "length does not match header"));
        }
        let data = body.chunks_exact(4).map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64)).collect();
        Self::new(w, h, c, data)
    }
}

/// `10 · log10(1 / MSE)` for images in `[0, 1]`, capped at
/// [`PSNR_IDENTICAL_DB`].
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.same_shape(b)?;
    if a.data.is_empty() {
        return Err(Error::Empty("psnr of an empty image".into()));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_IDENTICAL_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows and channels.
pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Dimension(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    let g = gaussian_window();
    let (w, h) = (a.width, a.height);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for c in 0..a.channels {
        // separable filtering of x, y, x², y², xy
        let mut planes = vec![vec![0.0f64; w * h]; 5];
        for y in 0..h {
            for x in 0..w {
                let p = a.at(x, y, c).as_f64();
                let q = b.at(x, y, c).as_f64();
                let i = y * w + x;
                planes[0][i] = p;
                planes[1][i] = q;
                planes[2][i] = p * p;
                planes[3][i] = q * q;
                planes[4][i] = p * q;
            }
        }
        let filtered: Vec<Vec<f64>> = planes
            .iter()
            .map(|plane| {
                let mut rows = vec![0.0; ow * h];
                for y in 0..h {
                    for x in 0..ow {
                        rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
                    }
                }
                let mut out = vec![0.0; ow * oh];
                for y in 0..oh {
                    for x in 0..ow {
                        out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
                    }
                }
                out
            })
            .collect();
        for i in 0..ow * oh {
            let (mx, my) = (filtered[0][i], filtered[1][i]);
            let vx = filtered[2][i] - mx * mx;
            let vy = filtered[3][i] - my * my;
            let cov = filtered[4][i] - mx * my;
            total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
        }
    }
    Ok(total / (ow * oh * a.channels) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image<f64> {
        Image::new(w, h, c, (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    /// Direct double loop over windows with a 2D Gaussian kernel.
    fn naive_ssim(a: &Image<f64>, b: &Image<f64>) -> f64 {
        let n = 11;
        let mut k2 = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                k2[i * n + j] = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            }
        }
        let s: f64 = k2.iter().sum();
        k2.iter_mut().for_each(|v| *v /= s);
        let mut acc = 0.0;
        let mut count = 0;
        for c in 0..a.channels {
            for y in 0..=a.height - n {
                for x in 0..=a.width - n {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            let wgt = k2[i * n + j];
                            let p = a.at(x + j, y + i, c);
                            let q = b.at(x + j, y + i, c);
                            mx += wgt * p;
                            my += wgt * q;
                            sxx += wgt * p * p;
                            syy += wgt * q * q;
                            sxy += wgt * p * q;
                        }
                    }
                    let (c1, c2) = (1e-4, 9e-4);
                    acc += ((2.0 * mx * my + c1) * (2.0 * (sxy - mx * my) + c2))
                        / ((mx * mx + my * my + c1) * (sxx - mx * mx + syy - my * my + c2));
                    count += 1;
                }
            }
        }
        acc / count as f64
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 16, 14, 3);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_vs_white_is_zero_db() {
        let a = Image::filled(12, 12, 3, 0.0f64);
        let b = Image::filled(12, 12, 3, 1.0f64);
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn random_pairs_match_naive_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let a = random_image(&mut rng, 19, 15, 3);
            let b = random_image(&mut rng, 19, 15, 3);
            let mse: f64 =
                a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
            assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / mse).log10()).abs() < 1e-12);
            let got = ssim(&a, &b).unwrap();
            assert!((got - naive_ssim(&a, &b)).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::filled(12, 12, 3, 0.0f64);
        let b = Image::filled(12, 13, 3, 0.0f64);
        assert!(matches!(psnr(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(ssim(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        let img = Image::new(2, 1, 3, vec![0.0f32, 0.25, 0.5, 0.75, 1.0, -1.0]).unwrap();
        img.save_raw(&path).unwrap();
        assert_eq!(Image::<f32>::load_raw(&path).unwrap(), img);
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"2 1 3\n"));
    }
}
