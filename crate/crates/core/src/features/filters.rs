//! Linear filters used to build spectral histograms.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::ImageGrid;

/// Envelope standard deviation per unit wavelength (one-octave bandwidth).
const GABOR_ENVELOPE_RATIO: f64 = 0.56;

/// One filter of a spectral-histogram bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    /// Channel average of the input.
    Intensity,
    /// Raw samples of a single input channel.
    Channel(usize),
    /// Magnitude of a complex Gabor response. `size` is both the carrier
    /// wavelength and the scale of the Gaussian envelope; `orientation` is
    /// the carrier direction in radians (0 responds to intensity varying
    /// along x, i.e. vertical stripes).
    Gabor { size: f64, orientation: f64 },
    Gaussian { sigma: f64 },
    LaplacianOfGaussian { sigma: f64 },
}

impl Filter {
    pub fn validate(&self, channels: usize) -> Result<()> {
        match *self {
            Filter::Intensity => Ok(()),
            Filter::Channel(c) if c < channels => Ok(()),
            Filter::Channel(c) => Err(invalid("filter", format!("channel {c} but image has {channels}"))),
            Filter::Gabor { size, orientation } => {
                if size > 0.0 && size.is_finite() && orientation.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("filter", format!("bad Gabor size {size} / orientation {orientation}")))
                }
            }
            Filter::Gaussian { sigma } | Filter::LaplacianOfGaussian { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("filter", format!("bad sigma {sigma}")))
                }
            }
        }
    }

    /// Filtered scalar image, row-major, same extent as `image`.
    pub fn apply(&self, image: &ImageGrid) -> Vec<f64> {
        match *self {
            Filter::Intensity => image.mean_channel().into_values(),
            Filter::Channel(c) => image.channel(c).into_values(),
            Filter::Gabor { size, orientation } => {
                let (re, im) = gabor_kernels(size, orientation);
                let gray = image.mean_channel();
                let a = convolve_mirror(&gray, &re);
                let b = convolve_mirror(&gray, &im);
                a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect()
            }
            Filter::Gaussian { sigma } => convolve_mirror(&image.mean_channel(), &gaussian_kernel(sigma)),
            Filter::LaplacianOfGaussian { sigma } => convolve_mirror(&image.mean_channel(), &log_kernel(sigma)),
        }
    }
}

/// Square odd-sized kernel, row-major, centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl Kernel {
    fn from_fn(radius: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let side = 2 * radius + 1;
        let mut taps = Vec::with_capacity(side * side);
        for dy in 0..side {
            for dx in 0..side {
                taps.push(f(dx as f64 - radius as f64, dy as f64 - radius as f64));
            }
        }
        Self { radius, taps }
    }
}

/// Real and imaginary parts of a zero-mean complex Gabor kernel.
pub fn gabor_kernels(size: f64, orientation: f64) -> (Kernel, Kernel) {
    let env = GABOR_ENVELOPE_RATIO * size;
    let radius = (3.0 * env).ceil() as usize;
    let omega = 2.0 * PI / size;
    let (c, s) = (orientation.cos(), orientation.sin());
    let envelope = Kernel::from_fn(radius, |x, y| (-(x * x + y * y) / (2.0 * env * env)).exp());
    let norm: f64 = envelope.taps.iter().sum();
    let phase = |x: f64, y: f64| omega * (x * c + y * s);
    let mut re = Kernel::from_fn(radius, |x, y| phase(x, y).cos());
    let mut im = Kernel::from_fn(radius, |x, y| phase(x, y).sin());
    // remove the DC leak of the windowed carrier
    let dc_re = re.taps.iter().zip(&envelope.taps).map(|(a, g)| a * g).sum::<f64>() / norm;
    let dc_im = im.taps.iter().zip(&envelope.taps).map(|(a, g)| a * g).sum::<f64>() / norm;
    for ((r, i), g) in re.taps.iter_mut().zip(im.taps.iter_mut()).zip(&envelope.taps) {
        *r = (*r - dc_re) * g / norm;
        *i = (*i - dc_im) * g / norm;
    }
    (re, im)
}

pub fn gaussian_kernel(sigma: f64) -> Kernel {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k = Kernel::from_fn(radius, |x, y| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
    let sum: f64 = k.taps.iter().sum();
    k.taps.iter_mut().for_each(|t| *t /= sum);
    k
}

/// Zero-sum Laplacian of Gaussian.
pub fn log_kernel(sigma: f64) -> Kernel {
    let radius = (3.0 * sigma).ceil() as usize;
    let s2 = sigma * sigma;
    let mut k = Kernel::from_fn(radius, |x, y| {
        let r2 = x * x + y * y;
        (r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp()
    });
    let mean = k.taps.iter().sum::<f64>() / k.taps.len() as f64;
    k.taps.iter_mut().for_each(|t| *t -= mean);
    k
}

/// Reflects `i` into `0..len` without repeating the edge sample.
#[inline]
pub(crate) fn mirror_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Correlates a scalar image with `kernel` under mirror boundary handling.
pub fn convolve_mirror(image: &ImageGrid, kernel: &Kernel) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let r = kernel.radius;
    let side = 2 * r + 1;
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let src = image.values();
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = mirror_index(py as isize - r as isize, h);
        for px in 0..pw {
            let sx = mirror_index(px as isize - r as isize, w);
            padded[py * pw + px] = src[sy * w + sx];
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..side {
                let row = &padded[(y + ky) * pw + x..(y + ky) * pw + x + side];
                let taps = &kernel.taps[ky * side..(ky + 1) * side];
                acc += row.iter().zip(taps).map(|(a, b)| a * b).sum::<f64>();
            }
            out[y * w + x] = acc;
        }
    }
    out
}
