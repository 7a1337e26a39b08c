//! Pixel grids and the forward-difference operators acting on them.
//!
//! The gradient uses forward differences with unit spacing and a zero
//! difference across the last row and column. The divergence is the exact
//! negative transpose of that gradient, so `<grad u, p> = -<u, div p>`
//! holds up to rounding for every pair of fields.

use crate::error::{Result, SegError};

/// Row-major pixel field with one or more interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SegError::InvalidGrid(format!(
                "extent must be positive, got {width}x{height}"
            )));
        }
        if channels == 0 {
            return Err(SegError::InvalidGrid("channel count must be >= 1".into()));
        }
        if values.len() != width * height * channels {
            return Err(SegError::InvalidGrid(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let pixel = pos / channels;
            return Err(SegError::NonFinite(format!(
                "sample at ({}, {}) channel {}",
                pixel % width,
                pixel / width,
                pos % channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    /// Single-channel grid.
    pub fn scalar(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(width, height, 1, values)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            channels: 1,
            values: vec![0.0; width * height],
        }
    }

    /// Single-channel grid built from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::scalar(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels]
    }

    #[inline]
    pub fn get_channel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    /// Extracts channel `c` as a scalar grid.
    pub fn channel(&self, c: usize) -> ImageGrid {
        assert!(c < self.channels, "channel {c} out of range");
        let values = self
            .values
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            values,
        }
    }

    /// Channel average; identity on scalar grids.
    pub fn mean_channel(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f64;
        let values = self
            .values
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() * inv)
            .collect();
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            values,
        }
    }

    /// Scalar sub-image `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageGrid> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(SegError::InvalidGrid(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * self.channels;
            values.extend_from_slice(&self.values[start..start + w * self.channels]);
        }
        Ok(ImageGrid {
            width: w,
            height: h,
            channels: self.channels,
            values,
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-pixel 2-vectors `(x-component, y-component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub width: usize,
    pub height: usize,
    pub pairs: Vec<[f64; 2]>,
}

impl VectorField2 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pairs: vec![[0.0; 2]; width * height],
        }
    }

    pub fn dot(&self, other: &VectorField2) -> f64 {
        self.pairs
            .iter()
            .zip(&other.pairs)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .sum()
    }
}

/// Forward-difference gradient of `channels` interleaved scalar fields.
///
/// `values[i * channels + l]` is field `l` at pixel `i`; the output uses the
/// same layout. Differences across the last column/row are zero.
pub fn gradient_interleaved(
    values: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    out: &mut [[f64; 2]],
) {
    debug_assert_eq!(values.len(), width * height * channels);
    debug_assert_eq!(out.len(), values.len());
    let row = width * channels;
    for y in 0..height {
        for x in 0..width {
            let base = (y * width + x) * channels;
            for l in 0..channels {
                let v = values[base + l];
                let gx = if x + 1 < width { values[base + channels + l] - v } else { 0.0 };
                let gy = if y + 1 < height { values[base + row + l] - v } else { 0.0 };
                out[base + l] = [gx, gy];
            }
        }
    }
}

/// Negative adjoint of [`gradient_interleaved`].
pub fn divergence_interleaved(
    pairs: &[[f64; 2]],
    width: usize,
    height: usize,
    channels: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(pairs.len(), width * height * channels);
    debug_assert_eq!(out.len(), pairs.len());
    let row = width * channels;
    for y in 0..height {
        for x in 0..width {
            let base = (y * width + x) * channels;
            for l in 0..channels {
                let mut d = 0.0;
                if x + 1 < width {
                    d += pairs[base + l][0];
                }
                if x > 0 {
                    d -= pairs[base - channels + l][0];
                }
                if y + 1 < height {
                    d += pairs[base + l][1];
                }
                if y > 0 {
                    d -= pairs[base - row + l][1];
                }
                out[base + l] = d;
            }
        }
    }
}

/// Forward-difference gradient of a scalar grid (channel 0 of `field`).
pub fn gradient(field: &ImageGrid) -> VectorField2 {
    let scalar;
    let field = if field.channels() == 1 {
        field
    } else {
        scalar = field.channel(0);
        &scalar
    };
    let mut out = VectorField2::zeros(field.width(), field.height());
    gradient_interleaved(field.values(), field.width(), field.height(), 1, &mut out.pairs);
    out
}

/// Divergence, defined as the negative adjoint of [`gradient`].
pub fn divergence(vf: &VectorField2) -> ImageGrid {
    let mut out = vec![0.0; vf.width * vf.height];
    divergence_interleaved(&vf.pairs, vf.width, vf.height, 1, &mut out);
    ImageGrid {
        width: vf.width,
        height: vf.height,
        channels: 1,
        values: out,
    }
}

/// Isotropic discrete total variation of a scalar grid.
pub fn total_variation(field: &ImageGrid) -> f64 {
    gradient(field)
        .pairs
        .iter()
        .map(|g| g[0].hypot(g[1]))
        .sum()
}

/// Isotropic total variation of each of `channels` interleaved fields.
pub fn total_variation_interleaved(values: &[f64], width: usize, height: usize, channels: usize) -> Vec<f64> {
    let mut grad = vec![[0.0; 2]; values.len()];
    gradient_interleaved(values, width, height, channels, &mut grad);
    let mut tv = vec![0.0; channels];
    for (i, g) in grad.iter().enumerate() {
        tv[i % channels] += g[0].hypot(g[1]);
    }
    tv
}

/// Power-iteration estimate of the squared operator norm of the gradient on
/// a `width x height` grid, i.e. the largest eigenvalue of `-div grad`.
pub fn gradient_norm_sq_estimate(width: usize, height: usize, iterations: usize, start: &[f64]) -> f64 {
    let n = width * height;
    assert_eq!(start.len(), n);
    let mut u = start.to_vec();
    let mut grad = vec![[0.0; 2]; n];
    let mut next = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        u.iter_mut().for_each(|v| *v /= norm);
        gradient_interleaved(&u, width, height, 1, &mut grad);
        divergence_interleaved(&grad, width, height, 1, &mut next);
        // K^T K u = -div grad u; Rayleigh quotient with unit u
        estimate = -next.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        for (dst, src) in u.iter_mut().zip(&next) {
            *dst = -src;
        }
    }
    estimate
}
