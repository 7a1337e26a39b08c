//! Local feature extraction: every pixel gets an `m`-vector computed from
//! the `(2s+1) x (2s+1)` window around it.

mod fft;
mod filters;
mod histogram;

pub use fft::fft_modulus;
pub use filters::{convolve_mirror, gabor_kernels, gaussian_kernel, log_kernel, Filter, Kernel};
pub use histogram::{spectral_histogram, spectral_histogram_with_ranges, BinRange, FilterBank, HistogramFeatures};

use nalgebra::DMatrix;

use crate::error::{invalid, Result, SegError};
use crate::grid::ImageGrid;

/// Boundary rule for windows that leave the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Mirror,
    Clamp,
}

/// Half-width `s` of a `(2s+1)^2` window plus its boundary rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub s: usize,
    pub padding: Padding,
}

impl WindowSpec {
    pub fn mirror(s: usize) -> Self {
        Self { s, padding: Padding::Mirror }
    }

    pub fn side(&self) -> usize {
        2 * self.s + 1
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.side() > width.min(height) {
            return Err(invalid(
                "s",
                format!("window side {} exceeds image extent {width}x{height}", self.side()),
            ));
        }
        Ok(())
    }
}

/// Uncentred features: column `i` belongs to pixel `i` (row-major) of a
/// `width x height` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    width: usize,
    height: usize,
    data: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(width: usize, height: usize, data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() != width * height {
            return Err(SegError::DimensionMismatch(format!(
                "{} feature columns for a {width}x{height} grid",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(invalid("features", "feature dimension must be positive"));
        }
        let m = data.nrows();
        if let Some(pos) = data.as_slice().iter().position(|v| !v.is_finite()) {
            let pixel = pos / m;
            return Err(SegError::NonFinite(format!(
                "feature {} at pixel ({}, {})",
                pos % m,
                pixel % width,
                pixel / width
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Pixel count `n`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.data.as_slice()[i * m..(i + 1) * m]
    }

    /// Columns of the sub-grid `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(SegError::DimensionMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} of a {}x{} feature grid",
                self.width, self.height
            )));
        }
        let m = self.dim();
        let mut out = Vec::with_capacity(m * w * h);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * m;
            out.extend_from_slice(&self.data.as_slice()[start..start + w * m]);
        }
        Ok(Self {
            width: w,
            height: h,
            data: DMatrix::from_vec(m, w * h, out),
        })
    }
}

/// Vertical concatenation of weight-scaled feature blocks.
pub fn stack_features(parts: &[(&FeatureMatrix, f64)]) -> Result<FeatureMatrix> {
    let Some((first, _)) = parts.first() else {
        return Err(invalid("parts", "nothing to stack"));
    };
    let (w, h) = (first.width, first.height);
    for (part, weight) in parts {
        if (part.width, part.height) != (w, h) {
            return Err(SegError::DimensionMismatch(format!(
                "feature grids {}x{} and {w}x{h}",
                part.width, part.height
            )));
        }
        if !(*weight > 0.0) || !weight.is_finite() {
            return Err(invalid("weight", format!("stacking weight {weight} must be positive")));
        }
    }
    let m: usize = parts.iter().map(|(p, _)| p.dim()).sum();
    let n = w * h;
    let mut data = Vec::with_capacity(m * n);
    for i in 0..n {
        for (part, weight) in parts {
            data.extend(part.column(i).iter().map(|v| v * weight));
        }
    }
    FeatureMatrix::new(w, h, DMatrix::from_vec(m, n, data))
}

/// Which local operator to apply.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    SpectralHistogram(FilterBank),
    FftModulus,
}

/// One window scale with its stacking weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub s: usize,
    pub weight: f64,
}

/// Complete feature recipe: operator, window scales and padding.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub scales: Vec<Scale>,
    pub padding: Padding,
}

/// Extracted features and where they sit in the image.
#[derive(Debug, Clone)]
pub struct ExtractedFeatures {
    pub features: FeatureMatrix,
    /// Feature pixel `(x, y)` is image pixel `(x + margin, y + margin)`.
    pub margin: usize,
    pub degenerate_filters: Vec<usize>,
}

impl FeatureSpec {
    pub fn single(kind: FeatureKind, s: usize) -> Self {
        Self {
            kind,
            scales: vec![Scale { s, weight: 1.0 }],
            padding: Padding::Mirror,
        }
    }

    /// Window half-width of the first (leading) scale.
    pub fn primary_s(&self) -> usize {
        self.scales.first().map_or(0, |sc| sc.s)
    }

    /// Image border without features: the largest `s` for FFT features,
    /// zero for padded histograms.
    pub fn margin(&self) -> usize {
        match self.kind {
            FeatureKind::FftModulus => self.scales.iter().map(|sc| sc.s).max().unwrap_or(0),
            FeatureKind::SpectralHistogram(_) => 0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.scales.is_empty() {
            return Err(invalid("s", "at least one window scale is required"));
        }
        for sc in &self.scales {
            WindowSpec { s: sc.s, padding: self.padding }.check_fits(width, height)?;
            if !(sc.weight > 0.0) || !sc.weight.is_finite() {
                return Err(invalid("weight", format!("scale weight {} must be positive", sc.weight)));
            }
        }
        if let FeatureKind::FftModulus = self.kind {
            let margin = self.margin();
            if width <= 2 * margin || height <= 2 * margin {
                return Err(invalid("s", "no pixel has a window inside the image"));
            }
        }
        Ok(())
    }

    pub fn extract(&self, image: &ImageGrid) -> Result<ExtractedFeatures> {
        self.validate(image.width(), image.height())?;
        let margin = self.margin();
        let mut blocks = Vec::with_capacity(self.scales.len());
        let mut degenerate = Vec::new();
        for sc in &self.scales {
            let win = WindowSpec { s: sc.s, padding: self.padding };
            let block = match &self.kind {
                FeatureKind::SpectralHistogram(bank) => {
                    let out = spectral_histogram(image, bank, &win)?;
                    degenerate.extend(out.degenerate_filters.iter().copied());
                    out.features
                }
                FeatureKind::FftModulus => {
                    let gray = image.mean_channel();
                    let full = fft_modulus(&gray, &win)?;
                    let trim = margin - sc.s;
                    full.crop(trim, trim, gray.width() - 2 * margin, gray.height() - 2 * margin)?
                }
            };
            blocks.push((block, sc.weight));
        }
        degenerate.sort_unstable();
        degenerate.dedup();
        let features = if blocks.len() == 1 && blocks[0].1 == 1.0 {
            blocks.pop().expect("one block").0
        } else {
            let refs: Vec<(&FeatureMatrix, f64)> = blocks.iter().map(|(b, w)| (b, *w)).collect();
            stack_features(&refs)?
        };
        Ok(ExtractedFeatures {
            features,
            margin,
            degenerate_filters: degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, m: usize, w: usize, h: usize) -> FeatureMatrix {
        let data = DMatrix::from_fn(m, w * h, |_, _| rng.gen_range(-1.0..1.0));
        FeatureMatrix::new(w, h, data).unwrap()
    }

    #[test]
    fn non_finite_features_report_location() {
        let mut data = DMatrix::zeros(2, 6);
        data[(1, 4)] = f64::NAN;
        let err = FeatureMatrix::new(3, 2, data).unwrap_err();
        assert_eq!(err, SegError::NonFinite("feature 1 at pixel (1, 1)".into()));
    }

    #[test]
    fn stacking_single_part_with_unit_weight_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_features(&mut rng, 4, 3, 3);
        assert_eq!(stack_features(&[(&a, 1.0)]).unwrap(), a);
    }

    #[test]
    fn stacking_scales_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_features(&mut rng, 2, 4, 2);
        let b = random_features(&mut rng, 3, 4, 2);
        let st = stack_features(&[(&a, 0.8), (&b, 0.2)]).unwrap();
        assert_eq!(st.dim(), 5);
        for i in 0..8 {
            let col = st.column(i);
            assert_eq!(col[0], 0.8 * a.column(i)[0]);
            assert_eq!(col[1], 0.8 * a.column(i)[1]);
            assert_eq!(col[2], 0.2 * b.column(i)[0]);
        }
    }

    #[test]
    fn stacking_distance_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_features(&mut rng, 3, 5, 4);
        let b = random_features(&mut rng, 6, 5, 4);
        let (wa, wb) = (0.8, 0.2);
        let st = stack_features(&[(&a, wa), (&b, wb)]).unwrap();
        let d2 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        for (i, j) in [(0, 1), (3, 17), (19, 2)] {
            let lhs = d2(st.column(i), st.column(j));
            let rhs = wa * wa * d2(a.column(i), a.column(j)) + wb * wb * d2(b.column(i), b.column(j));
            assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn stacking_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_features(&mut rng, 2, 4, 2);
        let b = random_features(&mut rng, 2, 2, 4);
        assert!(matches!(stack_features(&[(&a, 1.0), (&b, 1.0)]), Err(SegError::DimensionMismatch(_))));
        assert!(stack_features(&[(&a, 0.0)]).is_err());
    }

    #[test]
    fn fft_scales_share_the_largest_margin() {
        let img = ImageGrid::from_fn(24, 20, |x, y| ((x * 5 + y * 3) % 7) as f64).unwrap();
        let spec = FeatureSpec {
            kind: FeatureKind::FftModulus,
            scales: vec![Scale { s: 2, weight: 0.8 }, Scale { s: 4, weight: 0.2 }],
            padding: Padding::Mirror,
        };
        let out = spec.extract(&img).unwrap();
        assert_eq!(out.margin, 4);
        assert_eq!((out.features.width(), out.features.height()), (16, 12));
        assert_eq!(out.features.dim(), 25 + 81);
        let small = fft_modulus(&img, &WindowSpec::mirror(2)).unwrap();
        // feature pixel (0,0) is image pixel (4,4), i.e. small-grid pixel (2,2)
        let expected: Vec<f64> = small.column(2 * small.width() + 2).iter().map(|v| v * 0.8).collect();
        assert_eq!(&out.features.column(0)[..25], expected.as_slice());
    }
}
