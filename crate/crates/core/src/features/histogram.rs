//! Local spectral histograms: window-normalised histograms of every
//! filtered image in a bank, concatenated per pixel.

use nalgebra::DMatrix;

use super::filters::{mirror_index, Filter};
use super::{FeatureMatrix, Padding, WindowSpec};
use crate::error::{invalid, Result};
use crate::grid::ImageGrid;

/// Ordered filters sharing a common bin count.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub filters: Vec<Filter>,
    pub bins: usize,
}

impl FilterBank {
    pub fn new(filters: Vec<Filter>, bins: usize) -> Result<Self> {
        if filters.is_empty() {
            return Err(invalid("filters", "bank needs at least one filter"));
        }
        if bins == 0 {
            return Err(invalid("bins", "must be at least 1"));
        }
        Ok(Self { filters, bins })
    }

    /// Gabor filters for every `(size, orientation)` pair, sizes outermost.
    pub fn gabor(sizes: &[f64], orientations: &[f64], bins: usize) -> Result<Self> {
        let filters = sizes
            .iter()
            .flat_map(|&size| orientations.iter().map(move |&orientation| Filter::Gabor { size, orientation }))
            .collect();
        Self::new(filters, bins)
    }

    /// Feature dimension `filters * bins`.
    pub fn dimension(&self) -> usize {
        self.filters.len() * self.bins
    }
}

/// Spectral-histogram features plus the filters whose response was constant.
#[derive(Debug, Clone)]
pub struct HistogramFeatures {
    pub features: FeatureMatrix,
    /// Indices of filters whose global min equals max; their mass lands in
    /// the last bin.
    pub degenerate_filters: Vec<usize>,
}

/// Value range used to place the bin edges of one filtered image.
pub type BinRange = (f64, f64);

/// Spectral histograms with bin edges spanning each filtered image's global
/// value range.
pub fn spectral_histogram(image: &ImageGrid, bank: &FilterBank, win: &WindowSpec) -> Result<HistogramFeatures> {
    let filtered = apply_bank(image, bank, win)?;
    let ranges: Vec<BinRange> = filtered
        .iter()
        .map(|g| {
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();
    histograms(image, bank, win, &filtered, &ranges)
}

/// Spectral histograms with caller-supplied per-filter value ranges.
/// Values outside a range are clamped into its first or last bin.
pub fn spectral_histogram_with_ranges(
    image: &ImageGrid,
    bank: &FilterBank,
    win: &WindowSpec,
    ranges: &[BinRange],
) -> Result<HistogramFeatures> {
    if ranges.len() != bank.filters.len() {
        return Err(invalid("ranges", format!("{} ranges for {} filters", ranges.len(), bank.filters.len())));
    }
    let filtered = apply_bank(image, bank, win)?;
    histograms(image, bank, win, &filtered, ranges)
}

fn apply_bank(image: &ImageGrid, bank: &FilterBank, win: &WindowSpec) -> Result<Vec<Vec<f64>>> {
    win.check_fits(image.width(), image.height())?;
    for f in &bank.filters {
        f.validate(image.channels())?;
    }
    Ok(bank.filters.iter().map(|f| f.apply(image)).collect())
}

fn histograms(
    image: &ImageGrid,
    bank: &FilterBank,
    win: &WindowSpec,
    filtered: &[Vec<f64>],
    ranges: &[BinRange],
) -> Result<HistogramFeatures> {
    let (w, h) = (image.width(), image.height());
    let q = bank.bins;
    let s = win.s;
    let side = 2 * s + 1;
    let norm = 1.0 / (side * side) as f64;
    let m = bank.dimension();
    let mut data = DMatrix::<f64>::zeros(m, w * h);
    let mut degenerate = Vec::new();

    let pw = w + 2 * s;
    let ph = h + 2 * s;
    let pad = |i: isize, len: usize| match win.padding {
        Padding::Mirror => mirror_index(i, len),
        Padding::Clamp => i.clamp(0, len as isize - 1) as usize,
    };
    let mut bin_of = vec![0u16; pw * ph];
    let mut integral = vec![0u32; (pw + 1) * (ph + 1)];

    for (fi, (g, &(lo, hi))) in filtered.iter().zip(ranges).enumerate() {
        let width = hi - lo;
        let is_degenerate = !(width > 0.0);
        if is_degenerate {
            degenerate.push(fi);
        }
        let bin = |v: f64| -> u16 {
            if is_degenerate {
                return (q - 1) as u16;
            }
            let t = ((v - lo) / width * q as f64).floor();
            t.clamp(0.0, (q - 1) as f64) as u16
        };
        for py in 0..ph {
            let sy = pad(py as isize - s as isize, h);
            for px in 0..pw {
                let sx = pad(px as isize - s as isize, w);
                bin_of[py * pw + px] = bin(g[sy * w + sx]);
            }
        }
        for b in 0..q {
            // summed-area table of the bin indicator over the padded image
            for py in 0..ph {
                let mut row_sum = 0u32;
                for px in 0..pw {
                    row_sum += (bin_of[py * pw + px] as usize == b) as u32;
                    integral[(py + 1) * (pw + 1) + px + 1] = integral[py * (pw + 1) + px + 1] + row_sum;
                }
            }
            let row = fi * q + b;
            for y in 0..h {
                for x in 0..w {
                    let (x1, y1) = (x + side, y + side);
                    let count = integral[y1 * (pw + 1) + x1] + integral[y * (pw + 1) + x]
                        - integral[y * (pw + 1) + x1]
                        - integral[y1 * (pw + 1) + x];
                    data[(row, y * w + x)] = count as f64 * norm;
                }
            }
        }
    }

    Ok(HistogramFeatures {
        features: FeatureMatrix::new(w, h, data)?,
        degenerate_filters: degenerate,
    })
}
