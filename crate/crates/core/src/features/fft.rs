//! Windowed 2D-FFT modulus features.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{FeatureMatrix, WindowSpec};
use crate::error::{invalid, Result};
use crate::grid::ImageGrid;

/// Modulus of the 2D DFT of the raw `(2s+1)^2` window around every pixel
/// whose window lies fully inside the image.
///
/// The result covers the interior `(width - 2s) x (height - 2s)` grid; pixel
/// `(x, y)` of the feature grid is image pixel `(x + s, y + s)`. Entry
/// `ky * side + kx` of a column holds `|DFT[ky][kx]|`.
pub fn fft_modulus(image: &ImageGrid, win: &WindowSpec) -> Result<FeatureMatrix> {
    if image.channels() != 1 {
        return Err(invalid("image", "FFT modulus features need a single-channel image"));
    }
    win.check_fits(image.width(), image.height())?;
    let s = win.s;
    let side = 2 * s + 1;
    let (w, h) = (image.width(), image.height());
    let (iw, ih) = (w - 2 * s, h - 2 * s);
    let m = side * side;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(side);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut rows = vec![Complex64::default(); m];
    let mut cols = vec![Complex64::default(); m];
    let src = image.values();
    let mut data = DMatrix::<f64>::zeros(m, iw * ih);

    for y in 0..ih {
        for x in 0..iw {
            for wy in 0..side {
                let start = (y + wy) * w + x;
                for (dst, &v) in rows[wy * side..(wy + 1) * side].iter_mut().zip(&src[start..start + side]) {
                    *dst = Complex64::new(v, 0.0);
                }
            }
            fft.process_with_scratch(&mut rows, &mut scratch);
            // cols[kx * side + wy] = rows[wy * side + kx]
            for wy in 0..side {
                for kx in 0..side {
                    cols[kx * side + wy] = rows[wy * side + kx];
                }
            }
            fft.process_with_scratch(&mut cols, &mut scratch);
            let mut column = data.column_mut(y * iw + x);
            for kx in 0..side {
                for ky in 0..side {
                    column[ky * side + kx] = cols[kx * side + ky].norm();
                }
            }
        }
    }
    FeatureMatrix::new(iw, ih, data)
}
