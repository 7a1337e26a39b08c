use std::f64::consts::PI;

use featseg::features::{fft_modulus, spectral_histogram, FeatureMatrix, FilterBank, WindowSpec};
use featseg::grid::ImageGrid;
use featseg::synth::{add_gaussian_noise, half_plane_layout, render_crystal, render_texture_mosaic, GrainScene, LatticeSpec, Texture};

#[test]
fn noise_has_requested_spread_and_zero_mean() {
    let scene = GrainScene::two_grain(256, 256, LatticeSpec::square(8.0), 0.5).unwrap();
    let (clean, _) = render_crystal(&scene).unwrap();
    let peak = clean.max_value();
    let noisy = add_gaussian_noise(&clean, 1.0, 7).unwrap();
    let diff: Vec<f64> = noisy.values().iter().zip(clean.values()).map(|(a, b)| a - b).collect();
    let n = diff.len() as f64;
    let mean = diff.iter().sum::<f64>() / n;
    let std = (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - peak).abs() <= 0.02 * peak, "std {std} vs {peak}");
    assert!(mean.abs() < 3.0 * std / n.sqrt());
    assert!(noisy.values().iter().any(|&v| v < 0.0), "noise must not be clamped");

    let other = add_gaussian_noise(&clean, 1.0, 8).unwrap();
    assert_ne!(other, noisy);
    assert_eq!(add_gaussian_noise(&clean, 1.0, 7).unwrap(), noisy);
}

/// Between-group mean distance over the largest within-group RMS spread,
/// using only pixels whose `x` lies in the given ranges.
fn separation(f: &FeatureMatrix, left: std::ops::Range<usize>, right: std::ops::Range<usize>) -> f64 {
    let group = |xs: &std::ops::Range<usize>| -> Vec<&[f64]> {
        (0..f.height()).flat_map(|y| xs.clone().map(move |x| y * f.width() + x)).map(|i| f.column(i)).collect()
    };
    let stats = |cols: &[&[f64]]| {
        let m = cols[0].len();
        let mut mean = vec![0.0; m];
        for c in cols {
            for (a, v) in mean.iter_mut().zip(c.iter()) {
                *a += v / cols.len() as f64;
            }
        }
        let spread = (cols
            .iter()
            .map(|c| c.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / cols.len() as f64)
            .sqrt();
        (mean, spread)
    };
    let (ma, sa) = stats(&group(&left));
    let (mb, sb) = stats(&group(&right));
    let between = ma.iter().zip(&mb).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    between / sa.max(sb)
}

#[test]
fn rotated_grains_separate_in_fourier_features() {
    let s = 15;
    let scene = GrainScene::two_grain(128, 96, LatticeSpec::square(8.0), 30f64.to_radians()).unwrap();
    let (img, _) = render_crystal(&scene).unwrap();
    let f = fft_modulus(&img, &WindowSpec::mirror(s)).unwrap();
    // feature x maps to image x + s; the boundary sits at image x = 64
    let ratio = separation(&f, 0..64 - 2 * s, 64..f.width());
    assert!(ratio >= 5.0, "ratio {ratio}");
}

#[test]
fn orthogonal_gratings_separate_in_gabor_histograms() {
    let layout = half_plane_layout(96, 64).unwrap();
    let tex = [
        Texture::Sinusoid { period: 8.0, orientation: 0.0 },
        Texture::Sinusoid { period: 8.0, orientation: PI / 2.0 },
    ];
    let (img, _) = render_texture_mosaic(&layout, &tex, 0).unwrap();
    let bank = FilterBank::gabor(&[5.0, 7.0, 9.0], &[0.0, PI / 2.0, PI / 4.0, -PI / 4.0], 11).unwrap();
    let s = 10;
    let out = spectral_histogram(&img, &bank, &WindowSpec::mirror(s)).unwrap();
    let ratio = separation(&out.features, 0..48 - s, 48 + s..96);
    assert!(ratio > 3.0, "ratio {ratio}");
}

#[test]
fn crystal_rendering_is_deterministic_with_exact_truth() {
    let scene = GrainScene::two_grain(40, 30, LatticeSpec::hexagonal(6.0), 0.2).unwrap();
    let (a, ma) = render_crystal(&scene).unwrap();
    let (b, mb) = render_crystal(&scene).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_eq!(ma, half_plane_layout(40, 30).unwrap());
    let _: &ImageGrid = &a;
}
