//! End-to-end pipeline: features, PCA coefficients, clustered initial
//! means, then a fixed number of outer rounds alternating a warm-started
//! primal-dual solve with a mean update in coefficient space.

use nalgebra::DMatrix;

use crate::error::{invalid, Result, SegError};
use crate::features::FeatureSpec;
use crate::grid::ImageGrid;
use crate::init::{edgeness, gather_points, initial_labeling, kmeans, select_interior, KMeansOptions};
use crate::metrics::SegMask;
use crate::pca::{estimate_segment_count, fidelity_error_bound, fit_pca, CoefficientField, RETAINED_SPECTRUM};
use crate::solver::{fidelity, relaxed_energy, solve, DualField, IndicatorField, LabelField, SolverParams};

/// Number of segments: given, or estimated from the PCA spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentCount {
    Known(usize),
    Estimate { omega: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    pub features: FeatureSpec,
    pub segments: SegmentCount,
    /// PCA dimension; defaults to the segment count.
    pub components: Option<usize>,
    /// Edgeness threshold factor for excluding boundary pixels from
    /// clustering.
    pub delta: f64,
    pub outer_iters: usize,
    pub solver: SolverParams,
    pub kmeans: KMeansOptions,
    pub seed: u64,
}

impl SegmentationConfig {
    /// Three outer rounds, default solver steps, seed 0.
    pub fn new(features: FeatureSpec, segments: SegmentCount, lambda: f64, delta: f64) -> Self {
        Self {
            features,
            segments,
            components: None,
            delta,
            outer_iters: 3,
            solver: SolverParams::with_lambda(lambda),
            kmeans: KMeansOptions::default(),
            seed: 0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.solver.lambda
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        self.features.validate(width, height)?;
        match self.segments {
            SegmentCount::Known(k) if k < 2 => return Err(invalid("k", format!("{k} segments requested, need at least 2"))),
            SegmentCount::Estimate { omega } if !(omega > 0.0) || !omega.is_finite() => {
                return Err(invalid("omega", format!("{omega} must be positive")))
            }
            _ => {}
        }
        if self.components == Some(0) {
            return Err(invalid("components", "must be at least 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(invalid("delta", format!("{} must be positive", self.delta)));
        }
        if self.outer_iters < 1 {
            return Err(invalid("outer_iters", "must be at least 1"));
        }
        if self.kmeans.restarts < 1 {
            return Err(invalid("restarts", "must be at least 1"));
        }
        self.solver.validate()
    }
}

/// Data term before and after one mean update, at fixed labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanUpdateCheck {
    pub round: usize,
    pub before: f64,
    pub after: f64,
}

impl MeanUpdateCheck {
    /// True unless the update raised the data term beyond round-off.
    pub fn non_increasing(&self) -> bool {
        self.after <= self.before + 1e-9 * self.before.abs() + f64::MIN_POSITIVE
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub k: usize,
    pub estimated_k: Option<usize>,
    pub components: usize,
    /// `2 * sum` of discarded eigenvalues: worst-case indicator error from
    /// the PCA truncation.
    pub fidelity_bound: f64,
    pub margin: usize,
    pub degenerate_filters: Vec<usize>,
    pub clustered_points: usize,
    pub clustering_fell_back: bool,
    pub kmeans_inertia: f64,
    /// Primal-dual passes per outer round.
    pub inner_iterations: Vec<usize>,
    pub inner_converged: Vec<bool>,
    pub mean_updates: Vec<MeanUpdateCheck>,
    /// `(round, label)` pairs (0-based) whose soft mass vanished; the
    /// previous mean was kept.
    pub empty_labels: Vec<(usize, usize)>,
}

impl Diagnostics {
    pub fn mean_updates_non_increasing(&self) -> bool {
        self.mean_updates.iter().all(MeanUpdateCheck::non_increasing)
    }

    /// Whether every warm-started round needed fewer passes than the first.
    pub fn warm_starts_faster(&self) -> bool {
        match self.inner_iterations.split_first() {
            Some((first, rest)) => rest.iter().all(|t| t < first),
            None => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Full-extent hard mask, labels `1..=k`.
    pub mask: SegMask,
    /// Soft labeling on the feature grid (inset by `diagnostics.margin`).
    pub soft: LabelField,
    /// Segment means in coefficient space, one column per label.
    pub means_coeff: DMatrix<f64>,
    /// Segment means mapped back to feature space.
    pub means_feature: DMatrix<f64>,
    /// Relaxed energy after each outer round.
    pub energy_trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn check_means(alpha: &CoefficientField, gamma: &DMatrix<f64>) -> Result<()> {
    if gamma.nrows() != alpha.dim() || gamma.ncols() == 0 {
        return Err(SegError::DimensionMismatch(format!(
            "{}x{} means for coefficients of dimension {}",
            gamma.nrows(),
            gamma.ncols(),
            alpha.dim()
        )));
    }
    Ok(())
}

/// `f_li = |alpha_i - gamma_l|^2`.
pub fn indicator_from_coefficients(alpha: &CoefficientField, gamma: &DMatrix<f64>) -> Result<IndicatorField> {
    check_means(alpha, gamma)?;
    let (r, k) = gamma.shape();
    let g = gamma.as_slice();
    let mut f = Vec::with_capacity(alpha.len() * k);
    for i in 0..alpha.len() {
        let a = alpha.column(i);
        for l in 0..k {
            f.push(a.iter().zip(&g[l * r..(l + 1) * r]).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    IndicatorField::new(alpha.width(), alpha.height(), k, f)
}

/// New means and the labels whose mass was zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanUpdate {
    pub gamma: DMatrix<f64>,
    pub empty: Vec<usize>,
}

/// `gamma_l = sum_i u_li alpha_i / sum_i u_li`; a label with zero mass
/// keeps its previous mean.
pub fn update_means(alpha: &CoefficientField, u: &LabelField, previous: &DMatrix<f64>) -> Result<MeanUpdate> {
    check_means(alpha, previous)?;
    let (r, k) = previous.shape();
    if u.k() != k || u.pixels() != alpha.len() {
        return Err(SegError::DimensionMismatch(format!(
            "labeling of {} pixels x {} labels for {} pixels x {k} means",
            u.pixels(),
            u.k(),
            alpha.len()
        )));
    }
    let mut sums = vec![0.0; r * k];
    let mut mass = vec![0.0; k];
    for i in 0..alpha.len() {
        let a = alpha.column(i);
        for (l, &w) in u.pixel(i).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            mass[l] += w;
            for (s, &x) in sums[l * r..(l + 1) * r].iter_mut().zip(a) {
                *s += w * x;
            }
        }
    }
    let mut gamma = previous.clone();
    let mut empty = Vec::new();
    for l in 0..k {
        if mass[l] > 0.0 {
            for c in 0..r {
                gamma[(c, l)] = sums[l * r + c] / mass[l];
            }
        } else {
            empty.push(l);
        }
    }
    Ok(MeanUpdate { gamma, empty })
}

/// Output of the alternating loop.
#[derive(Debug, Clone)]
pub struct AlternatingOutcome {
    pub u: LabelField,
    pub p: DualField,
    pub gamma: DMatrix<f64>,
    pub energy_trace: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub inner_converged: Vec<bool>,
    pub mean_updates: Vec<MeanUpdateCheck>,
    pub empty_labels: Vec<(usize, usize)>,
}

/// Runs `outer_iters` rounds from the initial means `gamma0`: hard nearest
/// mean labeling and zero duals, then per round an indicator from the
/// current means, a warm-started solve and a mean update.
pub fn run_alternating(
    alpha: &CoefficientField,
    gamma0: &DMatrix<f64>,
    outer_iters: usize,
    solver: &SolverParams,
) -> Result<AlternatingOutcome> {
    if outer_iters < 1 {
        return Err(invalid("outer_iters", "must be at least 1"));
    }
    let mut u = initial_labeling(alpha, gamma0)?;
    let k = gamma0.ncols();
    let mut p = DualField::zeros(alpha.width(), alpha.height(), k);
    let mut gamma = gamma0.clone();
    let mut out = AlternatingOutcome {
        u: u.clone(),
        p: p.clone(),
        gamma: gamma.clone(),
        energy_trace: Vec::with_capacity(outer_iters),
        inner_iterations: Vec::with_capacity(outer_iters),
        inner_converged: Vec::with_capacity(outer_iters),
        mean_updates: Vec::with_capacity(outer_iters),
        empty_labels: Vec::new(),
    };
    for round in 0..outer_iters {
        let f = indicator_from_coefficients(alpha, &gamma)?;
        let step = solve(&f, &u, &p, solver)?;
        u = step.u;
        p = step.p;
        out.energy_trace.push(relaxed_energy(&f, &u, solver.lambda));
        out.inner_iterations.push(step.iterations);
        out.inner_converged.push(step.converged);

        let update = update_means(alpha, &u, &gamma)?;
        let check = MeanUpdateCheck {
            round,
            before: fidelity(&f, &u),
            after: fidelity(&indicator_from_coefficients(alpha, &update.gamma)?, &u),
        };
        debug_assert!(check.non_increasing(), "mean update raised the data term: {check:?}");
        out.mean_updates.push(check);
        out.empty_labels.extend(update.empty.iter().map(|&l| (round, l)));
        gamma = update.gamma;
    }
    out.u = u;
    out.p = p;
    out.gamma = gamma;
    Ok(out)
}

/// Expands a mask on the feature grid (inset by `margin`) to the full
/// image by repeating the nearest feature pixel.
pub fn extend_mask(labels: &[usize], inner_w: usize, inner_h: usize, margin: usize) -> Vec<usize> {
    if margin == 0 {
        return labels.to_vec();
    }
    let (w, h) = (inner_w + 2 * margin, inner_h + 2 * margin);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let iy = y.saturating_sub(margin).min(inner_h - 1);
        for x in 0..w {
            let ix = x.saturating_sub(margin).min(inner_w - 1);
            out.push(labels[iy * inner_w + ix]);
        }
    }
    out
}

/// Segments `image` into `k` regions.
pub fn segment(image: &ImageGrid, config: &SegmentationConfig) -> Result<SegmentationResult> {
    config.validate(image.width(), image.height())?;
    let extracted = config.features.extract(image)?;
    let features = &extracted.features;
    let n = features.len();
    let full_rank = features.dim().min(n);

    let (k, estimated_k, model, alpha) = match config.segments {
        SegmentCount::Known(k) => {
            let r = config.components.unwrap_or(k);
            let (model, alpha) = fit_pca(features, r)?;
            (k, None, model, alpha)
        }
        SegmentCount::Estimate { omega } => {
            let probe = config.components.unwrap_or(0).max(RETAINED_SPECTRUM).min(full_rank);
            let (model, alpha) = fit_pca(features, probe)?;
            let k = estimate_segment_count(&model, n, omega)?;
            let r = config.components.unwrap_or(k);
            if r > model.rank() {
                return Err(invalid("components", format!("{r} exceeds the {} fitted components", model.rank())));
            }
            (k, Some(k), model.truncated(r)?, alpha.truncated(r))
        }
    };
    let r = alpha.dim();

    let s = config.features.primary_s();
    let edge = edgeness(&alpha, s)?;
    let selection = select_interior(&edge, config.delta, k)?;
    let points = gather_points(&alpha, &selection.indices);
    let clusters = kmeans(&points, k, config.seed, config.kmeans)?;

    let run = run_alternating(&alpha, &clusters.centers, config.outer_iters, &config.solver)?;

    let margin = extracted.margin;
    let inner = run.u.hard_labels();
    let labels = extend_mask(&inner, alpha.width(), alpha.height(), margin);
    let mask = SegMask::from_zero_based(image.width(), image.height(), &labels)?;
    let means_feature = model.to_features(&run.gamma);

    let diagnostics = Diagnostics {
        k,
        estimated_k,
        components: r,
        fidelity_bound: fidelity_error_bound(&model, r.min(model.eigenvalues().len()))?,
        margin,
        degenerate_filters: extracted.degenerate_filters.clone(),
        clustered_points: selection.indices.len(),
        clustering_fell_back: selection.fell_back,
        kmeans_inertia: clusters.inertia,
        inner_iterations: run.inner_iterations,
        inner_converged: run.inner_converged,
        mean_updates: run.mean_updates,
        empty_labels: run.empty_labels,
    };
    Ok(SegmentationResult {
        mask,
        soft: run.u,
        means_coeff: run.gamma,
        means_feature,
        energy_trace: run.energy_trace,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coeffs(w: usize, h: usize, r: usize, data: Vec<f64>) -> CoefficientField {
        CoefficientField::new(w, h, DMatrix::from_vec(r, w * h, data)).unwrap()
    }

    #[test]
    fn indicator_arithmetic() {
        let alpha = coeffs(1, 1, 1, vec![2.0]);
        let gamma = DMatrix::from_row_slice(1, 2, &[0.0, 3.0]);
        let f = indicator_from_coefficients(&alpha, &gamma).unwrap();
        assert_eq!(f.values(), &[4.0, 1.0]);
        let at = indicator_from_coefficients(&coeffs(1, 1, 1, vec![3.0]), &gamma).unwrap();
        assert_eq!(at.values()[1], 0.0);
    }

    #[test]
    fn hard_update_is_region_mean() {
        let alpha = coeffs(4, 1, 1, vec![1.0, 3.0, 10.0, 20.0]);
        let u = LabelField::one_hot(4, 1, 2, &[0, 0, 1, 1]).unwrap();
        let up = update_means(&alpha, &u, &DMatrix::zeros(1, 2)).unwrap();
        assert_eq!(up.gamma.as_slice(), &[2.0, 15.0]);
        assert!(up.empty.is_empty());
    }

    #[test]
    fn uniform_update_is_global_mean() {
        let alpha = coeffs(3, 1, 2, vec![1.0, 0.0, 2.0, 3.0, 6.0, -3.0]);
        let u = LabelField::uniform(3, 1, 3);
        let up = update_means(&alpha, &u, &DMatrix::zeros(2, 3)).unwrap();
        for l in 0..3 {
            assert!((up.gamma[(0, l)] - 3.0).abs() < 1e-15);
            assert!(up.gamma[(1, l)].abs() < 1e-15);
        }
    }

    #[test]
    fn empty_label_keeps_previous_mean() {
        let alpha = coeffs(2, 1, 1, vec![1.0, 5.0]);
        let u = LabelField::one_hot(2, 1, 3, &[0, 2]).unwrap();
        let prev = DMatrix::from_row_slice(1, 3, &[9.0, 7.0, 9.0]);
        let up = update_means(&alpha, &u, &prev).unwrap();
        assert_eq!(up.gamma.as_slice(), &[1.0, 7.0, 5.0]);
        assert_eq!(up.empty, vec![1]);
    }

    #[test]
    fn soft_update_matches_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h, r, k) = (5, 4, 3, 3);
        let alpha = coeffs(w, h, r, (0..w * h * r).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let mut u = Vec::new();
        for _ in 0..w * h {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            u.extend(raw.iter().map(|v| v / s));
        }
        let u = LabelField::from_values(w, h, k, u).unwrap();
        let up = update_means(&alpha, &u, &DMatrix::zeros(r, k)).unwrap();
        for l in 0..k {
            let mass: f64 = (0..w * h).map(|i| u.pixel(i)[l]).sum();
            for c in 0..r {
                let num: f64 = (0..w * h).map(|i| u.pixel(i)[l] * alpha.column(i)[c]).sum();
                assert!((up.gamma[(c, l)] - num / mass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_extension_repeats_edges() {
        let inner = vec![0, 1, 2, 3];
        let out = extend_mask(&inner, 2, 2, 1);
        #[rustfmt::skip]
        let expected = vec![
            0, 0, 1, 1,
            0, 0, 1, 1,
            2, 2, 3, 3,
            2, 2, 3, 3,
        ];
        assert_eq!(out, expected);
    }

    #[test]
    fn config_validation() {
        use crate::features::{FeatureKind, FeatureSpec};
        let spec = FeatureSpec::single(FeatureKind::FftModulus, 3);
        let ok = SegmentationConfig::new(spec.clone(), SegmentCount::Known(2), 1.0, 0.5);
        assert!(ok.validate(20, 20).is_ok());
        assert!(SegmentationConfig::new(spec.clone(), SegmentCount::Known(1), 1.0, 0.5).validate(20, 20).is_err());
        assert!(SegmentationConfig::new(spec.clone(), SegmentCount::Known(2), 1.0, 0.0).validate(20, 20).is_err());
        assert!(SegmentationConfig::new(spec.clone(), SegmentCount::Estimate { omega: 0.0 }, 1.0, 0.5)
            .validate(20, 20)
            .is_err());
        assert!(ok.validate(6, 6).is_err());
        let mut zero_rounds = ok.clone();
        zero_rounds.outer_iters = 0;
        assert!(zero_rounds.validate(20, 20).is_err());
    }
}
