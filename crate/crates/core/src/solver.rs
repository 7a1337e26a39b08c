//! First-order primal-dual solver for the convex-relaxed multi-label
//! partition energy
//!
//! ```text
//! min_{u in U} max_{|p_li| <= 1}  sum_li f_li u_li + lambda <(K u_l)_i, p_li>
//! ```
//!
//! where `U` constrains every pixel's label vector to the probability
//! simplex and `K` is the forward-difference gradient from [`crate::grid`].

use crate::error::{invalid, Result, SegError};
use crate::grid::{divergence_interleaved, gradient_interleaved, total_variation_interleaved};
use crate::simplex::project_simplex_in_place;

/// Soft labeling: `u[i * k + l]` is the weight of label `l` at pixel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    width: usize,
    height: usize,
    k: usize,
    u: Vec<f64>,
}

impl LabelField {
    /// Every pixel at `1/k`.
    pub fn uniform(width: usize, height: usize, k: usize) -> Self {
        assert!(k >= 1);
        Self {
            width,
            height,
            k,
            u: vec![1.0 / k as f64; width * height * k],
        }
    }

    /// Hard labeling from 0-based labels.
    pub fn one_hot(width: usize, height: usize, k: usize, labels: &[usize]) -> Result<Self> {
        if labels.len() != width * height {
            return Err(SegError::DimensionMismatch(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        let mut u = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(invalid("labels", format!("label {l} out of range for k = {k}")));
            }
            u[i * k + l] = 1.0;
        }
        Ok(Self { width, height, k, u })
    }

    /// Validates that each pixel row lies on the simplex (within 1e-9).
    pub fn from_values(width: usize, height: usize, k: usize, u: Vec<f64>) -> Result<Self> {
        if k == 0 || u.len() != width * height * k {
            return Err(SegError::DimensionMismatch(format!(
                "label field of {} values for {width}x{height}x{k}",
                u.len()
            )));
        }
        for (i, row) in u.chunks_exact(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= -1e-9)) || (sum - 1.0).abs() > 1e-9 {
                return Err(invalid("u", format!("pixel {i} is not on the simplex: {row:?}")));
            }
        }
        Ok(Self { width, height, k, u })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.u[i * self.k..(i + 1) * self.k]
    }

    /// 0-based argmax per pixel; ties go to the lowest label.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.u
            .chunks_exact(self.k)
            .map(|row| {
                let mut best = 0;
                for (l, &x) in row.iter().enumerate().skip(1) {
                    if x > row[best] {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }
}

/// Dual variables: one 2-vector per pixel and label, same layout as [`LabelField`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    width: usize,
    height: usize,
    k: usize,
    p: Vec<[f64; 2]>,
}

impl DualField {
    pub fn zeros(width: usize, height: usize, k: usize) -> Self {
        Self {
            width,
            height,
            k,
            p: vec![[0.0; 2]; width * height * k],
        }
    }

    pub fn from_values(width: usize, height: usize, k: usize, p: Vec<[f64; 2]>) -> Result<Self> {
        if p.len() != width * height * k {
            return Err(SegError::DimensionMismatch(format!(
                "dual field of {} vectors for {width}x{height}x{k}",
                p.len()
            )));
        }
        Ok(Self { width, height, k, p })
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.p
    }

    pub fn max_norm(&self) -> f64 {
        self.p.iter().map(|q| q[0].hypot(q[1])).fold(0.0, f64::max)
    }
}

/// Per-pixel label costs, `f[i * k + l] >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    width: usize,
    height: usize,
    k: usize,
    f: Vec<f64>,
}

impl IndicatorField {
    pub fn new(width: usize, height: usize, k: usize, f: Vec<f64>) -> Result<Self> {
        if k == 0 || f.len() != width * height * k {
            return Err(SegError::DimensionMismatch(format!(
                "indicator of {} values for {width}x{height}x{k}",
                f.len()
            )));
        }
        if let Some(pos) = f.iter().position(|x| !x.is_finite()) {
            return Err(SegError::NonFinite(format!(
                "indicator at pixel {} label {}",
                pos / k,
                pos % k
            )));
        }
        if let Some(pos) = f.iter().position(|&x| x < 0.0) {
            return Err(invalid("f", format!("negative cost at pixel {} label {}", pos / k, pos % k)));
        }
        Ok(Self { width, height, k, f })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    /// Same costs multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            f: self.f.iter().map(|x| x * c).collect(),
            ..self.clone()
        }
    }
}

/// Step sizes, extrapolation, stopping rule and regularization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub t_max: usize,
    pub lambda: f64,
}

/// Upper bound on the squared gradient norm on any grid.
pub const GRADIENT_NORM_SQ_BOUND: f64 = 8.0;

impl SolverParams {
    /// Default steps `sigma = tau = 1/8`, `theta = 0.7`, `epsilon = 1e-3`,
    /// `t_max = 10000` with the given regularization weight.
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            sigma: 0.125,
            tau: 0.125,
            theta: 0.7,
            epsilon: 1e-3,
            t_max: 10_000,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid("sigma", "must be positive"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid("tau", "must be positive"));
        }
        if self.sigma * self.tau * GRADIENT_NORM_SQ_BOUND > 1.0 + 1e-12 {
            return Err(invalid(
                "sigma",
                format!("sigma * tau * 8 = {} exceeds 1", self.sigma * self.tau * 8.0),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid("theta", "must lie in [0, 1]"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.t_max < 1 {
            return Err(invalid("t_max", "must be at least 1"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be positive"));
        }
        Ok(())
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        Self::with_lambda(1.0)
    }
}

/// Projects every dual vector onto the closed unit disc.
pub fn resolvent_dual(p: &DualField) -> DualField {
    let mut out = p.clone();
    project_unit_discs(&mut out.p);
    out
}

fn project_unit_discs(p: &mut [[f64; 2]]) {
    for q in p.iter_mut() {
        let norm = q[0].hypot(q[1]);
        if norm > 1.0 {
            q[0] /= norm;
            q[1] /= norm;
        }
    }
}

/// `proj_U(u - (tau / lambda) f)` pixel by pixel.
pub fn resolvent_primal(u: &[f64], f: &IndicatorField, tau: f64, lambda: f64) -> Result<LabelField> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    if u.len() != f.f.len() {
        return Err(SegError::DimensionMismatch(format!(
            "{} label values vs {} indicator values",
            u.len(),
            f.f.len()
        )));
    }
    let mut out = u.to_vec();
    primal_step(&mut out, &f.f, f.k, tau / lambda);
    Ok(LabelField {
        width: f.width,
        height: f.height,
        k: f.k,
        u: out,
    })
}

fn primal_step(u: &mut [f64], f: &[f64], k: usize, step: f64) {
    for (row, cost) in u.chunks_exact_mut(k).zip(f.chunks_exact(k)) {
        for (x, c) in row.iter_mut().zip(cost) {
            *x -= step * c;
        }
        project_simplex_in_place(row);
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub u: LabelField,
    pub p: DualField,
    pub iterations: usize,
    /// RMS change of the extrapolated iterate in the final pass.
    pub final_change: f64,
    pub converged: bool,
}

/// Runs the primal-dual iteration from `(u0, p0)` until the RMS change of
/// the extrapolated iterate drops below `epsilon` or the pass counter
/// exceeds `t_max`. Returns the feasible (non-extrapolated) primal iterate.
pub fn solve(f: &IndicatorField, u0: &LabelField, p0: &DualField, params: &SolverParams) -> Result<SolveOutcome> {
    params.validate()?;
    let (w, h, k) = (f.width, f.height, f.k);
    if (u0.width, u0.height, u0.k) != (w, h, k) || (p0.width, p0.height, p0.k) != (w, h, k) {
        return Err(SegError::DimensionMismatch(format!(
            "indicator {w}x{h}x{k}, labels {}x{}x{}, duals {}x{}x{}",
            u0.width, u0.height, u0.k, p0.width, p0.height, p0.k
        )));
    }
    let len = w * h * k;
    let step = params.tau / params.lambda;

    let mut u_hat = u0.u.clone();
    let mut u_bar = u0.u.clone();
    let mut u_hat_prev = vec![0.0; len];
    let mut u_bar_prev = vec![0.0; len];
    let mut p = p0.p.clone();
    project_unit_discs(&mut p);
    let mut grad = vec![[0.0; 2]; len];
    let mut div = vec![0.0; len];

    let mut t = 0;
    let mut change;
    loop {
        gradient_interleaved(&u_bar, w, h, k, &mut grad);
        for (q, g) in p.iter_mut().zip(&grad) {
            q[0] += params.sigma * g[0];
            q[1] += params.sigma * g[1];
        }
        project_unit_discs(&mut p);

        divergence_interleaved(&p, w, h, k, &mut div);
        u_hat_prev.copy_from_slice(&u_hat);
        for (x, d) in u_hat.iter_mut().zip(&div) {
            *x += params.tau * d;
        }
        primal_step(&mut u_hat, &f.f, k, step);

        u_bar_prev.copy_from_slice(&u_bar);
        let mut sq = 0.0;
        for ((bar, (&now, &prev)), &old) in u_bar
            .iter_mut()
            .zip(u_hat.iter().zip(&u_hat_prev))
            .zip(&u_bar_prev)
        {
            *bar = now + params.theta * (now - prev);
            let d = *bar - old;
            sq += d * d;
        }
        change = (sq / len as f64).sqrt();
        t += 1;

        if !change.is_finite() {
            return Err(SegError::NonFinite(format!(
                "primal-dual iterate became non-finite after {t} passes; check indicator scaling against lambda"
            )));
        }
        if change < params.epsilon || t > params.t_max {
            break;
        }
    }

    Ok(SolveOutcome {
        u: LabelField { width: w, height: h, k, u: u_hat },
        p: DualField { width: w, height: h, k, p },
        iterations: t,
        final_change: change,
        converged: change < params.epsilon,
    })
}

/// Relaxed energy `sum_li f_li u_li + lambda sum_l TV(u_l)`.
pub fn relaxed_energy(f: &IndicatorField, u: &LabelField, lambda: f64) -> f64 {
    fidelity(f, u) + lambda * total_variation_interleaved(&u.u, u.width, u.height, u.k).iter().sum::<f64>()
}

/// Data term `sum_li f_li u_li`.
pub fn fidelity(f: &IndicatorField, u: &LabelField) -> f64 {
    f.f.iter().zip(&u.u).map(|(a, b)| a * b).sum()
}

/// Discrete partition energy of a hard labeling: data cost plus `lambda`
/// times the summed perimeters of all label sets, where each 4-neighbour
/// pixel edge separating two labels adds one unit to both perimeters.
pub fn potts_energy(f: &IndicatorField, labels: &[usize], lambda: f64) -> f64 {
    let (w, h, k) = (f.width, f.height, f.k);
    assert_eq!(labels.len(), w * h);
    let data: f64 = labels.iter().enumerate().map(|(i, &l)| f.f[i * k + l]).sum();
    let mut cuts = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && labels[i] != labels[i + 1] {
                cuts += 1;
            }
            if y + 1 < h && labels[i] != labels[i + w] {
                cuts += 1;
            }
        }
    }
    data + lambda * 2.0 * cuts as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_resolvent_examples() {
        let p = DualField::from_values(3, 1, 1, vec![[0.3, 0.4], [3.0, 4.0], [0.0, 0.0]]).unwrap();
        let r = resolvent_dual(&p);
        assert_eq!(r.values()[0], [0.3, 0.4]);
        assert!((r.values()[1][0] - 0.6).abs() < 1e-15 && (r.values()[1][1] - 0.8).abs() < 1e-15);
        assert_eq!(r.values()[2], [0.0, 0.0]);
    }

    #[test]
    fn primal_resolvent_examples() {
        let zero = IndicatorField::new(2, 1, 2, vec![0.0; 4]).unwrap();
        let u = [0.25, 0.75, 1.0, 0.0];
        assert_eq!(resolvent_primal(&u, &zero, 0.125, 1.0).unwrap().values(), &u);

        let f = IndicatorField::new(1, 1, 2, vec![0.0, 1.0]).unwrap();
        let r = resolvent_primal(&[0.5, 0.5], &f, 1.0, 1.0).unwrap();
        assert_eq!(r.values(), &[1.0, 0.0]);

        let same = IndicatorField::new(1, 1, 2, vec![3.0, 3.0]).unwrap();
        let r = resolvent_primal(&[0.3, 0.7], &same, 0.125, 0.5).unwrap();
        assert!((r.values()[0] - 0.3).abs() < 1e-15 && (r.values()[1] - 0.7).abs() < 1e-15);

        assert!(resolvent_primal(&[0.5, 0.5], &f, 1.0, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SolverParams::with_lambda(25.0).validate().is_ok());
        assert!(SolverParams::with_lambda(0.0).validate().is_err());
        let mut p = SolverParams::with_lambda(1.0);
        p.sigma = 2.0;
        assert!(p.validate().is_err());
        p = SolverParams::with_lambda(1.0);
        p.theta = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn uniform_indicator_keeps_uniform_labels() {
        let f = IndicatorField::new(6, 5, 3, vec![2.0; 90]).unwrap();
        let u0 = LabelField::uniform(6, 5, 3);
        let out = solve(&f, &u0, &DualField::zeros(6, 5, 3), &SolverParams::with_lambda(1.0)).unwrap();
        assert!(out.iterations <= 3, "{}", out.iterations);
        for &x in out.u.values() {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spatially_uniform_preference() {
        let (w, h) = (8, 7);
        let f: Vec<f64> = (0..w * h).flat_map(|_| [0.0, 1.0]).collect();
        let f = IndicatorField::new(w, h, 2, f).unwrap();
        let out = solve(&f, &LabelField::uniform(w, h, 2), &DualField::zeros(w, h, 2), &SolverParams::with_lambda(0.1))
            .unwrap();
        assert!(out.converged);
        assert!(out.u.hard_labels().iter().all(|&l| l == 0));
        assert!(out.u.values().chunks(2).all(|r| r[0] > 0.999));
    }

    fn planted(seed: u64, w: usize, h: usize) -> IndicatorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Vec::new();
        for _y in 0..h {
            for x in 0..w {
                let g = if x < w / 2 { 0.0 } else { 1.0 } + rng.gen_range(-0.4..0.4);
                f.push(g * g);
                f.push((g - 1.0) * (g - 1.0));
            }
        }
        IndicatorField::new(w, h, 2, f).unwrap()
    }

    #[test]
    fn invariants_hold_and_energy_decreases() {
        let f = planted(11, 12, 9);
        let params = SolverParams::with_lambda(0.3);
        let u0 = LabelField::uniform(12, 9, 2);
        let out = solve(&f, &u0, &DualField::zeros(12, 9, 2), &params).unwrap();
        assert!(out.p.max_norm() <= 1.0 + 1e-12);
        for row in out.u.values().chunks(2) {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(relaxed_energy(&f, &out.u, 0.3) <= relaxed_energy(&f, &u0, 0.3));
    }

    #[test]
    fn warm_start_at_fixed_point_stops_quickly() {
        let f = planted(12, 10, 10);
        let params = SolverParams::with_lambda(0.3);
        let first = solve(&f, &LabelField::uniform(10, 10, 2), &DualField::zeros(10, 10, 2), &params).unwrap();
        let again = solve(&f, &first.u, &first.p, &params).unwrap();
        assert!(again.iterations <= 5, "{}", again.iterations);
        let n = first.u.values().len() as f64;
        let rms = (first.u.values().iter().zip(again.u.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
        assert!(rms < 5.0 * params.epsilon, "{rms}");
        assert_eq!(first.u.hard_labels(), again.u.hard_labels());
    }

    #[test]
    fn scaling_f_and_lambda_together_is_neutral() {
        let f = planted(13, 6, 6);
        let mut params = SolverParams::with_lambda(0.2);
        params.t_max = 50;
        params.epsilon = 1e-14;
        let a = solve(&f, &LabelField::uniform(6, 6, 2), &DualField::zeros(6, 6, 2), &params).unwrap();
        let mut scaled_params = params;
        scaled_params.lambda *= 4.0;
        let b = solve(&f.scaled(4.0), &LabelField::uniform(6, 6, 2), &DualField::zeros(6, 6, 2), &scaled_params)
            .unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (x, y) in a.u.values().iter().zip(b.u.values()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn iteration_cap_is_literal() {
        let f = planted(14, 8, 8);
        let mut params = SolverParams::with_lambda(0.3);
        params.t_max = 3;
        params.epsilon = 1e-300;
        let out = solve(&f, &LabelField::uniform(8, 8, 2), &DualField::zeros(8, 8, 2), &params).unwrap();
        assert_eq!(out.iterations, 4);
        assert!(!out.converged);
    }

    #[test]
    fn rejects_mismatched_extents() {
        let f = planted(15, 4, 4);
        let err = solve(&f, &LabelField::uniform(4, 5, 2), &DualField::zeros(4, 4, 2), &SolverParams::default());
        assert!(matches!(err, Err(SegError::DimensionMismatch(_))));
    }

    #[test]
    fn potts_energy_counts_cut_edges_twice() {
        let f = IndicatorField::new(2, 2, 2, vec![0.0; 8]).unwrap();
        assert_eq!(potts_energy(&f, &[0, 1, 0, 1], 1.0), 4.0);
        assert_eq!(potts_energy(&f, &[0, 0, 0, 0], 1.0), 0.0);
    }

    #[test]
    fn hard_labels_break_ties_low() {
        let u = LabelField::from_values(2, 1, 3, vec![0.5, 0.5, 0.0, 0.2, 0.4, 0.4]).unwrap();
        assert_eq!(u.hard_labels(), vec![0, 1]);
    }
}
