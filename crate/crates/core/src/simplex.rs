//! Euclidean projection onto the probability simplex.

use crate::error::{invalid, Result, SegError};

/// Components this close to zero after shifting are clamped.
const ZERO_TOL: f64 = 1e-15;
/// Inputs already on the simplex within this tolerance are returned as is.
const ON_SIMPLEX_TOL: f64 = 1e-12;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Projects `v` onto `{w : w >= 0, sum w = 1}`.
pub fn project_simplex(v: &[f64]) -> Result<SimplexPoint> {
    if v.is_empty() {
        return Err(invalid("v", "simplex projection needs at least one component"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SegError::NonFinite("simplex projection input".into()));
    }
    let mut w = v.to_vec();
    project_simplex_in_place(&mut w);
    Ok(SimplexPoint(w))
}

/// In-place variant of [`project_simplex`]; `v` must be non-empty and finite.
///
/// Shift-and-clamp iteration on the shrinking support: every pass removes
/// at least one coordinate or terminates, so at most `k` passes run.
pub fn project_simplex_in_place(v: &mut [f64]) {
    let k = v.len();
    debug_assert!(k > 0);
    if k == 1 {
        v[0] = 1.0;
        return;
    }
    if v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= ON_SIMPLEX_TOL {
        return;
    }

    // Subtracting the max keeps the result bit-identical under uniform shifts.
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x -= top);

    let mut active = k;
    let shift = loop {
        let sum: f64 = v.iter().filter(|x| x.is_finite()).sum();
        let shift = (sum - 1.0) / active as f64;
        let mut removed = 0;
        for x in v.iter_mut() {
            if x.is_finite() && *x - shift <= ZERO_TOL {
                *x = f64::NEG_INFINITY;
                removed += 1;
            }
        }
        if removed == 0 {
            break shift;
        }
        active -= removed;
        if active == 0 {
            unreachable!("simplex projection lost its whole support");
        }
    };
    for x in v.iter_mut() {
        *x = if x.is_finite() { *x - shift } else { 0.0 };
    }
}
