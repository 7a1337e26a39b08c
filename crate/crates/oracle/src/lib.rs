//! Slow, obviously-correct reference computations for tests. Nothing here
//! shares code with the main library.

use itertools::Itertools;

/// Euclidean projection onto the probability simplex by enumerating every
/// support set: on a fixed support `S` the minimiser is `y_S` shifted by a
/// common constant to sum to one, and the projection is the closest
/// feasible such candidate.
pub fn simplex_projection(y: &[f64]) -> Vec<f64> {
    let k = y.len();
    assert!((1..=16).contains(&k), "support enumeration needs 1..=16 entries");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| y[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; k];
        for &i in &support {
            x[i] = y[i] - shift;
        }
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("the single-vertex supports are always feasible").1
}

/// Hard-label partition energy: data cost plus `lambda` times twice the
/// number of 4-neighbour pixel pairs with different labels. `f` is
/// pixel-major, `f[i * k + l]`.
pub fn partition_energy(f: &[f64], width: usize, height: usize, k: usize, labels: &[usize], lambda: f64) -> f64 {
    let mut e = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        e += f[i * k + l];
    }
    let mut cut = 0.0;
    for y in 0..height {
        for x in 0..width {
            let here = labels[y * width + x];
            if x + 1 < width && labels[y * width + x + 1] != here {
                cut += 1.0;
            }
            if y + 1 < height && labels[(y + 1) * width + x] != here {
                cut += 1.0;
            }
        }
    }
    e + lambda * 2.0 * cut
}

/// Minimum partition energy over all `k^n` labelings.
pub fn partition_minimum(f: &[f64], width: usize, height: usize, k: usize, lambda: f64) -> (Vec<usize>, f64) {
    let n = width * height;
    assert!((k as f64).powi(n as i32) <= 1e7, "search space too large");
    let mut labels = vec![0usize; n];
    let mut best = (labels.clone(), partition_energy(f, width, height, k, &labels, lambda));
    loop {
        // odometer increment
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        let e = partition_energy(f, width, height, k, &labels, lambda);
        if e < best.1 {
            best = (labels.clone(), e);
        }
    }
}

/// Largest number of agreeing pixels over every injective relabeling of
/// `pred` (labels `1..`) onto `truth` labels.
pub fn best_overlap(pred: &[u32], truth: &[u32]) -> u64 {
    let pk = *pred.iter().max().unwrap_or(&0) as usize;
    let tk = *truth.iter().max().unwrap_or(&0) as usize;
    let slots = pk.max(tk);
    assert!(slots <= 8, "permutation search limited to 8 labels");
    let mut best = 0;
    for perm in (1..=slots as u32).permutations(slots) {
        let hits = pred.iter().zip(truth).filter(|(&p, &t)| perm[p as usize - 1] == t).count() as u64;
        best = best.max(hits);
    }
    best
}

/// Index of the nearest point by a plain scan (first on ties).
pub fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (l, c) in centers.iter().enumerate() {
        let d: f64 = point.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best = l;
            best_d = d;
        }
    }
    best
}

/// Squared distances `|a_i - c_l|^2` between feature columns and means.
pub fn feature_indicator(columns: &[Vec<f64>], means: &[Vec<f64>]) -> Vec<Vec<f64>> {
    columns
        .iter()
        .map(|a| means.iter().map(|c| a.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum()).collect())
        .collect()
}
