//! Initial means for the alternating segmentation loop: an edgeness score
//! flags pixels whose windows straddle a region boundary, the remaining
//! coefficients are clustered with seeded k-means, and every pixel is then
//! hard-assigned to its nearest center.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result, SegError};
use crate::pca::CoefficientField;
use crate::solver::LabelField;

/// Per-pixel edgeness: summed coefficient distances to the four pixels at
/// offset `s` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgenessField {
    width: usize,
    height: usize,
    delta: Vec<f64>,
}

impl EdgenessField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.delta
    }

    pub fn mean(&self) -> f64 {
        if self.delta.is_empty() {
            return 0.0;
        }
        self.delta.iter().sum::<f64>() / self.delta.len() as f64
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Edgeness of every pixel. Neighbors outside the grid contribute nothing.
pub fn edgeness(alpha: &CoefficientField, s: usize) -> Result<EdgenessField> {
    if s == 0 {
        return Err(invalid("s", "edgeness offset must be at least 1"));
    }
    let (w, h) = (alpha.width(), alpha.height());
    let mut delta = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let a = alpha.column(i);
            let mut sum = 0.0;
            let mut add = |j: usize| sum += sq_dist(a, alpha.column(j)).sqrt();
            if x >= s {
                add(i - s);
            }
            if x + s < w {
                add(i + s);
            }
            if y >= s {
                add(i - s * w);
            }
            if y + s < h {
                add(i + s * w);
            }
            delta[i] = sum;
        }
    }
    Ok(EdgenessField { width: w, height: h, delta })
}

/// Pixels kept for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSelection {
    /// Pixel indices in increasing order.
    pub indices: Vec<usize>,
    /// True when the threshold kept fewer than `k` pixels and all pixels
    /// were used instead.
    pub fell_back: bool,
}

/// Keeps pixels whose edgeness is below `delta_thresh` times the mean
/// edgeness, falling back to every pixel if fewer than `k` survive.
pub fn select_interior(edge: &EdgenessField, delta_thresh: f64, k: usize) -> Result<InteriorSelection> {
    if !(delta_thresh > 0.0) || !delta_thresh.is_finite() {
        return Err(invalid("delta", format!("threshold factor {delta_thresh} must be positive")));
    }
    let cut = delta_thresh * edge.mean();
    let indices: Vec<usize> = (0..edge.delta.len()).filter(|&i| edge.delta[i] < cut).collect();
    if indices.len() < k {
        return Ok(InteriorSelection {
            indices: (0..edge.delta.len()).collect(),
            fell_back: true,
        });
    }
    Ok(InteriorSelection { indices, fell_back: false })
}

/// Gathers the coefficient columns of the given pixels.
pub fn gather_points(alpha: &CoefficientField, indices: &[usize]) -> DMatrix<f64> {
    let r = alpha.dim();
    let mut data = Vec::with_capacity(r * indices.len());
    for &i in indices {
        data.extend_from_slice(alpha.column(i));
    }
    DMatrix::from_vec(r, indices.len(), data)
}

/// Restart count and Lloyd iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iters: 100 }
    }
}

/// Cluster centers (one column each), 0-based assignment and inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub centers: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest_center(point: &[f64], centers: &DMatrix<f64>) -> (usize, f64) {
    let r = centers.nrows();
    let data = centers.as_slice();
    let mut best = (0, f64::INFINITY);
    for l in 0..centers.ncols() {
        let d = sq_dist(point, &data[l * r..(l + 1) * r]);
        if d < best.1 {
            best = (l, d);
        }
    }
    best
}

/// Seeded k-means with distance-weighted seeding. Returns the restart with
/// the lowest inertia (earliest on ties).
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterResult> {
    let n = points.ncols();
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if n < k {
        return Err(SegError::TooFewPoints { points: n, k });
    }
    if opts.restarts == 0 {
        return Err(invalid("restarts", "must be at least 1"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(SegError::NonFinite("clustering input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<ClusterResult> = None;
    for _ in 0..opts.restarts {
        let centers = seed_centers(points, k, &mut rng);
        let run = lloyd(points, centers, opts.max_iters);
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (r, n) = points.shape();
    let col = |i: usize| &points.as_slice()[i * r..(i + 1) * r];
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(col(i), col(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // floating round-off can run past the end; take the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(col(i), col(next)));
        }
    }
    let mut data = Vec::with_capacity(r * k);
    for &c in &chosen {
        data.extend_from_slice(col(c));
    }
    DMatrix::from_vec(r, k, data)
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iters: usize) -> ClusterResult {
    let (r, n) = points.shape();
    let k = centers.ncols();
    let col = |i: usize| &points.as_slice()[i * r..(i + 1) * r];
    let mut assignment = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut next = vec![0usize; n];

    for _ in 0..max_iters.max(1) {
        for i in 0..n {
            let (l, d) = nearest_center(col(i), &centers);
            next[i] = l;
            dist[i] = d;
        }
        reseed_empty(&mut next, &mut dist, k);
        centers = cluster_means(points, &next, k);
        let stable = next == assignment;
        assignment.copy_from_slice(&next);
        if stable {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(col(i), &centers.as_slice()[assignment[i] * r..(assignment[i] + 1) * r]))
        .sum();
    ClusterResult { centers, assignment, inertia }
}

/// Moves the point farthest from its center into each empty cluster.
fn reseed_empty(assignment: &mut [usize], dist: &mut [f64], k: usize) {
    let mut counts = vec![0usize; k];
    for &l in assignment.iter() {
        counts[l] += 1;
    }
    for l in 0..k {
        if counts[l] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] > 1 && far.map_or(true, |f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[assignment[i]] -= 1;
        counts[l] += 1;
        assignment[i] = l;
        dist[i] = 0.0;
    }
}

fn cluster_means(points: &DMatrix<f64>, assignment: &[usize], k: usize) -> DMatrix<f64> {
    let r = points.nrows();
    let mut sums = DMatrix::<f64>::zeros(r, k);
    let mut counts = vec![0usize; k];
    for (i, &l) in assignment.iter().enumerate() {
        let mut c = sums.column_mut(l);
        c += points.column(i);
        counts[l] += 1;
    }
    for (l, &c) in counts.iter().enumerate() {
        if c > 0 {
            let mut col = sums.column_mut(l);
            col /= c as f64;
        }
    }
    sums
}

/// 0-based nearest-center label of every pixel (ties to the lowest label).
pub fn nearest_labels(alpha: &CoefficientField, centers: &DMatrix<f64>) -> Result<Vec<usize>> {
    if centers.nrows() != alpha.dim() {
        return Err(SegError::DimensionMismatch(format!(
            "centers of dimension {} for coefficients of dimension {}",
            centers.nrows(),
            alpha.dim()
        )));
    }
    if centers.ncols() == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    Ok((0..alpha.len()).map(|i| nearest_center(alpha.column(i), centers).0).collect())
}

/// Hard one-hot labeling by nearest center.
pub fn initial_labeling(alpha: &CoefficientField, centers: &DMatrix<f64>) -> Result<LabelField> {
    let labels = nearest_labels(alpha, centers)?;
    LabelField::one_hot(alpha.width(), alpha.height(), centers.ncols(), &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(w: usize, h: usize, r: usize, f: impl Fn(usize, usize, usize) -> f64) -> CoefficientField {
        let mut data = Vec::with_capacity(r * w * h);
        for y in 0..h {
            for x in 0..w {
                for c in 0..r {
                    data.push(f(x, y, c));
                }
            }
        }
        CoefficientField::new(w, h, DMatrix::from_vec(r, w * h, data)).unwrap()
    }

    #[test]
    fn constant_field_has_zero_edgeness_and_falls_back() {
        let a = field(12, 9, 3, |_, _, c| c as f64);
        let e = edgeness(&a, 2).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
        let sel = select_interior(&e, 0.5, 2).unwrap();
        assert!(sel.fell_back);
        assert_eq!(sel.indices.len(), 108);
    }

    #[test]
    fn half_plane_jump() {
        let (w, h, s, b) = (20, 6, 3, 10);
        let jump = [3.0, 4.0];
        let a = field(w, h, 2, |x, _, c| if x >= b { jump[c] } else { 0.0 });
        let e = edgeness(&a, s).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expected = if x + s >= b && x < b + s { 5.0 } else { 0.0 };
                assert_eq!(e.values()[y * w + x], expected, "({x}, {y})");
            }
        }
        let sel = select_interior(&e, 1.0, 2).unwrap();
        assert!(!sel.fell_back);
        for &i in &sel.indices {
            let x = i % w;
            assert!(x + s < b || x >= b + s);
        }
        assert_eq!(sel.indices.len(), (w - 2 * s) * h);
    }

    #[test]
    fn huge_threshold_keeps_everything() {
        let a = field(8, 8, 2, |x, y, c| ((x * 3 + y * 5 + c) % 7) as f64);
        let e = edgeness(&a, 1).unwrap();
        let sel = select_interior(&e, 1e9, 3).unwrap();
        assert_eq!(sel.indices, (0..64).collect::<Vec<_>>());
        assert!(!sel.fell_back);
        assert!(select_interior(&e, 0.0, 3).is_err());
    }

    #[test]
    fn k_equal_to_point_count() {
        let pts = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 5.0, 9.0, 0.0, 2.0, -1.0, 3.0]);
        let res = kmeans(&pts, 4, 3, KMeansOptions::default()).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut seen = res.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        for (i, &l) in res.assignment.iter().enumerate() {
            assert_eq!(res.centers.column(l), pts.column(i));
        }
    }

    #[test]
    fn duplicates_keep_both_centers_at_the_point() {
        let pts = DMatrix::from_fn(2, 10, |r, _| if r == 0 { 1.5 } else { -2.0 });
        let res = kmeans(&pts, 2, 0, KMeansOptions::default()).unwrap();
        for l in 0..2 {
            assert_eq!(res.centers.column(l).as_slice(), &[1.5, -2.0]);
        }
        assert_eq!(res.inertia, 0.0);
        assert!(res.assignment.contains(&0) && res.assignment.contains(&1));
    }

    #[test]
    fn too_few_points() {
        let pts = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(
            kmeans(&pts, 3, 0, KMeansOptions::default()),
            Err(SegError::TooFewPoints { points: 2, k: 3 })
        );
    }

    #[test]
    fn empty_cluster_is_reseeded_at_farthest_point() {
        let mut assignment = vec![0, 0, 0, 1];
        let mut dist = vec![0.5, 3.0, 1.0, 0.0];
        reseed_empty(&mut assignment, &mut dist, 3);
        assert_eq!(assignment, vec![0, 2, 0, 1]);
    }

    #[test]
    fn tie_goes_to_lowest_label() {
        let a = field(2, 1, 1, |x, _, _| if x == 0 { 1.0 } else { 2.0 });
        let centers = DMatrix::from_row_slice(1, 3, &[0.0, 2.0, 5.0]);
        let u = initial_labeling(&a, &centers).unwrap();
        assert_eq!(u.hard_labels(), vec![0, 1]);
    }
}
