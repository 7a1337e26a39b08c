//! Comparison of predicted masks against ground truth. Predicted labels are
//! arbitrary, so every score first matches them to truth labels by maximum
//! total overlap.

use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::error::{invalid, Result, SegError};

/// Hard segmentation with labels in `1..=k`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(SegError::DimensionMismatch(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(invalid(
                "labels",
                format!("label 0 at pixel ({}, {}); labels start at 1", i % width, i / width),
            ));
        }
        Ok(Self { width, height, labels })
    }

    /// Mask from 0-based labels.
    pub fn from_zero_based(width: usize, height: usize, labels: &[usize]) -> Result<Self> {
        Self::new(width, height, labels.iter().map(|&l| l as u32 + 1).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Largest label present.
    pub fn k(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Mask with every label replaced through `map` (indexed by label - 1).
    pub fn relabeled(&self, map: &[u32]) -> Result<Self> {
        let labels = self
            .labels
            .iter()
            .map(|&l| map.get(l as usize - 1).copied().ok_or_else(|| invalid("map", format!("no entry for label {l}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.width, self.height, labels)
    }

    /// Pixels with a 4-neighbour carrying a different label.
    pub fn boundary_pixels(&self) -> Vec<(usize, usize)> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let l = self.get(x, y);
                let differs = (x > 0 && self.get(x - 1, y) != l)
                    || (x + 1 < w && self.get(x + 1, y) != l)
                    || (y > 0 && self.get(x, y - 1) != l)
                    || (y + 1 < h && self.get(x, y + 1) != l);
                if differs {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

fn check_extent(pred: &SegMask, truth: &SegMask) -> Result<()> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(SegError::DimensionMismatch(format!(
            "predicted mask {}x{} vs truth {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    Ok(())
}

/// Pixel counts `counts[(p - 1) * truth_k + (t - 1)]` for predicted label
/// `p` and truth label `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub pred_k: usize,
    pub truth_k: usize,
    pub counts: Vec<u64>,
}

impl Confusion {
    pub fn get(&self, pred: u32, truth: u32) -> u64 {
        self.counts[(pred as usize - 1) * self.truth_k + truth as usize - 1]
    }

    pub fn pred_size(&self, pred: u32) -> u64 {
        (1..=self.truth_k as u32).map(|t| self.get(pred, t)).sum()
    }

    pub fn truth_size(&self, truth: u32) -> u64 {
        (1..=self.pred_k as u32).map(|p| self.get(p, truth)).sum()
    }
}

pub fn confusion(pred: &SegMask, truth: &SegMask) -> Result<Confusion> {
    check_extent(pred, truth)?;
    let (pk, tk) = (pred.k() as usize, truth.k() as usize);
    let mut counts = vec![0u64; pk * tk];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        counts[(p as usize - 1) * tk + t as usize - 1] += 1;
    }
    Ok(Confusion { pred_k: pk, truth_k: tk, counts })
}

/// Truth label assigned to each predicted label (`None` when there are
/// more predicted than truth labels), maximising total overlap.
pub fn match_labels(pred: &SegMask, truth: &SegMask) -> Result<Vec<Option<u32>>> {
    let c = confusion(pred, truth)?;
    Ok(optimal_matching(&c))
}

fn optimal_matching(c: &Confusion) -> Vec<Option<u32>> {
    let (pk, tk) = (c.pred_k, c.truth_k);
    let mut out = vec![None; pk];
    if pk == 0 || tk == 0 {
        return out;
    }
    if pk <= tk {
        let weights = Matrix::from_fn(pk, tk, |(p, t)| c.counts[p * tk + t] as i64);
        let (_, assign) = kuhn_munkres(&weights);
        for (p, &t) in assign.iter().enumerate() {
            out[p] = Some(t as u32 + 1);
        }
    } else {
        let weights = Matrix::from_fn(tk, pk, |(t, p)| c.counts[p * tk + t] as i64);
        let (_, assign) = kuhn_munkres(&weights);
        for (t, &p) in assign.iter().enumerate() {
            out[p] = Some(t as u32 + 1);
        }
    }
    out
}

/// Fraction of pixels whose predicted label matches the truth label after
/// optimal matching.
pub fn pixel_accuracy(pred: &SegMask, truth: &SegMask) -> Result<f64> {
    let c = confusion(pred, truth)?;
    let n = pred.labels.len();
    if n == 0 {
        return Ok(1.0);
    }
    let matched: u64 = optimal_matching(&c)
        .iter()
        .enumerate()
        .filter_map(|(p, t)| t.map(|t| c.get(p as u32 + 1, t)))
        .sum();
    Ok(matched as f64 / n as f64)
}

/// Fraction of non-empty truth regions `T` for which some predicted region
/// `P` satisfies `|P & T| >= thresh |T|` and `|P & T| >= thresh |P|`.
pub fn correct_segmentation_rate(pred: &SegMask, truth: &SegMask, thresh: f64) -> Result<f64> {
    if !(thresh > 0.5 && thresh <= 1.0) {
        return Err(invalid("overlap_thresh", format!("{thresh} must lie in (0.5, 1]")));
    }
    let c = confusion(pred, truth)?;
    let mut regions = 0usize;
    let mut correct = 0usize;
    for t in 1..=c.truth_k as u32 {
        let ts = c.truth_size(t);
        if ts == 0 {
            continue;
        }
        regions += 1;
        let hit = (1..=c.pred_k as u32).any(|p| {
            let overlap = c.get(p, t) as f64;
            overlap >= thresh * ts as f64 && overlap >= thresh * c.pred_size(p) as f64
        });
        if hit {
            correct += 1;
        }
    }
    Ok(if regions == 0 { 1.0 } else { correct as f64 / regions as f64 })
}

/// Largest Euclidean distance from a predicted boundary pixel to the
/// nearest truth boundary pixel. `None` if either mask has no boundary.
pub fn max_boundary_distance(pred: &SegMask, truth: &SegMask) -> Result<Option<f64>> {
    check_extent(pred, truth)?;
    let pb = pred.boundary_pixels();
    let tb = truth.boundary_pixels();
    if pb.is_empty() || tb.is_empty() {
        return Ok(None);
    }
    let mut worst = 0.0f64;
    for &(px, py) in &pb {
        let mut best = f64::INFINITY;
        for &(tx, ty) in &tb {
            let dx = px as f64 - tx as f64;
            let dy = py as f64 - ty as f64;
            best = best.min(dx * dx + dy * dy);
        }
        worst = worst.max(best);
    }
    Ok(Some(worst.sqrt()))
}

/// Fraction of pixels on which two masks disagree after optimal matching.
pub fn disagreement(a: &SegMask, b: &SegMask) -> Result<f64> {
    Ok(1.0 - pixel_accuracy(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, labels: &[u32]) -> SegMask {
        SegMask::new(w, labels.len() / w, labels.to_vec()).unwrap()
    }

    #[test]
    fn identical_masks() {
        let m = mask(3, &[1, 1, 2, 2, 3, 3]);
        assert_eq!(match_labels(&m, &m).unwrap(), vec![Some(1), Some(2), Some(3)]);
        assert_eq!(pixel_accuracy(&m, &m).unwrap(), 1.0);
        assert_eq!(correct_segmentation_rate(&m, &m, 0.75).unwrap(), 1.0);
    }

    #[test]
    fn swapped_labels_match_perfectly() {
        let truth = mask(4, &[1, 1, 2, 2, 1, 1, 2, 2]);
        let pred = mask(4, &[2, 2, 1, 1, 2, 2, 1, 1]);
        assert_eq!(match_labels(&pred, &truth).unwrap(), vec![Some(2), Some(1)]);
        assert_eq!(pixel_accuracy(&pred, &truth).unwrap(), 1.0);
    }

    #[test]
    fn one_wrong_pixel_in_hundred() {
        let truth: Vec<u32> = (0..100).map(|i| if i < 50 { 1 } else { 2 }).collect();
        let mut pred = truth.clone();
        pred[10] = 2;
        let acc = pixel_accuracy(&mask(10, &pred), &mask(10, &truth)).unwrap();
        assert!((acc - 0.99).abs() < 1e-15);
    }

    #[test]
    fn missing_region_lowers_rate() {
        // the two pixels of region 4 are absorbed by region 1
        let mut t = vec![1; 10];
        t.extend([2; 10]);
        t.extend([3; 10]);
        t.extend([4; 2]);
        let mut p = t.clone();
        p[30] = 1;
        p[31] = 1;
        let (truth, pred) = (mask(32, &t), mask(32, &p));
        assert_eq!(correct_segmentation_rate(&pred, &truth, 0.75).unwrap(), 0.75);
    }

    #[test]
    fn extra_predicted_labels_are_unmatched() {
        let truth = mask(4, &[1, 1, 1, 1, 2, 2, 2, 2]);
        let pred = mask(4, &[1, 1, 3, 3, 2, 2, 2, 2]);
        let m = match_labels(&pred, &truth).unwrap();
        assert_eq!(m.iter().filter(|t| t.is_none()).count(), 1);
        assert_eq!(pixel_accuracy(&pred, &truth).unwrap(), 0.75);
    }

    #[test]
    fn rejects_zero_labels_and_extent_mismatch() {
        assert!(SegMask::new(2, 1, vec![0, 1]).is_err());
        let a = mask(2, &[1, 2]);
        let b = mask(1, &[1, 2]);
        assert!(pixel_accuracy(&a, &b).is_err());
    }

    #[test]
    fn boundary_distance() {
        let truth = SegMask::new(8, 2, (0..16).map(|i| if i % 8 < 4 { 1 } else { 2 }).collect()).unwrap();
        let pred = SegMask::new(8, 2, (0..16).map(|i| if i % 8 < 6 { 1 } else { 2 }).collect()).unwrap();
        // truth boundary at columns 3 and 4, predicted at 5 and 6
        assert_eq!(max_boundary_distance(&pred, &truth).unwrap(), Some(2.0));
        assert_eq!(max_boundary_distance(&truth, &truth).unwrap(), Some(0.0));
        let flat = SegMask::new(8, 2, vec![1; 16]).unwrap();
        assert_eq!(max_boundary_distance(&flat, &truth).unwrap(), None);
    }
}
