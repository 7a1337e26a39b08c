//! Ground-truthed synthetic images: multi-grain crystals rendered from 2D
//! lattices, oriented texture mosaics, and additive Gaussian noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result, SegError};
use crate::grid::ImageGrid;
use crate::metrics::SegMask;

/// Lattice `{n1 a1 + n2 a2 + origin}` decorated with Gaussian atoms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub a1: [f64; 2],
    pub a2: [f64; 2],
    pub atom_sigma: f64,
    pub amplitude: f64,
    pub origin: [f64; 2],
}

impl LatticeSpec {
    /// Square lattice with unit amplitude and atom width `0.2 * period`.
    pub fn square(period: f64) -> Self {
        Self {
            a1: [period, 0.0],
            a2: [0.0, period],
            atom_sigma: 0.2 * period,
            amplitude: 1.0,
            origin: [0.0, 0.0],
        }
    }

    /// Hexagonal lattice with nearest-neighbour distance `period`.
    pub fn hexagonal(period: f64) -> Self {
        Self {
            a1: [period, 0.0],
            a2: [0.5 * period, 0.5 * 3f64.sqrt() * period],
            ..Self::square(period)
        }
    }

    /// Same lattice rotated counter-clockwise by `angle` radians about its
    /// origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        Self {
            a1: rot(self.a1),
            a2: rot(self.a2),
            ..*self
        }
    }

    pub fn with_origin(self, origin: [f64; 2]) -> Self {
        Self { origin, ..self }
    }

    fn det(&self) -> f64 {
        self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a1[0], self.a1[1], self.a2[0], self.a2[1], self.origin[0], self.origin[1], self.amplitude];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SegError::DegenerateLattice("non-finite lattice parameter".into()));
        }
        if self.det().abs() <= 1e-6 {
            return Err(SegError::DegenerateLattice(format!(
                "lattice vectors {:?} and {:?} are linearly dependent",
                self.a1, self.a2
            )));
        }
        if !(self.atom_sigma > 0.0) || !self.atom_sigma.is_finite() {
            return Err(SegError::DegenerateLattice(format!("atom width {} must be positive", self.atom_sigma)));
        }
        Ok(())
    }
}

/// Partition of an image into grains, each with its own lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainScene {
    /// Grain owning each pixel, labels `1..=grains.len()`.
    pub layout: SegMask,
    pub grains: Vec<LatticeSpec>,
}

impl GrainScene {
    pub fn new(layout: SegMask, grains: Vec<LatticeSpec>) -> Result<Self> {
        if layout.k() as usize > grains.len() {
            return Err(invalid(
                "grains",
                format!("layout uses {} grains but {} lattices given", layout.k(), grains.len()),
            ));
        }
        for g in &grains {
            g.validate()?;
        }
        Ok(Self { layout, grains })
    }

    /// Left and right halves; the right grain is `base` rotated by `angle`.
    /// Both lattices are anchored at the image centre.
    pub fn two_grain(width: usize, height: usize, base: LatticeSpec, angle: f64) -> Result<Self> {
        let layout = half_plane_layout(width, height)?;
        let centre = [width as f64 / 2.0, height as f64 / 2.0];
        let base = base.with_origin(centre);
        Self::new(layout, vec![base, base.rotated(angle)])
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn height(&self) -> usize {
        self.layout.height()
    }
}

/// Minimum spacing of random Voronoi sites: `0.67 * side / sqrt(count)`.
fn site_spacing(width: usize, height: usize, count: usize) -> f64 {
    0.67 * width.min(height) as f64 / (count as f64).sqrt()
}

/// `count` Voronoi grains of `base` at orientations `l * symmetry / count`,
/// where `symmetry` is the lattice's rotational period in radians.
pub fn voronoi_grains(
    width: usize,
    height: usize,
    count: usize,
    base: LatticeSpec,
    symmetry: f64,
    seed: u64,
) -> Result<GrainScene> {
    if count == 0 {
        return Err(invalid("grains", "need at least one grain"));
    }
    let sites = random_sites(width, height, count, site_spacing(width, height, count), seed)?;
    let layout = voronoi_layout(width, height, &sites)?;
    let grains = sites
        .iter()
        .enumerate()
        .map(|(l, s)| base.with_origin(*s).rotated(l as f64 * symmetry / count as f64))
        .collect();
    GrainScene::new(layout, grains)
}

/// Voronoi mosaic of cosine gratings with a common period and evenly
/// spaced orientations `l * pi / regions`.
pub fn grating_mosaic(size: usize, regions: usize, period: f64, seed: u64) -> Result<(ImageGrid, SegMask)> {
    if regions == 0 {
        return Err(invalid("regions", "need at least one region"));
    }
    let sites = random_sites(size, size, regions, site_spacing(size, size, regions), seed)?;
    let layout = voronoi_layout(size, size, &sites)?;
    let textures: Vec<Texture> = (0..regions)
        .map(|l| Texture::Sinusoid { period, orientation: l as f64 * PI / regions as f64 })
        .collect();
    render_texture_mosaic(&layout, &textures, seed)
}

/// Left half label 1, right half label 2.
pub fn half_plane_layout(width: usize, height: usize) -> Result<SegMask> {
    let labels = (0..width * height).map(|i| if i % width < width / 2 { 1 } else { 2 }).collect();
    SegMask::new(width, height, labels)
}

/// Nearest-site partition (ties to the lower site index).
pub fn voronoi_layout(width: usize, height: usize, sites: &[[f64; 2]]) -> Result<SegMask> {
    if sites.is_empty() {
        return Err(invalid("sites", "need at least one site"));
    }
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best = (0, f64::INFINITY);
            for (j, s) in sites.iter().enumerate() {
                let d = (px - s[0]).powi(2) + (py - s[1]).powi(2);
                if d < best.1 {
                    best = (j, d);
                }
            }
            labels.push(best.0 as u32 + 1);
        }
    }
    SegMask::new(width, height, labels)
}

/// `count` uniformly drawn sites at least `min_dist` apart (by rejection).
pub fn random_sites(width: usize, height: usize, count: usize, min_dist: f64, seed: u64) -> Result<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites: Vec<[f64; 2]> = Vec::with_capacity(count);
    let mut attempts = 0;
    while sites.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid(
                "min_dist",
                format!("could not place {count} sites {min_dist} apart in {width}x{height}"),
            ));
        }
        let p = [rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64)];
        if sites.iter().all(|s| (s[0] - p[0]).hypot(s[1] - p[1]) >= min_dist) {
            sites.push(p);
        }
    }
    Ok(sites)
}

/// Renders every grain's atoms on the pixels it owns. Returns the image
/// and the layout as ground truth.
pub fn render_crystal(scene: &GrainScene) -> Result<(ImageGrid, SegMask)> {
    let (w, h) = (scene.width(), scene.height());
    let mut img = vec![0.0; w * h];
    for (gi, lat) in scene.grains.iter().enumerate() {
        lat.validate()?;
        let label = gi as u32 + 1;
        let reach = 4.0 * lat.atom_sigma;
        let det = lat.det();
        // lattice coordinates of the padded image corners bound n1, n2
        let to_lattice = |px: f64, py: f64| {
            let (dx, dy) = (px - lat.origin[0], py - lat.origin[1]);
            ((dx * lat.a2[1] - dy * lat.a2[0]) / det, (lat.a1[0] * dy - lat.a1[1] * dx) / det)
        };
        let corners = [
            to_lattice(-reach, -reach),
            to_lattice(w as f64 + reach, -reach),
            to_lattice(-reach, h as f64 + reach),
            to_lattice(w as f64 + reach, h as f64 + reach),
        ];
        let n1_lo = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor() as i64;
        let n1_hi = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let n2_lo = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor() as i64;
        let n2_hi = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let inv2s2 = 1.0 / (2.0 * lat.atom_sigma * lat.atom_sigma);

        for n1 in n1_lo..=n1_hi {
            for n2 in n2_lo..=n2_hi {
                let cx = lat.origin[0] + n1 as f64 * lat.a1[0] + n2 as f64 * lat.a2[0];
                let cy = lat.origin[1] + n1 as f64 * lat.a1[1] + n2 as f64 * lat.a2[1];
                let x0 = (cx - reach).floor().max(0.0) as usize;
                let y0 = (cy - reach).floor().max(0.0) as usize;
                let x1 = ((cx + reach).ceil() as i64).min(w as i64 - 1);
                let y1 = ((cy + reach).ceil() as i64).min(h as i64 - 1);
                if x1 < 0 || y1 < 0 {
                    continue;
                }
                for y in y0..=y1 as usize {
                    for x in x0..=x1 as usize {
                        if scene.layout.get(x, y) != label {
                            continue;
                        }
                        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        img[y * w + x] += lat.amplitude * (-d2 * inv2s2).exp();
                    }
                }
            }
        }
    }
    Ok((ImageGrid::scalar(w, h, img)?, scene.layout.clone()))
}

/// Adds i.i.d. Gaussian noise with standard deviation `level` times the
/// largest absolute pixel value. The result is not clamped.
pub fn add_gaussian_noise(image: &ImageGrid, level: f64, seed: u64) -> Result<ImageGrid> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(invalid("noise", format!("level {level} must be non-negative")));
    }
    if level == 0.0 {
        return Ok(image.clone());
    }
    let peak = image.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let std = level * peak;
    if std == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, std).map_err(|e| invalid("noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = image.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    ImageGrid::new(image.width(), image.height(), image.channels(), values)
}

/// Pattern filling one mosaic region, with values roughly in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Cosine grating whose wave vector points along `orientation`.
    Sinusoid { period: f64, orientation: f64 },
    /// Square checkerboard with cells of side `size`, rotated.
    Checkerboard { size: f64, orientation: f64 },
    /// White noise smoothed by a Gaussian elongated along `orientation`.
    OrientedNoise { orientation: f64, scale: f64 },
}

impl Texture {
    fn validate(&self) -> Result<()> {
        let (a, b, name) = match *self {
            Texture::Sinusoid { period, orientation } => (period, orientation, "period"),
            Texture::Checkerboard { size, orientation } => (size, orientation, "size"),
            Texture::OrientedNoise { orientation, scale } => (scale, orientation, "scale"),
        };
        if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(invalid("texture", format!("{name} {a} must be positive, orientation finite")));
        }
        Ok(())
    }

    fn render(&self, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Texture::Sinusoid { period, orientation } => {
                let (s, c) = orientation.sin_cos();
                grid_fn(width, height, |x, y| 0.5 + 0.5 * (2.0 * PI * (x * c + y * s) / period).cos())
            }
            Texture::Checkerboard { size, orientation } => {
                let (s, c) = orientation.sin_cos();
                grid_fn(width, height, |x, y| {
                    let u = ((x * c + y * s) / size).floor() as i64;
                    let v = ((-x * s + y * c) / size).floor() as i64;
                    if (u + v).rem_euclid(2) == 0 {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
            Texture::OrientedNoise { orientation, scale } => oriented_noise(width, height, orientation, scale, rng),
        }
    }
}

fn grid_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(f(x as f64, y as f64));
        }
    }
    out
}

fn oriented_noise(width: usize, height: usize, orientation: f64, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (along, across) = (3.0 * scale, 0.5 * scale);
    let radius = (3.0 * along).ceil() as isize;
    let (s, c) = orientation.sin_cos();
    let side = (2 * radius + 1) as usize;
    let mut kernel = Vec::with_capacity(side * side);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (dx as f64, dy as f64);
            let u = x * c + y * s;
            let v = -x * s + y * c;
            kernel.push((-0.5 * (u * u / (along * along) + v * v / (across * across))).exp());
        }
    }
    let (pw, ph) = (width + side - 1, height + side - 1);
    let white: Vec<f64> = (0..pw * ph).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for ky in 0..side {
                let row = &white[(y + ky) * pw + x..(y + ky) * pw + x + side];
                acc += row.iter().zip(&kernel[ky * side..(ky + 1) * side]).map(|(a, b)| a * b).sum::<f64>();
            }
            out[y * width + x] = acc;
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    let std = if std > 0.0 { std } else { 1.0 };
    out.iter().map(|v| 0.5 + 0.2 * (v - mean) / std).collect()
}

/// Fills region `l` of `layout` with `textures[l - 1]`.
pub fn render_texture_mosaic(layout: &SegMask, textures: &[Texture], seed: u64) -> Result<(ImageGrid, SegMask)> {
    if layout.k() as usize != textures.len() {
        return Err(invalid(
            "textures",
            format!("{} textures for a layout with {} regions", textures.len(), layout.k()),
        ));
    }
    for t in textures {
        t.validate()?;
    }
    let (w, h) = (layout.width(), layout.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers: Vec<Vec<f64>> = textures.iter().map(|t| t.render(w, h, &mut rng)).collect();
    let values = layout.labels().iter().enumerate().map(|(i, &l)| layers[l as usize - 1][i]).collect();
    Ok((ImageGrid::scalar(w, h, values)?, layout.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_lattice_peak_count() {
        let (w, h) = (64, 48);
        let layout = SegMask::new(w, h, vec![1; w * h]).unwrap();
        let scene = GrainScene::new(layout, vec![LatticeSpec::square(8.0).with_origin([4.0, 4.0])]).unwrap();
        let (img, _) = render_crystal(&scene).unwrap();
        let mut peaks = 0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let v = img.get(x, y);
                let neighbours = [img.get(x - 1, y), img.get(x + 1, y), img.get(x, y - 1), img.get(x, y + 1)];
                if neighbours.iter().all(|&n| v > n) {
                    peaks += 1;
                }
            }
        }
        assert_eq!(peaks, (w / 8) * (h / 8));
    }

    #[test]
    fn zero_amplitude_is_black() {
        let lat = LatticeSpec { amplitude: 0.0, ..LatticeSpec::hexagonal(6.0) };
        let scene = GrainScene::two_grain(32, 32, lat, 0.3).unwrap();
        let (img, mask) = render_crystal(&scene).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
        assert_eq!(mask.get(0, 0), 1);
        assert_eq!(mask.get(31, 0), 2);
    }

    #[test]
    fn degenerate_lattice_rejected() {
        let lat = LatticeSpec { a2: [16.0, 0.0], ..LatticeSpec::square(8.0) };
        let layout = SegMask::new(4, 4, vec![1; 16]).unwrap();
        assert!(matches!(GrainScene::new(layout, vec![lat]), Err(SegError::DegenerateLattice(_))));
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = ImageGrid::from_fn(8, 8, |x, y| (x * y) as f64).unwrap();
        assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
        assert!(add_gaussian_noise(&img, -0.1, 3).is_err());
    }

    #[test]
    fn mosaic_count_mismatch_rejected() {
        let layout = half_plane_layout(8, 8).unwrap();
        let t = Texture::Sinusoid { period: 4.0, orientation: 0.0 };
        assert!(render_texture_mosaic(&layout, &[t], 0).is_err());
        assert!(render_texture_mosaic(&layout, &[t, t], 0).is_ok());
    }

    #[test]
    fn voronoi_regions_follow_sites() {
        let m = voronoi_layout(10, 10, &[[1.0, 1.0], [9.0, 9.0]]).unwrap();
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(9, 9), 2);
        // pixel centre (5.5, 2.5) is closer to (1, 1)
        assert_eq!(m.get(5, 2), 1);
    }
}
