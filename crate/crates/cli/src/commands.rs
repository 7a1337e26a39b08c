//! Subcommand implementations, independent of argument parsing.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use featseg::metrics::{
    correct_segmentation_rate, disagreement, max_boundary_distance, pixel_accuracy, SegMask,
};
use featseg::segment::{segment, SegmentationResult};
use featseg::synth::{
    add_gaussian_noise, grating_mosaic, half_plane_layout, render_crystal, voronoi_grains, GrainScene, LatticeSpec,
};

use crate::config::SegmentSettings;
use crate::error::{CliError, Result};
use crate::io::{read_image, read_label_map, write_gray16, write_label_map, write_overlay};
use crate::suite::{run_suite, Suite, SuiteReport};

/// `prefix` + `suffix`, keeping the directory part of `prefix`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug)]
pub struct SegmentOutput {
    pub labels: PathBuf,
    pub overlay: PathBuf,
    pub manifest: PathBuf,
    pub result: SegmentationResult,
}

/// Segments `settings.input` and writes `<output>_labels.png`,
/// `<output>_overlay.png` and `<output>_manifest.txt`.
pub fn run_segment(settings: &SegmentSettings) -> Result<SegmentOutput> {
    let input = settings.input.as_ref().ok_or_else(|| CliError::Usage("`input` is required".into()))?;
    let prefix = settings.output.as_ref().ok_or_else(|| CliError::Usage("`output` is required".into()))?;
    let config = settings.segmentation_config()?;
    let image = read_image(input)?;
    // parameter errors are usage errors; check before the expensive part
    config
        .validate(image.width(), image.height())
        .map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
    let result = segment(&image, &config)?;

    let out = SegmentOutput {
        labels: with_suffix(prefix, "_labels.png"),
        overlay: with_suffix(prefix, "_overlay.png"),
        manifest: with_suffix(prefix, "_manifest.txt"),
        result,
    };
    write_label_map(&out.labels, &out.result.mask)?;
    write_overlay(&out.overlay, &image, &out.result.mask)?;
    write_text(&out.manifest, &settings.to_manifest())?;
    Ok(out)
}

/// One-line summary of a segmentation run.
pub fn describe_segmentation(r: &SegmentationResult) -> String {
    let d = &r.diagnostics;
    let mut s = format!("k = {}", d.k);
    if let Some(e) = d.estimated_k {
        let _ = write!(s, " (estimated {e})");
    }
    let _ = write!(
        s,
        ", {} components, solver passes {:?}, final energy {:.6e}",
        d.components,
        d.inner_iterations,
        r.energy_trace.last().copied().unwrap_or(f64::NAN)
    );
    if !d.inner_converged.iter().all(|&c| c) {
        s.push_str(", some rounds hit the iteration limit");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lattice {
    Square,
    Hexagonal,
}

impl Lattice {
    fn spec(self, period: f64) -> LatticeSpec {
        match self {
            Lattice::Square => LatticeSpec::square(period),
            Lattice::Hexagonal => LatticeSpec::hexagonal(period),
        }
    }

    /// Rotational period of the lattice in radians.
    fn symmetry(self) -> f64 {
        match self {
            Lattice::Square => PI / 2.0,
            Lattice::Hexagonal => PI / 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrystalOptions {
    pub output: PathBuf,
    pub size: usize,
    pub grains: usize,
    /// Rotation of the second grain in degrees (two grains only).
    pub rotation: Option<f64>,
    pub noise: f64,
    pub seed: u64,
    pub period: f64,
    pub lattice: Lattice,
    /// Lattice of the second grain when it differs from the first.
    pub second_lattice: Option<Lattice>,
}

#[derive(Debug, Clone)]
pub struct MosaicOptions {
    pub output: PathBuf,
    pub size: usize,
    pub regions: usize,
    pub period: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum SynthOptions {
    Crystal(CrystalOptions),
    Mosaic(MosaicOptions),
}

/// Writes `<output>_image.png` (16-bit) and `<output>_truth.png`.
pub fn run_synth(options: &SynthOptions) -> Result<(PathBuf, PathBuf)> {
    let (output, image, truth) = match options {
        SynthOptions::Crystal(o) => {
            let (image, truth) = render_crystal(&crystal_scene(o)?)?;
            let image = if o.noise > 0.0 { add_gaussian_noise(&image, o.noise, o.seed)? } else { image };
            (&o.output, image, truth)
        }
        SynthOptions::Mosaic(o) => {
            if o.regions == 0 || o.size == 0 {
                return Err(CliError::Usage("`regions` and `size` must be positive".into()));
            }
            let (image, truth) = grating_mosaic(o.size, o.regions, o.period, o.seed)?;
            (&o.output, image, truth)
        }
    };
    let image_path = with_suffix(output, "_image.png");
    let truth_path = with_suffix(output, "_truth.png");
    write_gray16(&image_path, &image)?;
    write_label_map(&truth_path, &truth)?;
    Ok((image_path, truth_path))
}

fn crystal_scene(o: &CrystalOptions) -> Result<GrainScene> {
    if o.size == 0 {
        return Err(CliError::Usage("`size` must be positive".into()));
    }
    if !(o.noise >= 0.0) {
        return Err(CliError::Usage(format!("`noise` must be non-negative, got {}", o.noise)));
    }
    let base = o.lattice.spec(o.period);
    let centre = [o.size as f64 / 2.0; 2];
    match o.grains {
        0 => Err(CliError::Usage("`grains` must be at least 1".into())),
        1 => {
            let layout = SegMask::new(o.size, o.size, vec![1; o.size * o.size])?;
            Ok(GrainScene::new(layout, vec![base.with_origin(centre)])?)
        }
        2 => {
            let angle = o.rotation.unwrap_or(0.0).to_radians();
            match o.second_lattice {
                None => Ok(GrainScene::two_grain(o.size, o.size, base, angle)?),
                Some(second) => {
                    let layout = half_plane_layout(o.size, o.size)?;
                    let grains = vec![base.with_origin(centre), second.spec(o.period).with_origin(centre).rotated(angle)];
                    Ok(GrainScene::new(layout, grains)?)
                }
            }
        }
        n => {
            if o.rotation.is_some() || o.second_lattice.is_some() {
                return Err(CliError::Usage(
                    "`rotation` and `second-lattice` apply to two-grain scenes only".into(),
                ));
            }
            Ok(voronoi_grains(o.size, o.size, n, base, o.lattice.symmetry(), o.seed)?)
        }
    }
}

/// Named scores of a predicted mask against truth.
pub fn evaluate(pred: &SegMask, truth: &SegMask, overlap: f64) -> Result<Vec<(String, String)>> {
    let bd = max_boundary_distance(pred, truth)?;
    Ok(vec![
        ("pixel_accuracy".into(), format!("{:.6}", pixel_accuracy(pred, truth)?)),
        ("disagreement".into(), format!("{:.6}", disagreement(pred, truth)?)),
        (format!("correct_segmentation_rate@{overlap}"), format!("{:.6}", correct_segmentation_rate(pred, truth, overlap)?)),
        ("max_boundary_distance".into(), bd.map_or("n/a".into(), |d| format!("{d:.3}"))),
        ("predicted_labels".into(), pred.k().to_string()),
        ("truth_labels".into(), truth.k().to_string()),
    ])
}

/// Compares two label maps; returns the printable table and optionally
/// writes `metric,value` rows to `csv`.
pub fn run_eval(pred: &Path, truth: &Path, overlap: f64, csv: Option<&Path>) -> Result<String> {
    if !(overlap > 0.5 && overlap <= 1.0) {
        return Err(CliError::Usage(format!("`overlap` must lie in (0.5, 1], got {overlap}")));
    }
    let rows = evaluate(&read_label_map(pred)?, &read_label_map(truth)?, overlap)?;
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut table = String::new();
    for (name, value) in &rows {
        let _ = writeln!(table, "{name:<width$}  {value}");
    }
    if let Some(path) = csv {
        let mut text = String::from("metric,value\n");
        for (name, value) in &rows {
            let _ = writeln!(text, "{name},{value}");
        }
        write_text(path, &text)?;
    }
    Ok(table)
}

/// Runs the acceptance suite, printing each line to stderr as it finishes,
/// and writes the summary table to `summary` if given. Fails if any
/// criterion fails.
pub fn run_reproduce(suite: Suite, workdir: &Path, summary: Option<&Path>) -> Result<SuiteReport> {
    let report = run_suite(suite, workdir, |r| eprintln!("{}", r.line()))?;
    if let Some(path) = summary {
        write_text(path, &report.summary())?;
    }
    Ok(report)
}
