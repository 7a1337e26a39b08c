//! Flat `key = value` configuration. Values are layered: built-in
//! defaults, then a config file, then command-line flags. A resolved
//! configuration is written back out as a run manifest in the same format,
//! so a manifest can be fed to `--config` to repeat a run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use featseg::features::{Filter, FilterBank, FeatureKind, FeatureSpec, Padding, Scale};
use featseg::init::KMeansOptions;
use featseg::segment::{SegmentCount, SegmentationConfig};
use featseg::solver::SolverParams;

use crate::error::{CliError, Result};

pub type KeyValues = BTreeMap<String, String>;

/// Keys accepted by `segment`, in manifest order.
pub const SEGMENT_KEYS: &[&str] = &[
    "input",
    "output",
    "features",
    "k",
    "estimate-omega",
    "components",
    "lambda",
    "delta",
    "s",
    "padding",
    "bins",
    "gabor-sizes",
    "gabor-orientations",
    "intensity-filter",
    "outer-iters",
    "sigma",
    "tau",
    "theta",
    "epsilon",
    "t-max",
    "restarts",
    "lloyd-iters",
    "seed",
];

/// Parses `key = value` lines. Blank lines and lines starting with `#`
/// are skipped; later duplicates win.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected `key = value`, got {line:?}", n + 1)));
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<KeyValues> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_key_values(&text)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid value {value:?} for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn usage(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("`{key}`: {reason}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    SpectralHist,
    FftMod,
}

impl FeatureChoice {
    pub fn name(self) -> &'static str {
        match self {
            FeatureChoice::SpectralHist => "spectral-hist",
            FeatureChoice::FftMod => "fft-mod",
        }
    }
}

/// Fully resolved settings of a `segment` run.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSettings {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub features: FeatureChoice,
    pub k: Option<usize>,
    pub estimate_omega: Option<f64>,
    pub components: Option<usize>,
    pub lambda: f64,
    pub delta: f64,
    pub scales: Vec<Scale>,
    pub padding: Padding,
    pub bins: usize,
    pub gabor_sizes: Vec<f64>,
    /// Degrees.
    pub gabor_orientations: Vec<f64>,
    pub intensity_filter: bool,
    pub outer_iters: usize,
    pub sigma: f64,
    pub tau: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub t_max: usize,
    pub restarts: usize,
    pub lloyd_iters: usize,
    pub seed: u64,
}

fn parse_scales(key: &str, value: &str) -> Result<Vec<Scale>> {
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            let (s, weight) = match item.split_once(':') {
                Some((s, w)) => (parse(key, s.trim())?, parse(key, w.trim())?),
                None => (parse(key, item)?, 1.0),
            };
            Ok(Scale { s, weight })
        })
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(usage(key, format!("expected true or false, got {value:?}"))),
    }
}

impl SegmentSettings {
    /// Resolves settings from merged key-values. Defaults that depend on
    /// the feature type follow the texture setting (histograms) or the
    /// crystal setting (FFT modulus).
    pub fn from_map(map: &KeyValues) -> Result<Self> {
        if let Some(key) = map.keys().find(|k| !SEGMENT_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown setting `{key}`")));
        }
        let get = |key: &str| map.get(key).map(String::as_str);

        let features = match get("features").unwrap_or("spectral-hist") {
            "spectral-hist" => FeatureChoice::SpectralHist,
            "fft-mod" => FeatureChoice::FftMod,
            other => return Err(usage("features", format!("expected spectral-hist or fft-mod, got {other:?}"))),
        };
        let fft = features == FeatureChoice::FftMod;

        let k = get("k").map(|v| parse::<usize>("k", v)).transpose()?;
        let estimate_omega = get("estimate-omega").map(|v| parse::<f64>("estimate-omega", v)).transpose()?;
        match (k, estimate_omega) {
            (None, None) => {
                return Err(CliError::Usage(
                    "either `k` (segment count) or `estimate-omega` (estimate it from the spectrum) is required".into(),
                ))
            }
            (Some(_), Some(_)) => return Err(CliError::Usage("`k` and `estimate-omega` are mutually exclusive".into())),
            (Some(k), None) if k < 2 => return Err(usage("k", format!("need at least 2 segments, got {k}"))),
            (None, Some(w)) if !(w > 0.0) || !w.is_finite() => return Err(usage("estimate-omega", "must be positive")),
            _ => {}
        }

        let num = |key: &str, default: f64| -> Result<f64> {
            let v = get(key).map(|v| parse::<f64>(key, v)).transpose()?.unwrap_or(default);
            if !v.is_finite() {
                return Err(usage(key, "must be finite"));
            }
            Ok(v)
        };
        let count = |key: &str, default: usize| -> Result<usize> {
            Ok(get(key).map(|v| parse::<usize>(key, v)).transpose()?.unwrap_or(default))
        };

        let scales = match get("s") {
            Some(v) => parse_scales("s", v)?,
            None if fft => vec![Scale { s: 15, weight: 1.0 }],
            None => vec![Scale { s: 15, weight: 0.8 }, Scale { s: 30, weight: 0.2 }],
        };
        if scales.is_empty() || scales.iter().any(|sc| sc.s == 0) {
            return Err(usage("s", "window half-widths must be at least 1"));
        }
        if scales.iter().any(|sc| !(sc.weight > 0.0) || !sc.weight.is_finite()) {
            return Err(usage("s", "scale weights must be positive"));
        }
        let padding = match get("padding").unwrap_or("mirror") {
            "mirror" => Padding::Mirror,
            "clamp" => Padding::Clamp,
            other => return Err(usage("padding", format!("expected mirror or clamp, got {other:?}"))),
        };

        let settings = Self {
            input: get("input").map(PathBuf::from),
            output: get("output").map(PathBuf::from),
            features,
            k,
            estimate_omega,
            components: get("components").map(|v| parse::<usize>("components", v)).transpose()?,
            lambda: num("lambda", if fft { 25.0 } else { 0.005 })?,
            delta: num("delta", if fft { 1.0 } else { 0.25 })?,
            scales,
            padding,
            bins: count("bins", 11)?,
            gabor_sizes: get("gabor-sizes").map(|v| parse_list("gabor-sizes", v)).transpose()?.unwrap_or(vec![5.0, 7.0, 9.0]),
            gabor_orientations: get("gabor-orientations")
                .map(|v| parse_list("gabor-orientations", v))
                .transpose()?
                .unwrap_or(vec![0.0, 90.0, 45.0, -45.0]),
            intensity_filter: get("intensity-filter").map(|v| parse_bool("intensity-filter", v)).transpose()?.unwrap_or(false),
            outer_iters: count("outer-iters", 3)?,
            sigma: num("sigma", 0.125)?,
            tau: num("tau", 0.125)?,
            theta: num("theta", 0.7)?,
            epsilon: num("epsilon", 1e-3)?,
            t_max: count("t-max", 10_000)?,
            restarts: count("restarts", 10)?,
            lloyd_iters: count("lloyd-iters", 100)?,
            seed: get("seed").map(|v| parse::<u64>("seed", v)).transpose()?.unwrap_or(0),
        };
        settings.check()?;
        Ok(settings)
    }

    fn check(&self) -> Result<()> {
        if self.components == Some(0) {
            return Err(usage("components", "must be at least 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(usage("lambda", "must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(usage("delta", "must be positive"));
        }
        if self.features == FeatureChoice::SpectralHist {
            if self.bins == 0 || self.bins > u16::MAX as usize {
                return Err(usage("bins", "must lie in 1..=65535"));
            }
            if self.gabor_sizes.iter().any(|&s| !(s > 0.0)) {
                return Err(usage("gabor-sizes", "sizes must be positive"));
            }
            if self.gabor_sizes.is_empty() && !self.intensity_filter {
                return Err(usage("gabor-sizes", "filter bank is empty; give Gabor sizes or enable intensity-filter"));
            }
        }
        if self.outer_iters == 0 {
            return Err(usage("outer-iters", "must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(usage("t-max", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(usage("restarts", "must be at least 1"));
        }
        if self.lloyd_iters == 0 {
            return Err(usage("lloyd-iters", "must be at least 1"));
        }
        self.solver_params()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    fn solver_params(&self) -> SolverParams {
        SolverParams {
            sigma: self.sigma,
            tau: self.tau,
            theta: self.theta,
            epsilon: self.epsilon,
            t_max: self.t_max,
            lambda: self.lambda,
        }
    }

    /// Intensity filter (if enabled) followed by Gabor filters, sizes
    /// outermost.
    pub fn filter_bank(&self) -> Result<FilterBank> {
        let mut filters = Vec::new();
        if self.intensity_filter {
            filters.push(Filter::Intensity);
        }
        for &size in &self.gabor_sizes {
            for &deg in &self.gabor_orientations {
                filters.push(Filter::Gabor { size, orientation: deg * PI / 180.0 });
            }
        }
        FilterBank::new(filters, self.bins).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        let kind = match self.features {
            FeatureChoice::SpectralHist => FeatureKind::SpectralHistogram(self.filter_bank()?),
            FeatureChoice::FftMod => FeatureKind::FftModulus,
        };
        Ok(FeatureSpec { kind, scales: self.scales.clone(), padding: self.padding })
    }

    pub fn segmentation_config(&self) -> Result<SegmentationConfig> {
        let segments = match (self.k, self.estimate_omega) {
            (Some(k), _) => SegmentCount::Known(k),
            (None, Some(omega)) => SegmentCount::Estimate { omega },
            (None, None) => unreachable!("checked when resolving"),
        };
        Ok(SegmentationConfig {
            features: self.feature_spec()?,
            segments,
            components: self.components,
            delta: self.delta,
            outer_iters: self.outer_iters,
            solver: self.solver_params(),
            kmeans: KMeansOptions { restarts: self.restarts, max_iters: self.lloyd_iters },
            seed: self.seed,
        })
    }

    /// Every setting as `key = value` lines, suitable for `--config`.
    pub fn to_manifest(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        if let Some(p) = &self.input {
            line("input", p.display().to_string());
        }
        if let Some(p) = &self.output {
            line("output", p.display().to_string());
        }
        line("features", self.features.name().into());
        if let Some(k) = self.k {
            line("k", k.to_string());
        }
        if let Some(w) = self.estimate_omega {
            line("estimate-omega", w.to_string());
        }
        if let Some(c) = self.components {
            line("components", c.to_string());
        }
        line("lambda", self.lambda.to_string());
        line("delta", self.delta.to_string());
        line(
            "s",
            self.scales.iter().map(|sc| format!("{}:{}", sc.s, sc.weight)).collect::<Vec<_>>().join(","),
        );
        line(
            "padding",
            match self.padding {
                Padding::Mirror => "mirror".into(),
                Padding::Clamp => "clamp".into(),
            },
        );
        line("bins", self.bins.to_string());
        line("gabor-sizes", join(&self.gabor_sizes));
        line("gabor-orientations", join(&self.gabor_orientations));
        line("intensity-filter", self.intensity_filter.to_string());
        line("outer-iters", self.outer_iters.to_string());
        line("sigma", self.sigma.to_string());
        line("tau", self.tau.to_string());
        line("theta", self.theta.to_string());
        line("epsilon", self.epsilon.to_string());
        line("t-max", self.t_max.to_string());
        line("restarts", self.restarts.to_string());
        line("lloyd-iters", self.lloyd_iters.to_string());
        line("seed", self.seed.to_string());
        out
    }
}
