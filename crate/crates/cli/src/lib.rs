//! Command-line front end for `featseg`: segmentation of image files,
//! synthetic test scenes, mask evaluation and the acceptance suite.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod suite;

use std::path::PathBuf;

use args::{Cli, Command, SynthCommand};
use commands::{CrystalOptions, MosaicOptions, SynthOptions};
use config::{read_key_values, SegmentSettings};
pub use error::{CliError, Result};

/// Executes a parsed command line, printing results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(a) => {
            let mut map = match &a.config {
                Some(path) => read_key_values(path)?,
                None => Default::default(),
            };
            map.extend(a.flag_values());
            let settings = SegmentSettings::from_map(&map)?;
            let out = commands::run_segment(&settings)?;
            println!("{}", commands::describe_segmentation(&out.result));
            for p in [&out.labels, &out.overlay, &out.manifest] {
                println!("wrote {}", p.display());
            }
        }
        Command::Synth(s) => {
            let options = match s {
                SynthCommand::Crystal(c) => SynthOptions::Crystal(CrystalOptions {
                    output: c.output,
                    size: c.size,
                    grains: c.grains,
                    rotation: c.rotation,
                    noise: c.noise,
                    seed: c.seed,
                    period: c.period,
                    lattice: c.lattice.into(),
                    second_lattice: c.second_lattice.map(Into::into),
                }),
                SynthCommand::Mosaic(m) => SynthOptions::Mosaic(MosaicOptions {
                    output: m.output,
                    size: m.size,
                    regions: m.regions,
                    period: m.period,
                    seed: m.seed,
                }),
            };
            let (image, truth) = commands::run_synth(&options)?;
            println!("wrote {}", image.display());
            println!("wrote {}", truth.display());
        }
        Command::Eval(e) => {
            print!("{}", commands::run_eval(&e.pred, &e.truth, e.overlap, e.csv.as_deref())?);
        }
        Command::Reproduce(r) => {
            let workdir = r.workdir.unwrap_or_else(default_workdir);
            let report = commands::run_reproduce(r.suite.into(), &workdir, r.summary.as_deref())?;
            print!("{}", report.summary());
            if !report.all_passed() {
                return Err(CliError::Failed("acceptance suite failed".into()));
            }
        }
    }
    Ok(())
}

fn default_workdir() -> PathBuf {
    std::env::temp_dir().join(format!("featseg-reproduce-{}", std::process::id()))
}
