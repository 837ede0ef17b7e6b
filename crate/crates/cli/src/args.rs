use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use frcb_core::shape::{ShapeHypothesis, ShapeKind};
use serde::Serialize;

use crate::error::EXIT_CODE_HELP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// CB and FRCB tests of a regression shape hypothesis.
    Test,
    /// CB and FRCB tests of a mode-count hypothesis on density data.
    TestDensity,
    /// Monte Carlo rejection table.
    Simulate,
    /// Simultaneous band for the first derivative.
    Band,
    /// Fitted curves over a list of bandwidths.
    Paths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Shape hypothesis as written on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypothesisArg(pub ShapeKind);

impl FromStr for HypothesisArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let kind = match s {
            "monotone-inc" => ShapeKind::MonotoneIncreasing,
            "monotone-dec" => ShapeKind::MonotoneDecreasing,
            "monotone" => ShapeKind::MonotoneEither,
            "quasi-convex" => ShapeKind::QuasiConvex,
            "quasi-concave" => ShapeKind::QuasiConcave,
            _ => match s.strip_prefix("modes=").map(str::parse::<u32>) {
                Some(Ok(k)) if k >= 1 => ShapeKind::AtMostKModes(k),
                _ => {
                    return Err(format!(
                        "unknown hypothesis `{s}`; use monotone-inc, monotone-dec, monotone, modes=K, quasi-convex or quasi-concave"
                    ))
                }
            },
        };
        Ok(HypothesisArg(kind))
    }
}

impl std::fmt::Display for HypothesisArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            ShapeKind::MonotoneIncreasing => f.write_str("monotone-inc"),
            ShapeKind::MonotoneDecreasing => f.write_str("monotone-dec"),
            ShapeKind::MonotoneEither => f.write_str("monotone"),
            ShapeKind::AtMostKModes(k) => write!(f, "modes={k}"),
            ShapeKind::QuasiConvex => f.write_str("quasi-convex"),
            ShapeKind::QuasiConcave => f.write_str("quasi-concave"),
        }
    }
}

impl HypothesisArg {
    pub fn hypothesis(self) -> ShapeHypothesis {
        ShapeHypothesis::new(self.0)
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "frcb", version, about = "Critical-bandwidth and flatness-robust shape tests", after_help = EXIT_CODE_HELP)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub command: Command,

    /// CSV with a header row: x,y for regression commands, one column for density.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// monotone-inc | monotone-dec | monotone | modes=K | quasi-convex | quasi-concave
    /// [default: monotone, or modes=1 for test-density]
    #[arg(long)]
    pub hypothesis: Option<HypothesisArg>,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Bootstrap replications.
    #[arg(long, default_value_t = 200)]
    pub boot: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,

    /// Worker threads; results do not depend on this.
    #[arg(long, env = "FRCB_WORKERS")]
    pub workers: Option<usize>,

    #[arg(long, default_value = "frcb-out")]
    pub out: PathBuf,

    /// Report format for the main result file.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Run only the plain CB test.
    #[arg(long)]
    pub no_frcb: bool,

    /// Re-estimate the band and filtered grid inside every replication.
    #[arg(long)]
    pub refilter_per_replication: bool,

    /// Extra bandwidths for fitted-curve output (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub bandwidths: Vec<f64>,

    /// Fixed derivative-band bandwidth instead of the rule of thumb.
    #[arg(long)]
    pub band_bandwidth: Option<f64>,

    /// Coverage of the `band` command [default: 1 - n^(-1/2)].
    #[arg(long)]
    pub level: Option<f64>,

    /// Simulation functions (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "m1,flat1,m3,m4")]
    pub functions: Vec<String>,

    /// Simulation sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "50,100,250,500,1000,2000")]
    pub sizes: Vec<usize>,

    /// Simulated datasets per cell.
    #[arg(long, default_value_t = 200)]
    pub sims: usize,

    #[arg(long, default_value_t = 0.25)]
    pub noise_sd: f64,

    /// Recompute every replication's critical bandwidth in simulations
    /// instead of a single fit at the statistic.
    #[arg(long)]
    pub full_search: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypothesis_strings_round_trip() {
        for s in ["monotone-inc", "monotone-dec", "monotone", "modes=3", "quasi-convex", "quasi-concave"] {
            assert_eq!(s.parse::<HypothesisArg>().unwrap().to_string(), s);
        }
        assert!("modes=0".parse::<HypothesisArg>().is_err());
        assert!("wiggly".parse::<HypothesisArg>().is_err());
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "frcb", "--command", "test", "--input", "d.csv", "--hypothesis", "modes=2", "--bandwidths", "0.1,0.2",
        ])
        .unwrap();
        assert_eq!(cli.command, Command::Test);
        assert_eq!(cli.hypothesis.unwrap().0, ShapeKind::AtMostKModes(2));
        assert_eq!(cli.bandwidths, vec![0.1, 0.2]);
        assert_eq!(cli.grid_size, 100);
    }
}
