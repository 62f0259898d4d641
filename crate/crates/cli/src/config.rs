use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use arw_core::stats::GeometricConvention;
use arw_core::tape::ParamError;
use arw_core::{ModelParams, DEFAULT_FUEL};
use clap::{Parser, ValueEnum};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    SampleSn,
    DdRun,
    Hockey,
    Ball,
    Dominance,
    Ejector,
    ExitFraction,
    NmlCheck,
    InnerBound,
    AbelianCheck,
    MonotonicityCheck,
    EstimateRhoc,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Geometric {
    /// Support starts at 0.
    Failures,
    /// Support starts at 1.
    Trials,
}

impl From<Geometric> for GeometricConvention {
    fn from(g: Geometric) -> Self {
        match g {
            Geometric::Failures => GeometricConvention::FailuresBeforeSuccess,
            Geometric::Trials => GeometricConvention::TrialsUntilSuccess,
        }
    }
}

/// Comma-separated list given as one value, so a later occurrence replaces an
/// earlier one.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse::<T>().map_err(|e| format!("`{x}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| if v.is_empty() { Err("empty list".into()) } else { Ok(List(v)) })
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// `n:m` size pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair(pub u64, pub u64);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected n:m")?;
        let a = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b = b.trim().parse().map_err(|e| format!("{e}"))?;
        Ok(Pair(a, b))
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

/// Monte Carlo experiments for one-dimensional activated random walks.
///
/// Every option may also be given in a `key=value` file passed with
/// `--config`; options on the command line take precedence.
#[derive(Clone, Debug, Parser)]
#[command(name = "arw", version, args_override_self = true)]
pub struct RunConfig {
    pub command: Command,

    /// File of `key=value` lines with defaults for any option.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Sleep rate.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Probability of a jump to the left.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, env = "ARW_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicas: u64,
    /// Toppling budget per stabilization.
    #[arg(long, default_value_t = DEFAULT_FUEL, value_parser = clap::value_parser!(u64).range(1..))]
    pub fuel: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..1025))]
    pub workers: Option<u64>,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Support convention of the geometric variables in `nml-check`.
    #[arg(long, value_enum, default_value_t = Geometric::Failures)]
    pub geometric: Geometric,
    /// Exit with status 3 when the command's built-in check fails.
    #[arg(long)]
    pub check: bool,

    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Particles at the origin for `ball`.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=u32::MAX as u64))]
    pub k: u64,
    /// Particles added in `dd-run`.
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    /// Size ladder for `estimate-rhoc`.
    #[arg(long, default_value = "50,100,200,400")]
    pub sizes: List<u64>,
    /// Densities at which the hockey curve is read.
    #[arg(long, default_value_t = List(arw_core::experiments::default_rho_grid()))]
    pub rho_grid: List<f64>,
    /// Thresholds ε for `P(M_n > εn)`.
    #[arg(long, default_value_t = List(arw_core::experiments::DEFAULT_EPS_GRID.to_vec()))]
    pub eps_grid: List<f64>,
    /// `n:m` pairs for `dominance`.
    #[arg(long, default_value = "1:1,5:5,20:30")]
    pub pairs: List<Pair>,
    /// Initial occupation probability; 1 means one active particle per site.
    #[arg(long, default_value_t = 1.0)]
    pub density: f64,
    #[arg(long, default_value = "0,1,2,4,8")]
    pub i_grid: List<u64>,
    #[arg(long, default_value = "0,1,2,4,8")]
    pub j_grid: List<u64>,
    #[arg(long, default_value = "20,40,80")]
    pub ns: List<u64>,
    #[arg(long, default_value = "5,10,20")]
    pub ks: List<u64>,
    #[arg(long, default_value = "1,5,10")]
    pub xs: List<i64>,
    /// Site receiving the extra particles in `monotonicity-check`.
    #[arg(long, default_value_t = 1)]
    pub x: i64,
    #[arg(long, default_value_t = 1)]
    pub extra: u32,
}

impl RunConfig {
    /// Parses `argv`, merging in the config file if one is named.
    pub fn parse_args<I, S>(argv: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = S>,
        S: Into<OsString> + Clone,
    {
        let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
        let first = Self::try_parse_from(&argv)?;
        let cfg = match &first.config {
            None => first,
            Some(path) => {
                let mut merged = vec![argv.first().cloned().unwrap_or_else(|| "arw".into())];
                merged.extend(file_args(path)?);
                merged.extend(argv.into_iter().skip(1));
                Self::try_parse_from(merged)?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.lambda, self.p).map_err(|e| {
            let flag = match e {
                ParamError::Lambda(_) => "lambda",
                ParamError::P(_) => "p",
            };
            CliError::Config { flag, message: e.to_string() }
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        let bad = |flag: &'static str, message: &str| Err(CliError::Config { flag, message: message.into() });
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density", "density must lie in [0,1]");
        }
        if self.rho_grid.0.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return bad("rho-grid", "densities must be finite and non-negative");
        }
        if self.eps_grid.0.iter().any(|&e| !(e.is_finite() && e >= 0.0)) {
            return bad("eps-grid", "thresholds must be finite and non-negative");
        }
        if self.pairs.0.iter().any(|p| p.0 == 0 || p.1 == 0) {
            return bad("pairs", "pair sizes must be at least 1");
        }
        if self.sizes.0.contains(&0) {
            return bad("sizes", "sizes must be at least 1");
        }
        if self.ns.0.contains(&0) || self.ks.0.contains(&0) {
            return bad(if self.ns.0.contains(&0) { "ns" } else { "ks" }, "sizes must be at least 1");
        }
        if self.command == Command::MonotonicityCheck && !(1..=self.n as i64).contains(&self.x) {
            return bad("x", "site must lie in [1,n]");
        }
        Ok(())
    }

    /// Settings that determine the results, in a fixed order. Worker count and
    /// output location are left out because they cannot change the output.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        vec![
            ("command", self.command.to_string()),
            ("lambda", self.lambda.to_string()),
            ("p", self.p.to_string()),
            ("seed", self.seed.to_string()),
            ("replicas", self.replicas.to_string()),
            ("fuel", self.fuel.to_string()),
            ("format", format!("{:?}", self.format).to_lowercase()),
            ("geometric", format!("{:?}", self.geometric).to_lowercase()),
            ("check", self.check.to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("k", self.k.to_string()),
            ("steps", self.steps.to_string()),
            ("sizes", self.sizes.to_string()),
            ("rho-grid", self.rho_grid.to_string()),
            ("eps-grid", self.eps_grid.to_string()),
            ("pairs", self.pairs.to_string()),
            ("density", self.density.to_string()),
            ("i-grid", self.i_grid.to_string()),
            ("j-grid", self.j_grid.to_string()),
            ("ns", self.ns.to_string()),
            ("ks", self.ks.to_string()),
            ("xs", self.xs.to_string()),
            ("x", self.x.to_string()),
            ("extra", self.extra.to_string()),
        ]
    }
}

/// Turns `key=value` lines into `--key=value` arguments. Blank lines and lines
/// starting with `#` are skipped.
fn file_args(path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        flag: "config",
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut args = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
            flag: "config",
            message: format!("{}:{}: expected key=value", path.display(), lineno + 1),
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "command" | "config" => {
                return Err(CliError::Config {
                    flag: "config",
                    message: format!("{}:{}: `{key}` cannot be set from a file", path.display(), lineno + 1),
                })
            }
            "check" => match value {
                "true" => args.push("--check".into()),
                "false" => {}
                _ => {
                    return Err(CliError::Config { flag: "check", message: format!("expected true or false, got `{value}`") })
                }
            },
            _ => args.push(format!("--{key}={value}").into()),
        }
    }
    Ok(args)
}
