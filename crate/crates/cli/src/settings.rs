//! Layered run configuration: built-in defaults, then the config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use dscsma::config::{parse_list, timings_to_config, ConfigFile};
use dscsma::partner::validate_partner_map;
use dscsma::{FrameTimings, PartnerMap};

use crate::{CliError, CommonArgs, Mode};

pub const DEFAULT_W0: [usize; 5] = [32, 64, 128, 256, 512];
pub const DEFAULT_N: [usize; 1] = [30];
pub const DEFAULT_M: [usize; 1] = [4];
pub const TABLE5_N: [usize; 5] = [20, 50, 100, 200, 500];
pub const TABLE5_W0: [usize; 5] = [32, 64, 128, 256, 1024];

/// The example partner map used when none is configured.
pub fn example_map() -> PartnerMap {
    validate_partner_map(&[
        vec![0, 1, 0, 1, 1],
        vec![1, 0, 1, 1, 1],
        vec![0, 1, 0, 1, 1],
        vec![1, 1, 1, 0, 0],
        vec![1, 1, 1, 0, 0],
    ])
    .expect("valid map")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub timings: FrameTimings,
    pub w0: Vec<usize>,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seed: u64,
    pub reps: usize,
    pub horizon: u64,
    pub mode: Mode,
    pub refuse_prob: f64,
    pub target: Option<usize>,
    pub first_only: bool,
    pub frontier_cap: usize,
    pub symbol_rate: Option<f64>,
    pub partner_map: Option<PartnerMap>,
    pub connectivity: Option<PartnerMap>,
    pub out: PathBuf,
}

/// Per-command grid defaults.
pub struct Defaults {
    pub w0: &'static [usize],
    pub n: &'static [usize],
}

impl Defaults {
    pub const STANDARD: Defaults = Defaults {
        w0: &DEFAULT_W0,
        n: &DEFAULT_N,
    };
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn grid(
    key: &str,
    flag: Option<&str>,
    file: &ConfigFile,
    default: &[usize],
) -> Result<Vec<usize>, CliError> {
    let values = match flag {
        Some(v) => parse_list::<usize>(key, v).map_err(cfg_err)?,
        None => file
            .list::<usize>(key)
            .map_err(cfg_err)?
            .unwrap_or_else(|| default.to_vec()),
    };
    if values.is_empty() {
        return Err(CliError::Config(format!("grid '{key}' is empty")));
    }
    Ok(values)
}

fn read_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    ConfigFile::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl Settings {
    pub fn resolve(args: &CommonArgs, defaults: &Defaults) -> Result<Self, CliError> {
        let file = match &args.timings {
            Some(p) => read_file(p)?,
            None => ConfigFile::default(),
        };
        let mut timings = FrameTimings::default();
        file.apply_timings(&mut timings).map_err(cfg_err)?;
        timings
            .validate()
            .map_err(|e| CliError::Config(format!("timings: {e}")))?;

        let w0 = grid("w0", args.w0.as_deref(), &file, defaults.w0)?;
        let n = grid("n", args.n.as_deref(), &file, defaults.n)?;
        let m = grid("m", args.m.as_deref(), &file, &DEFAULT_M)?;
        if let Some(bad) = w0.iter().find(|w| **w < 2 || !w.is_power_of_two()) {
            return Err(CliError::Config(format!(
                "w0 = {bad} is not a power of two >= 2"
            )));
        }
        if let Some(bad) = m.iter().find(|m| **m < 2) {
            return Err(CliError::Config(format!(
                "m = {bad}: need at least two stages"
            )));
        }
        if n.contains(&0) {
            return Err(CliError::Config("n = 0: need at least one pair".into()));
        }

        let scalar = |key: &str| file.get(key).map(str::to_string);
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| scalar(key));
        let parse = |v: Option<String>, key: &str| -> Result<Option<f64>, CliError> {
            v.map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad {key} '{s}'")))
            })
            .transpose()
        };
        let int = |v: Option<String>, key: &str| -> Result<Option<u64>, CliError> {
            v.map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Config(format!("bad {key} '{s}'")))
            })
            .transpose()
        };

        let seed = int(pick(args.seed.map(|s| s.to_string()), "seed"), "seed")?.unwrap_or(1);
        let reps =
            int(pick(args.reps.map(|s| s.to_string()), "reps"), "reps")?.unwrap_or(10) as usize;
        let horizon = int(
            pick(args.horizon.map(|s| s.to_string()), "horizon"),
            "horizon",
        )?
        .unwrap_or(1_000_000);
        if reps == 0 {
            return Err(CliError::Config("reps must be at least 1".into()));
        }
        if horizon < 10_000 {
            return Err(CliError::Config(format!(
                "horizon {horizon} is below 10000 slots"
            )));
        }
        let mode = match pick(args.mode.map(|m| m.as_str().to_string()), "mode") {
            None => Mode::Pairs,
            Some(s) => {
                Mode::parse(&s).ok_or_else(|| CliError::Config(format!("unknown mode '{s}'")))?
            }
        };
        let refuse_prob = parse(
            pick(args.refuse_prob.map(|p| p.to_string()), "refuse_prob"),
            "refuse_prob",
        )?
        .unwrap_or(0.0);
        if !(0.0..=1.0).contains(&refuse_prob) {
            return Err(CliError::Config(format!(
                "refuse_prob {refuse_prob} outside [0, 1]"
            )));
        }
        let target =
            int(pick(args.target.map(|t| t.to_string()), "target"), "target")?.map(|t| t as usize);
        let first_only = args.first_only
            || matches!(
                scalar("first_only").as_deref().map(str::trim),
                Some("true" | "1" | "yes")
            );
        let frontier_cap = int(
            pick(args.frontier_cap.map(|c| c.to_string()), "frontier_cap"),
            "frontier_cap",
        )?
        .unwrap_or(10_000) as usize;
        if frontier_cap == 0 {
            return Err(CliError::Config("frontier_cap must be positive".into()));
        }
        let symbol_rate = parse(
            pick(args.symbol_rate.map(|r| r.to_string()), "symbol_rate"),
            "symbol_rate",
        )?;
        if let Some(r) = symbol_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CliError::Config(format!(
                    "symbol_rate {r} must be positive"
                )));
            }
        }
        let partner_map = file
            .partner_map("partner_map")
            .map_err(|e| CliError::Config(format!("partner_map: {e}")))?;
        let connectivity = file
            .partner_map("connectivity")
            .map_err(|e| CliError::Config(format!("connectivity: {e}")))?;

        Ok(Self {
            timings,
            w0,
            n,
            m,
            seed,
            reps,
            horizon,
            mode,
            refuse_prob,
            target,
            first_only,
            frontier_cap,
            symbol_rate,
            partner_map,
            connectivity,
            out: args.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    /// Fully resolved configuration in the config-file format.
    pub fn to_config(&self, command: &str) -> ConfigFile {
        let mut cfg = timings_to_config(&self.timings);
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        };
        cfg.set("command", command);
        cfg.set("w0", join(&self.w0));
        cfg.set("n", join(&self.n));
        cfg.set("m", join(&self.m));
        cfg.set("seed", self.seed.to_string());
        cfg.set("reps", self.reps.to_string());
        cfg.set("horizon", self.horizon.to_string());
        cfg.set("mode", self.mode.as_str());
        cfg.set("refuse_prob", self.refuse_prob.to_string());
        cfg.set("first_only", self.first_only.to_string());
        cfg.set("frontier_cap", self.frontier_cap.to_string());
        if let Some(t) = self.target {
            cfg.set("target", t.to_string());
        }
        if let Some(r) = self.symbol_rate {
            cfg.set("symbol_rate", r.to_string());
        }
        if let Some(m) = &self.partner_map {
            cfg.set_matrix("partner_map", m.to_rows());
        }
        if let Some(m) = &self.connectivity {
            cfg.set_matrix("connectivity", m.to_rows());
        }
        cfg
    }
}
