//! Command-line front end: config resolution, scenario dispatch, CSV and
//! manifest output.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, ResolvedConfig};
use crate::error::{Error, Result};
use crate::experiment::{
    run_cardinal_gate, run_frequency_matching_sweep, run_parity_oscillation, run_phase_flip,
    run_rabi_sweep, run_wigner_tomography, ExperimentConfig, ParityRun,
};
use crate::fit::fit_decaying_cosine;
use crate::units::rad_per_us_to_mhz;
use crate::validation;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "catzeno", version, about = "Cat-state stabilization and Zeno-drive simulator")]
pub struct Cli {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override one key, e.g. `--set kappa1_MHz=0` or `--set device.dim_S=40`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long, global = true, env = "CATZENO_OUTPUT_DIR", value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Base parameter set the config is layered on.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parity traces for every (nbar, drive multiplier) pair.
    Simulate,
    /// Wigner functions of C+ and C- before and after a quarter rotation.
    Wigner,
    /// Fitted frequency and decay time across the drive sweep.
    Sweep,
    /// Cardinal states through the pi/2 gate.
    Gate,
    /// Leakage from |alpha> towards |-alpha> in the two-mode model.
    Phaseflip,
    /// Vacuum overlap over pump proxy and reservoir detuning.
    Matching,
    /// Fit a damped cosine to one column of a CSV file.
    Fit {
        input: PathBuf,
        /// Column to fit (default: the second one).
        #[arg(long)]
        column: Option<String>,
    },
    /// Oracle and invariant self-checks.
    Validate {
        #[arg(long, default_value_t = 20)]
        models: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Wigner => "wigner",
            Command::Sweep => "sweep",
            Command::Gate => "gate",
            Command::Phaseflip => "phaseflip",
            Command::Matching => "matching",
            Command::Fit { .. } => "fit",
            Command::Validate { .. } => "validate",
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_config_error() => EXIT_CONFIG,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

pub fn hint(e: &Error) -> &'static str {
    match exit_code(e) {
        EXIT_CONFIG => "check the key against presets/paper-device.toml; frequencies need _MHz, times _us, angles _rad",
        EXIT_IO => "check that the input exists and the output directory is writable",
        _ => match e {
            Error::TruncationGuard { .. } => "raise device.dim_S",
            Error::Stiffness { .. } => "lower device.dim_S/dim_R or loosen solver.rtol",
            _ => "inspect the parameters of the failing run",
        },
    }
}

/// Full-precision rendering that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn label(x: f64) -> String {
    format!("{x}")
}

/// Collects the files of one run and writes its manifest.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn manifest(&self, command: &str, cfg: &ResolvedConfig, started: SystemTime, elapsed: f64, summary: serde_json::Value) -> Result<()> {
        let doc = json!({
            "tool": "catzeno",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": command,
            "preset": cfg.preset,
            "config": cfg.table,
            "outputs": self.files,
            "timing": {
                "started_unix_s": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
                "elapsed_s": elapsed,
            },
            "summary": summary,
        });
        std::fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

fn parity_table(runs: &[ParityRun]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["time_us".to_string()];
    header.extend(runs.iter().map(|r| format!("parity_nbar{}_x{}", label(r.nbar), label(r.multiplier))));
    let n = runs.first().map_or(0, |r| r.times.len());
    let rows = (0..n)
        .map(|k| {
            std::iter::once(num(runs[0].times[k]))
                .chain(runs.iter().map(|r| num(r.parity[k])))
                .collect()
        })
        .collect();
    (header, rows)
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Reads `column` (or the second column) of a CSV against its first column.
pub fn read_series(path: &Path, column: Option<&str>) -> Result<(String, Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let idx = match column {
        Some(c) => header.iter().position(|h| h == c).ok_or_else(|| Error::ConfigValue {
            key: "column".into(),
            message: format!("`{c}` not in header {:?}", header.iter().collect::<Vec<_>>()),
        })?,
        None if header.len() >= 2 => 1,
        None => {
            return Err(Error::ConfigValue {
                key: "column".into(),
                message: "the CSV needs a time column and at least one data column".into(),
            })
        }
    };
    let parse = |s: &str| {
        s.trim().parse::<f64>().map_err(|e| Error::ConfigValue {
            key: header[idx].to_string(),
            message: format!("`{s}`: {e}"),
        })
    };
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        t.push(parse(&rec[0])?);
        y.push(parse(&rec[idx])?);
    }
    Ok((header[idx].to_string(), t, y))
}

fn dispatch(command: &Command, cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<serde_json::Value> {
    match command {
        Command::Simulate => {
            let runs = run_parity_oscillation(cfg)?;
            let (h, rows) = parity_table(&runs);
            out.csv("parity.csv", &h, &rows)?;
            let phys: Vec<_> = runs
                .iter()
                .map(|r| json!({ "nbar": r.nbar, "multiplier": r.multiplier, "physicality": r.result.physicality }))
                .collect();
            Ok(json!({ "runs": phys }))
        }
        Command::Sweep => {
            let (table, runs) = run_rabi_sweep(cfg)?;
            let header = strings(&[
                "nbar", "eps_over_eps0", "omega_rad_per_us", "tau_us", "tau_over_tau0", "amplitude", "offset",
                "phase_rad", "residual_rms", "converged",
            ]);
            let rows: Vec<Vec<String>> = table
                .iter()
                .map(|r| {
                    vec![
                        num(r.nbar),
                        num(r.multiplier),
                        num(r.omega),
                        num(r.tau),
                        num(r.tau_ratio),
                        num(r.fit.amplitude),
                        num(r.fit.offset),
                        num(r.fit.phase),
                        num(r.fit.residual_rms),
                        r.fit.converged.to_string(),
                    ]
                })
                .collect();
            out.csv("rabi.csv", &header, &rows)?;
            let (h, rows) = parity_table(&runs);
            out.csv("sweep_parity.csv", &h, &rows)?;
            Ok(json!({ "rows": table.len() }))
        }
        Command::Wigner => {
            let rep = run_wigner_tomography(cfg)?;
            let first = &rep.snapshots[0].before;
            let mut header = strings(&["re_alpha", "im_alpha"]);
            for s in &rep.snapshots {
                header.push(format!("{}_before", s.label));
                header.push(format!("{}_after", s.label));
            }
            let mut rows = Vec::new();
            for (i, &im) in first.im_axis.iter().enumerate() {
                for (j, &re) in first.re_axis.iter().enumerate() {
                    let mut row = vec![num(re), num(im)];
                    for s in &rep.snapshots {
                        row.push(num(s.before.get(i, j)));
                        row.push(num(s.after.get(i, j)));
                    }
                    rows.push(row);
                }
            }
            out.csv("wigner.csv", &header, &rows)?;
            let mut header = strings(&["im_alpha"]);
            header.extend(header_pairs(&rep.snapshots.iter().map(|s| s.label).collect::<Vec<_>>()));
            let rows: Vec<Vec<String>> = rep
                .cut_axis
                .iter()
                .enumerate()
                .map(|(k, &y)| {
                    std::iter::once(num(y))
                        .chain(rep.snapshots.iter().flat_map(|s| [num(s.cut_before[k]), num(s.cut_after[k])]))
                        .collect()
                })
                .collect();
            out.csv("wigner_cut.csv", &header, &rows)?;
            let snaps: Vec<_> = rep
                .snapshots
                .iter()
                .map(|s| {
                    json!({
                        "state": s.label,
                        "parity_before": s.parity_before,
                        "parity_after": s.parity_after,
                        "lobes_before": s.lobes_before,
                        "lobes_after": s.lobes_after,
                    })
                })
                .collect();
            Ok(json!({ "nbar": rep.nbar, "hold_us": rep.hold, "snapshots": snaps }))
        }
        Command::Gate => {
            let rep = run_cardinal_gate(cfg)?;
            let mut header = strings(&["state"]);
            for stage in ["ideal", "before", "identity", "gate"] {
                for c in ["x", "y", "z"] {
                    header.push(format!("{stage}_{c}"));
                }
            }
            header.extend(strings(&["identity_leakage", "gate_leakage", "distance"]));
            let rows: Vec<Vec<String>> = rep
                .points
                .iter()
                .map(|p| {
                    let mut row = vec![p.label.clone()];
                    for v in [p.ideal, p.before.as_array(), p.identity.as_array(), p.gate.as_array()] {
                        row.extend(v.iter().map(|&x| num(x)));
                    }
                    row.extend([num(p.identity.leakage), num(p.gate.leakage), num(p.distance)]);
                    row
                })
                .collect();
            out.csv("gate.csv", &header, &rows)?;
            Ok(json!({ "nbar": rep.nbar, "gate_time_us": rep.gate_time, "zero_crossing_us": rep.zero_crossing }))
        }
        Command::Phaseflip => {
            let curves = run_phase_flip(cfg)?;
            let mut header = vec!["time_us".to_string()];
            header.extend(curves.iter().map(|c| format!("leakage_nbar{}_nth{}", label(c.nbar), label(c.n_th))));
            let rows: Vec<Vec<String>> = (0..curves.first().map_or(0, |c| c.times.len()))
                .map(|k| {
                    std::iter::once(num(curves[0].times[k]))
                        .chain(curves.iter().map(|c| num(c.leakage[k])))
                        .collect()
                })
                .collect();
            out.csv("phaseflip.csv", &header, &rows)?;
            let rows: Vec<Vec<String>> = curves.iter().map(|c| vec![num(c.nbar), num(c.n_th), num(c.rate)]).collect();
            out.csv("phaseflip_rates.csv", &strings(&["nbar", "n_th", "rate_per_us"]), &rows)?;
            Ok(json!({ "curves": curves.len() }))
        }
        Command::Matching => {
            let map = run_frequency_matching_sweep(cfg)?;
            let mut rows = Vec::new();
            for (i, &s) in map.amplitude_scales.iter().enumerate() {
                for (j, &d) in map.detunings.iter().enumerate() {
                    rows.push(vec![num(s), num(rad_per_us_to_mhz(d)), num(map.get(i, j))]);
                }
            }
            out.csv("matching.csv", &strings(&["amplitude_scale", "detuning_MHz", "vacuum_overlap"]), &rows)?;
            Ok(json!({ "hold_us": map.hold }))
        }
        Command::Fit { input, column } => {
            let (name, t, y) = read_series(input, column.as_deref())?;
            let f = fit_decaying_cosine(&t, &y)?;
            let header = strings(&[
                "column", "omega_rad_per_us", "tau_us", "amplitude", "offset", "phase_rad", "residual_rms", "converged",
            ]);
            let row = vec![
                name.clone(),
                num(f.omega),
                num(f.tau),
                num(f.amplitude),
                num(f.offset),
                num(f.phase),
                num(f.residual_rms),
                f.converged.to_string(),
            ];
            println!("{name}: omega = {} rad/us, tau = {} us", num(f.omega), num(f.tau));
            out.csv("fit.csv", &header, &[row])?;
            Ok(json!({ "input": input, "column": name, "fit": f }))
        }
        Command::Validate { models, seed } => {
            let mut checks = vec![validation::oracle_equivalence(*models, *seed)?];
            checks.extend(validation::run_all(*seed)?.into_iter().skip(1));
            for c in &checks {
                println!("{c}");
            }
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| vec![c.name.clone(), c.passed.to_string(), num(c.worst), num(c.tolerance)])
                .collect();
            out.csv("validate.csv", &strings(&["check", "passed", "worst", "tolerance"]), &rows)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            if failed > 0 {
                return Err(Error::NonConvergence(format!("{failed} validation checks failed")));
            }
            Ok(json!({ "checks": checks }))
        }
    }
}

fn header_pairs(labels: &[&str]) -> Vec<String> {
    labels
        .iter()
        .flat_map(|l| [format!("{l}_before"), format!("{l}_after")])
        .collect()
}

/// Resolves the config, runs the subcommand and writes its outputs.
/// Returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::ConfigValue {
                key: "--jobs".into(),
                message: "must be at least 1".into(),
            });
        }
        // A pool may already exist when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let resolved = parse_config(cli.config.as_deref(), cli.preset.as_deref(), &cli.overrides)?;
    let cfg = resolved.experiment()?;
    let dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("catzeno-out"));
    let mut out = OutputDir::create(&dir)?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let summary = dispatch(&cli.command, &cfg, &mut out)?;
    out.manifest(cli.command.name(), &resolved, started, clock.elapsed().as_secs_f64(), summary)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, 6.02214076e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(
            exit_code(&Error::UnknownKey {
                key: "x".into(),
                suggestion: None
            }),
            EXIT_CONFIG
        );
        assert_eq!(exit_code(&Error::Stiffness { t: 0.0, step: 0.0 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), EXIT_IO);
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["catzeno", "sweep", "--set", "kappa1_MHz=0", "--jobs", "2"]).unwrap();
        assert_eq!(cli.overrides, vec!["kappa1_MHz=0"]);
        assert_eq!(cli.jobs, Some(2));
        assert!(matches!(cli.command, Command::Sweep));
    }
}
