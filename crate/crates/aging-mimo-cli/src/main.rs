//! Command-line driver for the `aging-mimo` toolkit.
//!
//! Four subcommands cover the workflows the library supports:
//!
//! * `simulate` — run a Monte Carlo scenario from a TOML config and write
//!   result rows as CSV or JSON.
//! * `det-equiv` — evaluate the deterministic-equivalent predictions of a
//!   scenario without any Monte Carlo trials.
//! * `pilot-opt` — optimize the pilot power of a symmetric scenario,
//!   optionally sweeping the aging coefficient or the user count.
//! * `figure` — reproduce a built-in figure preset (`fig1` .. `fig9`) into
//!   an output directory.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad
//! config files, unknown presets), 3 for numerical failures. The failure
//! class name is the first token on stderr, e.g. `NoConvergence: ...`.

use aging_mimo::output::{self, fmt_sig9, Metadata, OutputFormat};
use aging_mimo::scenario::{figure_preset, preset_pilot_problem};
use aging_mimo::{Error, PilotOptProblem, PresetKind, Scenario};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

const TOOL: &str = "aging-mimo";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "aging-mimo",
    version,
    about = "Monte Carlo and deterministic-equivalent analysis of uplink receivers \
             over temporally correlated fading channels",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario and write the result table.
    Simulate {
        /// Scenario file (TOML; unknown keys are rejected).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Output path; stdout when omitted. With `--format csv`, a scenario
        /// that collects distribution quantiles also writes a sibling
        /// `<stem>_cdf.csv` file next to this path.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Output encoding.
        #[arg(long, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        /// Master seed override.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Trial-count override; 0 switches to analysis-only output.
        #[arg(long, value_name = "N")]
        trials: Option<u64>,
        /// Worker threads (default: one per logical CPU). Results are
        /// bit-identical for every thread count.
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
    },
    /// Print the deterministic-equivalent predictions of a scenario as CSV
    /// on stdout (no Monte Carlo trials are run).
    DetEquiv {
        /// Scenario file (TOML; unknown keys are rejected).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Optimize the pilot power of a symmetric scenario and print a CSV
    /// table on stdout.
    PilotOpt {
        /// Scenario file (TOML); must use the shared `[user]` template.
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Sweep expression `var=start:step:end` with `var` one of `a`
        /// (aging coefficient) or `K` (user count), e.g. `a=0:0.05:0.95`.
        #[arg(long, value_name = "EXPR")]
        sweep: Option<String>,
    },
    /// Run a built-in figure preset into a directory.
    Figure {
        /// Preset name, `fig1` through `fig9`.
        #[arg(long, value_name = "NAME")]
        name: String,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("{e}");
        std::process::exit(if e.is_config() { 2 } else { 3 });
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate {
            config,
            out,
            format,
            seed,
            trials,
            threads,
        } => simulate(&config, out.as_deref(), format, seed, trials, threads),
        Command::DetEquiv { config } => det_equiv(&config),
        Command::PilotOpt { config, sweep } => pilot_opt(&config, sweep.as_deref()),
        Command::Figure { name, out } => figure(&name, &out),
    }
}

/// Loads a scenario, folding unreadable-file errors into the config class so
/// a missing or unreadable path exits with the configuration code.
fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    match Scenario::load(path) {
        Err(Error::Io(e)) => Err(Error::Config(format!(
            "cannot read {}: {e}",
            path.display()
        ))),
        other => other,
    }
}

fn print_warnings(scenario: &Scenario) {
    for w in scenario.warnings() {
        eprintln!("warning: {w}");
    }
}

fn simulate(
    config: &Path,
    out: Option<&Path>,
    format: OutputFormat,
    seed: Option<u64>,
    trials: Option<u64>,
    threads: Option<usize>,
) -> Result<(), Error> {
    let mut scenario = load_scenario(config)?;
    if let Some(seed) = seed {
        scenario.master_seed = seed;
    }
    if let Some(trials) = trials {
        scenario.trials = trials;
    }
    print_warnings(&scenario);

    let rows = aging_mimo::run_scenario_with_threads(&scenario, threads)?;
    let metadata = Metadata {
        tool: TOOL.into(),
        version: VERSION.into(),
        note: String::new(),
        scenario: scenario.clone(),
    };
    let has_cdf = rows.iter().any(|r| r.cdf.is_some());

    match out {
        Some(path) => {
            let mut writer = std::io::BufWriter::new(std::fs::File::create(path)?);
            output::emit(format, &metadata, &rows, &mut writer)?;
            writer.flush()?;
            eprintln!("wrote {}", path.display());
            if has_cdf && format == OutputFormat::Csv {
                let cdf_path = sibling_cdf_path(path);
                let mut writer = std::io::BufWriter::new(std::fs::File::create(&cdf_path)?);
                output::emit_cdf_csv(&rows, &mut writer)?;
                writer.flush()?;
                eprintln!("wrote {}", cdf_path.display());
            }
        }
        None => {
            output::emit(format, &metadata, &rows, std::io::stdout().lock())?;
            if has_cdf && format == OutputFormat::Csv {
                eprintln!(
                    "warning: distribution quantiles are only written alongside --out; \
                     pass a path to capture them"
                );
            }
        }
    }
    Ok(())
}

/// `results.csv` -> `results_cdf.csv` (same directory, same extension).
fn sibling_cdf_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    match path.extension().and_then(|s| s.to_str()) {
        Some(ext) => path.with_file_name(format!("{stem}_cdf.{ext}")),
        None => path.with_file_name(format!("{stem}_cdf")),
    }
}

fn det_equiv(config: &Path) -> Result<(), Error> {
    let mut scenario = load_scenario(config)?;
    scenario.analysis_only = true;
    print_warnings(&scenario);
    let rows = aging_mimo::run_scenario(&scenario)?;
    output::emit_csv(&rows, std::io::stdout().lock())
}

/// The swept axis of a `pilot-opt` run.
#[derive(Clone, Copy)]
enum SweepKey {
    Aging,
    Users,
}

impl SweepKey {
    fn label(self) -> &'static str {
        match self {
            SweepKey::Aging => "a",
            SweepKey::Users => "K",
        }
    }
}

/// Parses `var=start:step:end` into a sweep axis and its value grid.
fn parse_sweep_expr(expr: &str) -> Result<(SweepKey, Vec<f64>), Error> {
    let (var, range) = expr.split_once('=').ok_or_else(|| {
        Error::Config(format!("sweep '{expr}' must look like var=start:step:end"))
    })?;
    let key = match var.trim() {
        "a" => SweepKey::Aging,
        "K" => SweepKey::Users,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep variable '{other}' (expected a or K)"
            )))
        }
    };
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "sweep range '{range}' must be start:step:end"
        )));
    }
    let mut bounds = [0f64; 3];
    for (slot, text) in bounds.iter_mut().zip(&parts) {
        *slot = text
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad sweep bound '{text}': {e}")))?;
    }
    let [start, step, end] = bounds;
    if !start.is_finite() || !end.is_finite() || !(step > 0.0) || end < start {
        return Err(Error::Config(format!(
            "sweep range '{range}' needs finite bounds, positive step, and end >= start"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let values: Vec<f64> = (0..=n).map(|i| start + step * i as f64).collect();
    for &v in &values {
        match key {
            SweepKey::Aging => {
                if !(0.0..1.0).contains(&v) {
                    return Err(Error::Config(format!(
                        "aging sweep value {v} outside [0, 1)"
                    )));
                }
            }
            SweepKey::Users => {
                if v.fract() != 0.0 || v < 1.0 || v > f64::from(u32::MAX) {
                    return Err(Error::Config(format!(
                        "user-count sweep value {v} must be a positive integer"
                    )));
                }
            }
        }
    }
    Ok((key, values))
}

fn pilot_opt(config: &Path, sweep: Option<&str>) -> Result<(), Error> {
    let scenario = load_scenario(config)?;
    let template = scenario.user.clone().ok_or_else(|| {
        Error::Config(
            "pilot-opt needs the shared [user] template (symmetric users); \
             per-user [[users]] lists are not supported here"
                .into(),
        )
    })?;
    let base = PilotOptProblem {
        k: scenario.system.k,
        tau_p: scenario.system.tau_p,
        tau_d: scenario.system.tau_d,
        p_tot: scenario.system.p_tot,
        alpha: 10f64.powf(-template.alpha_db / 20.0),
        a: template.a,
        c: template.c,
        sigma_p2: scenario.system.sigma_p2,
        sigma_d2: scenario.system.sigma_d2,
    };

    let points: Vec<(&'static str, f64, PilotOptProblem)> = match sweep {
        None => vec![("none", 0.0, base)],
        Some(expr) => {
            let (key, values) = parse_sweep_expr(expr)?;
            values
                .into_iter()
                .map(|v| {
                    let mut problem = base.clone();
                    match key {
                        SweepKey::Aging => problem.a = v,
                        SweepKey::Users => problem.k = v as u32,
                    }
                    (key.label(), v, problem)
                })
                .collect()
        }
    };

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "sweep_var,sweep_value,p_p_opt,objective_at_opt,grid_fallback"
    )?;
    for (label, value, problem) in points {
        let opt = problem.optimal_pilot_power()?;
        writeln!(
            stdout,
            "{label},{},{},{},{}",
            fmt_sig9(value),
            fmt_sig9(opt.p_p),
            fmt_sig9(opt.objective),
            opt.grid_fallback,
        )?;
    }
    Ok(())
}

/// Symmetric deterministic-equivalent SINR at pilot power `p_p` for the
/// system described by `problem`, with `n_r` receive antennas.
fn symmetric_deq_sinr(problem: &PilotOptProblem, p_p: f64, n_r: u32) -> Result<f64, Error> {
    let cfg = aging_mimo::SystemConfig {
        k: problem.k,
        n_r,
        tau_p: problem.tau_p,
        tau_d: problem.tau_d,
        p_tot: problem.p_tot,
        sigma_p2: problem.sigma_p2,
        sigma_d2: problem.sigma_d2,
    };
    let user = aging_mimo::UserParams::new(problem.alpha, problem.a, problem.c, p_p, &cfg)?;
    let stats =
        aging_mimo::estimation::scalar_conditional(user.c, user.a, user.pilot_noise_var(&cfg))?;
    let phi = aging_mimo::sinr::phi_scalar(&user, &stats);
    let beta = f64::from(problem.k) * user.data_weight() * stats.z + problem.sigma_d2;
    aging_mimo::sinr::symmetric_sinr(phi, beta, n_r as usize, problem.k as usize)
}

fn figure(name: &str, dir: &Path) -> Result<(), Error> {
    let preset = figure_preset(name)?;
    std::fs::create_dir_all(dir)?;
    let mut outputs: Vec<String> = Vec::new();
    let mut runs_meta: Vec<serde_json::Value> = Vec::new();

    match &preset.kind {
        PresetKind::Scenarios(runs) => {
            for run in runs {
                let rows = aging_mimo::run_scenario(&run.scenario)?;
                let file_name = format!("{}_{}.csv", preset.name, run.slug);
                write_text(dir, &file_name, &output::csv_string(&rows))?;
                outputs.push(file_name);
                if rows.iter().any(|r| r.cdf.is_some()) {
                    let cdf_name = format!("{}_{}_cdf.csv", preset.name, run.slug);
                    write_text(dir, &cdf_name, &output::cdf_csv_string(&rows))?;
                    outputs.push(cdf_name);
                }
                runs_meta.push(serde_json::json!({
                    "slug": run.slug,
                    "scenario": run.scenario,
                }));
            }
        }
        PresetKind::PilotOptSweep { a_values, k_values } => {
            let mut text = String::from("k,a,p_p_opt,objective_at_opt,grid_fallback\n");
            for &k in k_values {
                for &a in a_values {
                    let opt = preset_pilot_problem(k, a).optimal_pilot_power()?;
                    let _ = writeln!(
                        text,
                        "{k},{},{},{},{}",
                        fmt_sig9(a),
                        fmt_sig9(opt.p_p),
                        fmt_sig9(opt.objective),
                        opt.grid_fallback,
                    );
                }
            }
            let file_name = format!("{}_main.csv", preset.name);
            write_text(dir, &file_name, &text)?;
            outputs.push(file_name);
        }
        PresetKind::PilotOptSinr { a_values, combos } => {
            let mut text = String::from("k,n_r,a,p_p_opt,sinr_db\n");
            for &(k, n_r) in combos {
                for &a in a_values {
                    let problem = preset_pilot_problem(k, a);
                    let opt = problem.optimal_pilot_power()?;
                    let gamma = symmetric_deq_sinr(&problem, opt.p_p, n_r)?;
                    let _ = writeln!(
                        text,
                        "{k},{n_r},{},{},{}",
                        fmt_sig9(a),
                        fmt_sig9(opt.p_p),
                        fmt_sig9(10.0 * gamma.log10()),
                    );
                }
            }
            let file_name = format!("{}_main.csv", preset.name);
            write_text(dir, &file_name, &text)?;
            outputs.push(file_name);
        }
    }

    let meta = serde_json::json!({
        "tool": TOOL,
        "version": VERSION,
        "figure": preset.name,
        "note": preset.note,
        "outputs": outputs,
        "runs": runs_meta,
    });
    let mut meta_text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    meta_text.push('\n');
    write_text(dir, &format!("{}_meta.json", preset.name), &meta_text)?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
