//! Subcommands of the `pcdlqr` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcdlqr::sim::{controllability_energy, sweep};
use pcdlqr::stability::{certify_ems, mc_second_moment, pole_sweep};
use pcdlqr::synthesis::{gain_vs_order, mc_cost, synthesize};
use pcdlqr::{Matrix, Vector};

use crate::config::{load_problem, Problem};
use crate::gain::{load_gain, GainDocument};
use crate::grid::{parse_deltas, parse_orders, parse_vector};
use crate::manifest::RunManifest;
use crate::output;
use crate::svg::{self, Series};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "pcdlqr", version, about = "Polynomial-chaos LQR synthesis for systems with a random parameter")]
pub struct Cli {
    /// Seed for every sampled quantity.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a fixed gain from the surrogate of order N.
    Synth(SynthArgs),
    /// Search for a mean-square stability certificate.
    Stability(StabilityArgs),
    /// Closed-loop trajectories over a parameter grid.
    Simulate(SimulateArgs),
    /// Open- or closed-loop poles over a parameter grid.
    Poles(PolesArgs),
    /// Monte Carlo second moment and cost.
    Mc(McArgs),
    /// Gain norm and surrogate radius per expansion order.
    Report(ReportArgs),
    /// det(W_c⁻¹) of the open loop over a parameter grid.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Expansion order; defaults to `basis.N` of the config.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the mean-square certificate search.
    #[arg(long)]
    pub no_certify: bool,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, conflicts_with = "open_loop", required_unless_present = "open_loop")]
    pub gain: Option<PathBuf>,
    #[arg(long)]
    pub open_loop: bool,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long)]
    pub x0: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gain: Option<PathBuf>,
    /// Comma-separated initial state; defaults to `x0` of the config.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value = "-1:1:0.25", allow_hyphen_values = true)]
    pub deltas: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Line plot of one channel (outputs when `C` is given, else states).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// 1-based channel index for `--svg`.
    #[arg(long, default_value_t = 1)]
    pub channel: usize,
}

#[derive(Debug, Args)]
pub struct PolesArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Closed-loop gain; the open loop is used without it.
    #[arg(long)]
    pub gain: Option<PathBuf>,
    #[arg(long, default_value = "-1:1:0.02", allow_hyphen_values = true)]
    pub deltas: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gain: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `lo..hi` or a comma list; defaults to `orders` of the config.
    #[arg(long)]
    pub orders: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "-1:1:0.02", allow_hyphen_values = true)]
    pub deltas: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Runs a parsed command; `Ok` carries the verdict line for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Stability(a) => stability(a, seed),
        Command::Simulate(a) => simulate(a, seed),
        Command::Poles(a) => poles(a, seed),
        Command::Mc(a) => mc(a, seed),
        Command::Report(a) => report(a, seed),
        Command::Energy(a) => energy(a, seed),
    }
}

fn manifest_name(path: &Path) -> String {
    RunManifest::path_for(path)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn initial_state(p: &Problem, flag: Option<&str>) -> Result<Vector, CliError> {
    let x0 = match flag {
        Some(s) => Vector::from_vec(parse_vector(s, "x0")?),
        None => p
            .x0()
            .ok_or_else(|| CliError::Input("no initial state: pass --x0 or set `x0` in the config".into()))?,
    };
    if x0.len() != p.sys.states() {
        return Err(CliError::Input(format!(
            "`x0` has {} entries, expected {}",
            x0.len(),
            p.sys.states()
        )));
    }
    Ok(x0)
}

fn gain_for(p: &Problem, path: Option<&Path>) -> Result<Option<Matrix>, CliError> {
    path.map(|g| load_gain(g, p.sys.states(), p.sys.inputs())).transpose()
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn synth(a: SynthArgs, seed: u64) -> Result<String, CliError> {
    let mut man = RunManifest::start("synth");
    let p = load_problem(&a.config)?;
    let order = a.order.unwrap_or(p.order());
    let sys = p.sys.clone().with_approx_order(order);
    let res = synthesize(&sys, &p.weights, order, !a.no_certify)?;
    for w in &res.warnings {
        warn(w);
    }
    GainDocument::new(p.sys.name(), &res, manifest_name(&a.out)).save(&a.out)?;
    man.input(&a.config)
        .option("order", order)
        .option("certify", !a.no_certify)
        .option("seed", seed)
        .output(&a.out);
    man.finish()?;
    let cert = match &res.ems_certificate {
        Some(c) if c.feasible => format!("EMS certificate found (margin {:e})", c.margin),
        Some(c) => format!("no EMS certificate at order {order} (margin {:e})", c.margin),
        None => "certificate not requested".into(),
    };
    Ok(format!(
        "{} N={order}: K synthesized, surrogate radius {:.6}, sampled radius {:.6}, {cert}",
        p.sys.name(),
        res.closed_loop_radius,
        res.sampled_radius
    ))
}

fn stability(a: StabilityArgs, seed: u64) -> Result<String, CliError> {
    let p = load_problem(&a.config)?;
    let k = gain_for(&p, a.gain.as_deref())?;
    let order = a.order.unwrap_or(p.order());
    let cert = certify_ems(&p.sys, k.as_ref(), order)?;
    let x0 = match (&a.x0, p.x0()) {
        (None, None) => Vector::from_element(p.sys.states(), 1.0),
        (flag, _) => initial_state(&p, flag.as_deref())?,
    };
    let mc = mc_second_moment(&p.sys, k.as_ref(), a.samples, a.steps, seed, &x0)?;
    let verdict = if cert.feasible {
        "feasible"
    } else if cert.infeasible {
        "infeasible"
    } else {
        "inconclusive"
    };
    let summary = format!(
        "{verdict} margin={} order={order} sampled_radius={} iterations={}\nmc: second moment decay {:e} over {} steps ({} samples, seed {seed})",
        cert.margin,
        cert.sampled_radius,
        cert.iterations,
        mc.decay(),
        a.steps,
        a.samples
    );
    if cert.feasible {
        Ok(summary)
    } else {
        Err(CliError::NoCertificate(summary))
    }
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<String, CliError> {
    let mut man = RunManifest::start("simulate");
    let p = load_problem(&a.config)?;
    let k = gain_for(&p, a.gain.as_deref())?;
    let x0 = initial_state(&p, a.x0.as_deref())?;
    let grid = parse_deltas(&a.deltas)?;
    let b = sweep(&p.sys, k.as_ref(), &grid, &x0, a.steps, p.output_matrix())?;
    for (d, div) in b.deltas.iter().zip(&b.divergence) {
        if let Some(step) = div {
            warn(format!("trajectory at delta={d} diverged at step {step}"));
        }
    }
    output::write_trajectories(&a.out, &b, p.sys.states(), p.sys.inputs())?;
    man.input(&a.config)
        .option("x0", x0.as_slice())
        .option("steps", a.steps)
        .option("deltas", &a.deltas)
        .option("seed", seed)
        .output(&a.out);
    if let Some(g) = &a.gain {
        man.input(g);
    }
    if let Some(svg_path) = &a.svg {
        let use_y = b.outputs.is_some();
        let width = if use_y { p.output_matrix().map_or(0, |c| c.nrows()) } else { p.sys.states() };
        if a.channel == 0 || a.channel > width {
            return Err(CliError::Input(format!("--channel must be in 1..={width}")));
        }
        let ch = a.channel - 1;
        let series: Vec<Series> = b
            .deltas
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let data = match &b.outputs {
                    Some(out) => &out[j],
                    None => &b.states[j],
                };
                Series {
                    shade: (d + 1.0) / 2.0,
                    points: data.iter().enumerate().map(|(t, v)| (t as f64, v[ch])).collect(),
                }
            })
            .collect();
        let label = format!("{}{}", if use_y { "y" } else { "x" }, a.channel);
        let doc = svg::line_plot(&series, &format!("{} trajectories", p.sys.name()), "t", &label, &manifest_name(svg_path));
        fs::write(svg_path, doc)?;
        man.output(svg_path);
    }
    man.finish()?;
    Ok(format!(
        "{} trajectories over {} parameter values written to {}",
        b.times.len(),
        grid.len(),
        a.out.display()
    ))
}

fn poles(a: PolesArgs, seed: u64) -> Result<String, CliError> {
    if a.csv.is_none() && a.svg.is_none() {
        return Err(CliError::Input("poles needs --csv and/or --svg".into()));
    }
    let mut man = RunManifest::start("poles");
    let p = load_problem(&a.config)?;
    let k = gain_for(&p, a.gain.as_deref())?;
    let grid = parse_deltas(&a.deltas)?;
    let spectra = pole_sweep(&p.sys, k.as_ref(), &grid)?;
    let max_radius = spectra.iter().fold(0.0f64, |r, s| r.max(s.spectral_radius));
    man.input(&a.config).option("deltas", &a.deltas).option("seed", seed);
    if let Some(g) = &a.gain {
        man.input(g);
    }
    if let Some(csv) = &a.csv {
        output::write_poles(csv, &grid, &spectra)?;
        man.output(csv);
    }
    if let Some(svg_path) = &a.svg {
        let pts: Vec<(f64, f64, f64)> = grid
            .iter()
            .zip(&spectra)
            .flat_map(|(d, s)| s.eigenvalues.iter().map(move |z| (*d, z.re, z.im)))
            .collect();
        let title = format!("{} {} poles", p.sys.name(), if k.is_some() { "closed-loop" } else { "open-loop" });
        fs::write(svg_path, svg::pole_map(&pts, &title, &manifest_name(svg_path)))?;
        man.output(svg_path);
    }
    man.finish()?;
    Ok(format!("max |lambda| = {max_radius} over {} parameter values", grid.len()))
}

fn mc(a: McArgs, seed: u64) -> Result<String, CliError> {
    let mut man = RunManifest::start("mc");
    let p = load_problem(&a.config)?;
    let k = load_gain(&a.gain, p.sys.states(), p.sys.inputs())?;
    let x0 = initial_state(&p, a.x0.as_deref())?;
    let moments = mc_second_moment(&p.sys, Some(&k), a.samples, a.steps, seed, &x0)?;
    let cost = mc_cost(&p.sys, &p.weights, &k, &x0, a.samples, a.steps, seed)?;
    if let Some(w) = &cost.warning {
        warn(w);
    }
    if let Some(t) = moments.first_nonfinite {
        warn(format!("some trajectories left the finite range at step {t}"));
    }
    output::write_moments(&a.out, &moments.moments, &cost)?;
    man.input(&a.config)
        .input(&a.gain)
        .option("samples", a.samples)
        .option("steps", a.steps)
        .option("seed", seed)
        .option("x0", x0.as_slice())
        .output(&a.out);
    man.finish()?;
    Ok(format!(
        "mean cost {} (std err {}), second moment decay {:e} over {} steps",
        cost.mean_cost,
        cost.std_err,
        moments.decay(),
        a.steps
    ))
}

fn report(a: ReportArgs, seed: u64) -> Result<String, CliError> {
    let mut man = RunManifest::start("report");
    let p = load_problem(&a.config)?;
    let orders = match (&a.orders, &p.config.orders) {
        (Some(s), _) => parse_orders(s)?,
        (None, Some(o)) if !o.is_empty() => o.clone(),
        _ => parse_orders("1..7")?,
    };
    let rows = gain_vs_order(&p.sys, &p.weights, &orders)?;
    for r in &rows {
        if let Some(e) = &r.error {
            warn(format!("order {}: {e}", r.order));
        }
    }
    output::write_report(&a.out, &rows)?;
    man.input(&a.config).option("orders", &orders).option("seed", seed).output(&a.out);
    if let Some(svg_path) = &a.svg {
        let pts = rows
            .iter()
            .filter_map(|r| r.k_norm.map(|k| (r.order as f64, k)))
            .collect();
        let doc = svg::line_plot(
            &[Series { shade: 1.0, points: pts }],
            &format!("{} gain norm", p.sys.name()),
            "order",
            "||K||_2",
            &manifest_name(svg_path),
        );
        fs::write(svg_path, doc)?;
        man.output(svg_path);
    }
    man.finish()?;
    let ok = rows.iter().filter(|r| r.feasible()).count();
    let line = format!("{ok} of {} orders feasible", rows.len());
    if ok == 0 {
        Err(CliError::Infeasible(line))
    } else {
        Ok(line)
    }
}

fn energy(a: EnergyArgs, seed: u64) -> Result<String, CliError> {
    let mut man = RunManifest::start("energy");
    let p = load_problem(&a.config)?;
    let grid = parse_deltas(&a.deltas)?;
    let pts = controllability_energy(&p.sys, &grid)?;
    let scale = p.scale;
    output::write_energy(&a.out, &pts, |d| scale.map(|s| s.unscale(d)))?;
    man.input(&a.config).option("deltas", &a.deltas).option("seed", seed).output(&a.out);
    if let Some(svg_path) = &a.svg {
        let x = |d: f64| scale.map_or(d, |s| s.unscale(d));
        let points = pts
            .iter()
            .filter_map(|e| e.log_det_inv.map(|l| (x(e.delta), l / std::f64::consts::LN_10)))
            .collect();
        let doc = svg::line_plot(
            &[Series { shade: 1.0, points }],
            &format!("{} controllability energy", p.sys.name()),
            if scale.is_some() { "v" } else { "delta" },
            "log10 det(Wc^-1)",
            &manifest_name(svg_path),
        );
        fs::write(svg_path, doc)?;
        man.output(svg_path);
    }
    man.finish()?;
    let defined = pts.iter().filter(|e| e.log_det_inv.is_some()).count();
    Ok(format!("det(Wc^-1) defined at {defined} of {} parameter values", pts.len()))
}
