//! Command-line front end. `dispatch` parses arguments, runs one subcommand
//! and returns the process exit code: 0 on success, 1 on usage or validation
//! errors, 2 on numerical failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ncol_core::annulus::{theta_diagnostics, AnnulusGrid};
use ncol_core::config::{parse_config, ScenarioConfig};
use ncol_core::interaction::{coulomb_interaction, renormalized_limit_oracle, TorqueSet};
use ncol_core::pipeline::{
    cartesian_export, competitor_row, diagnostic_radius, poisson_check, prediction_row, run_expansion_sweep,
    solve_singles, verify_linear, SingleParticleResult,
};
use ncol_core::report::{cell, opt_cell, provenance, render_report, to_json, Format, Table};
use ncol_core::solver::snapshot::{read_snapshot, write_atomic, write_snapshot};
use ncol_core::{Error, Vec3};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ncol", version, about = "Small-particle energy expansions for nematic colloids")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report destination; overrides `output.report`, stdout when neither is set.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Worker threads; overrides `run.threads`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// One worker thread; output bytes depend only on the inputs.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Random initial guess for the single-particle solves.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimal energy and torque of each particle.
    Single,
    /// Expansion sweep over the rho ladder.
    Interact,
    /// Expansion prediction from stored `single --format json` output.
    Predict {
        #[arg(long)]
        input: PathBuf,
    },
    /// Glued competitor energies over the rho ladder.
    Competitor,
    /// Multi-sphere exterior energies against the two-term prediction.
    VerifyLinear,
    /// Renormalized energy of the superposed far fields.
    Renorm,
    /// Residuals and decay constants of the decaying Poisson solutions.
    PoissonCheck,
    /// Theta diagnostics between two snapshots.
    Diagnose {
        snapshot: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Annulus radius; `|ln rho| rho^(-1/4)` when absent.
        #[arg(long)]
        lambda: Option<f64>,
    },
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } | Error::Numerical(_) => 2,
        _ => 1,
    }
}

struct Context {
    config: Option<ScenarioConfig>,
    provenance: String,
    format: Format,
    out: Option<PathBuf>,
}

impl Context {
    fn scenario(&self) -> Result<&ScenarioConfig, Error> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::invalid("this subcommand needs --config"))
    }

    fn emit(&self, bytes: &[u8]) -> Result<(), Error> {
        match &self.out {
            Some(p) => write_atomic(p, bytes),
            None => std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn emit_data<T: Serialize>(&self, data: &T, table: impl FnOnce(&str) -> Table) -> Result<(), Error> {
        let bytes = match self.format {
            Format::Json => to_json(data, &self.provenance)?,
            Format::Csv => table(&self.provenance).to_csv()?,
        };
        self.emit(&bytes)
    }

    fn snapshot_path(&self) -> Option<&Path> {
        self.config.as_ref().and_then(|c| c.output.snapshot.as_deref())
    }
}

pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(p) => Some(parse_config(p)?),
        None => None,
    };
    if let Some(c) = config.as_mut() {
        if cli.seed.is_some() {
            c.numerics.init_seed = cli.seed;
        }
        if cli.deterministic {
            c.run.deterministic = true;
        }
        if cli.threads.is_some() {
            c.run.threads = cli.threads;
        }
        c.validate()?;
    }
    let deterministic = cli.deterministic || config.as_ref().is_some_and(|c| c.run.deterministic);
    let threads = if deterministic {
        Some(1)
    } else {
        cli.threads.or(config.as_ref().and_then(|c| c.run.threads))
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be positive"));
        }
        // a second build in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let canonical = match &config {
        Some(c) => c.to_toml()?,
        None => String::new(),
    };
    let out = cli.out.clone().or(config.as_ref().and_then(|c| c.output.report.clone()));
    let ctx = Context {
        provenance: provenance(&canonical),
        config,
        format: cli.format.into(),
        out,
    };
    match cli.command {
        Command::Single => single(&ctx),
        Command::Interact => interact(&ctx),
        Command::Predict { input } => predict(&ctx, &input),
        Command::Competitor => competitor(&ctx),
        Command::VerifyLinear => linear(&ctx),
        Command::Renorm => renorm(&ctx),
        Command::PoissonCheck => poisson(&ctx),
        Command::Diagnose {
            snapshot,
            reference,
            rho,
            lambda,
        } => diagnose(&ctx, &snapshot, &reference, rho, lambda),
    }
}

fn single(ctx: &Context) -> Result<(), Error> {
    let cfg = ctx.scenario()?;
    let singles = solve_singles(&cfg.sweep_input())?;
    if let Some(p) = ctx.snapshot_path() {
        write_snapshot(&cartesian_export(singles[0].finest(), cfg.n_inf, &cfg.numerics)?, p)?;
    }
    ctx.emit_data(&singles, |prov| {
        let mut t = Table::new(&[
            "particle",
            "mu",
            "v_x",
            "v_y",
            "v_z",
            "tail",
            "extrapolation_error",
            "orthogonality_defect",
            "provenance",
        ]);
        for (j, s) in singles.iter().enumerate() {
            t.push(vec![
                j.to_string(),
                cell(s.mu),
                cell(s.v.x),
                cell(s.v.y),
                cell(s.v.z),
                cell(s.tail),
                cell(s.extrapolation_error),
                cell(s.fit.orthogonality_defect),
                prov.to_string(),
            ]);
        }
        t
    })
}

fn interact(ctx: &Context) -> Result<(), Error> {
    let cfg = ctx.scenario()?;
    let report = run_expansion_sweep(&cfg.sweep_input())?;
    if let Some(p) = ctx.snapshot_path() {
        let state = report
            .rows
            .iter()
            .rev()
            .find_map(|r| r.levels.last().and_then(|l| l.state.as_ref()));
        if let Some(state) = state {
            write_snapshot(&cartesian_export(&state.rescaled_view(0)?, cfg.n_inf, &cfg.numerics)?, p)?;
        }
    }
    ctx.emit(&render_report(&report, ctx.format, &ctx.provenance)?)?;
    match report.rows.iter().find_map(|r| r.error.as_ref()) {
        Some(e) => Err(Error::Numerical(format!("sweep incomplete: {e}"))),
        None => Ok(()),
    }
}

#[derive(serde::Deserialize)]
struct Stored {
    data: Vec<SingleParticleResult>,
}

fn predict(ctx: &Context, input: &Path) -> Result<(), Error> {
    let cfg = ctx.scenario()?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let stored: Stored =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", input.display())))?;
    if stored.data.len() != cfg.particles.len() {
        return Err(Error::LengthMismatch {
            expected: cfg.particles.len(),
            got: stored.data.len(),
        });
    }
    let rows = cfg
        .rhos
        .iter()
        .map(|&rho| prediction_row(&stored.data, &cfg.centers(), rho))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.emit_data(&rows, |prov| {
        let mut t = Table::new(&["rho", "mu_sum", "interaction", "prediction", "provenance"]);
        for r in &rows {
            t.push(vec![cell(r.rho), cell(r.mu_sum), cell(r.interaction), cell(r.prediction), prov.into()]);
        }
        t
    })
}

fn competitor(ctx: &Context) -> Result<(), Error> {
    let cfg = ctx.scenario()?;
    let input = cfg.sweep_input();
    let v = input.violations();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let singles = solve_singles(&input)?;
    let mut rows = Vec::new();
    for (i, &rho) in cfg.rhos.iter().enumerate() {
        let (row, comp) = competitor_row(&input, &singles, rho)?;
        if i + 1 == cfg.rhos.len() {
            if let Some(p) = ctx.snapshot_path() {
                write_snapshot(&cartesian_export(&comp.state.rescaled_view(0)?, cfg.n_inf, &cfg.numerics)?, p)?;
            }
        }
        rows.push(row);
    }
    ctx.emit_data(&rows, |prov| {
        let mut t = Table::new(&["rho", "sigma", "competitor", "prediction", "constant", "provenance"]);
        for r in &rows {
            t.push(vec![cell(r.rho), cell(r.sigma), cell(r.energy), cell(r.prediction), cell(r.constant), prov.into()]);
        }
        t
    })
}

fn linear(ctx: &Context) -> Result<(), Error> {
    let default = ScenarioConfig::aligned_pair(0.1);
    let cfg = ctx.config.as_ref().unwrap_or(&default);
    let values = cfg
        .linear
        .values
        .clone()
        .unwrap_or_else(|| vec![cfg.n_inf; cfg.particles.len()]);
    let study = verify_linear(&cfg.centers(), &values, &cfg.linear.sigmas, cfg.linear.l_max)?;
    ctx.emit_data(&study, |prov| {
        let mut t = Table::new(&[
            "sigma",
            "oracle",
            "prediction",
            "deviation",
            "pair_part",
            "pair_prediction",
            "slope",
            "provenance",
        ]);
        for r in &study.rows {
            t.push(vec![
                cell(r.sigma),
                cell(r.oracle),
                cell(r.prediction),
                cell(r.deviation),
                cell(r.pair_part),
                cell(r.pair_prediction),
                opt_cell(study.slope),
                prov.into(),
            ]);
        }
        t
    })
}

#[derive(Serialize)]
struct RenormOutput {
    torques: Vec<Vec3>,
    rho: f64,
    coulomb: f64,
    limit: ncol_core::interaction::RenormalizedLimit,
    agrees_with_display: bool,
}

fn renorm(ctx: &Context) -> Result<(), Error> {
    let default = ScenarioConfig::aligned_pair(0.1);
    let cfg = ctx.config.as_ref().unwrap_or(&default);
    let torques = match &cfg.renorm.torques {
        Some(t) => t.clone(),
        None => solve_singles(&cfg.sweep_input())?.iter().map(|s| s.v).collect(),
    };
    let set = TorqueSet::new(torques.clone(), cfg.centers(), cfg.renorm.rho, cfg.n_inf)?;
    let limit = renormalized_limit_oracle(&set, &cfg.renorm.cutoffs)?;
    let out = RenormOutput {
        torques,
        rho: cfg.renorm.rho,
        coulomb: coulomb_interaction(&set)?,
        agrees_with_display: limit.agrees_with_display(),
        limit,
    };
    ctx.emit_data(&out, |prov| {
        let mut t = Table::new(&["sigma", "renormalized", "limit", "coulomb", "measured_sign", "provenance"]);
        for (s, e) in out.limit.sigmas.iter().zip(&out.limit.sequence) {
            t.push(vec![
                cell(*s),
                cell(*e),
                cell(out.limit.limit),
                cell(out.coulomb),
                out.limit.measured_sign.to_string(),
                prov.into(),
            ]);
        }
        t
    })
}

fn poisson(ctx: &Context) -> Result<(), Error> {
    let check = poisson_check()?;
    ctx.emit_data(&check, |prov| {
        let mut t = Table::new(&[
            "case",
            "d",
            "l",
            "residual",
            "analytic_error",
            "decay_stability",
            "provenance",
        ]);
        for c in &check.cases {
            t.push(vec![
                c.name.clone(),
                c.d.to_string(),
                c.l.to_string(),
                cell(c.residual),
                opt_cell(c.analytic_error),
                cell(c.decay_stability),
                prov.into(),
            ]);
        }
        t
    })
}

fn diagnose(ctx: &Context, a: &Path, b: &Path, rho: f64, lambda: Option<f64>) -> Result<(), Error> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::invalid(format!("--rho = {rho} must lie in (0, 1/2)")));
    }
    let n_hat = read_snapshot(a)?;
    let m_hat = read_snapshot(b)?;
    let (ga, gb) = (n_hat.grid(), m_hat.grid());
    if ga.n() != gb.n() || ga.h() != gb.h() || ga.half_width() != gb.half_width() {
        return Err(Error::Validation(vec![format!(
            "snapshot grids differ: {}^3 at h = {} vs {}^3 at h = {}",
            ga.n(),
            ga.h(),
            gb.n(),
            gb.h()
        )]));
    }
    let lambda = lambda.unwrap_or_else(|| diagnostic_radius(rho));
    if !(lambda > 0.0 && 2.0 * lambda <= ga.half_width()) {
        return Err(Error::Validation(vec![format!(
            "annulus radius {lambda} needs 2 lambda <= half-width {}",
            ga.half_width()
        )]));
    }
    let grid = AnnulusGrid::new(lambda, Vec3::zeros(), 12, 8)?;
    let d = theta_diagnostics(&grid.sample(&n_hat), &grid.sample(&m_hat), &grid, rho)?;
    ctx.emit_data(&d, |prov| {
        let mut t = Table::new(&["lambda", "Theta", "theta_small", "Xi", "provenance"]);
        t.push(vec![cell(d.lambda), cell(d.big_theta), cell(d.small_theta), cell(d.xi), prov.into()]);
        t
    })
}
