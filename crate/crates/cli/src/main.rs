mod config;

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use ptlab::exactprob::{critical_ell, default_q_star, exact_table};
use ptlab::experiments::{
    run_phase_grid, run_trials, single_block_campaign, CellSummary, Ensemble, ExperimentConfig,
    GridConfig, MatrixPolicy, CSV_HEADER,
};
use ptlab::inference::{fit_table, hypothesis_test, Link};
use ptlab::predict::{predict_pt, Order};
use ptlab::solver::SolverOptions;
use ptlab::verify::run_all;
use ptlab::{CoefficientSet, ProblemSizes, PtlabError};

use config::{load_file, manifest_path, overlay, resolve_seed, usage, Globals, Manifest, SolverFlags, UsageError};

#[derive(Parser)]
#[command(name = "ptlab", version, about = "Finite-N phase transitions for block-diagonal and Fourier sparse recovery")]
struct Cli {
    /// TOML or JSON run configuration (a manifest also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Result file. CSV results are appended; the header is written only for new files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides PTLAB_SEED and the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Equality tolerance relative to 1 + the norm of y (default 1e-9)
    #[arg(long, global = true)]
    feas_tol: Option<f64>,
    /// Relative ADMM residual tolerance for stopping (default 1e-9)
    #[arg(long, global = true)]
    obj_tol: Option<f64>,
    /// ADMM iteration cap (default 50000)
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Initial ADMM penalty (default 1.0)
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One Monte-Carlo cell of S trials.
    Trials(TrialsArgs),
    /// A sweep over sparsity levels at fixed (m, M, B).
    Grid(GridArgs),
    /// Exact single- and multiblock success probabilities for [0,1] coefficients.
    Exactprob(ExactArgs),
    /// Finite-N transition prediction.
    Predict(PredictArgs),
    /// Quantal-response fit of a success table.
    Fit(FitArgs),
    /// Large-N block-failure test.
    Test(TestArgs),
    /// Structural verification suite (JSON report).
    Verify(VerifyArgs),
    /// Runs the command named in the config file.
    Run,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trials(_) => "trials",
            Command::Grid(_) => "grid",
            Command::Exactprob(_) => "exactprob",
            Command::Predict(_) => "predict",
            Command::Fit(_) => "fit",
            Command::Test(_) => "test",
            Command::Verify(_) => "verify",
            Command::Run => "run",
        }
    }
}

/// Sizes and ensemble shared by the simulation commands.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct CellArgs {
    /// Measurements per block.
    #[arg(long = "m")]
    #[serde(default)]
    m: Option<usize>,
    /// Block length.
    #[arg(long = "M")]
    #[serde(default, rename = "M")]
    big_m: Option<usize>,
    /// Number of blocks.
    #[arg(long = "B")]
    #[serde(default, rename = "B")]
    blocks: Option<usize>,
    /// box01 | nonneg | real | complex
    #[arg(long)]
    #[serde(default)]
    coeffset: Option<String>,
    /// rbuse | dbuse | rbpft | dbpft | pft
    #[arg(long)]
    #[serde(default)]
    ensemble: Option<String>,
    /// Rows of the fixed partial Fourier block for `pft`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    indices: Option<Vec<usize>>,
    /// Trials per cell (S).
    #[arg(long, short = 'S')]
    #[serde(default)]
    trials: Option<usize>,
    /// fresh | fixed
    #[arg(long)]
    #[serde(default)]
    matrix_policy: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct TrialsArgs {
    /// Free entries per block.
    #[arg(long)]
    #[serde(default)]
    ell: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    cell: CellArgs,
    /// Also write one line per trial to this CSV.
    #[arg(long)]
    #[serde(default)]
    records: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    cell: CellArgs,
    /// Explicit sparsity levels; otherwise a window around the prediction.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    ells: Option<Vec<usize>>,
    /// Levels on each side of the predicted transition when --ells is absent
    #[arg(long)]
    #[serde(default)]
    half_width: Option<usize>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct ExactArgs {
    #[arg(long = "m")]
    #[serde(default)]
    m: Option<u64>,
    #[arg(long = "M")]
    #[serde(default, rename = "M")]
    big_m: Option<u64>,
    #[arg(long = "B")]
    #[serde(default, rename = "B")]
    blocks: Option<u64>,
    /// Target probability for the critical sparsity (default 1/2 or 1 − 1/e).
    #[arg(long)]
    #[serde(default)]
    q_star: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct PredictArgs {
    #[arg(long)]
    #[serde(default)]
    coeffset: Option<String>,
    #[arg(long = "M")]
    #[serde(default, rename = "M")]
    big_m: Option<u64>,
    #[arg(long = "B")]
    #[serde(default, rename = "B")]
    blocks: Option<u64>,
    /// Measurements per block; alternatively give --delta.
    #[arg(long = "m")]
    #[serde(default)]
    m: Option<u64>,
    /// Undersampling ratio m/M; m = round(δM).
    #[arg(long)]
    #[serde(default)]
    delta: Option<f64>,
    /// 1 or 2.
    #[arg(long)]
    #[serde(default)]
    order: Option<u8>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct FitArgs {
    /// Success table CSV as written by `trials` or `grid`.
    #[arg(long)]
    #[serde(default)]
    input: Option<PathBuf>,
    /// probit | cloglog (default: probit for B = 1, cloglog otherwise).
    #[arg(long)]
    #[serde(default)]
    link: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct TestArgs {
    /// Observed single-block failure fraction.
    #[arg(long)]
    #[serde(default)]
    y_bar: Option<f64>,
    /// Observed failure count (alternative to --y-bar).
    #[arg(long)]
    #[serde(default)]
    failures: Option<u64>,
    /// Single-block trials S.
    #[arg(long, short = 'S')]
    #[serde(default)]
    trials: Option<u64>,
    /// Number of blocks in the multiblock problem under test.
    #[arg(long = "B")]
    #[serde(default, rename = "B")]
    blocks: Option<u64>,
    #[arg(long)]
    #[serde(default)]
    q_star: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    alpha: Option<f64>,
    /// Run a single-block campaign at this sparsity instead of reading Ȳ.
    #[arg(long)]
    #[serde(default)]
    ell: Option<usize>,
    #[arg(long = "m")]
    #[serde(default)]
    m: Option<usize>,
    #[arg(long = "M")]
    #[serde(default, rename = "M")]
    big_m: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    coeffset: Option<String>,
    #[arg(long)]
    #[serde(default)]
    ensemble: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
struct VerifyArgs {}

fn req<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| usage(format!("missing required option --{flag}")))
}

fn parse<T: std::str::FromStr<Err = PtlabError>>(s: &str) -> Result<T> {
    s.parse().map_err(|e: PtlabError| usage(e.to_string()))
}

/// CSV sink: an appended file or stdout.
struct Sink {
    path: Option<PathBuf>,
}

impl Sink {
    fn write_rows(&self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        match &self.path {
            Some(p) => {
                let fresh = fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true);
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .with_context(|| format!("opening {}", p.display()))?;
                write_csv(file, fresh.then_some(header), rows)
            }
            None => write_csv(io::stdout().lock(), Some(header), rows),
        }
    }

    fn write_json(&self, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        match &self.path {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
        }
    }
}

fn write_csv<W: Write>(w: W, header: Option<&[&str]>, rows: &[Vec<String>]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    if let Some(h) = header {
        wr.write_record(h)?;
    }
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

struct Ctx {
    seed: u64,
    solver: SolverOptions,
    sink: Sink,
}

fn experiment(cell: &CellArgs, ell: usize, ctx: &Ctx) -> Result<ExperimentConfig> {
    let coeff_set: CoefficientSet = parse(&req(&cell.coeffset, "coeffset")?)?;
    let mut ensemble: Ensemble = parse(cell.ensemble.as_deref().unwrap_or("dbuse"))?;
    if let Ensemble::Pft { indices } = &mut ensemble {
        indices.clone_from(&cell.indices);
    }
    let matrix_policy = match cell.matrix_policy.as_deref().unwrap_or("fresh") {
        "fresh" => MatrixPolicy::Fresh,
        "fixed" => MatrixPolicy::Fixed,
        other => return Err(usage(format!("unknown matrix policy '{other}'"))),
    };
    let sizes = ProblemSizes::new(ell, req(&cell.m, "m")?, req(&cell.big_m, "M")?, cell.blocks.unwrap_or(1))
        .map_err(|e| usage(e.to_string()))?;
    let cfg = ExperimentConfig {
        sizes,
        coeff_set,
        ensemble,
        matrix_policy,
        trials: req(&cell.trials, "trials")?,
        seed: ctx.seed,
        solver: ctx.solver,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_trials(a: &TrialsArgs, ctx: &Ctx) -> Result<()> {
    let cfg = experiment(&a.cell, req(&a.ell, "ell")?, ctx)?;
    let records = run_trials(&cfg)?;
    if let Some(path) = &a.records {
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.trial_index.to_string(),
                    r.rel_error.to_string(),
                    r.success.to_string(),
                    serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    r.iterations.to_string(),
                ]
            })
            .collect();
        Sink { path: Some(path.clone()) }.write_rows(&["trial", "rel_error", "success", "status", "iterations"], &rows)?;
    }
    let row = CellSummary::from_records(&cfg, &records);
    ctx.sink.write_rows(&CSV_HEADER, &[row.csv_fields()])
}

fn cmd_grid(a: &GridArgs, ctx: &Ctx) -> Result<()> {
    let base = experiment(&a.cell, 0, ctx)?;
    let table = run_phase_grid(&GridConfig {
        base,
        ells: a.ells.clone(),
        half_width: a.half_width,
    })?;
    let rows: Vec<Vec<String>> = table.rows.iter().map(|r| r.csv_fields()).collect();
    ctx.sink.write_rows(&CSV_HEADER, &rows)
}

fn cmd_exactprob(a: &ExactArgs, ctx: &Ctx) -> Result<()> {
    let (m, big_m, b) = (req(&a.m, "m")?, req(&a.big_m, "M")?, a.blocks.unwrap_or(1));
    let table = exact_table(m, big_m, b)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| vec![r.ell.to_string(), m.to_string(), big_m.to_string(), b.to_string(), r.q_sb.to_string(), r.q_mb.to_string()])
        .collect();
    ctx.sink.write_rows(&["ell", "m", "M", "B", "q_sb", "q_mb"], &rows)?;
    let q = a.q_star.unwrap_or_else(|| default_q_star(b));
    match critical_ell(m, big_m, b, q) {
        Ok(c) => eprintln!("critical ell {} (eps* = {}) at q* = {q}", c.ell_star, c.eps_star),
        Err(e) => eprintln!("no critical ell: {e}"),
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs, ctx: &Ctx) -> Result<()> {
    let set: CoefficientSet = parse(&req(&a.coeffset, "coeffset")?)?;
    let big_m = req(&a.big_m, "M")?;
    let b = a.blocks.unwrap_or(big_m);
    let m = match (a.m, a.delta) {
        (Some(m), _) => m,
        (None, Some(d)) => (d * big_m as f64).round() as u64,
        (None, None) => return Err(usage("give --m or --delta")),
    };
    let order = Order::from_int(a.order.unwrap_or(2)).map_err(|e| usage(e.to_string()))?;
    let p = predict_pt(m, big_m, b, set, order)?;
    let row = vec![
        m.to_string(),
        big_m.to_string(),
        b.to_string(),
        p.delta.to_string(),
        set.label().to_string(),
        (order as u8 + 1).to_string(),
        p.eps_asy.to_string(),
        p.gamma.to_string(),
        p.eta.to_string(),
        p.zeta.to_string(),
        p.eps_bd_first.to_string(),
        p.eps_bd_second.to_string(),
        p.eps_bd().to_string(),
        p.rel_offset.to_string(),
        p.extrapolated.to_string(),
    ];
    ctx.sink.write_rows(
        &[
            "m", "M", "B", "delta", "coeffset", "order", "eps_asy", "gamma", "eta", "zeta", "eps_bd_first",
            "eps_bd_second", "eps_bd", "rel_offset", "extrapolated",
        ],
        &[row],
    )
}

fn read_table(path: &Path) -> Result<Vec<CellSummary>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(usage(format!("{}: expected header {}", path.display(), CSV_HEADER.join(","))));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            Ok(CellSummary::from_csv_fields(&fields)?)
        })
        .collect()
}

fn cmd_fit(a: &FitArgs, ctx: &Ctx) -> Result<()> {
    let rows = read_table(&req(&a.input, "input")?)?;
    // one fit per (m, M, B, ensemble, coeffset) group, in order of appearance
    let mut groups: Vec<Vec<CellSummary>> = Vec::new();
    for r in rows {
        let key = |c: &CellSummary| (c.m, c.big_m, c.blocks, c.ensemble.clone(), c.coeffset);
        match groups.iter_mut().find(|g| key(&g[0]) == key(&r)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    let mut out = Vec::new();
    for g in &groups {
        let link = match &a.link {
            Some(l) => parse::<Link>(l)?,
            None if g[0].blocks > 1 => Link::Cloglog,
            None => Link::Probit,
        };
        let f = fit_table(g, link)?;
        out.push(vec![
            g[0].m.to_string(),
            g[0].big_m.to_string(),
            g[0].blocks.to_string(),
            g[0].ensemble.clone(),
            g[0].coeffset.label().to_string(),
            link.label().to_string(),
            f.a.to_string(),
            f.b.to_string(),
            f.se_a.to_string(),
            f.se_b.to_string(),
            f.cov_ab.to_string(),
            f.eps_star.to_string(),
            f.se_eps_star.to_string(),
            f.converged.to_string(),
            f.iterations.to_string(),
            f.log_likelihood.to_string(),
        ]);
    }
    ctx.sink.write_rows(
        &[
            "m", "M", "B", "ensemble", "coeffset", "link", "a", "b", "se_a", "se_b", "cov_ab", "eps_star",
            "se_eps_star", "converged", "iterations", "log_likelihood",
        ],
        &out,
    )
}

fn cmd_test(a: &TestArgs, ctx: &Ctx) -> Result<()> {
    let blocks = req(&a.blocks, "B")?;
    let (y_bar, s) = if let Some(ell) = a.ell {
        let cell = CellArgs {
            m: a.m,
            big_m: a.big_m,
            blocks: Some(1),
            coeffset: a.coeffset.clone(),
            ensemble: a.ensemble.clone(),
            indices: None,
            trials: a.trials.map(|t| t as usize),
            matrix_policy: None,
        };
        let r = single_block_campaign(&experiment(&cell, ell, ctx)?)?;
        (r.y_bar, r.trials as u64)
    } else {
        let s = req(&a.trials, "trials")?;
        match (a.y_bar, a.failures) {
            (Some(y), _) => (y, s),
            (None, Some(f)) => (f as f64 / s as f64, s),
            (None, None) => return Err(usage("give --y-bar, --failures or --ell")),
        }
    };
    let q = a.q_star.unwrap_or_else(|| default_q_star(blocks));
    let alpha = a.alpha.unwrap_or(0.05);
    let d = hypothesis_test(y_bar, s, blocks, q, alpha)?;
    let outcome = serde_json::to_value(d.outcome)?;
    ctx.sink.write_rows(
        &["y_bar", "S", "B", "q_star", "alpha", "mu", "band_lo", "band_hi", "z", "outcome"],
        &[vec![
            y_bar.to_string(),
            s.to_string(),
            blocks.to_string(),
            q.to_string(),
            alpha.to_string(),
            d.mu.to_string(),
            d.band.0.to_string(),
            d.band.1.to_string(),
            d.z.to_string(),
            outcome.as_str().unwrap_or_default().to_string(),
        ]],
    )
}

fn cmd_verify(ctx: &Ctx) -> Result<bool> {
    let report = run_all(ctx.seed, &ctx.solver)?;
    ctx.sink.write_json(&serde_json::to_value(&report)?)?;
    Ok(report.pass)
}

/// Resolves the command and its effective settings, runs it and writes the
/// manifest. Returns whether the run passed (only `verify` can fail softly).
fn execute(cli: Cli) -> Result<bool> {
    let file: Map<String, Value> = match &cli.config {
        Some(p) => load_file(p)?,
        None => Map::new(),
    };
    let name = match &cli.command {
        Command::Run => file
            .get("command")
            .and_then(Value::as_str)
            .ok_or_else(|| usage("`run` needs a config with a `command` key"))?
            .to_string(),
        c => c.name().to_string(),
    };

    let g = overlay(
        Some(&Value::Object(file.clone())),
        &Globals {
            out: cli.out.clone(),
            seed: None,
            jobs: cli.jobs,
        },
    )?;
    let seed = resolve_seed(cli.seed, g.seed)?;
    let solver_flags = overlay(
        file.get("solver"),
        &SolverFlags {
            feas_tol: cli.feas_tol,
            obj_tol: cli.obj_tol,
            max_iters: cli.max_iters,
            rho: cli.rho,
        },
    )?;
    let solver = solver_flags.apply(SolverOptions::default());
    solver.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(j) = g.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let ctx = Ctx {
        seed,
        solver,
        sink: Sink { path: g.out.clone() },
    };
    let section = file.get(&name);

    macro_rules! section {
        ($ty:ty, $flags:expr) => {{
            let flags: $ty = $flags;
            overlay(section, &flags)?
        }};
    }
    let (args_value, passed): (Value, bool) = match (name.as_str(), &cli.command) {
        ("trials", c) => {
            let a = section!(TrialsArgs, if let Command::Trials(a) = c { a.clone() } else { Default::default() });
            cmd_trials(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("grid", c) => {
            let a = section!(GridArgs, if let Command::Grid(a) = c { a.clone() } else { Default::default() });
            cmd_grid(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("exactprob", c) => {
            let a = section!(ExactArgs, if let Command::Exactprob(a) = c { a.clone() } else { Default::default() });
            cmd_exactprob(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("predict", c) => {
            let a = section!(PredictArgs, if let Command::Predict(a) = c { a.clone() } else { Default::default() });
            cmd_predict(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("fit", c) => {
            let a = section!(FitArgs, if let Command::Fit(a) = c { a.clone() } else { Default::default() });
            cmd_fit(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("test", c) => {
            let a = section!(TestArgs, if let Command::Test(a) = c { a.clone() } else { Default::default() });
            cmd_test(&a, &ctx)?;
            (serde_json::to_value(&a)?, true)
        }
        ("verify", _) => {
            let pass = cmd_verify(&ctx)?;
            (json!({}), pass)
        }
        (other, _) => return Err(usage(format!("unknown command '{other}'"))),
    };

    let mut config = json!({
        "command": name,
        "seed": seed,
        "solver": solver,
    });
    if let Some(o) = &g.out {
        config["out"] = json!(o);
    }
    if let Some(j) = g.jobs {
        config["jobs"] = json!(j);
    }
    config[name.as_str()] = strip_nulls(args_value);
    let manifest = Manifest::new(config, g.out.iter().cloned().collect());
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    match &g.out {
        Some(o) => fs::write(manifest_path(o), text)?,
        None => eprint!("{text}"),
    }
    Ok(passed)
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.into_iter().filter(|(_, v)| !v.is_null()).map(|(k, v)| (k, strip_nulls(v))).collect()),
        other => other,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else if matches!(e.downcast_ref::<PtlabError>(), Some(PtlabError::GuardExceeded { .. })) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
