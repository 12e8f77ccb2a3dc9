//! `flipfx`: batch front end for flip-effect estimation, exact oracle
//! checks, simulation and the coverage study.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use flipfx::estimators::{estimate, flip_effect, CrossFit, EstimatorConfig, Method};
use flipfx::nuisance::{Backend, Functional, LearnedNuisance};
use flipfx::oracle::{
    bundled, bundled_names, exact_psi, exact_psi_forward, exact_wate_single, ipw_form_psi,
    sample_observational, sharp_null_certify, DiscreteWorld, OracleWeight, WorldSpec,
};
use flipfx::panel::{load_long_csv, write_long_csv, PanelDataset, Schema};
use flipfx::simharness::{generate_dgp, run_coverage_grid, write_cells_csv, write_long_csv as write_facets, Dgp, ExperimentConfig};
use flipfx::weights::{SmoothWeight, TargetRegime};
use flipfx::Error;

use manifest::{sha256_file, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "flipfx", version, about = "Longitudinal flip-intervention effects")]
struct Cli {
    /// Root seed; each command has its own default when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for reports, CSVs and the manifest.
    #[arg(long, global = true, default_value = "flipfx-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a regime mean or a flip effect from a long-format panel.
    Estimate(EstimateArgs),
    /// Draw a panel from the two-timepoint design or a finite world.
    Simulate(SimulateArgs),
    /// Exact checks on a finite-state world.
    Oracle(OracleArgs),
    /// Run a coverage grid described by a config file.
    Coverage(CoverageArgs),
    /// Load a panel and print a summary without estimating anything.
    IngestCheck(IngestArgs),
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column mapping (TOML).
    #[arg(long)]
    schema: PathBuf,
    /// Single target regime, e.g. 1111.
    #[arg(long, conflicts_with = "contrast", required_unless_present = "contrast")]
    regime: Option<String>,
    /// Two regimes `<bits>:<bits>`; estimates the ratio flip effect.
    #[arg(long)]
    contrast: Option<String>,
    #[arg(long, default_value = "overlap")]
    weight: String,
    /// mr | sdr | ipw
    #[arg(long, default_value = "sdr")]
    estimator: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// linear | logistic | knn:k | tree:depth | ensemble
    #[arg(long, default_value = "ensemble")]
    backend: String,
    /// Estimated propensities are clipped into [clip, 1 - clip].
    #[arg(long, default_value_t = 0.01)]
    clip: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Needed for weights only identified under target positivity.
    #[arg(long)]
    assume_positivity: bool,
    #[arg(long, default_value_t = 1e-3)]
    tau_den: f64,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Bundled world name or world file; the two-timepoint design when absent.
    #[arg(long)]
    world: Option<String>,
    /// Propensity floor of the two-timepoint design.
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    /// Bundled world name or world file.
    #[arg(long, default_value = "wate-a")]
    world: String,
    /// wate | ident | sharp-null | all
    #[arg(long, default_value = "all")]
    check: String,
    /// A smooth weight, `hard-trim:eps` or `matching`.
    #[arg(long, default_value = "overlap")]
    weight: String,
    /// Regimes for `ident`; all-treated and never-treated when absent.
    #[arg(long)]
    regime: Vec<String>,
    /// Contrast for `sharp-null`; all-treated against never-treated when absent.
    #[arg(long)]
    contrast: Option<String>,
    /// Largest number of (history, treatment) states to enumerate.
    #[arg(long, default_value_t = 1_000_000)]
    state_budget: usize,
}

#[derive(Args, Debug, Serialize)]
struct CoverageArgs {
    /// Experiment config (TOML); the default grid when absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a check ran and failed.
fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building the worker pool")?;
    }
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, cli.seed.unwrap_or(1), out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed.unwrap_or(1), out),
        Command::Oracle(a) => cmd_oracle(a, out),
        Command::Coverage(a) => cmd_coverage(a, cli.seed, out),
        Command::IngestCheck(a) => cmd_ingest(a, out),
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn load_panel(data: &Path, schema: &Path) -> Result<PanelDataset> {
    let schema = Schema::from_file(schema).with_context(|| format!("schema {}", schema.display()))?;
    load_long_csv(data, &schema).with_context(|| format!("panel {}", data.display()))
}

fn parse_contrast(s: &str) -> Result<(TargetRegime, TargetRegime)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("contrast '{s}' is not of the form <bits>:<bits>"))?;
    Ok((a.parse()?, b.parse()?))
}

fn check_horizon(regime: &TargetRegime, t: usize) -> Result<()> {
    if regime.horizon() != t {
        bail!("regime {regime} has length {} but the panel has T={t}", regime.horizon());
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs, seed: u64, out: &Path) -> Result<bool> {
    let mut man = RunManifest::start("estimate", to_json(a), seed);
    man.input(&a.data)?;
    man.input(&a.schema)?;
    let data = load_panel(&a.data, &a.schema)?;
    let weight: SmoothWeight<f64> = a.weight.parse()?;
    let method: Method = a.estimator.parse()?;
    let backend: Backend = a.backend.parse()?;
    let cfg = EstimatorConfig {
        folds: a.folds,
        seed,
        clip: a.clip,
        level: a.level,
        assume_positivity: a.assume_positivity,
        tau_den: a.tau_den,
    };
    let provider = LearnedNuisance::new(backend);
    let t_max = data.horizon();
    let mut report = String::new();
    let _ = writeln!(report, "n={}", data.n());
    let _ = writeln!(report, "horizon={t_max}");
    let _ = writeln!(report, "weight={weight}");
    let _ = writeln!(report, "backend={}", a.backend);
    let _ = writeln!(report, "folds={}", a.folds);
    let _ = writeln!(report, "seed={seed}");
    let mut influence = csv::Writer::from_writer(Vec::new());

    match (&a.regime, &a.contrast) {
        (Some(r), _) => {
            let regime: TargetRegime = r.parse()?;
            check_horizon(&regime, t_max)?;
            let est = estimate(&data, &regime, &weight, Functional::Outcome, method, &provider, &cfg)?;
            let _ = writeln!(report, "regime={regime}");
            report.push_str(&est.report.to_kv("psi"));
            influence.write_record(["id", "score", "influence"])?;
            for (i, id) in data.ids().iter().enumerate() {
                influence.write_record([
                    id.clone(),
                    est.report.scores[i].to_string(),
                    est.report.influence[i].to_string(),
                ])?;
            }
        }
        (None, Some(c)) => {
            let (ra, rb) = parse_contrast(c)?;
            check_horizon(&ra, t_max)?;
            check_horizon(&rb, t_max)?;
            if method == Method::Ipw {
                // Diagnostic only: two weighted means and their difference.
                let plan = CrossFit::new(&data, &provider, &cfg)?;
                let pa = plan.run(&ra, &weight, Functional::Outcome, method)?.report;
                let pb = plan.run(&rb, &weight, Functional::Outcome, method)?.report;
                let diff = pa.contrast(&pb)?;
                let _ = writeln!(report, "contrast={ra}:{rb}");
                let _ = writeln!(report, "robust=false");
                let _ = writeln!(report, "note=weighting estimator; no ratio is reported");
                report.push_str(&pa.to_kv("psi_a"));
                report.push_str(&pb.to_kv("psi_b"));
                report.push_str(&diff.to_kv("numerator"));
                influence.write_record(["id", "psi_a", "psi_b", "numerator"])?;
                for (i, id) in data.ids().iter().enumerate() {
                    influence.write_record([
                        id.clone(),
                        pa.influence[i].to_string(),
                        pb.influence[i].to_string(),
                        diff.influence[i].to_string(),
                    ])?;
                }
            } else {
                let fx = flip_effect(&data, &ra, &rb, &weight, method, &provider, &cfg)?;
                report.push_str(&fx.to_kv());
                for w in &fx.warnings {
                    eprintln!("warning: {w}");
                }
                let mut header = vec!["id".to_string(), "psi_a".into(), "psi_b".into(), "numerator".into()];
                header.extend((1..=t_max).map(|t| format!("delta{t}")));
                header.extend(["denominator".to_string(), "ratio".into()]);
                influence.write_record(&header)?;
                for (i, id) in data.ids().iter().enumerate() {
                    let mut rec = vec![
                        id.clone(),
                        fx.psi_a.influence[i].to_string(),
                        fx.psi_b.influence[i].to_string(),
                        fx.numerator.influence[i].to_string(),
                    ];
                    rec.extend(fx.deltas.iter().map(|d| d.influence[i].to_string()));
                    rec.push(fx.denominator.influence[i].to_string());
                    rec.push(fx.ratio_influence[i].to_string());
                    influence.write_record(&rec)?;
                }
            }
        }
        (None, None) => bail!("one of --regime or --contrast is required"),
    }

    let infl = influence.into_inner().map_err(|e| anyhow!("influence csv: {e}"))?;
    man.output(out, "report.txt", report.as_bytes())?;
    man.output(out, "influence.csv", &infl)?;
    man.finish(out)?;
    print!("{report}");
    Ok(true)
}

fn resolve_world(spec: &str) -> Result<DiscreteWorld<f64>> {
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(WorldSpec::from_file(path)?.into_world()?);
    }
    bundled(spec).map_err(|_| {
        anyhow!(
            "'{spec}' is neither a world file nor a bundled world ({})",
            bundled_names().join(", ")
        )
    })
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<bool> {
    let mut man = RunManifest::start("simulate", to_json(a), seed);
    let data = match &a.world {
        Some(w) => {
            if Path::new(w).is_file() {
                man.input(Path::new(w))?;
            }
            sample_observational(&resolve_world(w)?, a.n, seed)?
        }
        None => {
            if !(0.0..0.5).contains(&a.floor) {
                bail!("--floor must lie in [0, 0.5)");
            }
            let dgp = if a.floor > 0.0 { Dgp::positivity_repaired(a.floor) } else { Dgp::default() };
            generate_dgp(&dgp, a.n, seed)?.data
        }
    };
    let (csv_name, schema_name) = ("simulated.csv", "simulated_schema.toml");
    write_long_csv(&data, &out.join(csv_name), &out.join(schema_name))?;
    man.existing_output(out, csv_name)?;
    man.existing_output(out, schema_name)?;
    let digest = sha256_file(&out.join(csv_name))?;
    man.finish(out)?;
    println!("n={}", data.n());
    println!("horizon={}", data.horizon());
    println!("dataset={}", out.join(csv_name).display());
    println!("sha256={digest}");
    Ok(true)
}

fn parse_oracle_weight(s: &str) -> Result<OracleWeight<f64>> {
    let s = s.trim();
    if s == "matching" {
        return Ok(OracleWeight::Matching);
    }
    if let Some(eps) = s.strip_prefix("hard-trim:") {
        let eps: f64 = eps.parse().map_err(|_| anyhow!("hard-trim threshold '{eps}' is not a number"))?;
        if !(0.0..1.0).contains(&eps) {
            bail!("hard-trim threshold must lie in [0, 1)");
        }
        return Ok(OracleWeight::HardTrim { eps });
    }
    Ok(OracleWeight::Smooth(s.parse()?))
}

fn cmd_oracle(a: &OracleArgs, out: &Path) -> Result<bool> {
    let mut man = RunManifest::start("oracle", to_json(a), 0);
    if Path::new(&a.world).is_file() {
        man.input(Path::new(&a.world))?;
    }
    let world = resolve_world(&a.world)?;
    if world.state_count() > a.state_budget {
        bail!(
            "world has {} states, above the budget of {}; raise --state-budget to enumerate it",
            world.state_count(),
            a.state_budget
        );
    }
    let weight = parse_oracle_weight(&a.weight)?;
    let t_max = world.horizon();
    let checks: Vec<&str> = match a.check.as_str() {
        "all" => vec!["wate", "ident", "sharp-null"],
        c @ ("wate" | "ident" | "sharp-null") => vec![c],
        other => bail!("unknown check '{other}' (wate|ident|sharp-null|all)"),
    };
    let mut lines = Vec::new();
    let mut ok = true;
    let mut line = |pass: Option<bool>, text: String| {
        let tag = match pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        if pass == Some(false) {
            ok = false;
        }
        lines.push(format!("{tag} {text}"));
    };
    let wl = flipfx::weights::FlipWeight::label(&weight);
    for check in checks {
        match check {
            "wate" if t_max != 1 => line(None, format!("wate: needs T=1, world has T={t_max}")),
            "wate" => match exact_wate_single(&world, &weight) {
                Ok(w) => {
                    let gap = (w.lhs - w.rhs).abs();
                    line(
                        Some(gap <= 1e-12),
                        format!("wate weight={wl} lhs={} rhs={} gap={gap:e}", w.lhs, w.rhs),
                    )
                }
                Err(e) => line(Some(false), format!("wate weight={wl}: {e}")),
            },
            "ident" => {
                let regimes: Vec<TargetRegime> = if a.regime.is_empty() {
                    vec![TargetRegime::constant(1, t_max)?, TargetRegime::constant(0, t_max)?]
                } else {
                    a.regime.iter().map(|r| r.parse()).collect::<Result<_, _>>()?
                };
                for r in &regimes {
                    match exact_psi(&world, r, &weight) {
                        Ok(psi) => {
                            // Three independent routes to the same number.
                            let fwd = exact_psi_forward(&world, r, &weight)?;
                            let ipw = ipw_form_psi(&world, r, &weight)?;
                            let gap = (psi - fwd).abs().max((psi - ipw).abs());
                            line(
                                Some(gap <= 1e-10),
                                format!("ident regime={r} weight={wl} psi={psi} forward={fwd} ipw_form={ipw}"),
                            )
                        }
                        Err(e @ Error::Identification { .. }) => {
                            line(Some(false), format!("ident regime={r} weight={wl}: {e}"))
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
            "sharp-null" => {
                let (ra, rb) = match &a.contrast {
                    Some(c) => parse_contrast(c)?,
                    None => (TargetRegime::constant(1, t_max)?, TargetRegime::constant(0, t_max)?),
                };
                match sharp_null_certify(&world, &ra, &rb, &weight) {
                    Ok(s) => line(
                        Some(true),
                        format!(
                            "sharp-null contrast={ra}:{rb} weight={wl} ratio={} null_holds={}",
                            s.ratio, s.null_holds
                        ),
                    ),
                    Err(e) => line(Some(false), format!("sharp-null contrast={ra}:{rb} weight={wl}: {e}")),
                }
            }
            _ => unreachable!(),
        }
    }
    let text = lines.join("\n") + "\n";
    man.output(out, "oracle.txt", text.as_bytes())?;
    man.finish(out)?;
    print!("{text}");
    Ok(ok)
}

fn cmd_coverage(a: &CoverageArgs, seed: Option<u64>, out: &Path) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut man = RunManifest::start("coverage", to_json(&cfg), cfg.seed);
    if let Some(p) = &a.config {
        man.input(p)?;
    }
    let cells = run_coverage_grid(&cfg)?;
    let mut wide = Vec::new();
    write_cells_csv(&cells, &mut wide)?;
    let mut long = Vec::new();
    write_facets(&cells, &mut long)?;
    man.output(out, "coverage_cells.csv", &wide)?;
    man.output(out, "coverage_long.csv", &long)?;
    man.finish(out)?;
    for c in &cells {
        println!(
            "alpha_pi={} alpha_m={} n={} coverage={:.3} se={:.3} failures={}",
            c.alpha_pi, c.alpha_m, c.n, c.coverage, c.se, c.failures
        );
    }
    Ok(true)
}

fn cmd_ingest(a: &IngestArgs, out: &Path) -> Result<bool> {
    let mut man = RunManifest::start("ingest-check", to_json(a), 0);
    man.input(&a.data)?;
    man.input(&a.schema)?;
    let data = load_panel(&a.data, &a.schema)?;
    let mut s = String::new();
    let _ = writeln!(s, "n={}", data.n());
    let _ = writeln!(s, "horizon={}", data.horizon());
    for t in 1..=data.horizon() {
        let treated = (0..data.n()).filter(|&i| data.treatment(i, t) == 1).count();
        let _ = writeln!(s, "t{t}.covariates={}", data.covariate_names()[t - 1].join(","));
        let _ = writeln!(s, "t{t}.treated_share={}", treated as f64 / data.n() as f64);
    }
    let y = data.outcomes();
    let _ = writeln!(s, "outcome.mean={}", y.iter().sum::<f64>() / y.len() as f64);
    man.output(out, "ingest.txt", s.as_bytes())?;
    man.finish(out)?;
    print!("{s}");
    Ok(true)
}
