use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use cwdyn::acceptance::{run_suite, suite_ids, SuiteConfig};
use cwdyn::continua::{ContinuumRecord, MarkedContinuum};
use cwdyn::cwmetric::{evaluate, Orbit};
use cwdyn::experiment::{ExperimentConfig, ReportWriter};
use cwdyn::holonomy::{pseudo_isometry_probe, HolonomyParams, DEFAULT_GAMMA_GRID, DEFAULT_LEN_RANGE};
use cwdyn::models::Point;
use cwdyn::periodic::{approximate_periodic, finder_registry, verify_periodic, KatokParams};
use cwdyn::{chainrec, sectors, CwError};

#[derive(Parser)]
#[command(name = "cwdyn", version, about = "Numerical experiments on continuum-wise hyperbolic maps")]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model kind, overriding the config.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config and CWDYN_OUT_DIR.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Output file; defaults to <out-dir>/<command>.jsonl.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the metric constants of the model.
    Calibrate {
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Evaluate P, rho, D' and D on a continuum read from a JSON file.
    Metric {
        #[arg(long)]
        continuum: PathBuf,
        /// Also emit D(f^n C) for |n| up to this bound.
        #[arg(long, default_value_t = 0)]
        orbit: i64,
    },
    /// Sample holonomy rectangles and estimate the pseudo-isometry moduli.
    HolonomyProbe {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_delimiter = ',')]
        gamma: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_LEN_RANGE.0)]
        len_min: f64,
        #[arg(long, default_value_t = DEFAULT_LEN_RANGE.1)]
        len_max: f64,
    },
    /// Approximate a periodic point near p.
    Periodic {
        /// Seed point "x,y"; decimals are read exactly.
        #[arg(long)]
        p: String,
        #[arg(long, default_value_t = 1e-2)]
        alpha: f64,
        #[arg(long, default_value = "grid-orbit")]
        finder: String,
        #[arg(long, default_value_t = 20_000_000)]
        search_budget: usize,
        #[arg(long, default_value_t = 20)]
        max_steps: u32,
    },
    /// Chain-recurrent classes of the discretized map.
    Chainrec {
        #[arg(long)]
        res: Option<usize>,
        #[arg(long, default_value_t = 0.025)]
        eps: f64,
        /// Resolutions for a class-count ladder.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
    },
    /// Bi-asymptotic sectors, spines and their parametrizations.
    Sectors {
        #[arg(long)]
        res: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 33)]
        param_grid: usize,
    },
    /// Run acceptance criteria: `all` or a comma-separated id list.
    Acceptance {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Calibrate { .. } => "calibrate",
            Command::Metric { .. } => "metric",
            Command::HolonomyProbe { .. } => "holonomy-probe",
            Command::Periodic { .. } => "periodic",
            Command::Chainrec { .. } => "chainrec",
            Command::Sectors { .. } => "sectors",
            Command::Acceptance { .. } => "acceptance",
        }
    }
}

enum Failure {
    Config(String),
    Acceptance,
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<CwError>() {
            Some(CwError::Config(m)) => Failure::Config(m.clone()),
            Some(CwError::Unknown { .. }) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<CwError> for Failure {
    fn from(e: CwError) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.model.kind = m.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.output.dir = Some(d.clone());
    }
    if let Command::Calibrate { c, budget } = &cli.command {
        cfg.calibration.c = c.or(cfg.calibration.c);
        cfg.calibration.sample_budget = budget.unwrap_or(cfg.calibration.sample_budget);
    }
    cfg.validate().map_err(|e| Failure::Config(format!("after command-line overrides: {e}")))?;
    Ok(cfg)
}

fn output_path(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| cfg.out_dir().join(format!("{name}.jsonl")))
}

fn finish(w: &ReportWriter, path: &Path) -> anyhow::Result<()> {
    w.write(path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let name = cli.command.name();
    let path = output_path(cli, &cfg, name);
    let depth = cfg.discretization.depth;
    let clock = Instant::now();
    if let Command::Acceptance { suite } = &cli.command {
        return acceptance(&cfg, suite, &path);
    }
    let sys = cfg.system()?;
    let consts = cfg.constants(&sys).ok();
    let need_consts = || consts.ok_or_else(|| anyhow::anyhow!("model '{}' admits no metric calibration", sys.name()));
    let mut w = ReportWriter::new(name, &cfg, consts);
    match &cli.command {
        Command::Calibrate { .. } => {
            let consts = cfg.constants(&sys)?;
            w.record("calibration", &consts)?;
            println!("{:<8} {:>4} {:>10} {:>4} {:>10} {:>10} {:>8}", "c", "m", "lambda", "n0", "xi", "alpha", "horizon");
            println!(
                "{:<8} {:>4} {:>10.6} {:>4} {:>10.4e} {:>10.4e} {:>8}",
                consts.c, consts.m, consts.lambda, consts.n0, consts.xi, consts.alpha, consts.horizon
            );
        }
        Command::Metric { continuum, orbit } => {
            let consts = need_consts()?;
            let text = std::fs::read_to_string(continuum).with_context(|| format!("reading {}", continuum.display()))?;
            let rec: ContinuumRecord = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: line {} column {}: {e}", continuum.display(), e.line(), e.column())))?;
            if rec.chart != sys.chart() {
                return Err(Failure::Config(format!("{}: chart {:?} does not match model chart {:?}", continuum.display(), rec.chart, sys.chart())));
            }
            let c = MarkedContinuum::from_record(&rec)?;
            let r = evaluate(&sys, &c, &consts, depth)?;
            w.record("metric", &r)?;
            println!("{:>12} {:>12} {:>12} {:>12} {:>10}", "P", "rho", "D'", "D", "truncated");
            println!("{:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>10}", r.p, r.rho, r.d_prime, r.d, r.truncated);
            if *orbit > 0 {
                let mut o = Orbit::new(&sys, &c, &consts, depth)?;
                let mut rows = Vec::new();
                for n in -orbit..=*orbit {
                    rows.push(vec![n as f64, o.d(n)?.value]);
                }
                w.series("metric-orbit", &["n", "D"], rows)?;
            }
        }
        Command::HolonomyProbe { samples, gamma, len_min, len_max } => {
            let consts = need_consts()?;
            let params = HolonomyParams::for_model(&sys)?;
            let grid = gamma.clone().unwrap_or_else(|| DEFAULT_GAMMA_GRID.to_vec());
            let r = pseudo_isometry_probe(&sys, *samples, &grid, (*len_min, *len_max), &params, &consts, depth, cfg.seed)?;
            println!("{:>10} {:>8} {:>14} {:>14}", "gamma", "samples", "dev*", "dev**");
            let mut rows = Vec::new();
            for m in &r.modulus {
                println!("{:>10.1e} {:>8} {:>14.4e} {:>14.4e}", m.gamma, m.samples, m.max_deviation_star, m.max_deviation_star_star);
                rows.push(vec![m.gamma, m.samples as f64, m.max_deviation_star, m.max_deviation_star_star]);
            }
            println!("built {}/{} rectangles, {} obstructions", r.built, r.samples, r.obstructions.len());
            w.record("holonomy-probe", &r)?;
            w.series("pseudo-isometry-modulus", &["gamma", "samples", "dev_star", "dev_star_star"], rows)?;
        }
        Command::Periodic { p, alpha, finder, search_budget, max_steps } => {
            let consts = need_consts()?;
            let point = Point::parse(sys.chart(), p).ok_or_else(|| Failure::Config(format!("--p: cannot parse '{p}' as x,y")))?;
            if !(*alpha > 0.0) {
                return Err(Failure::Config(format!("--alpha: {alpha} must be positive")));
            }
            let finders = finder_registry();
            let finder = finders.get(finder).map_err(|e| Failure::Config(format!("--finder: {e}")))?;
            let kp = KatokParams::derive(&sys, &consts, *alpha, None, depth)?;
            let rec = approximate_periodic(&sys, &point, &kp, &consts, finder, *search_budget, *max_steps)?;
            let check = verify_periodic(&sys, &rec.run.q, rec.k, 1e-9)?;
            let [qx, qy] = rec.run.q.coords();
            println!("{:>22} {:>22} {:>6} {:>12} {:>12} {:>8}", "q.x", "q.y", "k", "residual", "d(q,p)", "envelope");
            println!("{qx:>22.17} {qy:>22.17} {:>6} {:>12.3e} {:>12.3e} {:>8}", rec.k, check.residual, rec.distance_to_p, rec.run.envelope_ok);
            let rows = rec.run.steps.iter().map(|s| vec![s.n as f64, s.residual, s.d_f.unwrap_or(f64::NAN), s.envelope]).collect();
            w.record("periodic", &rec)?;
            w.record("periodic-check", &check)?;
            w.series("katok-steps", &["n", "residual", "D_F", "envelope"], rows)?;
        }
        Command::Chainrec { res, eps, ladder } => {
            let res = res.unwrap_or(cfg.discretization.resolution);
            let r = chainrec::analyze(&sys, res, *eps)?;
            println!("{:>6} {:>8} {:>24} {:>12}", "class", "cells", "representative", "role");
            for c in &r.classes {
                let rep = c.representative.map(|[x, y]| format!("({x:.4}, {y:.4})")).unwrap_or_else(|| "pole".into());
                println!("{:>6} {:>8} {:>24} {:>12?}", c.id, c.cells, rep, c.role);
            }
            println!("verdict {:?}, order {:?}", r.verdict, r.order);
            w.record("chainrec", &r)?;
            if let Some(l) = ladder {
                let (rows, monotone) = chainrec::resolution_ladder(&sys, l, *eps)?;
                w.record("chainrec-ladder", &serde_json::json!({ "rows": rows, "non_decreasing": monotone }))?;
            }
        }
        Command::Sectors { res, eps, param_grid } => {
            let res = res.unwrap_or(cfg.discretization.resolution);
            let r = sectors::analyze(&sys, res, *eps, *param_grid)?;
            println!("{} sectors, {} spines, max multiplicity {}", r.sectors.len(), r.spines.len(), r.max_multiplicity);
            println!("{:>22} {:>8} {:>10} {:>12} {:>12}", "spine", "sector", "regular", "param ok", "clearance");
            let mut k = 0;
            for (sp, owner) in r.spines.iter().zip(&r.spine_sectors) {
                let [x, y] = sp.coords();
                match owner {
                    Some(i) => {
                        let p = &r.parametrization_reports[k];
                        let cl = r.enclosures[k].map(|c| format!("{c:.3e}")).unwrap_or_else(|| "none".into());
                        println!("{:>22} {i:>8} {:>10} {:>12} {cl:>12}", format!("({x:.3}, {y:.3})"), r.sectors[*i].regular, p.ok());
                        k += 1;
                    }
                    None => println!("{:>22} {:>8}", format!("({x:.3}, {y:.3})"), "none"),
                }
            }
            w.record("sectors", &r)?;
        }
        Command::Acceptance { .. } => unreachable!(),
    }
    w.timing(name, clock.elapsed().as_secs_f64());
    finish(&w, &path)?;
    Ok(())
}

fn acceptance(cfg: &ExperimentConfig, suite: &str, path: &Path) -> Result<(), Failure> {
    let ids = suite_ids(suite).map_err(|e| Failure::Config(format!("--suite: {e}")))?;
    let scfg = SuiteConfig { seed: cfg.seed, depth: cfg.discretization.depth, calibration_budget: cfg.calibration.sample_budget };
    let run = run_suite(&ids, scfg, &mut |r, secs| println!("{} ({secs:.1} s)", r.line()))?;
    let mut w = ReportWriter::new("acceptance", cfg, None);
    for (id, secs) in &run.timings {
        w.timing(id, *secs);
    }
    for r in &run.reports {
        w.record("criterion", r)?;
    }
    finish(&w, path)?;
    let failures = run.failures();
    println!("{}/{} criteria passed", run.reports.len() - failures.len(), run.reports.len());
    if failures.is_empty() {
        return Ok(());
    }
    let manifest = path.with_file_name("acceptance-failures.json");
    let body = serde_json::json!({ "config_hash": cfg.hash(), "suite": suite, "failures": failures });
    std::fs::write(&manifest, serde_json::to_string_pretty(&body).expect("manifest serializes")).map_err(|e| Failure::Runtime(e.into()))?;
    println!("failure manifest {}", manifest.display());
    Err(Failure::Acceptance)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Acceptance) => ExitCode::from(2),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
