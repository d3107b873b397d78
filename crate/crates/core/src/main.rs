use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use famo::alloc_track::CountingAlloc;
use famo::error::Error;
use famo::harness::pareto::{DEFAULT_FRONT_PATH, FRONT_GRID, FRONT_RANGE};
use famo::harness::sweep::{gamma_sweep, SweepConfig, SWEEP_GAMMAS};
use famo::harness::timing::{timing_methods, timing_scaling, TimingOptions, TIMING_KS, TIMING_STEPS};
use famo::harness::toy::toy_experiment_default;
use famo::harness::{run, ParetoFront, RunConfig};
use famo::problems::{check_gradients, make_quadratic_bank, QuadraticBankSpec, Toy2d, GRADCHECK_TOL};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

/// Multitask optimizer experiments.
#[derive(Parser)]
#[command(name = "famo", version)]
struct Cli {
    /// Exit with status 3 when the command's checks fail.
    #[arg(long, global = true)]
    assert: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// All methods from the five toy inits.
    Toy {
        #[arg(long, default_value = DEFAULT_FRONT_PATH)]
        front: PathBuf,
        /// Directory for trajectories and `toy.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// FAMO over several γ on a scale-imbalanced quadratic bank.
    GammaSweep {
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_GAMMAS)]
        gammas: Vec<f64>,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step time, gradient count and live vectors against k.
    Timing {
        #[arg(long, value_delimiter = ',', default_values_t = TIMING_KS)]
        k: Vec<usize>,
        #[arg(long, default_value_t = TIMING_STEPS)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks on the toy and on random quadratic banks.
    CheckGradients {
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 20)]
        banks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inspect or rebuild the cached toy Pareto front.
    ParetoFront {
        #[arg(long)]
        rebuild: bool,
        #[arg(long, default_value = DEFAULT_FRONT_PATH)]
        path: PathBuf,
    },
}

enum Failure {
    Error(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn check(assert: bool, ok: bool, what: String) -> Outcome {
    if ok {
        return Ok(());
    }
    if assert {
        return Err(Failure::Check(what));
    }
    eprintln!("warning: {what}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::FrontCacheMissing(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 1,
        Error::Precondition(_) | Error::Numerical(_) | Error::NotConverged { .. } => 2,
    }
}

fn create(path: &Path) -> Result<File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

fn cmd_run(config: &Path, assert: bool) -> Outcome {
    let text = std::fs::read_to_string(config)?;
    let cfg = RunConfig::from_json(&text)?;
    let s = run(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&s).map_err(Error::from)?);
    check(assert, s.failure.is_none(), format!("run stopped early: {}", s.failure.clone().unwrap_or_default()))?;
    check(assert, s.reached_front != Some(false), "toy run did not reach the front".into())
}

fn cmd_toy(front: &Path, out: Option<&Path>, assert: bool) -> Outcome {
    let front = ParetoFront::load(front)?;
    let s = toy_experiment_default(&front, out)?;
    println!("threshold {:.4e}", s.threshold);
    println!("{:<10} {:>14} {:>8} {:>10} {:>10} {:>11} reached", "method", "init", "", "l1", "l2", "proximity");
    for r in &s.runs {
        let m = &r.summary;
        println!(
            "{:<10} {:>7.1},{:<6.1} {:>10.5} {:>10.5} {:>11.3e} {}",
            r.method,
            r.init[0],
            r.init[1],
            m.final_losses[0],
            m.final_losses[1],
            m.pareto_proximity.unwrap_or(f64::NAN),
            m.reached_front.unwrap_or(false)
        );
    }
    for t in &s.totals {
        println!("{:<10} reached {}/5 in {:.3} s", t.method, t.reached, t.total_ns as f64 * 1e-9);
    }
    if let Some(dir) = out {
        s.write_csv(create(&dir.join("toy.csv"))?)?;
    }
    let reached = |m: &str| s.totals_for(m).map_or(0, |t| t.reached);
    check(assert, reached("famo") == 5, "famo missed the front from some init".into())?;
    for m in ["mgda", "pcgrad", "cagrad", "nash_mtl"] {
        check(assert, reached(m) == 5, format!("{m} missed the front from some init"))?;
    }
    check(assert, reached("ls") < 5, "ls reached the front from every init".into())
}

fn cmd_sweep(gammas: &[f64], out: Option<&Path>, assert: bool) -> Outcome {
    let r = gamma_sweep(&SweepConfig::default(), gammas)?;
    println!("reference {:?}", r.reference);
    for row in &r.rows {
        println!("gamma {:e}: delta_m {:.4}% converged {} losses {:?}", row.gamma, row.delta_m_percent, row.converged, row.final_losses);
    }
    if let (Some(path), Some(table)) = (out, &r.table) {
        table.write_csv(create(path)?)?;
    }
    check(assert, r.rows.iter().all(|row| row.converged), "some γ did not converge".into())
}

fn cmd_timing(ks: &[usize], steps: usize, out: Option<&Path>, assert: bool) -> Outcome {
    let opts = TimingOptions { steps, ..TimingOptions::default() };
    let t = timing_scaling(&timing_methods(), ks, &opts)?;
    t.write_csv(std::io::stdout())?;
    if let Some(path) = out {
        t.write_csv(create(path)?)?;
    }
    let (famo, mgda) = (t.slope("famo"), t.slope("mgda"));
    println!("slope famo {famo:?} ns/task, mgda {mgda:?} ns/task");
    let ratio_ok = matches!((famo, mgda), (Some(f), Some(m)) if m > 0.0 && f <= 0.3 * m);
    check(assert, ratio_ok, "famo slope exceeds 0.3× mgda slope".into())?;
    let famo_cells_ok = t.for_method("famo").all(|c| c.grad_evals_per_step == 1 && c.live_vectors.is_none_or(|v| v <= 4));
    check(assert, famo_cells_ok, "famo used more than 1 gradient or 4 live vectors per step".into())
}

fn cmd_gradcheck(points: usize, banks: usize, seed: u64, assert: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let toy = Toy2d::new();
    let mut worst = 0.0f64;
    let mut failed = 0;
    for _ in 0..points {
        let theta = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
        let r = check_gradients(&toy, &theta, 1e-6)?;
        worst = worst.max(r.max_error);
        failed += usize::from(!r.passed);
    }
    println!("toy: {points} points, worst relative error {worst:.3e}, {failed} failed");
    let mut bank_worst = 0.0f64;
    let mut bank_failed = 0;
    for b in 0..banks {
        let bank = make_quadratic_bank(&QuadraticBankSpec::random(4, 8, seed + b as u64))?;
        let theta: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r = check_gradients(&bank, &theta, 1e-5)?;
        bank_worst = bank_worst.max(r.max_error);
        bank_failed += usize::from(!r.passed);
    }
    println!("quadratic: {banks} banks, worst relative error {bank_worst:.3e}, {bank_failed} failed");
    check(
        assert || failed + bank_failed > 0,
        failed + bank_failed == 0,
        format!("gradient check above {GRADCHECK_TOL:e}"),
    )
}

fn cmd_front(rebuild: bool, path: &Path) -> Outcome {
    let front = if rebuild {
        let f = ParetoFront::build(FRONT_GRID, FRONT_RANGE)?;
        f.save(path)?;
        f
    } else {
        ParetoFront::load(path)?
    };
    println!(
        "{} points, max gap {:.4e}, threshold {:.4e} ({})",
        front.points.len(),
        front.max_gap(),
        front.threshold(),
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let a = cli.assert;
    let out = match &cli.cmd {
        Cmd::Run { config } => cmd_run(config, a),
        Cmd::Toy { front, out } => cmd_toy(front, out.as_deref(), a),
        Cmd::GammaSweep { gammas, out } => cmd_sweep(gammas, out.as_deref(), a),
        Cmd::Timing { k, steps, out } => cmd_timing(k, *steps, out.as_deref(), a),
        Cmd::CheckGradients { points, banks, seed } => cmd_gradcheck(*points, *banks, *seed, a),
        Cmd::ParetoFront { rebuild, path } => cmd_front(*rebuild, path),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(what)) => {
            eprintln!("check failed: {what}");
            ExitCode::from(3)
        }
    }
}
