use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lowrank::kyfan::{skf_marchenko_pastur, skf_monte_carlo, SkfMethod, SkfOptions, SkfPolicy};
use lowrank::reduced_rank::{fit_path, RankTol};
use lowrank::selection::{cv_select_k, parse_grid, r_max_default, CvMethod, Selector};
use lowrank::simulation::{run_experiment, ExperimentConfig};
use lowrank::{io, Error};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "lowrank",
    version,
    about = "Reduced-rank regression with Ky-Fan penalized rank selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SkfArg {
    Auto,
    Mc,
    Mp,
}

impl From<SkfArg> for SkfPolicy {
    fn from(a: SkfArg) -> Self {
        match a {
            SkfArg::Auto => SkfPolicy::Auto,
            SkfArg::Mc => SkfPolicy::MonteCarlo,
            SkfArg::Mp => SkfPolicy::MarchenkoPastur,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectMethod {
    Kf,
    KfKnown,
    Rsc,
    Rsci,
}

#[derive(Clone, Copy, ValueEnum)]
enum CvArg {
    Kf,
    Rsci,
    Rsc,
}

/// Options shared by commands that build `S` tables.
#[derive(clap::Args)]
struct SkfArgs {
    /// How to evaluate S tables.
    #[arg(long = "skf-method", value_enum, default_value = "auto")]
    skf_method: SkfArg,
    /// Monte Carlo draws per S table.
    #[arg(long, default_value_t = lowrank::kyfan::DEFAULT_NSIM)]
    nsim: usize,
    /// Bisection tolerance for the Marchenko–Pastur quantile.
    #[arg(long, default_value_t = lowrank::kyfan::DEFAULT_EPS)]
    eps: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate S(r) = E‖G‖_(2,r) for a q×n Gaussian matrix.
    Skf {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "auto")]
        method: SkfArg,
        #[arg(long, default_value_t = lowrank::kyfan::DEFAULT_NSIM)]
        nsim: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = lowrank::kyfan::DEFAULT_EPS)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the rank-R estimator.
    Fit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long = "out-coef")]
        out_coef: PathBuf,
        #[arg(long = "out-fitted")]
        out_fitted: Option<PathBuf>,
    },
    /// Select the rank with a penalized criterion.
    Select {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum)]
        method: SelectMethod,
        #[arg(long = "k", default_value_t = lowrank::selection::DEFAULT_K)]
        k: f64,
        /// Noise variance, required by kf-known.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Penalty weight, required by rsc.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = lowrank::selection::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long = "r-max")]
        r_max: Option<usize>,
        /// Permit K ≤ 1 for kf-known.
        #[arg(long = "allow-sub-minimal")]
        allow_sub_minimal: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        skf: SkfArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose K (or λ for rsc) by V-fold cross-validation.
    Cv {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum)]
        method: CvArg,
        /// `start:stop:step` or a comma list.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = lowrank::selection::DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        skf: SkfArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated simulation experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-json")]
        out_json: PathBuf,
        #[arg(long = "out-csv")]
        out_csv: PathBuf,
    },
}

fn exit_status(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Parse(_) => 2,
        Error::Infeasible(_) | Error::VarianceNotEstimable(_) => 3,
        Error::Io(_) => 4,
        Error::Numerical(_) => 1,
    }
}

fn fail(code: &str, status: u8, message: &str) -> ExitCode {
    let body = json!({ "error": { "code": code, "status": status, "message": message } });
    eprintln!("{body}");
    ExitCode::from(status)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn read_matrix(path: &Path) -> lowrank::Result<lowrank::DMatrix<f64>> {
    match io::read_matrix_csv(path) {
        Err(Error::Io(e)) => Err(io_err(path, e)),
        Err(Error::Parse(m)) => Err(Error::Parse(format!("{}: {m}", path.display()))),
        other => other,
    }
}

fn write_text(path: &Path, text: &str) -> lowrank::Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> lowrank::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    write_text(path, &(text + "\n"))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types always serialize")
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn skf_options(a: &SkfArgs, seed: u64) -> SkfOptions {
    SkfOptions {
        policy: a.skf_method.into(),
        nsim: a.nsim,
        seed,
        eps: a.eps,
    }
}

fn configure_threads() -> lowrank::Result<()> {
    let Ok(raw) = std::env::var("LOWRANK_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Error::Argument(format!(
            "LOWRANK_THREADS must be a nonnegative integer, got '{raw}'"
        ))
    })?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Argument(format!("could not size the thread pool: {e}")))?;
    }
    Ok(())
}

fn with_config(mut report: Value, config: Value) -> Value {
    if let Value::Object(map) = &mut report {
        map.insert("config".into(), config);
    }
    report
}

fn run(cmd: Command) -> lowrank::Result<()> {
    match cmd {
        Command::Skf {
            q,
            n,
            method,
            nsim,
            seed,
            eps,
            out,
        } => {
            let policy: SkfPolicy = method.into();
            let resolved = policy.resolve(q, n);
            let (table, seed) = match resolved {
                SkfMethod::MonteCarlo => {
                    let seed = seed_or_random(seed);
                    (skf_monte_carlo(q, n, nsim, seed)?, Some(seed))
                }
                SkfMethod::MarchenkoPastur => (skf_marchenko_pastur(q, n, eps)?, None),
            };
            write_text(&out, &table.to_csv())?;
            let summary = json!({
                "command": "skf",
                "config": { "q": q, "n": n, "method": policy, "resolved_method": resolved,
                            "nsim": nsim, "seed": seed, "eps": eps, "out": out },
                "rows": table.values.len(),
            });
            println!("{summary}");
        }
        Command::Fit {
            x,
            y,
            rank,
            out_coef,
            out_fitted,
        } => {
            let (xm, ym) = (read_matrix(&x)?, read_matrix(&y)?);
            let path = fit_path(&xm, &ym, RankTol::Auto)?;
            io::write_matrix_csv(&out_coef, &path.coefficients(rank)?).map_err(|e| match e {
                Error::Io(e) => io_err(&out_coef, e),
                e => e,
            })?;
            if let Some(f) = &out_fitted {
                write_text(f, &io::matrix_to_csv(&path.fitted(rank)?))?;
            }
            let summary = json!({
                "command": "fit",
                "config": { "x": x, "y": y, "rank": rank, "out_coef": out_coef, "out_fitted": out_fitted },
                "rank_x": path.rank_x(),
                "rss": path.rss_at(rank)?,
            });
            println!("{summary}");
        }
        Command::Select {
            x,
            y,
            method,
            k,
            sigma2,
            lambda,
            alpha,
            r_max,
            allow_sub_minimal,
            seed,
            skf,
            out,
        } => {
            let (xm, ym) = (read_matrix(&x)?, read_matrix(&y)?);
            let path = fit_path(&xm, &ym, RankTol::Auto)?;
            let seed = seed_or_random(seed);
            let opts = skf_options(&skf, seed);
            let selector = match method {
                SelectMethod::Kf => Selector::Kf { k, alpha, r_max },
                SelectMethod::KfKnown => {
                    let sigma2 =
                        sigma2.ok_or_else(|| Error::Argument("kf-known needs --sigma2".into()))?;
                    if k <= 1.0 && !allow_sub_minimal {
                        return Err(Error::Argument(format!(
                            "K = {k} is at or below the minimal penalty and overfits; pass --allow-sub-minimal to run it anyway"
                        )));
                    }
                    Selector::KfKnown { k, sigma2, r_max }
                }
                SelectMethod::Rsc => Selector::Rsc {
                    lambda: lambda.ok_or_else(|| Error::Argument("rsc needs --lambda".into()))?,
                    r_max,
                },
                SelectMethod::Rsci => Selector::Rsci { k, r_max },
            };
            let resolved_r_max = match (method, r_max) {
                (_, Some(r)) => r,
                (SelectMethod::Kf, None) => {
                    let (m, _, n) = path.dims();
                    r_max_default(path.rank_x(), n, m, k, alpha)?
                }
                (_, None) => path.max_rank(),
            };
            let report = selector.select(&path, &opts)?;
            let config = json!({
                "x": x, "y": y, "selector": to_value(&selector), "r_max": resolved_r_max,
                "allow_sub_minimal": allow_sub_minimal, "skf": to_value(&opts),
            });
            write_json(&out, &with_config(to_value(&report), config))?;
        }
        Command::Cv {
            x,
            y,
            method,
            grid,
            folds,
            seed,
            skf,
            out,
        } => {
            let (xm, ym) = (read_matrix(&x)?, read_matrix(&y)?);
            let method = match method {
                CvArg::Kf => CvMethod::Kf,
                CvArg::Rsci => CvMethod::Rsci,
                CvArg::Rsc => CvMethod::Rsc,
            };
            let grid = match (&grid, method) {
                (Some(g), _) => parse_grid(g)?,
                (None, CvMethod::Rsc) => lowrank::simulation::default_lambda_grid(),
                (None, m) => m.default_grid(),
            };
            let seed = seed_or_random(seed);
            let opts = skf_options(&skf, seed);
            let report = cv_select_k(&xm, &ym, method, &grid, folds, seed, &opts)?;
            let config = json!({
                "x": x, "y": y, "method": method, "grid": grid, "folds": folds, "seed": seed,
                "skf": to_value(&opts),
            });
            write_json(&out, &with_config(to_value(&report), config))?;
        }
        Command::Simulate {
            config,
            out_json,
            out_csv,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| io_err(&config, e))?;
            let mut raw: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("{}: {e}", config.display())))?;
            if let Value::Object(map) = &mut raw {
                if map.get("seed").is_none_or(Value::is_null) {
                    map.insert("seed".into(), json!(rand::random::<u64>()));
                }
            }
            let cfg: ExperimentConfig = serde_json::from_value(raw)
                .map_err(|e| Error::Parse(format!("{}: {e}", config.display())))?;
            let result = run_experiment(&cfg)?;
            write_json(&out_json, &to_value(&result))?;
            write_text(&out_csv, &result.to_csv())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("argument", 2, e.to_string().trim()),
    };
    if let Err(e) = configure_threads() {
        return fail(e.code(), exit_status(&e), &e.to_string());
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), exit_status(&e), &e.to_string()),
    }
}
