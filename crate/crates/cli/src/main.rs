mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use bpoe_core::continuous::{mc_gradient, FiniteSampler, Sampler, UniformSampler};
use bpoe_core::optimizer::{self, projected_subgradient, stationarity_check};
use bpoe_core::risk::{bpoe, failure_prob, BpoeMethod};
use bpoe_core::scenario::{
    bernoulli_scenarios, load_scenarios, network_flow_model, push_forward, PerformanceModel,
    ScalarLinearModel, ScenarioFormat, ScenarioSet,
};
use bpoe_core::subgradient::{coordinate_bounds, distinct_outcome_gradient, subgradient_set};
use bpoe_core::Error;

#[derive(Parser)]
#[command(name = "bpoe", version, about = "Buffered failure probability toolkit")]
struct Cli {
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true, env = "BPOE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Buffered failure probability, regime, ᾱ and minimizer interval.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, value_enum, default_value_t = Method::Min)]
        method: Method,
    },
    /// Outer subgradient set: slices, coordinate bounds, closed form.
    Subgrad {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// CSV of `x,bpoe,failure_prob` over a uniform grid of a scalar `x`.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, allow_hyphen_values = true)]
        x_max: f64,
        #[arg(long, default_value_t = 101)]
        steps: usize,
    },
    /// Re-run the worked examples and print a pass/fail table.
    Repro {
        #[arg(value_enum)]
        example: repro::Example,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo gradient estimate.
    GradMc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 100_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Projected subgradient descent over a box.
    Optimize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[command(flatten)]
        bounds: BoxArgs,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1.0)]
        step0: f64,
    },
    /// First-order stationarity over a box.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[command(flatten)]
        bounds: BoxArgs,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Definitional,
    Min,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinModel {
    /// Four-component network flow shortfall, failure probability `--rho`.
    Network,
    /// `g = xξ − 1` with `ξ` equally likely 0 or 1.
    Example1,
    /// `g = xξ − 1` with `ξ` uniform on [−1, 1]; sampling only.
    Example2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FileFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Scenario file (CSV `prob,b,a1,..,an` or JSON).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    scenarios: Option<PathBuf>,
    /// Overrides the format inferred from the file extension.
    #[arg(long, requires = "scenarios")]
    format: Option<FileFormat>,
    #[arg(long, value_enum)]
    model: Option<BuiltinModel>,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
}

#[derive(Args)]
struct BoxArgs {
    /// Lower bounds, comma separated (`-inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    lower: String,
    /// Upper bounds, comma separated (`inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    upper: String,
}

/// Finite scenario model or a sampling-only model.
enum Loaded {
    Finite(ScenarioSet, Box<dyn PerformanceModel>),
    Uniform(UniformSampler, ScalarLinearModel),
}

impl ModelArgs {
    fn load(&self) -> Result<Loaded, Error> {
        if let Some(path) = &self.scenarios {
            let format = match self.format {
                Some(FileFormat::Csv) => ScenarioFormat::Csv,
                Some(FileFormat::Json) => ScenarioFormat::Json,
                None => ScenarioFormat::from_path(path),
            };
            let (set, model) = load_scenarios(path, format).map_err(|e| match e {
                Error::Io(io) => Error::Io(std::io::Error::new(
                    io.kind(),
                    format!("{}: {io}", path.display()),
                )),
                e => e,
            })?;
            return Ok(Loaded::Finite(set, Box::new(model)));
        }
        Ok(match self.model.expect("clap enforces a model source") {
            BuiltinModel::Network => {
                let (set, model) = network_flow_model(self.rho)?;
                Loaded::Finite(set, Box::new(model))
            }
            BuiltinModel::Example1 => {
                Loaded::Finite(bernoulli_scenarios(), Box::new(ScalarLinearModel))
            }
            BuiltinModel::Example2 => {
                Loaded::Uniform(UniformSampler { a: -1.0, b: 1.0 }, ScalarLinearModel)
            }
        })
    }

    fn finite(&self) -> Result<(ScenarioSet, Box<dyn PerformanceModel>), Error> {
        match self.load()? {
            Loaded::Finite(set, model) => Ok((set, model)),
            Loaded::Uniform(..) => Err(Error::BadParameter(
                "this command needs a finite scenario model; example2 supports grad-mc only".into(),
            )),
        }
    }
}

fn parse_vector(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::BadParameter(format!("cannot parse {t:?} as a number")))
        })
        .collect()
}

fn parse_point(s: &str) -> Result<Vec<f64>, Error> {
    let v = parse_vector(s)?;
    match v.iter().find(|t| !t.is_finite()) {
        Some(t) => Err(Error::BadParameter(format!("coordinate {t} is not finite"))),
        None => Ok(v),
    }
}

impl BoxArgs {
    fn parse(&self) -> Result<optimizer::Box, Error> {
        optimizer::Box::new(parse_vector(&self.lower)?, parse_vector(&self.upper)?)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn cmd_eval(model: &ModelArgs, x: &str, method: Method) -> Result<(), Error> {
    let (set, model) = model.finite()?;
    let x = parse_point(x)?;
    let dist = push_forward(model.as_ref(), &set, &x)?;
    let method = match method {
        Method::Definitional => BpoeMethod::Definitional,
        Method::Min => BpoeMethod::MinFormula,
    };
    let r = bpoe(&dist, method)?;
    let mut out = Map::new();
    out.insert("bpoe".into(), json!(r.value));
    if let Some(a) = r.alpha_bar {
        out.insert("alpha_bar".into(), json!(a));
    }
    if let Some(g) = &r.gamma {
        out.insert("gamma".into(), json!([g.lo, g.hi]));
    }
    out.insert("regime".into(), json!(r.regime.as_str()));
    print_json(&Value::Object(out))
}

fn cmd_subgrad(model: &ModelArgs, x: &str) -> Result<(), Error> {
    let (set, model) = model.finite()?;
    let x = parse_point(x)?;
    let y = subgradient_set(&set, model.as_ref(), &x)?;
    let slices: Vec<Value> = y
        .slices
        .iter()
        .map(|s| {
            json!({
                "gamma_hat": s.gamma_hat(),
                "gamma_span": [s.gamma_span.0, s.gamma_span.1],
                "forced_zero": s.pattern.forced_zero.len(),
                "forced_one": s.pattern.forced_one.len(),
                "tied": s.pattern.tied.len(),
                "tied_mass": s.pattern.tied_mass,
                "bounds": (0..y.dim()).map(|j| { let b = s.bounds(j); [b.0, b.1] }).collect::<Vec<_>>(),
            })
        })
        .collect();
    let bounds: Vec<[f64; 2]> = (0..y.dim())
        .map(|j| {
            let b = coordinate_bounds(&y, j);
            [b.0, b.1]
        })
        .collect();
    let closed_form = match distinct_outcome_gradient(&set, model.as_ref(), &x) {
        Ok(g) => json!(g),
        Err(Error::NotApplicable(_)) => json!("not applicable"),
        Err(e) => return Err(e),
    };
    print_json(&json!({
        "gamma": [y.gamma.lo, y.gamma.hi],
        "slices": slices,
        "bounds": bounds,
        "singleton": y.unique_point(),
        "closed_form": closed_form,
    }))
}

fn cmd_sweep(model: &ModelArgs, x_min: f64, x_max: f64, steps: usize) -> Result<(), Error> {
    if !(x_min.is_finite() && x_max.is_finite() && x_min <= x_max) || steps < 2 {
        return Err(Error::BadParameter(format!(
            "need finite x-min ≤ x-max and at least 2 steps, got [{x_min}, {x_max}] with {steps}"
        )));
    }
    let (set, model) = model.finite()?;
    if model.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: model.dim(),
        });
    }
    let h = (x_max - x_min) / (steps - 1) as f64;
    let mut out = String::from("x,bpoe,failure_prob\n");
    for k in 0..steps {
        let x = if k + 1 == steps {
            x_max
        } else {
            x_min + h * k as f64
        };
        let dist = push_forward(model.as_ref(), &set, &[x])?;
        let r = bpoe(&dist, BpoeMethod::MinFormula)?;
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(x),
            fmt_f64(r.value),
            fmt_f64(failure_prob(&dist))
        ));
    }
    print!("{out}");
    Ok(())
}

fn cmd_grad_mc(model: &ModelArgs, x: &str, n_samples: usize, seed: u64) -> Result<(), Error> {
    let x = parse_point(x)?;
    let est = match model.load()? {
        Loaded::Finite(set, model) => {
            let sampler = FiniteSampler::new(set);
            mc_gradient(
                &sampler as &dyn Sampler,
                model.as_ref(),
                &x,
                n_samples,
                seed,
            )?
        }
        Loaded::Uniform(sampler, model) => mc_gradient(&sampler, &model, &x, n_samples, seed)?,
    };
    print_json(&est)
}

fn cmd_optimize(
    model: &ModelArgs,
    x0: &str,
    bounds: &BoxArgs,
    max_iter: usize,
    step0: f64,
) -> Result<(), Error> {
    let (set, model) = model.finite()?;
    let bx = bounds.parse()?;
    let rep = projected_subgradient(
        &set,
        model.as_ref(),
        &parse_point(x0)?,
        &bx,
        max_iter,
        step0,
    )?;
    print_json(&rep)
}

fn cmd_check(model: &ModelArgs, x: &str, bounds: &BoxArgs, tol: f64) -> Result<(), Error> {
    let (set, model) = model.finite()?;
    let bx = bounds.parse()?;
    let (stationary, residual) =
        stationarity_check(&set, model.as_ref(), &parse_point(x)?, &bx, tol)?;
    print_json(&json!({ "stationary": stationary, "residual": residual }))
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Eval { model, x, method } => cmd_eval(model, x, *method)?,
        Command::Subgrad { model, x } => cmd_subgrad(model, x)?,
        Command::Sweep {
            model,
            x_min,
            x_max,
            steps,
        } => cmd_sweep(model, *x_min, *x_max, *steps)?,
        Command::Repro { example, seed } => {
            let checks = repro::run(*example, *seed);
            print!("{}", repro::table(&checks));
            if checks.iter().any(|c| !c.pass) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::GradMc {
            model,
            x,
            n_samples,
            seed,
        } => cmd_grad_mc(model, x, *n_samples, *seed)?,
        Command::Optimize {
            model,
            x0,
            bounds,
            max_iter,
            step0,
        } => cmd_optimize(model, x0, bounds, *max_iter, *step0)?,
        Command::Check {
            model,
            x,
            bounds,
            tol,
        } => cmd_check(model, x, bounds, *tol)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("bpoe: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bpoe: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
