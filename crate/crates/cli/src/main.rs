use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimfair_core::debias::{mim, opt_fit, OptConfig};
use mimfair_core::experiment::{run_audit, run_sweep, FittedModel, Method, SweepSpec};
use mimfair_core::kv::KeyValues;
use mimfair_core::model::{train_logistic, TrainConfig};
use mimfair_core::pscf::{delta, mse_gap_check, LinearSCM};
use mimfair_core::synth::{load_dataset_csv, Schema};
use mimfair_core::{Error, Measure};

#[derive(Parser)]
#[command(name = "mimfair", version, about = "Influence audits and influence-preserving debiasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a synthetic scenario over the latent correlation and write a CSV summary.
    Sweep(Common),
    /// Write influence.csv and fairness.csv for a saved model on a CSV dataset.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Fit one method on a CSV dataset and save the model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// trad_full, trad_wo_z, mim, opt_mde or opt_shap.
        #[arg(long)]
        method: Option<String>,
    },
    /// Simulate the linear causal model and compare both corrections.
    PscfDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
}

fn load_config(path: Option<&Path>) -> Result<KeyValues, Error> {
    match path {
        Some(p) => KeyValues::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", p.display())),
            other => other,
        }),
        None => Ok(KeyValues::new()),
    }
}

/// A path from the command line, else from the config key of the same name.
fn path_arg(flag: Option<PathBuf>, kv: &KeyValues, key: &str) -> Result<PathBuf, Error> {
    flag.or_else(|| kv.get(key).map(PathBuf::from))
        .ok_or_else(|| Error::Config(format!("missing `--{key}` (or `{key}=` in the config)")))
}

fn require_file(path: &Path, what: &str) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} does not exist", path.display())))
    }
}

fn sweep(common: Common) -> Result<(), Error> {
    let mut kv = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        kv.set("seed", seed.to_string());
    }
    let spec = SweepSpec::from_kv(&kv)?;
    let out = path_arg(common.out, &kv, "out")?;
    let result = run_sweep(&spec)?;
    result.save_csv(&out)?;
    eprintln!("wrote {} rows to {}", result.summary.len(), out.display());
    Ok(())
}

fn audit(common: Common, model: Option<PathBuf>, data: Option<PathBuf>, schema: Option<PathBuf>) -> Result<(), Error> {
    let kv = load_config(common.config.as_deref())?;
    let model = path_arg(model, &kv, "model")?;
    let data = path_arg(data, &kv, "data")?;
    let schema = path_arg(schema, &kv, "schema")?;
    let out = path_arg(common.out, &kv, "out")?;
    require_file(&schema, "schema")?;
    require_file(&model, "model")?;
    require_file(&data, "data")?;
    let seed = match common.seed {
        Some(s) => s,
        None => kv.parse_or("seed", 0)?,
    };
    run_audit(&model, &data, &schema, &out, seed)?;
    eprintln!("wrote influence.csv and fairness.csv to {}", out.display());
    Ok(())
}

fn train(common: Common, data: Option<PathBuf>, schema: Option<PathBuf>, method: Option<String>) -> Result<(), Error> {
    let mut kv = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        kv.set("seed", seed.to_string());
    }
    let data = path_arg(data, &kv, "data")?;
    let schema = path_arg(schema, &kv, "schema")?;
    let out = path_arg(common.out, &kv, "out")?;
    require_file(&schema, "schema")?;
    let method: Method = match method {
        Some(m) => m.parse()?,
        None => kv.get("method").unwrap_or("trad_full").parse()?,
    };
    let dataset = load_dataset_csv(&data, &Schema::load(&schema)?)?;
    let cfg = TrainConfig::from_kv(&kv)?;
    let all: Vec<usize> = (0..dataset.n_cols()).collect();
    let model = match method {
        Method::TradFull => FittedModel::Linear(train_logistic(&dataset, &cfg, &all)?),
        Method::TradWoZ => FittedModel::Linear(train_logistic(&dataset, &cfg, &dataset.unprotected())?),
        Method::Mim => FittedModel::Mixture(mim(train_logistic(&dataset, &cfg, &all)?, &dataset)?),
        Method::OptMde | Method::OptShap => {
            let measure = if method == Method::OptMde { Measure::Mde } else { Measure::Shap };
            let reference = train_logistic(&dataset, &cfg, &all)?;
            let fit = opt_fit(&dataset, &reference, &OptConfig::from_kv(&kv, measure, cfg)?)?;
            eprintln!("stage-2 loss {} -> {}", fit.initial_loss, fit.final_loss);
            FittedModel::Linear(fit.model)
        }
    };
    model.save(&out)?;
    eprintln!("saved {} model to {}", method, out.display());
    Ok(())
}

/// Coefficients of the worked example with unit noise.
fn default_scm() -> LinearSCM {
    LinearSCM {
        theta_m: [0.0, 0.3, 0.5],
        theta_l: [0.0, 0.0, 0.5, 0.4],
        theta_y: [0.0, 0.5, 0.5, 1.0, 0.7],
        noise_std: [1.0, 1.0, 1.0],
        ..LinearSCM::default()
    }
}

fn pscf_demo(common: Common, n: usize) -> Result<(), Error> {
    let kv = load_config(common.config.as_deref())?;
    let scm = if kv.keys().any(|k| k.starts_with("scm.")) {
        LinearSCM::from_kv(&kv)?
    } else {
        default_scm()
    };
    let seed = match common.seed {
        Some(s) => s,
        None => kv.parse_or("seed", 0)?,
    };
    let n = kv.parse_or("n", n)?;
    let gap = mse_gap_check(&scm, n, seed)?;
    let text = format!(
        "mse_pscf={}\nmse_mim={}\ndelta_sq={}\nresidual={}\ndelta={}\nstderr={}\n",
        gap.mse_pscf,
        gap.mse_mim,
        gap.delta_sq,
        gap.residual,
        delta(&scm, gap.z_mean),
        gap.stderr
    );
    print!("{text}");
    if let Some(out) = common.out {
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_)
        | Error::FlatObjective(_)
        | Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(common) => sweep(common),
        Command::Audit {
            common,
            model,
            data,
            schema,
        } => audit(common, model, data, schema),
        Command::Train {
            common,
            data,
            schema,
            method,
        } => train(common, data, schema, method),
        Command::PscfDemo { common, n } => pscf_demo(common, n),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
