use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dgm_dte::data::{
    balanced_resample, fraction_above, generate, load_csv, save_csv, split_temporal, Split,
};
use dgm_dte::graphs::Order;
use dgm_dte::metrics::render_table;
use dgm_dte::model::{
    evaluate, load_checkpoint, restore, save_checkpoint, train, PreparedData, Variant,
};
use dgm_dte::pipeline::{ablate, sweep, SweepParam};

mod config;

use config::{sibling, RunConfig};

#[derive(Parser)]
#[command(name = "dgm-dte", version, about = "Delivery-time estimation over dual attribute graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic orders CSV
    GenData(GenDataArgs),
    /// Train one variant and write a checkpoint with its epoch log
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split
    Eval(EvalArgs),
    /// Train and evaluate every variant over several seeds
    Ablate(AblateArgs),
    /// Validation MAE over values of d_O or t_c
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_orders: Option<usize>,
    /// Mixture weight of the heavy-tailed component
    #[arg(long)]
    tail_weight: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Overrides for the `model` config section.
#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Order embedding width
    #[arg(long = "d-o")]
    d_o: Option<usize>,
    /// Head/tail threshold in hours
    #[arg(long = "t-c")]
    t_c: Option<f64>,
}

impl ModelFlags {
    fn apply(&self, rc: &mut RunConfig) {
        let m = &mut rc.model;
        if let Some(v) = self.variant {
            m.variant = v;
        }
        if let Some(v) = self.epochs {
            m.epochs = v;
        }
        if let Some(v) = self.seed {
            m.seed = v;
        }
        if let Some(v) = self.lr {
            m.lr = v;
        }
        if let Some(v) = self.batch_size {
            m.batch_size = v;
        }
        if let Some(v) = self.d_o {
            m.d_o = v;
        }
        if let Some(v) = self.t_c {
            m.t_c = v;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path; the log and effective config are written beside it
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Defaults to the config written next to the checkpoint
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Evaluate on a label-balanced resample of the test split
    #[arg(long)]
    balanced: bool,
    /// Resampling seed for --balanced
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report prefix; `.json` and `.txt` are appended
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Report prefix; `.json` and `.txt` are appended
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// d_O or t_c
    #[arg(long = "sweep")]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    model: ModelFlags,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_orders(path: &Path) -> Result<Vec<Order>> {
    let report = load_csv(path)?;
    if !report.rejected.is_empty() {
        log::warn!("{}: skipped {} invalid rows", path.display(), report.rejected.len());
        for r in report.rejected.iter().take(5) {
            log::warn!("  line {} ({}): {}", r.line, r.order_id, r.reason);
        }
    }
    if report.orders.is_empty() {
        return Err(dgm_dte::Error::Data(format!("{}: no valid orders", path.display())).into());
    }
    Ok(report.orders)
}

fn load_split(path: &Path, rc: &RunConfig) -> Result<Split> {
    let orders = load_orders(path)?;
    let split = split_temporal(&orders, &rc.split)?;
    if split.dropped > 0 {
        log::info!("{} orders fall after the last split day and are unused", split.dropped);
    }
    log::info!("split: {} train, {} val, {} test", split.train.len(), split.val.len(), split.test.len());
    Ok(split)
}

fn cmd_gen_data(a: GenDataArgs) -> Result<()> {
    let mut rc = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.seed {
        rc.generator.seed = v;
    }
    if let Some(v) = a.n_orders {
        rc.generator.n_orders = v;
    }
    if let Some(v) = a.tail_weight {
        rc.generator.tail_weight = v;
    }
    rc.paths.data = Some(a.out.clone());
    rc.validate()?;
    let orders = generate(&rc.generator)?;
    save_csv(&orders, &a.out)?;
    rc.write_next_to(&a.out)?;
    println!(
        "wrote {} orders to {}; tail fraction (> {} h): {:.4}",
        orders.len(),
        a.out.display(),
        rc.model.t_c,
        fraction_above(&orders, rc.model.t_c)
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut rc = RunConfig::load_or_default(a.config.as_deref())?;
    a.model.apply(&mut rc);
    rc.paths.data = Some(a.data.clone());
    rc.paths.checkpoint = Some(a.out.clone());
    rc.validate()?;
    let split = load_split(&a.data, &rc)?;
    let data = PreparedData::new(&rc.model, &split.train, &split.val)?;
    let out = train(&rc.model, &data)?;
    save_checkpoint(&a.out, &out.meta(), &out.best)?;
    let log_path = sibling(&a.out, ".log.csv");
    write(&log_path, &out.log_csv())?;
    rc.write_next_to(&a.out)?;
    match out.best_epoch {
        Some(e) => println!(
            "{}: best epoch {e} of {}, val MAE {:.4}; checkpoint {}",
            rc.model.variant,
            out.log.len(),
            out.log[e - 1].val_mae,
            a.out.display()
        ),
        None => println!("{}: no epochs run; checkpoint {} holds the initialization", rc.model.variant, a.out.display()),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let beside = sibling(&a.checkpoint, ".config.json");
    let config_path = a.config.clone().or_else(|| beside.exists().then_some(beside));
    let mut rc = RunConfig::load_or_default(config_path.as_deref())?;
    let (meta, store) = load_checkpoint(&a.checkpoint)?;
    rc.model = meta.config.clone();
    let report_prefix = a.out.clone().unwrap_or_else(|| {
        sibling(&a.checkpoint, if a.balanced { ".eval-balanced" } else { ".eval" })
    });
    rc.paths.data = Some(a.data.clone());
    rc.paths.checkpoint = Some(a.checkpoint.clone());
    rc.paths.report = Some(report_prefix.clone());
    rc.validate()?;
    let split = load_split(&a.data, &rc)?;
    let data = PreparedData::new(&meta.config, &split.train, &split.val)?;
    let model = restore(&meta, &store, &data)?;
    let (orders, tag) = if a.balanced {
        let b = balanced_resample(&split.test, rc.shots.bin_hours, a.seed);
        log::info!("balanced resample: {} of {} test orders", b.len(), split.test.len());
        (b, format!("{}-balanced", meta.config.variant))
    } else {
        (split.test.clone(), meta.config.variant.to_string())
    };
    let report = evaluate(&model, &store, &data, &orders, &rc.shots, &tag)?;
    let table = render_table(std::slice::from_ref(&report));
    write(&sibling(&report_prefix, ".json"), &(report.to_json() + "\n"))?;
    write(&sibling(&report_prefix, ".txt"), &table)?;
    rc.write_next_to(&report_prefix)?;
    print!("{table}");
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mut rc = RunConfig::load_or_default(a.config.as_deref())?;
    a.model.apply(&mut rc);
    rc.paths.data = Some(a.data.clone());
    rc.paths.report = Some(a.out.clone());
    rc.validate()?;
    if a.seeds.is_empty() {
        bail!("no seeds given");
    }
    let variants = if a.variants.is_empty() { Variant::ALL.to_vec() } else { a.variants.clone() };
    let split = load_split(&a.data, &rc)?;
    let ab = ablate(&rc.model, &split, &rc.shots, &variants, &a.seeds)?;
    let mut table = ab.table();
    if let Some(w) = ab.worst() {
        table.push_str(&format!("worst median MAE: {w}\n"));
    }
    write(&sibling(&a.out, ".json"), &(ab.to_json() + "\n"))?;
    write(&sibling(&a.out, ".txt"), &table)?;
    rc.write_next_to(&a.out)?;
    print!("{table}");
    if ab.failed() {
        let n: usize = ab.rows.iter().map(|r| r.failures.len()).sum();
        bail!("{n} ablation runs failed; see {}", sibling(&a.out, ".json").display());
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut rc = RunConfig::load_or_default(a.config.as_deref())?;
    a.model.apply(&mut rc);
    rc.paths.data = Some(a.data.clone());
    rc.paths.report = Some(a.out.clone());
    rc.validate()?;
    let split = load_split(&a.data, &rc)?;
    let sw = sweep(&rc.model, &split, a.param, &a.values)?;
    let table = sw.table();
    write(&sibling(&a.out, ".json"), &(sw.to_json() + "\n"))?;
    write(&sibling(&a.out, ".txt"), &table)?;
    rc.write_next_to(&a.out)?;
    print!("{table}");
    Ok(())
}

/// Library error kind when one is in the chain, else `cli`.
fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain().find_map(|e| e.downcast_ref::<dgm_dte::Error>()).map_or("cli", dgm_dte::Error::kind)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = dgm_dte::parallel::configure_from_env() {
        log::debug!("worker threads capped at {n}");
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their source, so skip chain
            // entries the previous message contains.
            let mut parts: Vec<String> = Vec::new();
            for cause in e.chain() {
                let s = cause.to_string();
                if !parts.last().is_some_and(|p| p.contains(&s)) {
                    parts.push(s);
                }
            }
            let msg = parts.join(": ").replace('\n', " ");
            eprintln!("error[{}]: {msg}", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
