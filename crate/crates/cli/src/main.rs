use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pinchnet::bgat::{Checkpoint, ModelKind};
use pinchnet::harness::experiment::{evaluate_checkpoint, evaluate_fixed, train_model};
use pinchnet::harness::gradcheck::{bgat_gradcheck, GradCheckConfig};
use pinchnet::harness::{build_report, ExperimentConfig, Outcome};
use pinchnet::sca::sca_solve;

#[derive(Parser)]
#[command(name = "pinchnet", about = "Pinching-antenna EE optimization experiments")]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the training set and every test set as JSON.
    GenData,
    /// Trains one model and writes its checkpoint and history.
    Train {
        #[arg(long, default_value = "bgat")]
        model: ModelKind,
        #[arg(long)]
        antennas: Option<usize>,
    },
    /// Evaluates a checkpoint on the configured test sets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Runs the fixed-antenna SCA baseline on the test sets and writes
    /// per-layout convergence traces.
    BaselineSca {
        #[arg(long)]
        antennas: Option<usize>,
        /// Number of layouts to write traces for.
        #[arg(long, default_value_t = 5)]
        traces: usize,
    },
    /// Checks BGAT gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        coords: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Builds the comparison table from the available checkpoints.
    Report,
    /// Writes the default configuration.
    InitConfig { path: PathBuf },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut exp = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        exp.seed = s;
    }
    if let Some(o) = &cli.out {
        exp.output_dir = o.clone();
    }
    std::fs::create_dir_all(&exp.output_dir)?;
    Ok(exp)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Command::InitConfig { path } = &cli.command {
        let mut exp = ExperimentConfig::default();
        if let Some(s) = cli.seed {
            exp.seed = s;
        }
        return write_json(path, &exp);
    }
    let exp = load_config(&cli)?;
    let dir = exp.output_dir.clone();
    match &cli.command {
        Command::GenData => {
            for &n in &exp.antennas {
                exp.train_set(n)?
                    .save(dir.join(format!("train_n{n}_m{}.json", exp.train_users)))?;
                for &m in &exp.test_users {
                    exp.test_set(n, m)?.save(dir.join(format!("test_n{n}_m{m}.json")))?;
                }
            }
            eprintln!("datasets written to {}", dir.display());
        }
        Command::Train { model, antennas } => {
            let n = antennas.unwrap_or(exp.antennas[0]);
            let (ck, history) = train_model(&exp, *model, n, |e| {
                eprintln!(
                    "epoch {:>4}  loss {:>12}  val EE {:>9.4}  best {:>9.4}  {:>7.1}s",
                    e.epoch,
                    e.train_loss.map_or("-".into(), |l| format!("{l:.5}")),
                    e.val_ee,
                    e.best_val_ee,
                    e.seconds
                );
            })?;
            let path = exp.checkpoint_path(*model, n);
            ck.save(&path)?;
            eprintln!("wrote {}", path.display());
            write_json(&path.with_extension("history.json"), &history)?;
        }
        Command::Eval { checkpoint } => {
            let ck = Checkpoint::load(checkpoint)?;
            let n = ck.model.policy().n_antennas();
            let mut reports = Vec::new();
            for &m in &exp.test_users {
                match evaluate_checkpoint(&exp, &ck, n, m)? {
                    Outcome::Report(r) => {
                        println!(
                            "{} N={n} M_test={m}: mean EE {:.4}, feasible {:.3}, median latency {:.3} ms",
                            r.model_id, r.mean_ee, r.feasibility_rate, r.latency.median_ms
                        );
                        reports.push(r);
                    }
                    Outcome::NotApplicable(why) => println!("N={n} M_test={m}: not applicable ({why})"),
                }
            }
            let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            write_json(&dir.join(format!("eval_{stem}.json")), &reports)?;
        }
        Command::BaselineSca { antennas, traces } => {
            let ns: Vec<usize> = antennas.map_or(exp.antennas.clone(), |n| vec![n]);
            for n in ns {
                for &m in &exp.test_users {
                    let r = evaluate_fixed(&exp, n, m)?;
                    println!(
                        "Fixed N={n} M={m}: mean EE {:.4}, feasible {:.3}, median solve {:.2} ms",
                        r.mean_ee, r.feasibility_rate, r.latency.median_ms
                    );
                    write_json(&dir.join(format!("eval_fixed_n{n}_m{m}.json")), &r)?;
                    let test = exp.test_set(n, m)?;
                    for (i, layout) in test.layouts.iter().take(*traces).enumerate() {
                        let res = sca_solve(&exp.system_for(n, m), layout, exp.sca.tol, exp.sca.max_iter)?;
                        res.write_trace_csv(dir.join(format!("sca_trace_n{n}_m{m}_{i}.csv")))?;
                    }
                }
            }
        }
        Command::Gradcheck { coords, step } => {
            let gc = GradCheckConfig {
                coords: *coords,
                step: *step,
                seed: exp.seed,
                ..GradCheckConfig::default()
            };
            let r = bgat_gradcheck(&gc)?;
            let worst = r.worst().context("no coordinates checked")?;
            println!(
                "max relative error {:.3e} over {} coordinates (tolerance {:.0e}); worst {} analytic {:.6e} numeric {:.6e}",
                r.max_rel_err,
                r.coords.len(),
                r.tolerance,
                worst.name,
                worst.analytic,
                worst.numeric
            );
            if !r.passed() {
                bail!("gradient check failed");
            }
        }
        Command::Report => {
            let mut cks = Vec::new();
            for &n in &exp.antennas {
                for &kind in &exp.models {
                    let p = exp.checkpoint_path(kind, n);
                    if p.exists() {
                        cks.push((n, Checkpoint::load_for(&p, &exp.system_for(n, exp.train_users))?));
                    } else {
                        eprintln!("missing {}, column left not applicable", p.display());
                    }
                }
            }
            let table = build_report(&exp, &cks)?;
            table.write_csv(dir.join("compare.csv"))?;
            table.write_json(dir.join("compare.json"))?;
            print!("{}", std::fs::read_to_string(dir.join("compare.csv"))?);
        }
        Command::InitConfig { .. } => unreachable!(),
    }
    Ok(())
}
