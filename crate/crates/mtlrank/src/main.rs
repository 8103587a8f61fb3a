use std::fs;
use std::io;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mtlrank::config::{DataConfig, RunConfig};
use mtlrank::dataset::synthetic_task_spec;
use mtlrank::run;
use mtlrank_core::data::write_letor;
use mtlrank_core::synthetic::{self, SyntheticSpec};
use mtlrank_core::BalancerKind;

#[derive(Parser)]
#[command(name = "mtlrank", version, about = "Multi-task learning to rank with gradient balancers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Option<RunConfig>> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if self.print_config {
            print!("{}", cfg.to_toml()?);
            return Ok(None);
        }
        Ok(Some(cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its report and checkpoints.
    Train(ConfigArgs),
    /// NDCG@k of a checkpoint on a fold directory or a LETOR file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// One run per preference ray, then the Pareto front and hypervolume.
    Sweep {
        #[command(flatten)]
        run: ConfigArgs,
        /// Number of evenly spaced bi-objective rays.
        #[arg(long, conflicts_with = "rays_file")]
        rays: Option<usize>,
        /// One ray per line.
        #[arg(long)]
        rays_file: Option<PathBuf>,
    },
    /// Single-task runs per task, written as baselines.json for Δm%.
    Baselines(ConfigArgs),
    /// Gradient descent on the two-quadratics problem; prints step,l1,l2.
    Toy {
        #[arg(long)]
        balancer: String,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        /// Preference ray, e.g. `0.8,0.2`.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
        ray: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pareto filter and hypervolume over existing report.json files.
    Pareto {
        #[arg(long)]
        reports: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as a LETOR fold plus a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        queries: usize,
        #[arg(long, default_value_t = 20)]
        list_len: usize,
        #[arg(long, default_value_t = 10)]
        d_f: usize,
        #[arg(long, default_value_t = 2)]
        tasks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_metrics(tasks: &[String], points: &[Vec<f64>], ids: &[String], flags: &[bool]) {
    println!("{:<24} {} non_dominated", "run", tasks.iter().map(|t| format!("{t:>10}")).collect::<String>());
    for ((id, p), f) in ids.iter().zip(points).zip(flags) {
        println!("{id:<24} {} {f}", p.iter().map(|v| format!("{v:>10.4}")).collect::<String>());
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let Some(cfg) = args.resolve()? else { return Ok(()) };
            let r = run::run_train(&cfg, &cfg.out_dir)?;
            println!("best step {} of {}; {} NDCG@{}:", r.best_step, cfg.train.steps, r.final_split, r.ndcg_k);
            for (t, v) in r.tasks.iter().zip(&r.final_metrics) {
                println!("  {t:<10} {v:.4}");
            }
            if let Some(dm) = r.delta_m {
                println!("  delta_m   {dm:+.3}%");
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Evaluate { checkpoint, data, k, batch_size } => {
            for (split, values) in run::evaluate_checkpoint(&checkpoint, &data, k, batch_size)? {
                let cols: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
                println!("{split}\t{}", cols.join("\t"));
            }
        }
        Command::Sweep { run: args, rays, rays_file } => {
            let Some(cfg) = args.resolve()? else { return Ok(()) };
            let rays = match (rays, rays_file) {
                (_, Some(path)) => run::read_rays(&path)?,
                (Some(n), None) => run::default_rays(n),
                (None, None) => run::default_rays(10),
            };
            let front = run::run_sweep(&cfg, &rays, &cfg.out_dir)?;
            print_metrics(&front.tasks, &front.points, &front.run_ids, &front.non_dominated);
            if let Some(hv) = front.hypervolume {
                println!("hypervolume {hv:.6}");
            }
            for (id, e) in &front.failures {
                eprintln!("{id} failed: {e}");
            }
        }
        Command::Baselines(args) => {
            let Some(cfg) = args.resolve()? else { return Ok(()) };
            let values = run::run_baselines(&cfg, &cfg.out_dir)?;
            for (t, v) in &values {
                println!("{t:<10} {v:.4}");
            }
            println!("wrote {}", cfg.out_dir.join("baselines.json").display());
        }
        Command::Toy { balancer, steps, lr, ray, seed, out } => {
            let Some(kind) = BalancerKind::from_name(&balancer) else {
                let names: Vec<&str> = BalancerKind::all().iter().map(BalancerKind::name).collect();
                bail!("unknown balancer {balancer:?}; expected one of {}", names.join(", "));
            };
            let trace = match &out {
                Some(path) => {
                    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    mtlrank::toy::toy_trace(&kind, &ray, steps, lr, seed, f)?
                }
                None => mtlrank::toy::toy_trace(&kind, &ray, steps, lr, seed, io::stdout().lock())?,
            };
            eprintln!("{}", mtlrank::toy::summary(&trace));
        }
        Command::Pareto { reports, out } => {
            let front = run::run_pareto(&reports, out.as_deref())?;
            print_metrics(&front.tasks, &front.points, &front.run_ids, &front.non_dominated);
            if let Some(hv) = front.hypervolume {
                println!("hypervolume {hv:.6}");
            }
        }
        Command::Synth { out, queries, list_len, d_f, tasks, seed } => {
            let spec = SyntheticSpec { n_queries: queries, list_len, d_f, n_tasks: tasks, seed, ..Default::default() };
            let full = synthetic::generate(&spec).dataset;
            let n_train = queries * 8 / 10;
            let n_vali = queries / 10;
            let [a, b, c] = synthetic::split(&full, n_train, n_vali);
            fs::create_dir_all(&out)?;
            for (name, part) in [("train.txt", a), ("vali.txt", b), ("test.txt", c)] {
                fs::write(out.join(name), write_letor(&synthetic::to_raw(&part)))?;
            }
            let mut cfg = RunConfig {
                data: DataConfig { dir: Some(".".into()), tasks: synthetic_task_spec(&spec), ..Default::default() },
                out_dir: "run".into(),
                ..Default::default()
            };
            cfg.model.d_f = d_f;
            cfg.model.max_list_len = list_len.max(1);
            fs::write(out.join("config.toml"), cfg.to_toml()?)?;
            println!("wrote {} ({n_train}/{n_vali}/{} queries) and config.toml", out.display(), queries - n_train - n_vali);
        }
    }
    Ok(())
}
