use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use branchlab::bnb::{solve, write_episode, Limits, SolveOptions};
use branchlab::config::{generator, KeyValues};
use branchlab::eval::{
    collect_alignment, read_csv, run_benchmark, run_one, sb_alignment, summarize, sweep_from_rows,
    sweep_improvement_pct, sweep_policy_name, transition_timing, write_csv, HarnessOptions, PolicyFactory,
    PolicySpec, SweepRow, TimingRow,
};
use branchlab::milp::{generate, read_instance, write_instance, Family, GeneratorConfig, MilpInstance};
use branchlab::model::Network;
use branchlab::planner::{GumbelConfig, PlannerPolicy};
use branchlab::policy::{BranchingPolicy, NetworkPolicy, RandomPolicy, StrongBranching};
use branchlab::tensor::ParamStore;
use branchlab::training::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "branchlab", version, about = "MILP branch and bound with learned branching")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key = value training/model configuration.
    #[arg(long, global = true, env = "BRANCHLAB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 200_000)]
    limit_nodes: usize,
    #[arg(long, global = true, default_value_t = 600.0)]
    limit_seconds: f64,
}

impl Global {
    fn limits(&self) -> Limits {
        Limits {
            max_nodes: self.limit_nodes,
            max_seconds: self.limit_seconds,
        }
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let kv = KeyValues::read(path).context("reading config")?;
            cfg.apply(&kv).with_context(|| path.display().to_string())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| self.out_dir.display().to_string())?;
        Ok(self.out_dir.join(name))
    }
}

/// Where instances come from: a directory of files or a generator.
#[derive(Args, Clone)]
struct InstanceArgs {
    /// Read every `*.milp` file in this directory instead of generating.
    #[arg(long)]
    instance_dir: Option<PathBuf>,
    #[arg(long, default_value = "sc")]
    family: String,
    /// Comma-separated sizes, e.g. `150,200,0.05` for set covering.
    #[arg(long)]
    params: Option<String>,
    /// Use the larger transfer sizes.
    #[arg(long)]
    transfer: bool,
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Generator seed of the first instance.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
}

impl InstanceArgs {
    fn family(&self) -> Result<Family> {
        self.family.parse().context("--family")
    }

    fn configs(&self) -> Result<Vec<GeneratorConfig>> {
        let family = self.family()?;
        (0..self.instances as u64)
            .map(|i| {
                let seed = self.first_seed + i;
                if self.transfer {
                    Ok(GeneratorConfig::transfer(family, seed))
                } else {
                    generator(family, self.params.as_deref(), seed).context("--params")
                }
            })
            .collect()
    }

    fn load(&self) -> Result<Vec<MilpInstance>> {
        if let Some(dir) = &self.instance_dir {
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .with_context(|| dir.display().to_string())?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "milp"))
                .collect();
            paths.sort();
            return paths
                .iter()
                .map(|p| read_instance(p).with_context(|| p.display().to_string()))
                .collect();
        }
        self.configs()?
            .iter()
            .map(|c| generate(c).context("generating instance"))
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Random,
    Sb,
    Net,
    Plan,
}

impl PolicyKind {
    fn label(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Sb => "sb",
            PolicyKind::Net => "net",
            PolicyKind::Plan => "plan",
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Parameter checkpoint; model sizes come from --config or from a
    /// `config.txt` next to the checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Search simulations for the `plan` policy.
    #[arg(long)]
    budget: Option<usize>,
}

struct Model {
    net: Arc<Network>,
    params: Arc<ParamStore>,
    search: GumbelConfig,
}

fn load_model(global: &Global, args: &ModelArgs) -> Result<Model> {
    let path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("policies net and plan need --checkpoint"))?;
    let mut cfg = global.train_config()?;
    if global.config.is_none() {
        if let Some(side) = path.parent().map(|d| d.join("config.txt")).filter(|p| p.exists()) {
            cfg.apply(&KeyValues::read(&side).context("reading config")?)
                .with_context(|| side.display().to_string())?;
        }
    }
    let (net, _) = Network::build(cfg.model, cfg.seed).context("building network")?;
    let params = net.load(path).with_context(|| path.display().to_string())?;
    let mut search = cfg.search;
    if let Some(n) = args.budget {
        search = budget_config(search, n);
    }
    Ok(Model {
        net: Arc::new(net),
        params: Arc::new(params),
        search,
    })
}

fn budget_config(base: GumbelConfig, n: usize) -> GumbelConfig {
    GumbelConfig {
        simulations: n,
        considered: base.considered.min(n.max(1)),
        ..base
    }
}

fn factory(kind: PolicyKind, model: Option<&Model>, search: Option<GumbelConfig>) -> Result<Box<PolicyFactory>> {
    Ok(match kind {
        PolicyKind::Random => Box::new(|s| Box::new(RandomPolicy::new(s)) as Box<dyn BranchingPolicy>),
        PolicyKind::Sb => Box::new(|_| Box::new(StrongBranching) as Box<dyn BranchingPolicy>),
        PolicyKind::Net | PolicyKind::Plan => {
            let m = model.ok_or_else(|| anyhow!("missing model"))?;
            let (net, params) = (Arc::clone(&m.net), Arc::clone(&m.params));
            if kind == PolicyKind::Net {
                Box::new(move |s| {
                    Box::new(NetworkPolicy::new(Arc::clone(&net), Arc::clone(&params), 0.0, s))
                        as Box<dyn BranchingPolicy>
                })
            } else {
                let cfg = search.unwrap_or(m.search);
                Box::new(move |s| {
                    Box::new(PlannerPolicy::new(Arc::clone(&net), Arc::clone(&params), cfg, s))
                        as Box<dyn BranchingPolicy>
                })
            }
        }
    })
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances to the output directory.
    Generate {
        #[command(flatten)]
        instances: InstanceArgs,
    },
    /// Solve one instance and print its summary row as JSON.
    Solve {
        /// Instance file; otherwise the first generated instance.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        instances: InstanceArgs,
        #[arg(long, value_enum, default_value = "sb")]
        policy: PolicyKind,
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the full episode (JSON lines).
        #[arg(long)]
        episode: Option<PathBuf>,
    },
    /// Run the act/learn loop; writes checkpoints and the training curve.
    Train,
    /// Benchmark policies; writes runs.csv, summary.csv and summary.json.
    Evaluate {
        #[command(flatten)]
        instances: InstanceArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "random,sb")]
        policies: Vec<PolicyKind>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Policy whose normalized score is 100.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Planner node counts across simulation budgets.
    Sweep {
        #[command(flatten)]
        instances: InstanceArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,4,8,16,32")]
        budgets: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Agreement of a policy with strong branching along SB-guided solves.
    Align {
        #[command(flatten)]
        instances: InstanceArgs,
        #[arg(long, value_enum, default_value = "random")]
        policy: PolicyKind,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Warm vs cold child LP cost per family.
    Timing {
        #[arg(long, value_delimiter = ',', default_value = "sc,ca,mis,mk")]
        families: Vec<String>,
        #[arg(long, default_value_t = 5)]
        instances: usize,
        /// Solve children cold in the main column too.
        #[arg(long)]
        no_warm: bool,
    },
    /// Recompute aggregates from a per-run CSV.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        reference: Option<String>,
    },
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing")?;
    fs::write(path, text + "\n").with_context(|| path.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Generate { instances } => {
            for inst in instances.load()? {
                let path = g.out(&format!("{}.milp", inst.name()))?;
                write_instance(&inst, &path).with_context(|| path.display().to_string())?;
                println!("{}", path.display());
            }
        }
        Command::Solve {
            instance,
            instances,
            policy,
            model,
            episode,
        } => {
            let inst = match instance {
                Some(p) => read_instance(&p).with_context(|| p.display().to_string())?,
                None => instances.load()?.into_iter().next().ok_or_else(|| anyhow!("no instance"))?,
            };
            let m = matches!(policy, PolicyKind::Net | PolicyKind::Plan)
                .then(|| load_model(g, &model))
                .transpose()?;
            let seed = g.seed.unwrap_or(0);
            let mut p = factory(policy, m.as_ref(), None)?(seed);
            if let Some(path) = episode {
                let opts = SolveOptions {
                    limits: g.limits(),
                    ..SolveOptions::default()
                };
                let r = solve(&inst, p.as_mut(), &opts).context("solve")?;
                write_episode(&r.episode, &path).with_context(|| path.display().to_string())?;
                p = factory(policy, m.as_ref(), None)?(seed);
            }
            let row = run_one(&inst, policy.label(), p.as_mut(), seed, g.limits());
            println!("{}", serde_json::to_string(&row).context("serializing")?);
        }
        Command::Train => {
            let cfg = g.train_config()?;
            let out = train(&cfg, Some(&g.out_dir)).context("training")?;
            let last = out.curve.last().map_or(f64::NAN, |r| r.loss);
            println!(
                "trained {} steps on {} episodes, final loss {last:.4}; checkpoint {}",
                out.curve.len(),
                out.episodes,
                g.out_dir.join("final.ckpt").display()
            );
        }
        Command::Evaluate {
            instances,
            policies,
            seeds,
            reference,
            workers,
            model,
        } => {
            let insts = instances.load()?;
            let m = policies
                .iter()
                .any(|p| matches!(p, PolicyKind::Net | PolicyKind::Plan))
                .then(|| load_model(g, &model))
                .transpose()?;
            let factories: Vec<Box<PolicyFactory>> = policies
                .iter()
                .map(|&k| factory(k, m.as_ref(), None))
                .collect::<Result<_>>()?;
            let specs: Vec<PolicySpec<'_>> = policies
                .iter()
                .zip(&factories)
                .map(|(k, f)| PolicySpec {
                    name: k.label().to_string(),
                    make: f.as_ref(),
                })
                .collect();
            let base = g.seed.unwrap_or(0);
            let seed_list: Vec<u64> = (0..seeds as u64).map(|s| base + s).collect();
            let opts = HarnessOptions {
                limits: g.limits(),
                workers,
            };
            let rows = run_benchmark(&insts, &specs, &seed_list, &opts);
            write_csv(&rows, &g.out("runs.csv")?).context("runs.csv")?;
            let report = summarize(&rows, reference.as_deref());
            write_csv(&report.rows, &g.out("summary.csv")?).context("summary.csv")?;
            write_json(&report, &g.out("summary.json")?)?;
            for s in &report.rows {
                println!(
                    "{:<6} {:<7} nodes {:>10.1} time {:>8.3}s solved {}/{} wins {} rank {:.2}",
                    s.benchmark, s.policy, s.geo_nodes, s.geo_seconds, s.solved, s.runs, s.wins, s.mean_rank
                );
            }
        }
        Command::Sweep {
            instances,
            mut budgets,
            workers,
            model,
        } => {
            budgets.sort_unstable();
            budgets.dedup();
            let insts = instances.load()?;
            let m = load_model(g, &model)?;
            let factories: Vec<Box<PolicyFactory>> = budgets
                .iter()
                .map(|&n| factory(PolicyKind::Plan, Some(&m), Some(budget_config(m.search, n))))
                .collect::<Result<_>>()?;
            let specs: Vec<PolicySpec<'_>> = budgets
                .iter()
                .zip(&factories)
                .map(|(&n, f)| PolicySpec {
                    name: sweep_policy_name(n),
                    make: f.as_ref(),
                })
                .collect();
            let opts = HarnessOptions {
                limits: g.limits(),
                workers,
            };
            let rows = run_benchmark(&insts, &specs, &[g.seed.unwrap_or(0)], &opts);
            write_csv(&rows, &g.out("runs.csv")?).context("runs.csv")?;
            let sweep = sweep_from_rows(&rows);
            write_csv(&sweep, &g.out("sweep.csv")?).context("sweep.csv")?;
            print_sweep(&sweep);
        }
        Command::Align {
            instances,
            policy,
            model,
        } => {
            let insts = instances.load()?;
            let m = matches!(policy, PolicyKind::Net | PolicyKind::Plan)
                .then(|| load_model(g, &model))
                .transpose()?;
            let mut inner = factory(policy, m.as_ref(), None)?(g.seed.unwrap_or(0));
            let samples = collect_alignment(&insts, inner.as_mut(), g.limits()).context("alignment solves")?;
            let report = sb_alignment(&samples).context("alignment")?;
            write_json(&report, &g.out("alignment.json")?)?;
            println!(
                "{}: c-entropy {:.4} score {:.4} freq {:.4} over {} states",
                policy.label(),
                report.cross_entropy,
                report.score_ratio,
                report.frequency,
                report.samples
            );
        }
        Command::Timing {
            families,
            instances,
            no_warm,
        } => {
            let mut rows: Vec<TimingRow> = Vec::new();
            for f in &families {
                let family: Family = f.parse().context("--families")?;
                let insts: Vec<MilpInstance> = (0..instances as u64)
                    .map(|s| generate(&GeneratorConfig::desk(family, s)).context("generating instance"))
                    .collect::<Result<_>>()?;
                let mut policy = RandomPolicy::new(g.seed.unwrap_or(0));
                let row = transition_timing(family.short(), &insts, &mut policy, g.limits(), !no_warm)
                    .context("timing")?;
                info!("{} done", family.as_str());
                println!(
                    "{:<4} transitions {:>7} warm {:.3} ms / {:.1} it  cold {:.3} ms / {:.1} it  warm<=cold {:.1}%",
                    row.family,
                    row.transitions,
                    row.warm_ms,
                    row.warm_iterations,
                    row.cold_ms,
                    row.cold_iterations,
                    100.0 * row.warm_not_worse
                );
                rows.push(row);
            }
            write_csv(&rows, &g.out("timing.csv")?).context("timing.csv")?;
        }
        Command::Report { runs, reference } => {
            let rows = read_csv(&runs).with_context(|| runs.display().to_string())?;
            let report = summarize(&rows, reference.as_deref());
            write_csv(&report.rows, &g.out("summary.csv")?).context("summary.csv")?;
            write_json(&report, &g.out("summary.json")?)?;
            let sweep = sweep_from_rows(&rows);
            if !sweep.is_empty() {
                write_csv(&sweep, &g.out("sweep.csv")?).context("sweep.csv")?;
                print_sweep(&sweep);
            }
            for (p, s) in &report.aggregate_score {
                println!("{p}: normalized score {s:.2}");
            }
        }
    }
    Ok(())
}

fn print_sweep(sweep: &[SweepRow]) {
    for r in sweep {
        println!("N={:<4} nodes {:>10.2} time {:>8.3}s solved {}/{}", r.budget, r.geo_nodes, r.geo_seconds, r.solved, r.runs);
    }
    if let Some(pct) = sweep_improvement_pct(sweep) {
        println!("largest budget vs N=0: {pct:+.1}% nodes");
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
