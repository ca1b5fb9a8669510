use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_key_values, read_key_values, KeyValues, Settings};
use crate::error::{invalid, Result};
use crate::run::{self, Start};
use crate::sweep;

#[derive(Debug, Parser)]
#[command(name = "spot", version, about = "Train, evaluate and compare SPOT agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one cell for each seed, recording every step.
    Train(Common),
    /// Evaluate a saved model greedily on test seeds or a fixed start.
    Eval(EvalArgs),
    /// Train every cell for every seed and write the ablation table.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Settings file of `key = value` lines; flags override it.
    #[arg(long, visible_alias = "spec", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// gridworld or blockworld.
    #[arg(long)]
    pub env: Option<String>,
    /// Block task: stack<k>, row<k> or clear.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub mask: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub spotq: Option<bool>,
    /// base, sr, progress, trial, trial-sr or discounted.
    #[arg(long)]
    pub reward: Option<String>,
    /// Comma-separated cell labels such as `mask+spotq+progress`, or `table`.
    #[arg(long)]
    pub cells: Option<String>,
    /// Run seeds; repeat the flag or separate with commas.
    #[arg(long = "seed", value_name = "SEED")]
    pub seeds: Vec<String>,
    /// Training action budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// linear or tabular.
    #[arg(long)]
    pub q: Option<String>,
    /// Any settings key, e.g. `--set learning_rate=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; otherwise `out` from the settings, then $SPOT_OUTPUT_DIR, then `runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Model file written by `train` or `sweep`.
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation trials.
    #[arg(long)]
    pub trials: Option<u32>,
    /// Grid layout text file to start every trial from.
    #[arg(long, conflicts_with = "state")]
    pub layout: Option<PathBuf>,
    /// Block state text file to start every trial from.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

const CELL_KEYS: [&str; 3] = ["mask", "spotq", "reward"];

impl Common {
    /// The settings file with flags folded in on top.
    pub fn key_values(&self) -> Result<KeyValues> {
        let mut map = match &self.config {
            Some(path) => read_key_values(path)?,
            None => KeyValues::new(),
        };
        let mut flags = KeyValues::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.insert(k.to_string(), v);
            }
        };
        put("env", self.env.clone());
        put("task", self.task.clone());
        put("mask", self.mask.map(|b| b.to_string()));
        put("spotq", self.spotq.map(|b| b.to_string()));
        put("reward", self.reward.clone());
        put("cells", self.cells.clone());
        put("budget", self.budget.map(|b| b.to_string()));
        put("q", self.q.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        if !self.seeds.is_empty() {
            put("seeds", Some(self.seeds.join(",")));
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            flags.extend(parse_key_values(&format!("{k} = {v}"), "--set")?);
        }
        // A cell chosen on the command line replaces cells listed in the file.
        if CELL_KEYS.iter().any(|k| flags.contains_key(*k)) {
            map.remove("cells");
        }
        if flags.contains_key("cells") {
            for k in CELL_KEYS {
                map.remove(k);
            }
        }
        map.extend(flags);
        Ok(map)
    }

    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn read_text(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let mut map = common.key_values()?;
            if !map.contains_key("cells") && !CELL_KEYS.iter().any(|k| map.contains_key(*k)) {
                map.insert("reward".into(), "base".into());
            }
            let settings = Settings::from_map(&map, true)?;
            if settings.cells.len() != 1 {
                return Err(invalid("train runs a single cell; use sweep for several"));
            }
            let out = settings.output_root();
            let summaries = sweep::run_all(&settings, &out, common.jobs())?;
            for s in &summaries {
                for r in &s.runs {
                    println!(
                        "{} seed {}: completion {:.1}%, efficiency {:.1}%, converged at {}",
                        s.cell,
                        r.seed,
                        100.0 * r.completion_rate,
                        100.0 * r.mean_efficiency,
                        r.convergence_actions.map_or("never".into(), |a| a.to_string())
                    );
                }
                for f in &s.failures {
                    eprintln!("{} seed {}: {}", s.cell, f.seed, f.error);
                }
            }
            println!("wrote {}", out.display());
            sweep::check_failures(&summaries)
        }
        Command::Sweep(common) => {
            let mut map = common.key_values()?;
            map.entry("seeds".into()).or_insert_with(|| "1,2".into());
            let settings = Settings::from_map(&map, false)?;
            if settings.seeds.len() < 2 {
                return Err(invalid("a sweep needs at least two seeds"));
            }
            let out = settings.output_root();
            run::create_dir(&out)?;
            let summaries = sweep::run_all(&settings, &out, common.jobs())?;
            let table = sweep::write_table(&out, &summaries)?;
            print!("{table}");
            for s in &summaries {
                for f in &s.failures {
                    eprintln!("{} seed {}: {}", s.cell, f.seed, f.error);
                }
            }
            println!("wrote {}", out.display());
            sweep::check_failures(&summaries)
        }
        Command::Eval(args) => {
            let mut map = args.common.key_values()?;
            if let Some(n) = args.trials {
                map.insert("eval_trials".into(), n.to_string());
            }
            let use_mask = match map.get("mask") {
                Some(v) => v.parse().map_err(|_| invalid(format!("mask = {v}: expected true or false")))?,
                None => false,
            };
            // Only the mask matters for evaluation.
            map.remove("spotq");
            map.remove("cells");
            map.insert("reward".into(), "base".into());
            let settings = Settings::from_map(&map, false)?;
            let start = match (&args.layout, &args.state) {
                (Some(p), _) => Start::GridText(read_text(p)?),
                (_, Some(p)) => Start::BlockText(read_text(p)?),
                _ => Start::Generated,
            };
            let out = settings.output_root();
            let report = run::eval_model(&settings, &args.model, &start, use_mask, &out)?;
            println!(
                "{} trials: completion {:.1}%, efficiency {:.1}%",
                report.trials,
                100.0 * report.completion_rate,
                100.0 * report.mean_efficiency
            );
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
