use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use greennet_core::harness::{emit_outputs, run_experiment, tiny_scenario, trial_seed, OutputPaths, RunConfig};
use greennet_core::{
    enumerate_restricted_optimum, expectation_identities, find_feasible_start, generate_scenario,
    grid_search_optimum, solve, Method, ProblemInstance, Restriction, SolveStatus,
};

#[derive(Parser)]
#[command(name = "greennet", version, about = "Energy-minimizing power control for two-tier HetNets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (solve, validate-rate, oracle) or directory (sweep).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario drop with each selected method.
    Solve {
        #[command(flatten)]
        common: Common,
        /// log_sparse, l21 or min_tpower; repeatable. Defaults to all three.
        #[arg(long)]
        method: Vec<String>,
    },
    /// Run the experiment described by the configuration.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare the model rate with Monte-Carlo fading on one scenario drop.
    ValidateRate {
        #[command(flatten)]
        common: Common,
        /// Fading draws per UE and carrier.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
    /// Check solver output against grid search and restricted schemes on
    /// tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Number of tiny instances.
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Print the configuration with every default filled in.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|n| Method::parse(n).map_err(Into::into)).collect()
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_solve(common: Common, method: Vec<String>) -> Result<ExitCode> {
    let cfg = load(common.config.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.experiment.seed);
    let chosen = if method.is_empty() { Method::ALL.to_vec() } else { methods(&method)? };
    let layout = generate_scenario(&cfg.scenario, seed)?;
    let (inst, _) = ProblemInstance::from_layout(&layout, &cfg.power_model)?;
    println!("{} BSs, {} UEs, {} carriers, {} links", layout.num_bs(), layout.num_ues(), layout.num_fcs(), inst.n());
    println!("{:<11} {:<10} {:>14} {:>14} {:>6} {:>6} {:>5}", "method", "status", "total_W", "transmit_W", "macro", "pico", "iter");
    let mut reports = Vec::new();
    for m in chosen {
        let r = solve(&inst, m, &cfg.solver)?;
        println!(
            "{:<11} {:<10} {:>14.6} {:>14.6e} {:>6} {:>6} {:>5}",
            m.name(),
            r.status.name(),
            r.total_power_exact,
            r.transmit_power_w,
            r.active_groups.active_macro_bs,
            r.active_groups.active_pico_bs,
            r.iterations
        );
        reports.push(r);
    }
    write_json(common.out.as_deref(), &json!({ "seed": seed, "reports": reports }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(common: Common, method: Vec<String>, trials: Option<usize>) -> Result<ExitCode> {
    let mut cfg = load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.experiment.seed = s;
    }
    if let Some(t) = trials {
        cfg.experiment.trials = t;
    }
    if !method.is_empty() {
        cfg.experiment.methods = methods(&method)?;
    }
    if let Some(dir) = &common.out {
        cfg.experiment.outputs = OutputPaths::in_dir(dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), cfg.to_json())?;
    }
    cfg.validate()?;
    let table = run_experiment(&cfg)?;
    emit_outputs(&table, &cfg.experiment)?;
    println!("{:>14} {:<11} {:>7} {:>16} {:>14}", cfg.experiment.axis.name(), "method", "solved", "mean_total_W", "std_W");
    for a in table.aggregate() {
        println!(
            "{:>14} {:<11} {:>3}/{:<3} {:>16.6} {:>14.6}",
            a.sweep_value,
            a.method.name(),
            a.solved,
            a.trials,
            a.mean_total_power_w,
            a.std_total_power_w
        );
    }
    if table.has_errors() {
        eprintln!("some trials failed; see the status column");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(common: Common, trials: usize) -> Result<ExitCode> {
    let cfg = load(common.config.as_deref())?;
    let seed = common.seed.unwrap_or(cfg.experiment.seed);
    let layout = generate_scenario(&cfg.scenario, seed)?;
    let lsf = greennet_core::build_lsf_map(&layout);
    let assoc = greennet_core::initial_association(&lsf, &layout);
    let plan = greennet_core::PilotPlan::orthogonal(&assoc, &layout);
    let quality = greennet_core::estimation_quality(&lsf, &plan, &layout);
    let coeffs = greennet_core::build_rate_coefficients(&lsf, &quality, &assoc, &layout);
    let inst = ProblemInstance::new(&layout, &assoc, coeffs.clone(), &cfg.power_model)?;
    let Some(p) = find_feasible_start(&inst, &cfg.solver)? else {
        bail!("the demands of this drop cannot be met");
    };
    let sim = greennet_core::RateSimulator::new(&layout, &assoc, &lsf, &quality);
    println!("{:>4} {:>3} {:>12} {:>12} {:>10} {:>9}", "ue", "fc", "model", "mc_mean", "mc_se", "rel_err");
    let mut rows = Vec::new();
    for ue in 0..layout.num_ues() {
        if assoc.is_dropped(ue) {
            continue;
        }
        for fc in 0..layout.num_fcs() {
            let model = greennet_core::avg_rate_fc(&p, &coeffs, ue, fc);
            let mc = sim.average_rate(&p, ue, fc, trials, seed)?;
            let rel = (mc.mean - model) / model;
            println!("{ue:>4} {fc:>3} {model:>12.6} {:>12.6} {:>10.2e} {rel:>9.4}", mc.mean, mc.std_error);
            rows.push(json!({ "ue": ue, "fc": fc, "model": model, "mc": mc, "rel_error": rel }));
        }
    }
    let mut identities = Vec::new();
    let mut sizes: Vec<usize> = layout.bss.iter().map(|b| b.antennas).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for n in sizes {
        let id = expectation_identities(n, 0.5, trials, seed)?;
        println!(
            "N={n} delta=0.5: own {:.4} (expected {:.4}), cross {:.4} (expected {:.4})",
            id.own.mean,
            id.own_expected(),
            id.cross.mean,
            id.cross_expected()
        );
        identities.push(id);
    }
    write_json(common.out.as_deref(), &json!({ "seed": seed, "rates": rows, "identities": identities }))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(common: Common, trials: usize) -> Result<ExitCode> {
    let cfg = load(common.config.as_deref())?;
    let base = common.seed.unwrap_or(cfg.experiment.seed);
    let scenario = tiny_scenario();
    println!("{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}", "trial", "solver_W", "grid_W", "R2_W", "R3_W", "R4_W", "R5_W");
    let mut rows = Vec::new();
    let mut failed = false;
    for t in 0..trials {
        let layout = generate_scenario(&scenario, trial_seed(base, t))?;
        let (inst, _) = ProblemInstance::from_layout(&layout, &cfg.power_model)?;
        let r = solve(&inst, Method::LogSparse, &cfg.solver)?;
        if r.status != SolveStatus::Converged {
            failed |= r.status != SolveStatus::Infeasible;
        }
        let grid = grid_search_optimum(&inst, 1e-3, None)?.map(|g| g.power_w);
        let restricted: Vec<Option<f64>> = Restriction::ALL
            .iter()
            .map(|x| enumerate_restricted_optimum(&inst, *x, &cfg.solver).map(|o| o.power_w))
            .collect::<greennet_core::Result<_>>()?;
        let show = |v: Option<f64>| v.map_or("infeasible".to_string(), |x| format!("{x:.6}"));
        println!(
            "{t:>5} {:>12.6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            r.total_power_exact,
            show(grid),
            show(restricted[0]),
            show(restricted[1]),
            show(restricted[2]),
            show(restricted[3])
        );
        rows.push(json!({ "trial": t, "solver_w": r.total_power_exact, "grid_w": grid, "restricted_w": restricted }));
    }
    write_json(common.out.as_deref(), &json!({ "seed": base, "instances": rows }))?;
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Solve { common, method } => cmd_solve(common, method),
        Command::Sweep { common, method, trials } => cmd_sweep(common, method, trials),
        Command::ValidateRate { common, trials } => cmd_validate(common, trials),
        Command::Oracle { common, trials } => cmd_oracle(common, trials),
        Command::Config { config } => {
            println!("{}", load(config.as_deref())?.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}
