//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Run a subset with `cargo test --test acceptance -- 4 5 7`.

use std::time::Instant;

use greennet_core::harness::{grid_search_optimum, mean_std, tiny_scenario, trial_seed};
use greennet_core::{
    enumerate_restricted_optimum, expectation_identities, generate_scenario, kkt_residual, solve, InterferencePair,
    Method, PowerModelParams, ProblemInstance, Restriction, ScenarioConfig, SolveStatus, SolverConfig, SolverReport,
};

const BASE_SEED: u64 = 20_240_601;

const DESCENT_SLACK: f64 = 1e-8;
const DESCENT_BUDGET_S: f64 = 600.0;
const RATE_FLOOR: f64 = 1e-6;
const TIGHTNESS: f64 = 1e-5;
/// A rate multiplier counts as active when `zeta * gamma` exceeds this
/// fraction of `|grad f|^T p`.
const ACTIVE_DUAL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-5;
const KKT_SHARE: f64 = 0.95;
const ENERGY_RATIO: f64 = 0.6;
const WIN_RATE: f64 = 0.6;
/// `log_sparse` wins a trial when its power is at most `l21 * (1 + TIE)`.
const TIE: f64 = 1e-9;
const EPS_SPREAD: f64 = 0.05;
const EPS_ITER_FACTOR: f64 = 2.0;
const SLEEP_MAJORITY: f64 = 0.5;
const RATE_REL: f64 = 0.10;
const IDENTITY_SE: f64 = 3.0;
const GRID_REL: f64 = 0.02;
const GRID_STEP_W: f64 = 1e-3;
const RESTRICTED_SLACK: f64 = 1e-6;

fn instance(cfg: &ScenarioConfig, seed: u64) -> ProblemInstance {
    let layout = generate_scenario(cfg, seed).expect("valid scenario");
    ProblemInstance::from_layout(&layout, &PowerModelParams::default()).expect("valid instance").0
}

fn default_instance(trial: usize) -> ProblemInstance {
    instance(&ScenarioConfig::default(), trial_seed(BASE_SEED, trial))
}

struct Solved {
    inst: ProblemInstance,
    report: SolverReport,
}

struct Batches {
    log_sparse: Vec<Solved>,
    elapsed_s: f64,
    l21: Vec<SolverReport>,
    min_tpower: Vec<SolverReport>,
}

fn run_batches() -> Batches {
    let cfg = SolverConfig::default();
    let start = Instant::now();
    let log_sparse: Vec<Solved> = (0..100)
        .map(|t| {
            let inst = default_instance(t);
            let report = solve(&inst, Method::LogSparse, &cfg).expect("solve");
            Solved { inst, report }
        })
        .collect();
    let elapsed_s = start.elapsed().as_secs_f64();
    let l21 = log_sparse[..30].iter().map(|s| solve(&s.inst, Method::L21, &cfg).expect("solve")).collect();
    let min_tpower = log_sparse[..30].iter().map(|s| solve(&s.inst, Method::MinTpower, &cfg).expect("solve")).collect();
    Batches { log_sparse, elapsed_s, l21, min_tpower }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn converged(s: &Solved) -> bool {
    s.report.status == SolveStatus::Converged
}

fn c1_descent(b: &Batches) -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    for (t, s) in b.log_sparse.iter().enumerate().filter(|(_, s)| converged(s)) {
        count += 1;
        let tr = &s.report.objective_trajectory;
        if tr.windows(2).any(|w| w[1] > w[0] + DESCENT_SLACK * w[0].abs()) {
            bad.push(t);
        }
    }
    outcome(
        bad.is_empty() && b.elapsed_s < DESCENT_BUDGET_S,
        format!("{count}/100 converged, nonmonotone trials {bad:?}, batch time {:.0} s", b.elapsed_s),
    )
}

fn c2_feasibility(b: &Batches) -> Outcome {
    let mut worst_floor: f64 = 0.0;
    let mut worst_tight: f64 = 0.0;
    let mut active = 0;
    for s in b.log_sparse.iter().filter(|s| converged(s)) {
        let inst = &s.inst;
        for point in [&s.report.p_star, &s.report.stationary_point] {
            for l in inst.constrained_ues() {
                worst_floor = worst_floor.max((inst.demands[l] - inst.rate(point, l)) / inst.demands[l]);
            }
        }
        let p = &s.report.stationary_point;
        let grad = inst.objective_gradient(Method::LogSparse, p);
        let work: f64 = grad.iter().zip(p).map(|(g, x)| g.abs() * x).sum();
        for l in inst.constrained_ues() {
            if s.report.duals.rate[l] * inst.demands[l] > ACTIVE_DUAL * work {
                active += 1;
                worst_tight = worst_tight.max((inst.rate(p, l) - inst.demands[l]).abs() / inst.demands[l]);
            }
        }
    }
    outcome(
        worst_floor <= RATE_FLOOR && worst_tight <= TIGHTNESS,
        format!(
            "worst shortfall {worst_floor:.2e} (limit {RATE_FLOOR:e}), worst tight-UE gap {worst_tight:.2e} over {active} active duals (limit {TIGHTNESS:e})"
        ),
    )
}

fn c3_kkt(b: &Batches) -> Outcome {
    let residuals: Vec<f64> = b
        .log_sparse
        .iter()
        .map(|s| kkt_residual(&s.report.stationary_point, &s.report.duals, &s.inst, Method::LogSparse).max_scaled())
        .collect();
    let ok = residuals.iter().filter(|r| **r <= KKT_TOL).count();
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    outcome(
        ok as f64 >= KKT_SHARE * residuals.len() as f64,
        format!("{ok}/{} certified at {KKT_TOL:e}, worst residual {worst:.2e}", residuals.len()),
    )
}

fn solved_pairs<'a>(a: &'a [&'a SolverReport], b: &'a [SolverReport]) -> Vec<(f64, f64)> {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.status != SolveStatus::Infeasible && y.status != SolveStatus::Infeasible)
        .map(|(x, y)| (x.total_power_exact, y.total_power_exact))
        .collect()
}

fn c4_energy(b: &Batches) -> Outcome {
    let log: Vec<&SolverReport> = b.log_sparse[..30].iter().map(|s| &s.report).collect();
    let pairs = solved_pairs(&log, &b.min_tpower);
    let (ml, _) = mean_std(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let (mt, _) = mean_std(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    outcome(
        ml <= ENERGY_RATIO * mt,
        format!("log_sparse {ml:.2} W vs min_tpower {mt:.2} W, ratio {:.3} (limit {ENERGY_RATIO}) over {} trials", ml / mt, pairs.len()),
    )
}

fn c5_ordering(b: &Batches) -> Outcome {
    let log: Vec<&SolverReport> = b.log_sparse[..30].iter().map(|s| &s.report).collect();
    let pairs = solved_pairs(&log, &b.l21);
    let (ml, _) = mean_std(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let (m21, _) = mean_std(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let wins = pairs.iter().filter(|(l, m)| *l <= m * (1.0 + TIE)).count();
    let strict = pairs.iter().filter(|(l, m)| *l < m * (1.0 - TIE)).count();
    let rate = wins as f64 / pairs.len() as f64;
    outcome(
        ml <= m21 && rate >= WIN_RATE,
        format!("means {ml:.2} W vs {m21:.2} W, win rate {rate:.2} ({strict} strict, {} ties) over {} trials", wins - strict, pairs.len()),
    )
}

fn c6_epsilon() -> Outcome {
    let cfg = SolverConfig::default();
    let mut worst_spread: f64 = 0.0;
    let mut worst_iter: f64 = 1.0;
    for t in 0..10 {
        let inst = default_instance(t);
        let runs: Vec<SolverReport> = [1e-1, 1e-3, 1e-5, 1e-7]
            .into_iter()
            .map(|e| solve(&inst.clone().with_epsilon(e), Method::LogSparse, &cfg).expect("solve"))
            .collect();
        let powers: Vec<f64> = runs.iter().map(|r| r.total_power_exact).collect();
        let lo = powers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = powers.iter().copied().fold(0.0, f64::max);
        let it_lo = runs.iter().map(|r| r.iterations).min().unwrap() as f64;
        let it_hi = runs.iter().map(|r| r.iterations).max().unwrap() as f64;
        worst_spread = worst_spread.max((hi - lo) / lo);
        worst_iter = worst_iter.max(it_hi / it_lo);
        eprintln!("  eps sweep trial {t}: powers {powers:.1?}, iterations {:?}", runs.iter().map(|r| r.iterations).collect::<Vec<_>>());
    }
    outcome(
        worst_spread <= EPS_SPREAD && worst_iter <= EPS_ITER_FACTOR,
        format!("worst power spread {:.1}% (limit {:.0}%), worst iteration ratio {worst_iter:.2} (limit {EPS_ITER_FACTOR})", 100.0 * worst_spread, 100.0 * EPS_SPREAD),
    )
}

fn c7_sleep(b: &Batches) -> Outcome {
    let trials = &b.log_sparse[..30];
    let asleep = trials.iter().filter(|s| s.report.status != SolveStatus::Infeasible && s.report.active_groups.active_macro_bs == 0).count();
    let share = asleep as f64 / trials.len() as f64;
    let mut hist = [0usize; 4];
    for s in trials {
        hist[s.report.active_groups.active_macro_bs.min(3)] += 1;
    }
    outcome(
        share > SLEEP_MAJORITY,
        format!("{asleep}/30 trials with every macro asleep (need > {:.0}%), active-macro histogram {hist:?}", 100.0 * SLEEP_MAJORITY),
    )
}

fn c8_rate_model() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [8, 64] {
        for i in 0..20 {
            let pair = InterferencePair::random(n, trial_seed(BASE_SEED ^ n as u64, i)).expect("pair");
            for ue in 0..2 {
                let model = pair.model_rate(ue);
                let mc = pair.simulator().average_rate(&pair.p, ue, 0, 2000, i as u64).expect("mc");
                worst = worst.max((mc.mean - model).abs() / model);
            }
        }
    }
    let mut misses = Vec::new();
    for n in [8, 64] {
        for delta in [0.1, 0.5, 0.9] {
            let id = expectation_identities(n, delta, 10_000, BASE_SEED + n as u64).expect("identities");
            if !id.own.covers(id.own_expected(), IDENTITY_SE) {
                misses.push(format!("own N={n} delta={delta}"));
            }
            if !id.cross.covers(id.cross_expected(), IDENTITY_SE) {
                misses.push(format!("cross N={n} delta={delta}"));
            }
        }
    }
    outcome(
        worst <= RATE_REL && misses.is_empty(),
        format!("worst MC/model gap {:.2}% (limit {:.0}%), identity misses {misses:?}", 100.0 * worst, 100.0 * RATE_REL),
    )
}

struct Tiny {
    solver_w: f64,
    grid_w: Option<f64>,
    restricted_w: Vec<Option<f64>>,
}

fn tiny_runs() -> Vec<Tiny> {
    let cfg = SolverConfig::default();
    (0..10)
        .map(|t| {
            let inst = instance(&tiny_scenario(), trial_seed(BASE_SEED + 1, t));
            let r = solve(&inst, Method::LogSparse, &cfg).expect("solve");
            let grid_w = grid_search_optimum(&inst, GRID_STEP_W, None).expect("grid").map(|g| g.power_w);
            let restricted_w = Restriction::ALL
                .iter()
                .map(|x| enumerate_restricted_optimum(&inst, *x, &cfg).expect("enumeration").power_w)
                .collect();
            Tiny { solver_w: r.total_power_exact, grid_w, restricted_w }
        })
        .collect()
}

fn c9_grid(tiny: &[Tiny]) -> Outcome {
    let gaps: Vec<f64> = tiny
        .iter()
        .map(|t| match t.grid_w {
            Some(g) => (t.solver_w - g).abs() / g,
            None => if t.solver_w.is_nan() { 0.0 } else { f64::INFINITY },
        })
        .collect();
    let within = gaps.iter().filter(|g| **g <= GRID_REL).count();
    outcome(
        within == tiny.len(),
        format!("{within}/{} within {:.0}% of the grid optimum, gaps {:.3?}", tiny.len(), 100.0 * GRID_REL, gaps),
    )
}

fn c10_restricted(tiny: &[Tiny]) -> Outcome {
    let mut violations = Vec::new();
    for (i, t) in tiny.iter().enumerate() {
        for (r, w) in Restriction::ALL.iter().zip(&t.restricted_w) {
            if let Some(w) = w {
                if !(t.solver_w <= w * (1.0 + RESTRICTED_SLACK)) {
                    violations.push(format!("#{i} {r:?}: {:.2} > {w:.2}", t.solver_w));
                }
            }
        }
    }
    outcome(violations.is_empty(), format!("{} violations {violations:?}", violations.len()))
}

fn c11_splitting() -> Outcome {
    let cfg = SolverConfig::default();
    let mut two = Vec::new();
    let mut eight = Vec::new();
    let mut skipped = 0;
    let mut errors = 0;
    for t in 0..30 {
        let seed = trial_seed(BASE_SEED + 2, t);
        let base = ScenarioConfig { rate_demand_bps: 20e6, ..Default::default() };
        let split = ScenarioConfig { carriers_per_band: 4, ..base.clone() };
        let (Ok(a), Ok(b)) =
            (solve(&instance(&base, seed), Method::LogSparse, &cfg), solve(&instance(&split, seed), Method::LogSparse, &cfg))
        else {
            errors += 1;
            continue;
        };
        if a.status == SolveStatus::Infeasible || b.status == SolveStatus::Infeasible {
            skipped += 1;
            continue;
        }
        two.push(a.total_power_exact);
        eight.push(b.total_power_exact);
    }
    let (m2, s2) = mean_std(&two);
    let (m8, _) = mean_std(&eight);
    let se = s2 / (two.len() as f64).sqrt();
    outcome(
        errors == 0 && m8 <= m2 + se,
        format!(
            "8 carriers {m8:.2} W vs 2 carriers {m2:.2} W + SE {se:.2} W over {} trials ({skipped} infeasible, {errors} solver errors)",
            two.len()
        ),
    )
}

fn c12_zero_demand() -> Outcome {
    let cfg = ScenarioConfig { rate_demand_bps: 0.0, ..Default::default() };
    let layout = generate_scenario(&cfg, BASE_SEED).expect("scenario");
    let (inst, _) = ProblemInstance::from_layout(&layout, &PowerModelParams::default()).expect("instance");
    let r = solve(&inst, Method::LogSparse, &SolverConfig::default()).expect("solve");
    let zero = r.p_star.iter().all(|v| *v == 0.0);
    outcome(
        zero && r.total_power_exact == 289.5 && layout.sleep_power_total() == 289.5,
        format!("p all zero: {zero}, exact power {:?} W (sleep sum {:?} W)", r.total_power_exact, layout.sleep_power_total()),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |id: u32| wanted.is_empty() || wanted.contains(&id);
    let needs_batch = [1, 2, 3, 4, 5, 7].iter().any(|&i| want(i));
    let needs_tiny = want(9) || want(10);
    let batches = needs_batch.then(run_batches);
    let tiny = needs_tiny.then(tiny_runs);

    type Check<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);
    let b = || batches.as_ref().expect("batch computed");
    let tn = || tiny.as_deref().expect("tiny instances computed");
    let checks: Vec<Check> = vec![
        (1, "descent property", Box::new(|| c1_descent(b()))),
        (2, "feasibility and tightness", Box::new(|| c2_feasibility(b()))),
        (3, "KKT certification", Box::new(|| c3_kkt(b()))),
        (4, "energy reduction vs min_tpower", Box::new(|| c4_energy(b()))),
        (5, "log_sparse vs l21 ordering", Box::new(|| c5_ordering(b()))),
        (6, "epsilon robustness", Box::new(c6_epsilon)),
        (7, "macro deep-sleep majority", Box::new(|| c7_sleep(b()))),
        (8, "rate-approximation fidelity", Box::new(c8_rate_model)),
        (9, "tiny-instance grid oracle", Box::new(|| c9_grid(tn()))),
        (10, "restriction dominance", Box::new(|| c10_restricted(tn()))),
        (11, "carrier-splitting trend", Box::new(c11_splitting)),
        (12, "zero-demand exactness", Box::new(c12_zero_demand)),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in checks.iter().filter(|c| want(c.0)) {
        let start = Instant::now();
        let o = check();
        ran += 1;
        failed += usize::from(!o.pass);
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
