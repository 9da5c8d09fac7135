use std::cmp::Ordering;
use std::io::Write;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use repairlab::bounds::{composite_deltas, core_delta, dimakis_gamma_threshold, distinct_delta, lni};
use repairlab::engine::{simulate, FailureModel, Scenario, SimMetrics, Window};
use repairlab::failure::{FailureSequence, IdKind, PeriodicIds, TimingKind};
use repairlab::params::derive_phase_params;
use repairlab::repairers::{EqualReadWrite, LiquidConfig, Pacing, SmallCodeConfig, StrategySpec};
use repairlab::verify::{
    sig9, verify_distinct_failures, verify_geometric_sum_concentration, verify_rate_vs_bound,
    verify_replay_equivalence, verify_supermartingale, write_reports_csv, SignWalk, TrialReport, Verdict,
};
use repairlab::{BoundInputs, SystemParams};

use crate::config::Config;

pub const BOUNDS_SCHEMA: &str = "repairlab-bounds-v1";
pub const SIM_SCHEMA: &str = "repairlab-simulate-v1";
pub const SWEEP_SCHEMA: &str = "repairlab-sweep-v1";

pub const SUITES: &[&str] = &["supermartingale", "distinct", "geometric", "rate", "replay"];

const DEFAULT_BETAS: [f64; 6] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];

fn bound_inputs(cfg: &Config) -> Result<BoundInputs> {
    Ok(BoundInputs::new(
        cfg.get_or("bounds.eps_c", 0.1)?,
        cfg.get_or("bounds.eps_d", 0.1)?,
        cfg.get_or("bounds.eps", 0.1)?,
    )?)
}

fn dsize_for(beta: f64, capacity: u128) -> Result<u128> {
    if !(0.0..1.0).contains(&beta) {
        bail!("beta must lie in [0, 1), got {beta}");
    }
    Ok(((1.0 - beta) * capacity as f64).round().max(1.0) as u128)
}

/// Rows of the bounds table, one per β, at the configured `N`, `nsize`,
/// `vsize` and `λ` (defaults: `N = 10⁵`, `nsize = 10¹⁶`, `vsize = 0`,
/// `λ = 1/3`).
pub fn cmd_bounds(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let n: u64 = cfg.get_or("system.n_nodes", 100_000)?;
    let nsize: u128 = cfg.get_or("system.nsize", 10u128.pow(16))?;
    let vsize: u128 = cfg.get_or("system.vsize", 0)?;
    let lambda: f64 = cfg.get_or("system.lambda", 1.0 / 3.0)?;
    cfg.forbid(&["system.dsize", "system.beta"], "the bounds table sets dsize from bounds.betas")?;
    let betas = cfg.list("bounds.betas")?.unwrap_or(DEFAULT_BETAS.to_vec());
    let bi = bound_inputs(cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema",
        "beta",
        "beta_prime",
        "F",
        "M",
        "rrate_over_erate_lower",
        "asymptote_1_over_2beta",
        "dimakis_gamma_over_nsize",
        "log10_delta_c",
        "log10_delta_d",
        "log10_delta",
    ])?;
    for beta in betas {
        let capacity = n as u128 * nsize;
        let sys = SystemParams::new(n, nsize, vsize, dsize_for(beta, capacity)?, lambda)?;
        let pp = derive_phase_params(&sys)?;
        let bp = pp.beta_prime;
        let lower = if bp < 0.5 { (1.0 - bp) / lni(2.0 * bp)? } else { 0.0 };
        let alpha = u64::try_from(nsize).map_err(|_| anyhow!("nsize must fit in 64 bits for the cut sum"))?;
        let gamma = dimakis_gamma_threshold(n, n - 1, n - 1, alpha, sys.dsize)? as f64 / nsize as f64;
        let dc = core_delta(bi.eps_c, pp.f, pp.m).log10();
        let (dd, d) = if bp < 0.5 {
            (
                distinct_delta(bi.eps_d, bp, n, pp.m)?.log10(),
                composite_deltas(&pp, &bi, nsize, lambda)?.delta.log10(),
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        w.write_record([
            BOUNDS_SCHEMA.to_string(),
            sig9(sys.beta()),
            sig9(bp),
            pp.f.to_string(),
            pp.m.to_string(),
            sig9(lower),
            sig9(1.0 / (2.0 * beta)),
            sig9(gamma),
            sig9(dc),
            sig9(dd),
            sig9(d),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn failure_model(cfg: &Config) -> Result<FailureModel> {
    if let Some(path) = cfg.raw("failures.import") {
        cfg.forbid(&["failures.model", "failures.period", "failures.ids"], "failures are imported")?;
        let file = std::fs::File::open(path).with_context(|| format!("opening failures.import {path}"))?;
        let seq = FailureSequence::read_csv(file, TimingKind::Poisson, IdKind::Uniform)?;
        return Ok(FailureModel::Trace(Arc::from(seq.events)));
    }
    match cfg.raw("failures.model").unwrap_or("poisson") {
        "poisson" => {
            cfg.forbid(&["failures.period", "failures.ids"], "they apply to periodic failures only")?;
            Ok(FailureModel::Poisson)
        }
        "periodic" => {
            let ids = match cfg.raw("failures.ids").unwrap_or("uniform") {
                "uniform" => PeriodicIds::Uniform,
                "distinct" => PeriodicIds::Distinct,
                "fresh" => PeriodicIds::Fresh,
                other => bail!("bad value `{other}` for key `failures.ids` (uniform, distinct, fresh)"),
            };
            Ok(FailureModel::Periodic {
                period: cfg.get_or("failures.period", 1.0)?,
                ids,
            })
        }
        other => bail!("bad value `{other}` for key `failures.model` (poisson, periodic)"),
    }
}

const DERIVED: &[&str] = &["system.nsize", "system.vsize", "system.dsize", "system.beta"];

/// Generic system: `nsize` (default `max(N, 1024)`), `vsize` (default 0), and either
/// `dsize` or `beta` (default 0.1).
fn generic_system(cfg: &Config, n: u64, lambda: f64, beta: Option<f64>) -> Result<SystemParams> {
    let nsize: u128 = cfg.get_or("system.nsize", n.max(1024) as u128)?;
    let vsize: u128 = cfg.get_or("system.vsize", 0)?;
    let dsize = match (beta, cfg.get::<u128>("system.dsize")?) {
        (Some(b), _) => dsize_for(b, n as u128 * nsize)?,
        (None, Some(d)) => {
            cfg.forbid(&["system.beta"], "system.dsize is already set")?;
            d
        }
        (None, None) => dsize_for(cfg.get_or("system.beta", 0.1)?, n as u128 * nsize)?,
    };
    Ok(SystemParams::new(n, nsize, vsize, dsize, lambda)?)
}

/// System parameters and strategy for `kind`. A β given here overrides the
/// configured overhead (sweeps).
fn strategy_and_system(cfg: &Config, kind: &str, beta: Option<f64>) -> Result<(SystemParams, StrategySpec)> {
    let n: u64 = cfg.get_or("system.n_nodes", 400)?;
    let lambda: f64 = cfg.get_or("system.lambda", 0.01)?;
    Ok(match kind {
        "liquid_lazy" => {
            cfg.forbid(DERIVED, "liquid_lazy derives sizes from strategy.r, objects and fragment_bits")?;
            let r: u64 = match beta {
                Some(b) => (b * n as f64).round() as u64,
                None => cfg.get_or("strategy.r", (0.1 * n as f64).round() as u64)?,
            };
            let objects: usize = cfg.get_or("strategy.objects", 40)?;
            let pacing = match cfg.raw("strategy.pacing").unwrap_or("failures") {
                "failures" => Pacing::Failures {
                    per_pass: cfg.get_or("strategy.per_pass", r)?,
                },
                "time" => Pacing::Time {
                    pass_period: cfg.get_or("strategy.pass_period", (r as f64 / 2.0) / (lambda * n as f64))?,
                },
                "never" => Pacing::Never,
                other => bail!("bad value `{other}` for key `strategy.pacing` (failures, time, never)"),
            };
            let lc = LiquidConfig {
                objects,
                pacing: Some(pacing),
            };
            let params = lc.system_params(n, r, cfg.get_or("strategy.fragment_bits", 16)?, lambda)?;
            (params, StrategySpec::Liquid(lc))
        }
        "small_code_reactive" => {
            cfg.forbid(DERIVED, "small_code_reactive derives sizes from its code and slots")?;
            if beta.is_some() {
                bail!("small_code_reactive has its overhead fixed by (n, k, slots) and cannot take a beta grid");
            }
            let mut sc = SmallCodeConfig::new(
                cfg.get_or("strategy.n", 14)?,
                cfg.get_or("strategy.k", 10)?,
                cfg.get_or("strategy.fragment_bits", 4)?,
            );
            sc.pgs = cfg.get("strategy.pgs")?;
            sc.repair_delay = cfg.get_or("strategy.repair_delay", 0.0)?;
            let slots = cfg.get_or("strategy.slots", sc.default_slots(n))?;
            (sc.system_params(n, slots, lambda)?, StrategySpec::SmallCode(sc))
        }
        "equal_read" => {
            let params = generic_system(cfg, n, lambda, beta)?;
            let gamma: u64 = cfg
                .get("strategy.gamma")?
                .ok_or_else(|| anyhow!("key `strategy.gamma` is required for equal_read"))?;
            let write = match cfg.raw("strategy.write").unwrap_or("nothing") {
                "nothing" => EqualReadWrite::Nothing,
                "rotate" => EqualReadWrite::Rotate,
                other => bail!("bad value `{other}` for key `strategy.write` (nothing, rotate)"),
            };
            (params, StrategySpec::EqualRead { gamma, write })
        }
        "copy_ahead_oracle" => (generic_system(cfg, n, lambda, beta)?, StrategySpec::CopyAhead),
        "starve" => (generic_system(cfg, n, lambda, beta)?, StrategySpec::Starve),
        "scrambler" => (generic_system(cfg, n, lambda, beta)?, StrategySpec::Scrambler),
        other => bail!(
            "unknown strategy `{other}` (small_code_reactive, liquid_lazy, equal_read, copy_ahead_oracle, starve, scrambler)"
        ),
    })
}

pub fn build_scenario(cfg: &Config, seed: u64, kind: Option<&str>, beta: Option<f64>) -> Result<Scenario> {
    let kind = kind.unwrap_or(cfg.raw("strategy.kind").unwrap_or("liquid_lazy"));
    let (params, strategy) = strategy_and_system(cfg, kind, beta)?;
    let window = match cfg.raw("run.window").unwrap_or("delta") {
        "delta" => Window::Delta,
        "all" => Window::AllFailures,
        other => bail!("bad value `{other}` for key `run.window` (delta, all)"),
    };
    Ok(Scenario {
        params,
        failures: failure_model(cfg)?,
        strategy,
        bounds: bound_inputs(cfg)?,
        seed,
        horizon: cfg.get_or("run.horizon", 2000)?,
        window,
    })
}

/// `F/N` with `F = ⌈osize/nsize⌉`, defined even when a phase is not.
fn beta_prime_of(p: &SystemParams) -> f64 {
    let osize = p.capacity() - p.dsize + p.vsize;
    osize.div_ceil(p.nsize) as f64 / p.n_nodes as f64
}

const SIM_COLUMNS: [&str; 8] = [
    "failures",
    "distinct",
    "bits_read",
    "rrate_over_erate",
    "lower_bound",
    "recoverable",
    "first_loss_time",
    "beta_prime",
];

fn metric_fields(m: &SimMetrics, beta_prime: f64) -> Vec<String> {
    vec![
        m.failures.to_string(),
        m.distinct.to_string(),
        m.bits_read.to_string(),
        sig9(m.ratio),
        sig9(m.lower_bound),
        m.recoverable.to_string(),
        m.first_loss_time.map(sig9).unwrap_or_default(),
        sig9(beta_prime),
    ]
}

pub fn cmd_simulate(cfg: &Config, seed: u64, out: &mut dyn Write) -> Result<()> {
    let sc = build_scenario(cfg, seed, None, None)?;
    if let Some(path) = cfg.raw("failures.export") {
        let events = sc.events()?;
        let times: Vec<f64> = events.iter().map(|e| e.time).collect();
        let ids: Vec<usize> = events.iter().map(|e| e.node).collect();
        let seq = FailureSequence::from_parts(&times, &ids, TimingKind::Poisson, IdKind::Uniform)?;
        let file = std::fs::File::create(path).with_context(|| format!("creating failures.export {path}"))?;
        seq.write_csv(file)?;
    }
    let m = simulate(&sc)?;
    let bp = beta_prime_of(&sc.params);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["schema", "strategy", "seed"];
    header.extend(SIM_COLUMNS);
    w.write_record(&header)?;
    let mut row = vec![SIM_SCHEMA.to_string(), sc.strategy.kind().to_string(), seed.to_string()];
    row.extend(metric_fields(&m, bp));
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

struct SweepRow {
    beta: f64,
    strategy: String,
    seed: u64,
    fields: Vec<String>,
}

pub fn cmd_sweep(cfg: &Config, base_seed: u64, out: &mut dyn Write) -> Result<()> {
    let betas: Vec<f64> = cfg.list("sweep.betas")?.unwrap_or(vec![0.1]);
    let kinds: Vec<String> = cfg
        .list("sweep.strategies")?
        .unwrap_or(vec![cfg.raw("strategy.kind").unwrap_or("liquid_lazy").to_string()]);
    let seeds: u64 = cfg.get_or("sweep.seeds", 1)?;
    let mut jobs = Vec::new();
    for &beta in &betas {
        for kind in &kinds {
            for s in 0..seeds {
                jobs.push((beta, kind.clone(), base_seed + s));
            }
        }
    }
    let mut rows: Vec<SweepRow> = jobs
        .into_par_iter()
        .map(|(beta, kind, seed)| -> Result<SweepRow> {
            let sc = build_scenario(cfg, seed, Some(&kind), Some(beta))
                .with_context(|| format!("scenario beta={beta} strategy={kind} seed={seed}"))?;
            let m = simulate(&sc).with_context(|| format!("running beta={beta} strategy={kind} seed={seed}"))?;
            let bp = beta_prime_of(&sc.params);
            Ok(SweepRow {
                beta,
                strategy: kind,
                seed,
                fields: metric_fields(&m, bp),
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        a.beta
            .total_cmp(&b.beta)
            .then_with(|| a.strategy.cmp(&b.strategy))
            .then_with(|| a.seed.cmp(&b.seed))
            .then(Ordering::Equal)
    });
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["schema", "beta", "strategy", "seed"];
    header.extend(SIM_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![SWEEP_SCHEMA.to_string(), sig9(r.beta), r.strategy, r.seed.to_string()];
        rec.extend(r.fields);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn run_suite(name: &str, cfg: &Config, seed: u64, trials: u64) -> Result<Vec<TrialReport>> {
    Ok(match name {
        "supermartingale" => {
            let mut out = Vec::new();
            for n in [50u64, 100, 200] {
                for mult in [4.0, 6.0] {
                    let alpha = mult * (n as f64).sqrt();
                    out.push(verify_supermartingale(&SignWalk { c: 1.0 }, n, 1.0, alpha, trials, seed ^ n)?);
                }
            }
            out
        }
        "distinct" => vec![verify_distinct_failures(2000, 0.1, 1.0, trials, seed)?],
        "geometric" => {
            let p = SystemParams::new(2000, 2000, 0, 1800 * 2000, 1.0)?;
            let g = verify_geometric_sum_concentration(&p, 1000, 0.2, trials, seed)?;
            let mean_note = format!("mean {} vs {}", sig9(g.mean), sig9(g.expected_mean));
            vec![g.exponential.with_note(mean_note), g.geometric]
        }
        "rate" => {
            let mut c = cfg.clone();
            if !c.has("strategy.kind") {
                c = Config::parse(
                    "[system]\nn_nodes = 2000\n[strategy]\nkind = liquid_lazy\nr = 200\nobjects = 20\nfragment_bits = 100\n",
                )?;
            }
            let sc = build_scenario(&c, seed, None, None)?;
            let trials = cfg.get_or("verify.rate_trials", 20)?;
            vec![verify_rate_vs_bound(&sc, trials)?.report]
        }
        "replay" => vec![verify_replay_equivalence(cfg.get_or("verify.replay_cases", 100)?, seed)?],
        other => bail!("unknown suite `{other}` (all, {})", SUITES.join(", ")),
    })
}

/// Returns true when some report is a violation.
pub fn cmd_verify(cfg: &Config, suite: &str, seed: u64, trials: u64, out: &mut dyn Write) -> Result<bool> {
    if trials == 0 {
        bail!("--trials must be positive");
    }
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let mut reports = Vec::new();
    for name in names {
        reports.extend(run_suite(name, cfg, seed, trials)?);
    }
    for r in &reports {
        eprintln!("{}", r.summary());
    }
    write_reports_csv(&reports, out)?;
    Ok(reports.iter().any(|r| r.verdict == Verdict::Violated))
}
