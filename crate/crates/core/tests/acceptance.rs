//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use repairlab::bounds::{core_delta, dimakis_gamma_threshold, expected_distinct_progress, lni};
use repairlab::engine::{simulate, FailureModel, Scenario, Window};
use repairlab::failure::{draw_geometric, gen_distinct_phase, FailureEvent, PeriodicIds};
use repairlab::params::derive_phase_params;
use repairlab::phase::{
    build_compressed_state, compressed_len_identity, compression_census, replay_second_execution,
    run_phase_first_execution,
};
use repairlab::repairers::{
    EqualRead, EqualReadWrite, Liquid, LiquidConfig, Pacing, RepairStrategy, Scrambler, SmallCode, SmallCodeConfig,
    Starve, StrategySpec,
};
use repairlab::rng::{stream, trial_seed, Substream};
use repairlab::storage::{Bits, StateConfig, SystemState};
use repairlab::verify::{verify_rate_vs_bound, verify_supermartingale, SignWalk, Verdict};
use repairlab::{BoundInputs, Result, SystemParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn periodic(ids: &[usize]) -> Vec<FailureEvent> {
    ids.iter()
        .enumerate()
        .map(|(i, &node)| FailureEvent {
            index: i as u64,
            time: i as f64,
            node,
        })
        .collect()
}

fn delta_c_reproduction() -> Result<Outcome> {
    let sys = SystemParams::new(100_000, 10u128.pow(16), 0, 9 * 10u128.pow(20), 1.0)?;
    let pp = derive_phase_params(&sys)?;
    let d1 = core_delta(0.1, pp.f, pp.m).linear();
    let d2 = core_delta(0.2, pp.f, pp.m).linear();
    let pass = pp.f == 10_000 && pp.m == 20_000 && d1 <= 3e-7 && rel(d1, 3.06e-7) <= 0.05 && d2 <= 1e-39;
    outcome(
        pass,
        format!(
            "F={} M={} delta_c(0.1)={d1:.6e} (<=3e-7: {}, within 5% of 3.06e-7: {}) delta_c(0.2)={d2:.4e}",
            pp.f,
            pp.m,
            d1 <= 3e-7,
            rel(d1, 3.06e-7) <= 0.05
        ),
    )
}

fn beta_prime_bracket() -> Result<Outcome> {
    let sys = SystemParams::new(100_000, 10u128.pow(16), 10u128.pow(13), 9 * 10u128.pow(20), 1.0 / 3.0)?;
    let pp = derive_phase_params(&sys)?;
    // vsize/(N·nsize) = 1e-8 and 1/N = 1e-5 exactly for these sizes
    let exact = sys.vsize * 100_000_000 == sys.capacity() && sys.n_nodes == 100_000;
    outcome(
        exact && pp.bracket_holds(&sys),
        format!("beta={} beta'={} F={} upper={}", pp.beta, pp.beta_prime, pp.f, pp.bracket_upper(&sys)),
    )
}

fn asymptotic_convergence() -> Result<Outcome> {
    let mut products = Vec::new();
    for beta in [0.1, 0.05, 0.02, 0.01, 0.005] {
        let n = 10_000u64;
        let f = (beta * n as f64).round() as u128;
        let sys = SystemParams::new(n, n as u128, 0, (n as u128 - f) * n as u128, 1.0)?;
        let pp = derive_phase_params(&sys)?;
        let bound = (1.0 - pp.beta_prime) / lni(2.0 * pp.beta_prime)?;
        products.push(bound * 2.0 * beta);
    }
    let monotone = products.windows(2).all(|w| w[0] < w[1]) && products.iter().all(|&p| p <= 1.0);
    let at_one_percent = products[3];
    outcome(
        monotone && (0.96..=1.0).contains(&at_one_percent),
        format!("products {products:.5?}"),
    )
}

fn dimakis_threshold() -> Result<Outcome> {
    let (n, alpha) = (10_000u64, 1000u64);
    let dsize = 9_000_000u128;
    let beta = 1.0 - dsize as f64 / (n * alpha) as f64;
    let g = dimakis_gamma_threshold(n, n - 1, n - 1, alpha, dsize)?;
    let limit = alpha as f64 / (2.0 * beta);
    outcome(rel(g as f64, limit) <= 0.01, format!("gamma*={g} limit={limit:.1}"))
}

type Factory = Box<dyn Fn() -> Result<Box<dyn RepairStrategy>>>;

fn replay_case(case: u64) -> Result<(SystemParams, Factory, &'static str)> {
    let mut rng = stream(trial_seed(55, case), Substream::Trial);
    let seed = rng.random::<u64>();
    Ok(match case % 5 {
        0 | 1 => {
            let n = rng.random_range(3..=8);
            let p = SystemParams::new(n, 8, 8, 8 * (n as u128 - 1), 1.0)?;
            (p, Box::new(move || Ok(Box::new(Scrambler::new(&p, seed)) as Box<dyn RepairStrategy>)), "scrambler")
        }
        2 => {
            let p = SystemParams::new(8, 16, 4, 96, 1.0)?;
            let w = if seed % 2 == 0 { EqualReadWrite::Rotate } else { EqualReadWrite::Nothing };
            (p, Box::new(move || Ok(Box::new(EqualRead::new(&p, 64, w)?) as Box<dyn RepairStrategy>)), "equal_read")
        }
        3 => {
            let mut cfg = SmallCodeConfig::new(3, 2, 8);
            cfg.pgs = Some(6);
            let p = cfg.system_params(6, cfg.default_slots(6), 1.0)?;
            (
                p,
                Box::new(move || Ok(Box::new(SmallCode::new(&p, cfg.clone(), seed)?) as Box<dyn RepairStrategy>)),
                "small_code",
            )
        }
        _ => {
            let cfg = LiquidConfig {
                objects: 2,
                pacing: Some(Pacing::Failures { per_pass: 2 }),
            };
            let p = cfg.system_params(8, 3, 8, 1.0)?;
            (p, Box::new(move || Ok(Box::new(Liquid::new(&p, cfg.clone())?) as Box<dyn RepairStrategy>)), "liquid")
        }
    })
}

fn replay_equivalence() -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut rf_total = 0u64;
    for case in 0..100 {
        let (p, factory, name) = replay_case(case)?;
        let mut rng = stream(trial_seed(56, case), Substream::Source);
        let n = p.n_nodes as usize;
        let m = rng.random_range(2..=n);
        let ids = gen_distinct_phase(n, rng.random_range(0..n), m, rng.random())?;
        let events = periodic(&ids);
        let x: Bits = (0..p.dsize).map(|_| rng.random::<bool>()).collect();
        let mut state = SystemState::new(p, StateConfig::bit_exact())?;
        let mut first = factory()?;
        first.store(&x, &mut state)?;
        let rec = run_phase_first_execution(&mut state, first.as_mut(), &events, None)?;
        let d = build_compressed_state(&rec)?;
        let replayed = replay_second_execution(&d, &p, &events, factory()?.as_mut())?;
        rf_total += rec.rfsize;
        if replayed.snapshot() != rec.end || d.len_bits() != compressed_len_identity(&p, m, rec.rfsize) {
            bad.push(format!("{case}:{name}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!("100 phases, total rfsize {rf_total} bits, mismatches {bad:?}"),
    )
}

fn compression_census_check() -> Result<Outcome> {
    let p = SystemParams::new(2, 4, 2, 8, 1.0)?;
    let pp = derive_phase_params(&p)?;
    let events = periodic(&[1, 0]);
    let factory = || -> Result<Box<dyn RepairStrategy>> { Ok(Box::new(Starve::new(&p))) };
    let r = compression_census(&p, &factory, &events, 6)?;
    outcome(
        pp.m == p.n_nodes && r.total == 256 && r.fraction <= 2f64.powi(-5),
        format!(
            "M={} small={} recovered={} fraction={} bound={}",
            pp.m, r.small, r.small_recovered, r.fraction, r.bound
        ),
    )
}

fn equal_read_ledger() -> Result<Outcome> {
    let p = SystemParams::new(8, 160, 0, 960, 1.0)?;
    let pp = derive_phase_params(&p)?;
    let mut seen = std::collections::BTreeSet::new();
    for s in 0..100u64 {
        let mut rng = stream(s, Substream::Identifiers);
        let ids = gen_distinct_phase(8, rng.random_range(0..8), pp.m as usize, s)?;
        let mut state = SystemState::new(p, StateConfig::bit_exact())?;
        let mut strat = EqualRead::new(&p, 320, EqualReadWrite::Nothing)?;
        let rec = run_phase_first_execution(&mut state, &mut strat, &periodic(&ids), None)?;
        seen.insert(rec.rfsize);
    }
    let expected = (pp.f as u64) * 160 - 80;
    outcome(
        pp.f == 2 && pp.m == 4 && seen.len() == 1 && seen.contains(&expected),
        format!("F={} M={} rfsize values {seen:?} expected {expected}", pp.f, pp.m),
    )
}

fn coupon_collector() -> Result<Outcome> {
    let (n, m, trials) = (1000usize, 200usize, 10_000u64);
    let exact = expected_distinct_progress(n as u64, (m - 1) as u64)?;
    let total: u64 = (0..trials)
        .map(|t| {
            let mut rng = stream(trial_seed(8, t), Substream::Geometric);
            (1..m).map(|i| draw_geometric(n, i, &mut rng)).sum::<u64>()
        })
        .sum();
    let mean = total as f64 / trials as f64;
    let cap = lni(0.2)? * n as f64;
    outcome(
        rel(mean, exact) <= 0.02 && exact <= cap,
        format!("mean GS={mean:.3} exact={exact:.3} lni(0.2)*N={cap:.2}"),
    )
}

fn supermartingale_grid() -> Result<Outcome> {
    let mut pass = true;
    let mut cells = Vec::new();
    for n in [50u64, 100, 200] {
        for mult in [4.0, 6.0] {
            let alpha = mult * (n as f64).sqrt();
            let r = verify_supermartingale(&SignWalk { c: 1.0 }, n, 1.0, alpha, 1_000_000, 9 + n)?;
            pass &= r.verdict != Verdict::Violated && r.ci_low <= r.bound;
            cells.push(format!("n={n} a={mult}: {}/{} vs {:.2e} {}", r.hits, r.trials, r.bound, r.verdict.label()));
        }
    }
    outcome(pass, cells.join("; "))
}

fn bound_bracketing() -> Result<Outcome> {
    let cfg = LiquidConfig {
        objects: 40,
        pacing: Some(Pacing::Failures { per_pass: 40 }),
    };
    let params = cfg.system_params(400, 40, 16, 0.01)?;
    let mut ratios = Vec::new();
    let mut pass = true;
    for seed in 0..20 {
        let sc = Scenario {
            params,
            failures: FailureModel::Poisson,
            strategy: StrategySpec::Liquid(cfg.clone()),
            bounds: BoundInputs::new(0.1, 0.1, 0.1)?,
            seed,
            horizon: 2000,
            window: Window::Delta,
        };
        let m = simulate(&sc)?;
        if m.recoverable {
            pass &= m.ratio >= 4.0 && m.ratio >= m.lower_bound && m.ratio <= 9.5;
        }
        ratios.push(m.ratio);
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);

    let sc_cfg = SmallCodeConfig::new(14, 10, 4);
    let sc_params = sc_cfg.system_params(140, sc_cfg.default_slots(140), 0.01)?;
    let mut state = SystemState::new(sc_params, StateConfig::symbolic())?;
    let mut small = SmallCode::new(&sc_params, sc_cfg.clone(), 4)?;
    let seq = repairlab::failure::gen_poisson(&sc_params, 0.0, 500, 4)?;
    let end = seq.events.last().map_or(0.0, |e| e.time) + 1.0;
    repairlab::engine::drive(&mut state, &mut small, &seq.events, Some(end), |_, _| false)?;
    let per_bit = state.ledger().total_charged() as f64 / small.lost_fragment_bits() as f64;
    pass &= rel(per_bit, 10.0) <= 0.10;
    outcome(
        pass,
        format!("liquid ratio range [{lo:.3}, {hi:.3}] over 20 seeds; small code reads {per_bit:.3} bits per lost fragment bit"),
    )
}

fn copy_ahead_counterexample() -> Result<Outcome> {
    let n = 50u64;
    let params = SystemParams::new(n, 64, 0, 64 * (n as u128 - 1), 0.01)?;
    let sc = Scenario {
        params,
        failures: FailureModel::Periodic {
            period: 1.0,
            ids: PeriodicIds::Fresh,
        },
        strategy: StrategySpec::CopyAhead,
        bounds: BoundInputs::new(0.1, 0.1, 0.1)?,
        seed: 11,
        horizon: 10 * n as usize + 1,
        window: Window::AllFailures,
    };
    let m = simulate(&sc)?;
    outcome(
        m.ratio == 1.0 && m.recoverable && m.failures >= 10 * n,
        format!("failures={} ratio={} recoverable={}", m.failures, m.ratio, m.recoverable),
    )
}

fn rate_vs_bound_substitution() -> Result<Outcome> {
    let cfg = LiquidConfig {
        objects: 20,
        pacing: Some(Pacing::Failures { per_pass: 200 }),
    };
    let params = cfg.system_params(2000, 200, 100, 0.01)?;
    let sc = Scenario {
        params,
        failures: FailureModel::Poisson,
        strategy: StrategySpec::Liquid(cfg),
        bounds: BoundInputs::new(0.1, 0.1, 0.1)?,
        seed: 12,
        horizon: 4000,
        window: Window::Delta,
    };
    let r = verify_rate_vs_bound(&sc, 20)?;
    let min_ratio = r.runs.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min);
    outcome(
        matches!(r.report.verdict, Verdict::Consistent | Verdict::Vacuous),
        format!(
            "substituted for full-scale delta frequencies: {} (min ratio {min_ratio:.3}, rrate bound {:.1})",
            r.report.summary(),
            r.rrate_bound
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("delta_c reproduction", delta_c_reproduction),
        ("beta' bracket", beta_prime_bracket),
        ("asymptotic convergence", asymptotic_convergence),
        ("finite-sum regenerating threshold", dimakis_threshold),
        ("replay equivalence", replay_equivalence),
        ("compression census", compression_census_check),
        ("equal-read ledger", equal_read_ledger),
        ("coupon collector", coupon_collector),
        ("supermartingale tail", supermartingale_grid),
        ("bound bracketing by simulation", bound_bracketing),
        ("copy-ahead counterexample", copy_ahead_counterexample),
        ("rate vs bound at N=2000", rate_vs_bound_substitution),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name} ({:.2?}): {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
