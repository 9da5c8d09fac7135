//! Monte Carlo oracles for the probabilistic claims: each trial is an
//! independent seeded run, and the hit frequency is compared against an
//! analytic bound through a Clopper–Pearson interval.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::{composite_deltas, distinct_delta, lnd, lni, rate_lower_bounds, supermartingale_tail};
use crate::engine::{simulate, Scenario, SimMetrics};
use crate::error::{domain, invalid, Error, Result};
use crate::failure::{draw_geometric, UniformStream};
use crate::logprob::LogProb;
use crate::params::{derive_phase_params, SystemParams};
use crate::phase::{
    build_compressed_state, chain_phases, compressed_len_identity, replay_second_execution, run_phase_first_execution,
};
use crate::failure::{gen_distinct_phase, FailureEvent};
use crate::repairers::{EqualRead, EqualReadWrite, RepairStrategy, Scrambler, Starve};
use crate::storage::Bits;
use crate::rng::{stream, trial_seed, Substream};
use crate::storage::{StateConfig, SystemState};

/// Confidence level of every interval.
pub const CONFIDENCE: f64 = 0.99;
pub const CI_METHOD: &str = "clopper-pearson two-sided 99%";
pub const REPORT_SCHEMA: &str = "repairlab-verify-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Violated,
    Vacuous,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Violated => "violated",
            Verdict::Vacuous => "vacuous",
        }
    }
}

/// Exact binomial interval for `hits` out of `trials`.
pub fn clopper_pearson(hits: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials > 0 && hits <= trials);
    let a = (1.0 - level) / 2.0;
    let (h, n) = (hits as f64, trials as f64);
    let lo = if hits == 0 {
        0.0
    } else {
        Beta::new(h, n - h + 1.0).unwrap().inverse_cdf(a)
    };
    let hi = if hits == trials {
        1.0
    } else {
        Beta::new(h + 1.0, n - h).unwrap().inverse_cdf(1.0 - a)
    };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub claim: String,
    pub trials: u64,
    pub hits: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The bound as a probability, at most 1.
    pub bound: f64,
    pub bound_log10: f64,
    pub verdict: Verdict,
    pub note: String,
}

impl TrialReport {
    pub fn new(claim: impl Into<String>, trials: u64, hits: u64, bound: LogProb) -> Self {
        let (ci_low, ci_high) = clopper_pearson(hits, trials, CONFIDENCE);
        let b = bound.linear();
        let verdict = if bound.clamped() {
            Verdict::Vacuous
        } else if ci_low > b {
            Verdict::Violated
        } else {
            Verdict::Consistent
        };
        TrialReport {
            claim: claim.into(),
            trials,
            hits,
            estimate: hits as f64 / trials as f64,
            ci_low,
            ci_high,
            bound: b,
            bound_log10: bound.log10(),
            verdict,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn summary(&self) -> String {
        format!(
            "{:<10} {}: {}/{} hits, estimate {:.3e} [{:.3e}, {:.3e}] vs bound {:.3e} (log10 {:.2}){}",
            self.verdict.label(),
            self.claim,
            self.hits,
            self.trials,
            self.estimate,
            self.ci_low,
            self.ci_high,
            self.bound,
            self.bound_log10,
            if self.note.is_empty() { String::new() } else { format!("; {}", self.note) }
        )
    }
}

/// Nine significant digits with trailing zeros trimmed, like C's `%.9g`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..9).contains(&exp) {
        trim(format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{}{:02}", trim(mant.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Reports as CSV with a fixed column order.
pub fn write_reports_csv<W: Write>(reports: &[TrialReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "schema", "claim", "trials", "hits", "estimate", "ci_low", "ci_high", "bound", "bound_log10", "verdict",
        "ci_method", "note",
    ])
    .map_err(err)?;
    for r in reports {
        w.write_record([
            REPORT_SCHEMA.to_string(),
            r.claim.clone(),
            r.trials.to_string(),
            r.hits.to_string(),
            sig9(r.estimate),
            sig9(r.ci_low),
            sig9(r.ci_high),
            sig9(r.bound),
            sig9(r.bound_log10),
            r.verdict.label().to_string(),
            CI_METHOD.to_string(),
            r.note.clone(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

fn count_hits(trials: u64, seed: u64, hit: impl Fn(u64, &mut ChaCha20Rng) -> Result<bool> + Sync) -> Result<u64> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(trial_seed(seed, t), Substream::Trial);
            hit(t, &mut rng).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// A process `z_0 = 0, z_1, …` with bounded steps whose conditional mean
/// does not increase while it is positive.
pub trait StepGenerator: Sync {
    fn name(&self) -> String;
    /// Step from `z_{i−1}` at index `i ≥ 1`.
    fn step(&self, i: u64, z_prev: f64, rng: &mut ChaCha20Rng) -> f64;
}

/// Symmetric `±c` walk.
#[derive(Debug, Clone, Copy)]
pub struct SignWalk {
    pub c: f64,
}

impl StepGenerator for SignWalk {
    fn name(&self) -> String {
        format!("sign walk c={}", self.c)
    }

    fn step(&self, _i: u64, _z: f64, rng: &mut ChaCha20Rng) -> f64 {
        if rng.random::<bool>() { self.c } else { -self.c }
    }
}

/// `+c` with probability `up < 1/2`, otherwise `−c`.
#[derive(Debug, Clone, Copy)]
pub struct DriftWalk {
    pub c: f64,
    pub up: f64,
}

impl StepGenerator for DriftWalk {
    fn name(&self) -> String {
        format!("drift walk c={} up={}", self.c, self.up)
    }

    fn step(&self, _i: u64, _z: f64, rng: &mut ChaCha20Rng) -> f64 {
        if rng.random::<f64>() < self.up { self.c } else { -self.c }
    }
}

/// Frequency of `Z_n > α + c` against `n·e^{−α²/(2nc²)}`.
///
/// Any step larger than `c` in absolute value is rejected with an error.
pub fn verify_supermartingale(
    generator: &dyn StepGenerator,
    n: u64,
    c: f64,
    alpha: f64,
    trials: u64,
    seed: u64,
) -> Result<TrialReport> {
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let bound = supermartingale_tail(n, c, alpha)?;
    let hits = count_hits(trials, seed, |_, rng| {
        let mut z = 0.0;
        for i in 1..=n {
            let s = generator.step(i, z, rng);
            if !(s.abs() <= c) {
                return Err(Error::Precondition(format!("step {s} at index {i} exceeds c = {c}")));
            }
            z += s;
        }
        Ok(z > alpha + c)
    })?;
    Ok(TrialReport::new(
        format!("supermartingale {} n={n} alpha={}", generator.name(), sig9(alpha)),
        trials,
        hits,
        bound,
    ))
}

/// Phase chains under uniform identifiers with a repairer that never reads,
/// counting runs where `Y′ > (1+εd)·lni(2β′)/(2β′)·Y`, against `δd`.
///
/// The node size is `N` bits and the source fills all but `β′·N` nodes.
pub fn verify_distinct_failures(n: u64, beta_prime: f64, eps_d: f64, trials: u64, seed: u64) -> Result<TrialReport> {
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let f = (beta_prime * n as f64).round() as u64;
    if f == 0 || (f as f64 - beta_prime * n as f64).abs() > 1e-9 {
        return Err(invalid("β′·N must be a positive integer"));
    }
    let params = SystemParams::new(n, n as u128, 0, ((n - f) * n) as u128, 1.0)?;
    let pp = derive_phase_params(&params)?;
    let bound = distinct_delta(eps_d, pp.beta_prime, n, pp.m)?;
    let factor = (1.0 + eps_d) * lni(2.0 * pp.beta_prime)? / (2.0 * pp.beta_prime);
    let hits = count_hits(trials, seed, |t, _| {
        let mut state = SystemState::new(params, StateConfig::symbolic())?;
        let events = UniformStream::periodic(n as usize, 0.0, 1.0, trial_seed(seed, t));
        let stats = chain_phases(&mut state, &mut Starve::new(&params), events, &pp, None)?;
        if stats.y_prime < stats.y {
            return Err(Error::Precondition("fewer failures than distinct failures".into()));
        }
        Ok(stats.y_prime as f64 > factor * stats.y as f64)
    })?;
    Ok(TrialReport::new(
        format!("distinct failures N={n} beta'={beta_prime} eps_d={eps_d}"),
        trials,
        hits,
        bound,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricSumReport {
    /// `P[Σ_{i≤ℓ} Q_i ≥ (1+ε)·ℓ/(λN)] ≤ e^{−ℓ·lnd(ε)}/(1+ε)`.
    pub exponential: TrialReport,
    pub mean: f64,
    pub expected_mean: f64,
    /// `ℓ` geometrics in blocks of `M−1`, against `δd′`.
    pub geometric: TrialReport,
}

/// Exponential-sum and geometric-sum tails.
pub fn verify_geometric_sum_concentration(
    params: &SystemParams,
    ell: u64,
    eps: f64,
    trials: u64,
    seed: u64,
) -> Result<GeometricSumReport> {
    if ell == 0 || trials == 0 {
        return Err(invalid("ℓ and trials must be positive"));
    }
    let n = params.n_nodes;
    let rate = params.lambda * n as f64;
    let exp = Exp::new(rate).map_err(|e| domain(e.to_string()))?;
    let threshold = (1.0 + eps) * ell as f64 / rate;
    let sums: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(trial_seed(seed, t), Substream::Timing);
            (0..ell).map(|_| exp.sample(&mut rng)).sum()
        })
        .collect();
    let hits = sums.iter().filter(|&&s| s >= threshold).count() as u64;
    let exp_bound = LogProb::from_ln(-(ell as f64) * lnd(eps)? - eps.ln_1p());
    let exponential = TrialReport::new(format!("exponential sum l={ell} eps={eps}"), trials, hits, exp_bound);

    let pp = derive_phase_params(params)?;
    let bp = pp.beta_prime;
    let block = (pp.m - 1) as usize;
    if block == 0 || ell < pp.m {
        return Err(invalid("the geometric check needs M ≥ 2 and ℓ ≥ M"));
    }
    let geo_threshold = (1.0 + eps) * lni(2.0 * bp)? / (2.0 * bp) * ell as f64;
    let geo_hits = count_hits(trials, seed, |_, rng| {
        let mut total = 0u64;
        for k in 0..ell as usize {
            total += draw_geometric(n as usize, k % block + 1, rng);
        }
        Ok(total as f64 >= geo_threshold)
    })?;
    let geo_bound = LogProb::from_ln(-2.0 * bp * (1.0 - 2.0 * bp) * n as f64 * lnd(eps)? - eps.ln_1p());
    let geometric = TrialReport::new(format!("geometric blocks l={ell} eps={eps} M={}", pp.m), trials, geo_hits, geo_bound);
    Ok(GeometricSumReport {
        exponential,
        mean: sums.iter().sum::<f64>() / trials as f64,
        expected_mean: ell as f64 / rate,
        geometric,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub report: TrialReport,
    pub runs: Vec<SimMetrics>,
    /// Lower bound on the read rate in bits per unit time.
    pub rrate_bound: f64,
}

/// Repeats a scenario with per-trial seeds over `[t_0, t_0+Δ]` and counts
/// runs that are recoverable at the end of the window and yet read below
/// the Poisson rate bound; that frequency is compared against `δ`.
pub fn verify_rate_vs_bound(scenario: &Scenario, trials: u64) -> Result<RateReport> {
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    let p = &scenario.params;
    let pp = derive_phase_params(p)?;
    let deltas = composite_deltas(&pp, &scenario.bounds, p.nsize, p.lambda)?;
    let bound = rate_lower_bounds(&pp, &scenario.bounds, p.nsize, p.lambda)?.rrate_poisson;
    let runs: Vec<SimMetrics> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut sc = scenario.clone();
            sc.seed = trial_seed(scenario.seed, t);
            simulate(&sc)
        })
        .collect::<Result<_>>()?;
    let hits = runs.iter().filter(|m| m.recoverable && m.rrate < bound).count() as u64;
    let report = TrialReport::new(
        format!("rate vs bound {} N={}", scenario.strategy.kind(), p.n_nodes),
        trials,
        hits,
        deltas.delta,
    )
    .with_note(format!(
        "recoverable {}/{}; delta log10 {:.2}",
        runs.iter().filter(|m| m.recoverable).count(),
        trials,
        deltas.delta.log10()
    ));
    Ok(RateReport {
        report,
        runs,
        rrate_bound: bound,
    })
}

/// Random bit-exact phases at small `N`, each run twice: once normally and
/// once replayed from its compressed state. A hit is a case whose replayed
/// final state or `len(D)` disagrees; the bound is zero.
pub fn verify_replay_equivalence(cases: u64, seed: u64) -> Result<TrialReport> {
    if cases == 0 {
        return Err(invalid("cases must be positive"));
    }
    let hits = count_hits(cases, seed, |t, rng| {
        let n = rng.random_range(3..=8u64);
        let p = SystemParams::new(n, 8, 8, 8 * (n as u128 - 1), 1.0)?;
        let strategy_seed = rng.random::<u64>();
        let rotate = t % 2 == 1;
        let factory = || -> Result<Box<dyn RepairStrategy>> {
            Ok(if rotate {
                Box::new(EqualRead::new(&p, 4 * n, EqualReadWrite::Rotate)?)
            } else {
                Box::new(Scrambler::new(&p, strategy_seed))
            })
        };
        let m = rng.random_range(2..=n as usize);
        let ids = gen_distinct_phase(n as usize, rng.random_range(0..n as usize), m, rng.random())?;
        let events: Vec<FailureEvent> = ids
            .iter()
            .enumerate()
            .map(|(i, &node)| FailureEvent {
                index: i as u64,
                time: i as f64,
                node,
            })
            .collect();
        let x: Bits = (0..p.dsize).map(|_| rng.random::<bool>()).collect();
        let mut state = SystemState::new(p, StateConfig::bit_exact())?;
        let mut first = factory()?;
        first.store(&x, &mut state)?;
        let rec = run_phase_first_execution(&mut state, first.as_mut(), &events, None)?;
        let d = build_compressed_state(&rec)?;
        let replayed = replay_second_execution(&d, &p, &events, factory()?.as_mut())?;
        Ok(replayed.snapshot() != rec.end || d.len_bits() != compressed_len_identity(&p, m, rec.rfsize))
    })?;
    Ok(TrialReport::new("replay equivalence", cases, hits, LogProb::from_linear(0.0)))
}
