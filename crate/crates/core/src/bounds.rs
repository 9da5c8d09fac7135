//! Closed-form lower bounds on repair read rate and the probability slack
//! terms that accompany them.

use crate::error::{domain, invalid, Error, Result};
use crate::logprob::LogProb;
use crate::params::{BoundInputs, PhaseParams, RegeneratingParams};

/// `ln(1/(1−ζ))` for `0 ≤ ζ < 1`.
pub fn lni(zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(domain(format!("lni requires 0 ≤ ζ < 1, got {zeta}")));
    }
    Ok(-(-zeta).ln_1p())
}

/// `ζ − ln(1+ζ)` for `ζ ≥ 0`.
pub fn lnd(zeta: f64) -> Result<f64> {
    if !(zeta >= 0.0) {
        return Err(domain(format!("lnd requires ζ ≥ 0, got {zeta}")));
    }
    // Series near zero avoids the cancellation in ζ − ln(1+ζ).
    if zeta < 1e-4 {
        let z2 = zeta * zeta;
        return Ok(z2 / 2.0 - z2 * zeta / 3.0 + z2 * z2 / 4.0);
    }
    Ok(zeta - zeta.ln_1p())
}

/// Read threshold `Γ_i` for the `i`-th distinct failure of a phase.
pub fn gamma_threshold(i: u64, pp: &PhaseParams, nsize: u128, eps_c: f64) -> Result<f64> {
    if pp.m < 2 || i < 1 || i > pp.m - 1 {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 1,
            hi: pp.m.saturating_sub(1),
        });
    }
    if !(0.0..=1.0).contains(&eps_c) {
        return Err(domain(format!("eps_c must lie in [0, 1], got {eps_c}")));
    }
    let i = i as f64;
    let n = pp.n_nodes as f64;
    Ok((1.0 - eps_c) * i * (n - (i + 1.0) / 2.0) * nsize as f64 / (pp.m - 1) as f64)
}

/// `δc = M · e^{−εc²F/4 + εc}`.
pub fn core_delta(eps_c: f64, f: u64, m: u64) -> LogProb {
    LogProb::from_ln((m as f64).ln() - eps_c * eps_c * f as f64 / 4.0 + eps_c)
}

/// `δd = M · e^{−2β′(1−2β′)N·lnd(εd)} / (1+εd)`.
pub fn distinct_delta(eps_d: f64, beta_prime: f64, n_nodes: u64, m: u64) -> Result<LogProb> {
    if !(beta_prime < 0.5) {
        return Err(domain(format!("distinct_delta requires β′ < 1/2, got {beta_prime}")));
    }
    let exponent = 2.0 * beta_prime * (1.0 - 2.0 * beta_prime) * n_nodes as f64 * lnd(eps_d)?;
    Ok(LogProb::from_ln((m as f64).ln() - exponent - eps_d.ln_1p()))
}

/// Composite slack terms of the uniform and Poisson theorems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeDeltas {
    pub delta_c: LogProb,
    pub delta_d: LogProb,
    pub delta_u: LogProb,
    pub delta: LogProb,
    /// Time window `Δ`.
    pub window: f64,
}

/// `δu = δd + 2M(δc + 2^{−nsize})`, `δ = δu + (1+εd)·2M′·e^{−M·lnd(ε)}/(1+ε)`
/// and `Δ = (1+εd)(1+ε)·2·lni(2β′)/λ`.
pub fn composite_deltas(
    pp: &PhaseParams,
    bi: &BoundInputs,
    nsize: u128,
    lambda: f64,
) -> Result<CompositeDeltas> {
    if !(lambda > 0.0) {
        return Err(invalid("lambda must be positive"));
    }
    let delta_c = core_delta(bi.eps_c, pp.f, pp.m);
    let delta_d = distinct_delta(bi.eps_d, pp.beta_prime, pp.n_nodes, pp.m)?;
    let two_pow_neg_nsize = LogProb::from_ln(-(nsize as f64) * std::f64::consts::LN_2);
    let delta_u = delta_d.add(delta_c.add(two_pow_neg_nsize).scale(2.0 * pp.m as f64));
    let timing = LogProb::from_ln(
        bi.eps_d.ln_1p() + (2.0 * pp.m_prime).ln()
            - pp.m as f64 * lnd(bi.eps)?
            - bi.eps.ln_1p(),
    );
    let delta = delta_u.add(timing);
    let window = (1.0 + bi.eps_d) * (1.0 + bi.eps) * 2.0 * lni(2.0 * pp.beta_prime)? / lambda;
    Ok(CompositeDeltas {
        delta_c,
        delta_d,
        delta_u,
        delta,
        window,
    })
}

/// The four read-rate lower bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    /// Bits per distinct failure within a phase (core theorem).
    pub per_failure_core: f64,
    /// Bits per failure under uniform identifiers.
    pub per_failure_uniform: f64,
    /// Read rate in bits per unit time under Poisson failures.
    pub rrate_poisson: f64,
    /// `(1−β′)/lni(2β′)`, the limit of `rrate/erate`.
    pub rrate_over_erate_asymptotic: f64,
}

pub fn rate_lower_bounds(
    pp: &PhaseParams,
    bi: &BoundInputs,
    nsize: u128,
    lambda: f64,
) -> Result<RateBounds> {
    let bp = pp.beta_prime;
    if !(bp < 0.5) {
        return Err(domain(format!("rate bounds require β′ < 1/2, got {bp}")));
    }
    let nsize = nsize as f64;
    let lni2 = lni(2.0 * bp)?;
    let asymptotic = (1.0 - bp) / lni2;
    let erate = lambda * pp.n_nodes as f64 * nsize;
    Ok(RateBounds {
        per_failure_core: (1.0 - bi.eps_c) * (1.0 - bp) * nsize / (2.0 * bp),
        per_failure_uniform: (1.0 - bi.eps_c) / (1.0 + bi.eps_d) * (1.0 - bp) * nsize / lni2,
        rrate_poisson: (1.0 - bi.eps_c) / ((1.0 + bi.eps_d) * (1.0 + bi.eps)) * asymptotic * erate,
        rrate_over_erate_asymptotic: asymptotic,
    })
}

/// Asymptotic source-data capacity `(1 − erate/(2·rrate))·N·nsize`.
///
/// Read rates below `erate/2` leave no capacity and are rejected; exactly
/// `erate/2` yields zero.
pub fn capacity_bound(erate: f64, rrate: f64, n_nodes: u64, nsize: u128) -> Result<f64> {
    if !(rrate > 0.0) || rrate < erate / 2.0 {
        return Err(domain(format!(
            "rrate ({rrate}) must be at least erate/2 ({})",
            erate / 2.0
        )));
    }
    Ok((1.0 - erate / (2.0 * rrate)) * n_nodes as f64 * nsize as f64)
}

/// Result of evaluating the regenerating-code min-cut sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutSum {
    pub sum: f64,
    pub recoverable_possible: bool,
}

/// `Σ_{i=0}^{k−1} min{(d−i)γ/d, α}` and whether it reaches `dsize`.
pub fn dimakis_cut_sum(rp: &RegeneratingParams, dsize: u128) -> CutSum {
    let d = rp.d as f64;
    let alpha = rp.alpha as f64;
    let sum: f64 = (0..rp.k)
        .map(|i| ((rp.d - i) as f64 * rp.gamma / d).min(alpha))
        .sum();
    CutSum {
        sum,
        recoverable_possible: sum >= dsize as f64,
    }
}

/// `d ·` the cut sum at integer `γ`, computed exactly.
fn scaled_cut_sum(k: u64, d: u64, alpha: u64, gamma: u64) -> u128 {
    let cap = alpha as u128 * d as u128;
    (0..k)
        .map(|i| ((d - i) as u128 * gamma as u128).min(cap))
        .sum()
}

/// Smallest integer `γ` (in bits) whose cut sum reaches `dsize`.
///
/// The sum is non-decreasing in `γ`, so this is a bisection on exact
/// integer arithmetic.
pub fn dimakis_gamma_threshold(n: u64, k: u64, d: u64, alpha: u64, dsize: u128) -> Result<u64> {
    RegeneratingParams::new(n, k, d, alpha, 0.0)?;
    if (k as u128) * (alpha as u128) < dsize {
        return Err(Error::Infeasible(format!(
            "k·α = {} < dsize = {dsize}: no γ suffices",
            k as u128 * alpha as u128
        )));
    }
    let target = dsize * d as u128;
    // every term saturates once (d−k+1)·γ ≥ α·d
    let mut hi = (alpha as u128 * d as u128).div_ceil((d - k + 1) as u128) as u64;
    if scaled_cut_sum(k, d, alpha, 0) >= target {
        return Ok(0);
    }
    let mut lo = 0u64;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if scaled_cut_sum(k, d, alpha, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `Prob[Z_n > α + c] ≤ n · e^{−α²/(2nc²)}`.
pub fn supermartingale_tail(n: u64, c: f64, alpha: f64) -> Result<LogProb> {
    if n == 0 || !(c > 0.0) || !(alpha >= 0.0) {
        return Err(domain("supermartingale_tail requires n ≥ 1, c > 0, α ≥ 0"));
    }
    let n = n as f64;
    Ok(LogProb::from_ln(n.ln() - alpha * alpha / (2.0 * n * c * c)))
}

/// Expected number of failures until the `i`-th new distinct identifier
/// beyond the first, `Σ_{j=1}^{i} N/(N−j)`.
pub fn expected_distinct_progress(n_nodes: u64, i: u64) -> Result<f64> {
    if i < 1 || i >= n_nodes {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 1,
            hi: n_nodes.saturating_sub(1),
        });
    }
    let n = n_nodes as f64;
    Ok((1..=i).map(|j| n / (n - j as f64)).sum())
}
