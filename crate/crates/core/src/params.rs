//! System, phase and bound parameter sets.
//!
//! Bit quantities are exact integers. `N · nsize` overflows 64 bits at the
//! scales of interest (10^21 bits of capacity), so sizes are carried as
//! `u128`.

use crate::bounds::lni;
use crate::error::{invalid, Error, Result};

/// Static description of a storage system and its per-node failure rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub n_nodes: u64,
    pub nsize: u128,
    pub vsize: u128,
    pub dsize: u128,
    pub lambda: f64,
}

impl SystemParams {
    pub fn new(n_nodes: u64, nsize: u128, vsize: u128, dsize: u128, lambda: f64) -> Result<Self> {
        let p = SystemParams {
            n_nodes,
            nsize,
            vsize,
            dsize,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(invalid(format!("N must be at least 2, got {}", self.n_nodes)));
        }
        if self.nsize < self.n_nodes as u128 {
            return Err(invalid(format!(
                "nsize ({}) must be at least N ({})",
                self.nsize, self.n_nodes
            )));
        }
        let capacity = self.capacity();
        if self.vsize >= capacity {
            return Err(invalid("vsize must be smaller than N·nsize"));
        }
        if self.dsize == 0 || self.dsize > capacity {
            return Err(invalid(format!(
                "dsize must lie in 1..=N·nsize ({}), got {}",
                capacity, self.dsize
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Total node capacity `N · nsize`.
    pub fn capacity(&self) -> u128 {
        self.n_nodes as u128 * self.nsize
    }

    /// Size of the whole system state, `vsize + N · nsize`.
    pub fn ssize(&self) -> u128 {
        self.vsize + self.capacity()
    }

    /// Storage overhead `1 − dsize/(N·nsize)`.
    pub fn beta(&self) -> f64 {
        (self.capacity() - self.dsize) as f64 / self.capacity() as f64
    }

    /// True when the overhead exceeds one half, the regime the bounds exclude.
    pub fn beta_exceeds_half(&self) -> bool {
        2 * (self.capacity() - self.dsize) > self.capacity()
    }

    /// Erasure rate `λ · N · nsize` in bits per unit time.
    pub fn erate(&self) -> f64 {
        self.lambda * self.n_nodes as f64 * self.nsize as f64
    }
}

/// Phase-level overhead proxies derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseParams {
    pub n_nodes: u64,
    pub beta: f64,
    pub osize: u128,
    pub f: u64,
    pub beta_prime: f64,
    pub m: u64,
    /// `lni(2β′)·N`; infinite when `β′ = 1/2`.
    pub m_prime: f64,
}

impl PhaseParams {
    /// Exact check of `β ≤ β′ ≤ β + vsize/(N·nsize) + 1/N`, done in integers:
    /// the lower side is `N·nsize − dsize ≤ F·nsize` and the upper side is
    /// `F·nsize ≤ osize + nsize`.
    pub fn bracket_holds(&self, sys: &SystemParams) -> bool {
        let fn_bits = self.f as u128 * sys.nsize;
        let lower = sys.capacity() - sys.dsize <= fn_bits;
        let upper = fn_bits <= self.osize + sys.nsize;
        lower && upper
    }

    /// Upper end of the β′ bracket as a real.
    pub fn bracket_upper(&self, sys: &SystemParams) -> f64 {
        self.beta + sys.vsize as f64 / sys.capacity() as f64 + 1.0 / sys.n_nodes as f64
    }
}

/// Derive `osize`, `F`, `β′`, `M` and `M′` for a system.
pub fn derive_phase_params(p: &SystemParams) -> Result<PhaseParams> {
    p.validate()?;
    let osize = p.capacity() - p.dsize + p.vsize;
    if osize == 0 {
        return Err(invalid("no storage overhead: osize = 0 gives F = 0"));
    }
    let f = osize.div_ceil(p.nsize);
    let m = 2 * f;
    if m > p.n_nodes as u128 {
        return Err(invalid(format!(
            "phase length M = 2F = {} exceeds N = {} (β′ > 1/2)",
            m, p.n_nodes
        )));
    }
    let f = f as u64;
    let beta_prime = f as f64 / p.n_nodes as f64;
    let m_prime = if 2 * f == p.n_nodes {
        f64::INFINITY
    } else {
        lni(2.0 * beta_prime)? * p.n_nodes as f64
    };
    Ok(PhaseParams {
        n_nodes: p.n_nodes,
        beta: p.beta(),
        osize,
        f,
        beta_prime,
        m: 2 * f,
        m_prime,
    })
}

/// Slack parameters of the probabilistic bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub eps_c: f64,
    pub eps_d: f64,
    pub eps: f64,
}

impl BoundInputs {
    pub fn new(eps_c: f64, eps_d: f64, eps: f64) -> Result<Self> {
        if !(eps_c > 0.0 && eps_c <= 1.0) {
            return Err(invalid(format!("eps_c must lie in (0, 1], got {eps_c}")));
        }
        if !(eps_d > 0.0 && eps_d.is_finite()) {
            return Err(invalid(format!("eps_d must be positive, got {eps_d}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(BoundInputs { eps_c, eps_d, eps })
    }
}

/// Parameters of a single-object regenerating-code repair model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegeneratingParams {
    pub n: u64,
    pub k: u64,
    pub d: u64,
    pub alpha: u64,
    pub gamma: f64,
}

impl RegeneratingParams {
    pub fn new(n: u64, k: u64, d: u64, alpha: u64, gamma: f64) -> Result<Self> {
        if k == 0 || k > d || d + 1 > n {
            return Err(Error::InvalidParams(format!(
                "need 1 ≤ k ≤ d ≤ n−1, got n={n} k={k} d={d}"
            )));
        }
        if alpha == 0 {
            return Err(invalid("alpha must be positive"));
        }
        if !(gamma >= 0.0) {
            return Err(invalid("gamma must be non-negative"));
        }
        Ok(RegeneratingParams { n, k, d, alpha, gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn practical() -> SystemParams {
        SystemParams::new(
            100_000,
            10u128.pow(16),
            10u128.pow(13),
            9 * 10u128.pow(20),
            1.0 / 3.0,
        )
        .unwrap()
    }

    #[test]
    fn practical_setting_phase_params() {
        let sys = practical();
        let pp = derive_phase_params(&sys).unwrap();
        assert_eq!(pp.f, 10_001);
        assert_eq!(pp.m, 20_002);
        assert!((pp.beta_prime - 0.10001).abs() < 1e-15);
        assert!((pp.beta - 0.1).abs() < 1e-15);
        assert!(pp.bracket_holds(&sys));
    }

    #[test]
    fn small_hand_example() {
        let sys = SystemParams::new(8, 160, 0, 960, 1.0).unwrap();
        let pp = derive_phase_params(&sys).unwrap();
        assert_eq!(pp.osize, 320);
        assert_eq!(pp.f, 2);
        assert_eq!(pp.beta_prime, 0.25);
        assert_eq!(pp.m, 4);
    }

    #[test]
    fn zero_overhead_rejected() {
        let sys = SystemParams::new(8, 160, 0, 8 * 160, 1.0).unwrap();
        assert!(matches!(
            derive_phase_params(&sys),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn overhead_above_half_rejected() {
        // triplication: β = 2/3
        let sys = SystemParams::new(99, 300, 0, 99 * 100, 1.0).unwrap();
        assert!(sys.beta_exceeds_half());
        assert!(derive_phase_params(&sys).is_err());
    }

    #[test]
    fn full_phase_allows_half() {
        let sys = SystemParams::new(2, 5, 2, 8, 1.0).unwrap();
        let pp = derive_phase_params(&sys).unwrap();
        assert_eq!((pp.f, pp.m), (1, 2));
        assert!(pp.m_prime.is_infinite());
    }

    #[test]
    fn system_invariants() {
        assert!(SystemParams::new(1, 10, 0, 5, 1.0).is_err());
        assert!(SystemParams::new(10, 9, 0, 5, 1.0).is_err());
        assert!(SystemParams::new(10, 10, 100, 5, 1.0).is_err());
        assert!(SystemParams::new(10, 10, 0, 101, 1.0).is_err());
        assert!(SystemParams::new(10, 10, 0, 50, 0.0).is_err());
        assert!(BoundInputs::new(0.0, 0.1, 0.1).is_err());
        assert!(BoundInputs::new(1.0, 0.1, 0.1).is_ok());
        assert!(RegeneratingParams::new(5, 3, 5, 10, 1.0).is_err());
    }
}
