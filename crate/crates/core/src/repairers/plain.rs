//! Strategies over the plain layout: source bits fill global memory first
//! and then the nodes in order, with no redundancy.

use std::collections::BTreeSet;

use rand::Rng;

use super::{precondition, ActCtx, RecoveryLog, RepairStrategy};
use crate::error::{invalid, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;
use crate::rng::{stream, trial_seed, Substream};
use crate::storage::{Bits, BitsRef, Fidelity, Payload, StorageIo, SystemState};

/// Storer and recoverer for the plain layout.
#[derive(Debug, Clone, Copy)]
pub struct PlainLayout {
    params: SystemParams,
}

impl PlainLayout {
    pub fn new(params: SystemParams) -> Self {
        PlainLayout { params }
    }

    fn in_global(&self) -> usize {
        self.params.vsize.min(self.params.dsize) as usize
    }

    /// Number of nodes holding source bits.
    pub fn data_nodes(&self) -> usize {
        let rest = self.params.dsize - self.in_global() as u128;
        rest.div_ceil(self.params.nsize) as usize
    }

    pub fn store(&self, x: &BitsRef, state: &mut SystemState) -> Result<()> {
        if x.len() as u128 != self.params.dsize {
            return Err(invalid(format!("source has {} bits, dsize is {}", x.len(), self.params.dsize)));
        }
        if state.fidelity() != Fidelity::BitExact {
            return Err(precondition("storing source bits needs bit-exact mode"));
        }
        let v = self.in_global();
        state.store_global(&x[..v])?;
        let nsize = self.params.nsize as usize;
        for (j, chunk) in x[v..].chunks(nsize).enumerate() {
            state.store_node(j, chunk)?;
        }
        Ok(())
    }

    /// Concatenate global memory and node contents up to `dsize` bits.
    pub fn recover(&self, state: &SystemState) -> Bits {
        let d = self.params.dsize as usize;
        let mut out = Bits::with_capacity(d);
        out.extend_from_bitslice(&state.global()[..self.in_global().min(state.global().len())]);
        let mut j = 0;
        while out.len() < d {
            let take = (d - out.len()).min(self.params.nsize as usize);
            match state.node_bits(j) {
                Some(c) => out.extend_from_bitslice(&c[..take]),
                None => out.resize(out.len() + take, false),
            }
            j += 1;
        }
        out
    }
}

/// Loss tracking for strategies that never rebuild plain-layout data.
#[derive(Debug, Clone)]
struct PlainLoss {
    data_nodes: usize,
    lost: BTreeSet<usize>,
    log: RecoveryLog,
}

impl PlainLoss {
    fn new(params: &SystemParams) -> Self {
        PlainLoss {
            data_nodes: PlainLayout::new(*params).data_nodes(),
            lost: BTreeSet::new(),
            log: RecoveryLog::default(),
        }
    }

    fn on_failure(&mut self, ev: &FailureEvent) {
        if ev.node < self.data_nodes && self.lost.insert(ev.node) {
            self.log.record(ev.time, ev.node as u64);
        }
    }
}

/// Never reads or writes.
#[derive(Debug, Clone)]
pub struct Starve {
    loss: PlainLoss,
}

impl Starve {
    pub fn new(params: &SystemParams) -> Self {
        Starve { loss: PlainLoss::new(params) }
    }
}

impl RepairStrategy for Starve {
    fn name(&self) -> &'static str {
        "starve"
    }

    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()> {
        self.loss.on_failure(ev);
        Ok(())
    }

    fn act(&mut self, _ctx: &ActCtx<'_>, _io: &mut dyn StorageIo) -> Result<()> {
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.loss.log
    }
}

/// What the equal-read repairer does with the bits it reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqualReadWrite {
    Nothing,
    /// Write the bits read from node `j` to node `j+1 mod N`.
    Rotate,
}

/// Reads exactly `γ/N` bits from every node between consecutive failures.
#[derive(Debug, Clone)]
pub struct EqualRead {
    n_nodes: usize,
    per_node: u64,
    write: EqualReadWrite,
    loss: PlainLoss,
}

impl EqualRead {
    pub fn new(params: &SystemParams, gamma: u64, write: EqualReadWrite) -> Result<Self> {
        let n = params.n_nodes;
        if gamma % n != 0 {
            return Err(invalid(format!("γ = {gamma} is not a multiple of N = {n}")));
        }
        if (gamma / n) as u128 > params.nsize {
            return Err(invalid("γ/N exceeds nsize"));
        }
        Ok(EqualRead {
            n_nodes: n as usize,
            per_node: gamma / n,
            write,
            loss: PlainLoss::new(params),
        })
    }
}

impl RepairStrategy for EqualRead {
    fn name(&self) -> &'static str {
        "equal_read"
    }

    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()> {
        self.loss.on_failure(ev);
        Ok(())
    }

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()> {
        if self.per_node == 0 {
            return Ok(());
        }
        io.advance(ctx.from);
        for j in 0..self.n_nodes {
            let data = io.read(j, 0, self.per_node)?;
            if self.write == EqualReadWrite::Rotate {
                io.write((j + 1) % self.n_nodes, 0, &data)?;
            }
        }
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.loss.log
    }
}

/// Randomised strategy whose choices depend on its seed, the failure count
/// and the bits it reads. Used to exercise replay.
#[derive(Debug, Clone)]
pub struct Scrambler {
    seed: u64,
    loss: PlainLoss,
}

impl Scrambler {
    pub fn new(params: &SystemParams, seed: u64) -> Self {
        Scrambler {
            seed,
            loss: PlainLoss::new(params),
        }
    }
}

impl RepairStrategy for Scrambler {
    fn name(&self) -> &'static str {
        "scrambler"
    }

    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()> {
        self.loss.on_failure(ev);
        Ok(())
    }

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()> {
        let mut rng = stream(trial_seed(self.seed, ctx.history.len() as u64), Substream::Strategy);
        let n = io.n_nodes();
        let nsize = io.node_size();
        let span = if ctx.until.is_finite() { ctx.until - ctx.from } else { 1.0 };
        let mut times: Vec<f64> = (0..rng.random_range(1..=4))
            .map(|_| ctx.from + rng.random::<f64>() * span)
            .collect();
        times.sort_by(f64::total_cmp);
        for t in times {
            io.advance(t);
            let node = rng.random_range(0..n);
            let len = rng.random_range(0..=nsize.min(8));
            let off = rng.random_range(0..=nsize - len);
            let got = io.read(node, off, len)?;
            let target = rng.random_range(0..n);
            let Some(bits) = got.bits().map(|b| b.to_bitvec()) else {
                io.write(target, rng.random_range(0..=nsize - len), &Payload::Symbolic(len))?;
                continue;
            };
            let ones = bits.count_ones();
            let vsize = io.global().len();
            if vsize > 0 {
                let start = (ones * 7 + rng.random_range(0..vsize)) % vsize;
                let g = io.global_mut();
                for (i, b) in bits.iter().enumerate() {
                    let idx = (start + i) % vsize;
                    let cur = g[idx];
                    g.set(idx, cur ^ *b);
                }
            }
            // odd parity writes back what was read, even parity a slice of V
            let out: Bits = if ones % 2 == 1 || vsize == 0 {
                bits
            } else {
                let g = io.global();
                (0..len as usize).map(|i| g[(ones + i) % vsize]).collect()
            };
            let off2 = rng.random_range(0..=nsize - len);
            io.write(target, off2, &Payload::Bits(out))?;
        }
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.loss.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{StateConfig, Substrate};

    #[test]
    fn plain_layout_round_trip() {
        let p = SystemParams::new(3, 8, 4, 20, 1.0).unwrap();
        let mut s = SystemState::new(p, StateConfig::bit_exact()).unwrap();
        let x: Bits = (0..20).map(|i| i % 3 == 0).collect();
        let layout = PlainLayout::new(p);
        layout.store(&x, &mut s).unwrap();
        assert_eq!(layout.data_nodes(), 2);
        assert_eq!(layout.recover(&s), x);
        s.fail(&FailureEvent { index: 0, time: 0.0, node: 1 }).unwrap();
        assert_ne!(layout.recover(&s), x);
    }

    #[test]
    fn equal_read_needs_divisible_gamma() {
        let p = SystemParams::new(8, 160, 0, 960, 1.0).unwrap();
        assert!(EqualRead::new(&p, 321, EqualReadWrite::Nothing).is_err());
        assert!(EqualRead::new(&p, 8 * 161, EqualReadWrite::Nothing).is_err());
        assert!(EqualRead::new(&p, 0, EqualReadWrite::Nothing).is_ok());
    }

    #[test]
    fn starve_loses_on_data_node() {
        let p = SystemParams::new(4, 8, 0, 16, 1.0).unwrap();
        let mut s = Starve::new(&p);
        s.on_failure(&FailureEvent { index: 0, time: 1.0, node: 3 }).unwrap();
        assert!(s.recovery().recoverable());
        s.on_failure(&FailureEvent { index: 1, time: 2.0, node: 1 }).unwrap();
        assert_eq!(s.recovery().first_loss_time(), Some(2.0));
    }
}
