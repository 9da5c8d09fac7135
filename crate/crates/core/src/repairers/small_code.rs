//! Reactive repair for small codes spread over placement groups.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{precondition, ActCtx, RecoveryLog, RepairStrategy};
use crate::codes::{CodeParams, MdsCode};
use crate::error::{invalid, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;
use crate::rng::{stream, Substream};
use crate::storage::{Bits, BitsRef, Fidelity, Payload, StorageIo, SystemState};

#[derive(Debug, Clone, PartialEq)]
pub struct SmallCodeConfig {
    pub n: usize,
    pub k: usize,
    pub fragment_bits: u64,
    /// Placement-group count; `None` means `100·N/n`.
    pub pgs: Option<usize>,
    /// Time between a failure and the repair of what it erased.
    pub repair_delay: f64,
}

impl SmallCodeConfig {
    pub fn new(n: usize, k: usize, fragment_bits: u64) -> Self {
        SmallCodeConfig {
            n,
            k,
            fragment_bits,
            pgs: None,
            repair_delay: 0.0,
        }
    }

    pub fn pg_count(&self, n_nodes: u64) -> usize {
        self.pgs
            .unwrap_or_else(|| ((100 * n_nodes as usize) as f64 / self.n as f64).round().max(1.0) as usize)
    }

    /// Fragment slots per node for a balanced layout with 25% spare room.
    pub fn default_slots(&self, n_nodes: u64) -> u64 {
        let per_node = (self.pg_count(n_nodes) * self.n).div_ceil(n_nodes as usize) as u64;
        per_node + per_node.div_ceil(4)
    }

    /// A system whose nodes hold `slots` fragments and whose source data is
    /// exactly the systematic part of every placement group.
    pub fn system_params(&self, n_nodes: u64, slots: u64, lambda: f64) -> Result<SystemParams> {
        let nsize = slots as u128 * self.fragment_bits as u128;
        let dsize = (self.pg_count(n_nodes) * self.k) as u128 * self.fragment_bits as u128;
        SystemParams::new(n_nodes, nsize, 0, dsize, lambda)
    }
}

type Slot = Option<(usize, usize)>;

/// Each placement group holds one object as `n` fragments on distinct nodes.
/// When a node fails every fragment it held is rebuilt from `k` surviving
/// fragments of its group and written to a node drawn uniformly among those
/// that hold nothing of the group and have a free slot.
#[derive(Debug, Clone)]
pub struct SmallCode {
    cfg: SmallCodeConfig,
    cp: CodeParams,
    mds: Option<MdsCode>,
    n_nodes: usize,
    holder: Vec<Vec<Slot>>,
    slots: Vec<Vec<Slot>>,
    free: Vec<usize>,
    pending: VecDeque<(f64, usize, usize)>,
    lost: Vec<bool>,
    rng: ChaCha20Rng,
    log: RecoveryLog,
    lost_fragment_bits: u64,
}

impl SmallCode {
    pub fn new(params: &SystemParams, cfg: SmallCodeConfig, seed: u64) -> Result<Self> {
        let cp = CodeParams::new(cfg.n, cfg.k, cfg.fragment_bits)?;
        let n_nodes = params.n_nodes as usize;
        if cfg.n > n_nodes {
            return Err(invalid(format!("code length {} exceeds N = {n_nodes}", cfg.n)));
        }
        if cfg.fragment_bits == 0 {
            return Err(invalid("fragment size must be positive"));
        }
        if !(cfg.repair_delay >= 0.0) {
            return Err(invalid("repair delay must be non-negative"));
        }
        let pgs = cfg.pg_count(params.n_nodes);
        let slot_count = (params.nsize / cfg.fragment_bits as u128) as usize;
        if pgs as u128 * cp.object_size() as u128 != params.dsize {
            return Err(invalid(format!(
                "dsize {} differs from {pgs} groups × {} bits",
                params.dsize,
                cp.object_size()
            )));
        }
        let mut slots = vec![vec![None; slot_count]; n_nodes];
        let mut free = vec![slot_count; n_nodes];
        let mut holder = vec![vec![None; cfg.n]; pgs];
        for (g, frags) in holder.iter_mut().enumerate() {
            for (f, h) in frags.iter_mut().enumerate() {
                let node = (g * cfg.n + f) % n_nodes;
                let s = slots[node]
                    .iter()
                    .position(Option::is_none)
                    .ok_or_else(|| invalid("nodes too small for the placement groups"))?;
                slots[node][s] = Some((g, f));
                free[node] -= 1;
                *h = Some((node, s));
            }
        }
        Ok(SmallCode {
            mds: MdsCode::new(cp).ok(),
            cfg,
            cp,
            n_nodes,
            holder,
            slots,
            free,
            pending: VecDeque::new(),
            lost: vec![false; pgs],
            rng: stream(seed, Substream::Placement),
            log: RecoveryLog::default(),
            lost_fragment_bits: 0,
        })
    }

    pub fn code(&self) -> &CodeParams {
        &self.cp
    }

    /// Bits of fragments erased by failures so far.
    pub fn lost_fragment_bits(&self) -> u64 {
        self.lost_fragment_bits
    }

    /// Present-fragment maps, one per placement group.
    pub fn presence(&self) -> Vec<Vec<bool>> {
        self.holder
            .iter()
            .map(|h| h.iter().map(Option::is_some).collect())
            .collect()
    }

    /// Fragment bits currently stored on each node.
    pub fn stored_bits(&self) -> Vec<u64> {
        self.free
            .iter()
            .zip(&self.slots)
            .map(|(f, s)| (s.len() - f) as u64 * self.cfg.fragment_bits)
            .collect()
    }

    fn offset(&self, slot: usize) -> u64 {
        slot as u64 * self.cfg.fragment_bits
    }

    fn repair(&mut self, g: usize, f: usize, io: &mut dyn StorageIo) -> Result<()> {
        if self.lost[g] || self.holder[g][f].is_some() {
            return Ok(());
        }
        let sources: Vec<(usize, usize, usize)> = self.holder[g]
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.map(|(node, slot)| (i, node, slot)))
            .take(self.cp.k)
            .collect();
        let fb = self.cfg.fragment_bits;
        let mut read = Vec::with_capacity(sources.len());
        for &(i, node, slot) in &sources {
            read.push((i, io.read(node, self.offset(slot), fb)?));
        }
        let payload = match io.fidelity() {
            Fidelity::Symbolic => Payload::Symbolic(fb),
            Fidelity::BitExact => {
                let mds = self
                    .mds
                    .as_ref()
                    .ok_or_else(|| precondition("code parameters unsupported in bit-exact mode"))?;
                let frags: Vec<(usize, &BitsRef)> = read
                    .iter()
                    .map(|(i, p)| (*i, p.bits().expect("bit-exact payload")))
                    .collect();
                Payload::Bits(mds.regenerate(&frags, f)?)
            }
        };
        let candidates: Vec<usize> = (0..self.n_nodes)
            .filter(|&j| self.free[j] > 0 && !self.holder[g].iter().any(|h| h.is_some_and(|(node, _)| node == j)))
            .collect();
        if candidates.is_empty() {
            return Err(precondition(format!("no node can take fragment {f} of group {g}")));
        }
        let node = candidates[self.rng.random_range(0..candidates.len())];
        let slot = self.slots[node]
            .iter()
            .position(Option::is_none)
            .expect("free slot counted");
        io.write(node, self.offset(slot), &payload)?;
        self.slots[node][slot] = Some((g, f));
        self.free[node] -= 1;
        self.holder[g][f] = Some((node, slot));
        Ok(())
    }
}

impl RepairStrategy for SmallCode {
    fn name(&self) -> &'static str {
        "small_code_reactive"
    }

    fn store(&mut self, x: &BitsRef, state: &mut SystemState) -> Result<()> {
        let mds = self
            .mds
            .clone()
            .ok_or_else(|| precondition("code parameters unsupported in bit-exact mode"))?;
        let size = self.cp.object_size() as usize;
        if x.len() != size * self.holder.len() {
            return Err(invalid("source size does not match the placement groups"));
        }
        for g in 0..self.holder.len() {
            let frags = mds.encode(&x[g * size..(g + 1) * size])?;
            for (f, bits) in frags.into_iter().enumerate() {
                let (node, slot) = self.holder[g][f].expect("fresh layout is complete");
                state.write(node, self.offset(slot), &Payload::Bits(bits))?;
            }
        }
        Ok(())
    }

    fn recover(&self, state: &SystemState) -> Result<Bits> {
        let mds = self
            .mds
            .as_ref()
            .ok_or_else(|| precondition("code parameters unsupported in bit-exact mode"))?;
        let size = self.cp.object_size() as usize;
        let fb = self.cfg.fragment_bits as usize;
        let mut out = Bits::with_capacity(size * self.holder.len());
        for h in &self.holder {
            let frags: Vec<(usize, &BitsRef)> = h
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    s.and_then(|(node, slot)| {
                        state
                            .node_bits(node)
                            .map(|c| (i, &c[slot * fb..(slot + 1) * fb]))
                    })
                })
                .take(self.cp.k)
                .collect();
            if frags.len() == self.cp.k {
                out.extend_from_bitslice(&mds.decode(&frags)?);
            } else {
                out.resize(out.len() + size, false);
            }
        }
        Ok(out)
    }

    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()> {
        let node = ev.node;
        for s in 0..self.slots[node].len() {
            let Some((g, f)) = self.slots[node][s].take() else { continue };
            self.free[node] += 1;
            self.holder[g][f] = None;
            self.lost_fragment_bits += self.cfg.fragment_bits;
            if self.lost[g] {
                continue;
            }
            let present = self.holder[g].iter().filter(|h| h.is_some()).count();
            if present < self.cp.k {
                self.lost[g] = true;
                self.log.record(ev.time, g as u64);
            } else {
                self.pending.push_back((ev.time + self.cfg.repair_delay, g, f));
            }
        }
        Ok(())
    }

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()> {
        while let Some(&(due, g, f)) = self.pending.front() {
            if due >= ctx.until {
                break;
            }
            self.pending.pop_front();
            io.advance(due.max(ctx.from));
            self.repair(g, f, io)?;
        }
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.log
    }
}
