//! Lazy repair with one large code spanning all nodes.

use super::{precondition, ActCtx, RecoveryLog, RepairStrategy};
use crate::codes::{CodeParams, MdsCode};
use crate::error::{invalid, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;
use crate::storage::{Bits, BitsRef, Fidelity, Payload, StorageIo, SystemState};

/// How fast the round-robin repair pass advances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// One full pass over all objects every `pass_period` time units.
    Time { pass_period: f64 },
    /// One full pass every `per_pass` failures: after each failure the next
    /// `objects/per_pass` objects (in round-robin order) are processed.
    Failures { per_pass: u64 },
    /// Never repair.
    Never,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiquidConfig {
    pub objects: usize,
    /// `None` picks a full pass per `r/2` expected failures.
    pub pacing: Option<Pacing>,
}

impl LiquidConfig {
    /// A system of `n_nodes` nodes with `r` repair fragments per object,
    /// `objects` objects and `fragment_bits`-bit fragments.
    pub fn system_params(&self, n_nodes: u64, r: u64, fragment_bits: u64, lambda: f64) -> Result<SystemParams> {
        if r >= n_nodes {
            return Err(invalid("need r < N"));
        }
        let nsize = self.objects as u128 * fragment_bits as u128;
        SystemParams::new(n_nodes, nsize, 0, nsize * (n_nodes - r) as u128, lambda)
    }
}

/// Every node holds fragment `j` of every object at offset
/// `object·fragment_bits`. Objects are visited round-robin; a visited
/// object with missing fragments is rebuilt by reading any `k` present
/// fragments and rewriting all missing ones.
#[derive(Debug, Clone)]
pub struct Liquid {
    cp: CodeParams,
    mds: Option<MdsCode>,
    pacing: Pacing,
    objects: usize,
    missing: Vec<Vec<bool>>,
    missing_count: Vec<usize>,
    lost: Vec<bool>,
    visits: u64,
    start: Option<f64>,
    max_missing: usize,
    log: RecoveryLog,
}

impl Liquid {
    pub fn new(params: &SystemParams, cfg: LiquidConfig) -> Result<Self> {
        let n = params.n_nodes as usize;
        let objects = cfg.objects;
        if objects == 0 {
            return Err(invalid("liquid layout needs at least one object"));
        }
        if params.vsize != 0 {
            return Err(invalid("liquid layout keeps nothing in global memory"));
        }
        if params.nsize % objects as u128 != 0 {
            return Err(invalid("nsize must be a multiple of the object count"));
        }
        let fb = params.nsize / objects as u128;
        if params.dsize % (objects as u128 * fb) != 0 {
            return Err(invalid("dsize must be a whole number of fragments per object"));
        }
        let k = (params.dsize / (objects as u128 * fb)) as usize;
        let cp = CodeParams::new(n, k, fb as u64)?;
        let r = cp.r() as f64;
        let pacing = cfg.pacing.unwrap_or(Pacing::Time {
            pass_period: (r / 2.0) / (params.lambda * n as f64),
        });
        match pacing {
            Pacing::Time { pass_period } if !(pass_period > 0.0) => {
                return Err(invalid("pass period must be positive"))
            }
            Pacing::Failures { per_pass: 0 } => return Err(invalid("failures per pass must be positive")),
            _ => {}
        }
        Ok(Liquid {
            mds: MdsCode::new(cp).ok(),
            cp,
            pacing,
            objects,
            missing: vec![vec![false; n]; objects],
            missing_count: vec![0; objects],
            lost: vec![false; objects],
            visits: 0,
            start: None,
            max_missing: 0,
            log: RecoveryLog::default(),
        })
    }

    pub fn code(&self) -> &CodeParams {
        &self.cp
    }

    pub fn pacing(&self) -> Pacing {
        self.pacing
    }

    /// Largest number of missing fragments any object had when visited.
    pub fn max_missing(&self) -> usize {
        self.max_missing
    }

    pub fn presence(&self) -> Vec<Vec<bool>> {
        self.missing
            .iter()
            .map(|m| m.iter().map(|x| !x).collect())
            .collect()
    }

    fn offset(&self, object: usize) -> u64 {
        object as u64 * self.cp.fragment_size
    }

    fn visit(&mut self, o: usize, io: &mut dyn StorageIo) -> Result<()> {
        if self.lost[o] || self.missing_count[o] == 0 {
            return Ok(());
        }
        self.max_missing = self.max_missing.max(self.missing_count[o]);
        let fb = self.cp.fragment_size;
        let sources: Vec<usize> = (0..self.cp.n).filter(|&j| !self.missing[o][j]).take(self.cp.k).collect();
        let mut read = Vec::with_capacity(sources.len());
        for &j in &sources {
            read.push((j, io.read(j, self.offset(o), fb)?));
        }
        let targets: Vec<usize> = (0..self.cp.n).filter(|&j| self.missing[o][j]).collect();
        match io.fidelity() {
            Fidelity::Symbolic => {
                for &j in &targets {
                    io.write(j, self.offset(o), &Payload::Symbolic(fb))?;
                }
            }
            Fidelity::BitExact => {
                let mds = self
                    .mds
                    .as_ref()
                    .ok_or_else(|| precondition("code parameters unsupported in bit-exact mode"))?;
                let frags: Vec<(usize, &BitsRef)> = read
                    .iter()
                    .map(|(j, p)| (*j, p.bits().expect("bit-exact payload")))
                    .collect();
                let all = mds.encode(&mds.decode(&frags)?)?;
                for &j in &targets {
                    io.write(j, self.offset(o), &Payload::Bits(all[j].clone()))?;
                }
            }
        }
        self.missing[o].iter_mut().for_each(|m| *m = false);
        self.missing_count[o] = 0;
        Ok(())
    }

    fn visit_next(&mut self, io: &mut dyn StorageIo) -> Result<()> {
        let o = (self.visits % self.objects as u64) as usize;
        self.visits += 1;
        self.visit(o, io)
    }
}

impl RepairStrategy for Liquid {
    fn name(&self) -> &'static str {
        "liquid_lazy"
    }

    fn store(&mut self, x: &BitsRef, state: &mut SystemState) -> Result<()> {
        let mds = self
            .mds
            .clone()
            .ok_or_else(|| precondition("code parameters unsupported in bit-exact mode"))?;
        let size = self.cp.object_size() as usize;
        if x.len() != size * self.objects {
            return Err(invalid("source size does not match the object layout"));
        }
        for o in 0..self.objects {
            for (j, bits) in mds.encode(&x[o * size..(o + 1) * size])?.into_iter().enumerate() {
                state.write(j, self.offset(o), &Payload::Bits(bits))?;
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
        let fb = self.cp.fragment_size as usize;
        let mut out = Bits::with_capacity(size * self.objects);
        for o in 0..self.objects {
            let frags: Vec<(usize, &BitsRef)> = (0..self.cp.n)
                .filter(|&j| !self.missing[o][j])
                .take(self.cp.k)
                .filter_map(|j| state.node_bits(j).map(|c| (j, &c[o * fb..(o + 1) * fb])))
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
        self.start.get_or_insert(ev.time);
        let r = self.cp.r();
        for o in 0..self.objects {
            if !self.missing[o][ev.node] {
                self.missing[o][ev.node] = true;
                self.missing_count[o] += 1;
                if self.missing_count[o] > r && !self.lost[o] {
                    self.lost[o] = true;
                    self.log.record(ev.time, o as u64);
                }
            }
        }
        Ok(())
    }

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()> {
        match self.pacing {
            Pacing::Never => {}
            Pacing::Failures { per_pass } => {
                io.advance(ctx.from);
                let done = ctx.history.len() as u128;
                let target = (done * self.objects as u128 / per_pass as u128) as u64;
                while self.visits < target {
                    self.visit_next(io)?;
                }
            }
            Pacing::Time { pass_period } => {
                let Some(start) = self.start else { return Ok(()) };
                let step = pass_period / self.objects as f64;
                loop {
                    let t = start + self.visits as f64 * step;
                    if t >= ctx.until {
                        break;
                    }
                    io.advance(t.max(ctx.from));
                    self.visit_next(io)?;
                }
            }
        }
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.log
    }
}
