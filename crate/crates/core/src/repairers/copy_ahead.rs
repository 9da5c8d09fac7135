//! The advance-knowledge repairer: one spare node, and before each failure
//! the doomed node is copied onto the spare.

use super::{precondition, ActCtx, RecoveryLog, RepairStrategy};
use crate::error::{invalid, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;
use crate::storage::{Bits, BitsRef, StorageIo, SystemState};

#[derive(Debug, Clone)]
pub struct CopyAhead {
    future: Vec<FailureEvent>,
    nsize: u64,
    in_global: usize,
    dsize: usize,
    empty: usize,
    block_at: Vec<usize>,
    copied: Option<u64>,
    log: RecoveryLog,
}

impl CopyAhead {
    /// Refuses to run without the failure sequence.
    pub fn new(params: &SystemParams, future: Option<Vec<FailureEvent>>) -> Result<Self> {
        let future = future.ok_or_else(|| precondition("copy-ahead needs the future failure sequence"))?;
        let n = params.n_nodes as usize;
        if params.dsize > params.vsize + (n as u128 - 1) * params.nsize {
            return Err(invalid("copy-ahead keeps one node empty: dsize must fit in N−1 nodes plus V"));
        }
        let empty = future.first().map_or(n - 1, |e| e.node);
        Ok(CopyAhead {
            nsize: params.nsize as u64,
            in_global: params.vsize.min(params.dsize) as usize,
            dsize: params.dsize as usize,
            empty,
            block_at: (0..n).filter(|&j| j != empty).collect(),
            copied: None,
            future,
            log: RecoveryLog::default(),
        })
    }

    /// Storage overhead the layout actually uses: one node in `N`.
    pub fn overhead(&self) -> f64 {
        1.0 / (self.block_at.len() + 1) as f64
    }

    pub fn empty_node(&self) -> usize {
        self.empty
    }
}

impl RepairStrategy for CopyAhead {
    fn name(&self) -> &'static str {
        "copy_ahead_oracle"
    }

    fn store(&mut self, x: &BitsRef, state: &mut SystemState) -> Result<()> {
        if x.len() != self.dsize {
            return Err(invalid("source size differs from dsize"));
        }
        state.store_global(&x[..self.in_global])?;
        for (b, chunk) in x[self.in_global..].chunks(self.nsize as usize).enumerate() {
            state.store_node(self.block_at[b], chunk)?;
        }
        Ok(())
    }

    fn recover(&self, state: &SystemState) -> Result<Bits> {
        let mut out = Bits::with_capacity(self.dsize);
        out.extend_from_bitslice(&state.global()[..self.in_global]);
        for &node in &self.block_at {
            if out.len() >= self.dsize {
                break;
            }
            let take = (self.dsize - out.len()).min(self.nsize as usize);
            match state.node_bits(node) {
                Some(c) => out.extend_from_bitslice(&c[..take]),
                None => out.resize(out.len() + take, false),
            }
        }
        Ok(out)
    }

    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()> {
        let expected = self.future.get(ev.index as usize);
        if expected.is_none_or(|f| f.node != ev.node) {
            return Err(precondition(format!("failure {} differs from the provided future", ev.index)));
        }
        if ev.node == self.empty {
            return Ok(());
        }
        let b = self
            .block_at
            .iter()
            .position(|&j| j == ev.node)
            .expect("every non-empty node holds a block");
        if self.copied == Some(ev.index) {
            self.block_at[b] = self.empty;
        } else {
            self.log.record(ev.time, b as u64);
        }
        self.empty = ev.node;
        Ok(())
    }

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()> {
        let idx = ctx.history.len();
        let Some(next) = self.future.get(idx).copied() else { return Ok(()) };
        if next.node == self.empty || self.copied == Some(idx as u64) {
            return Ok(());
        }
        io.advance(ctx.from);
        let data = io.read(next.node, 0, self.nsize)?;
        io.write(self.empty, 0, &data)?;
        self.copied = Some(idx as u64);
        Ok(())
    }

    fn recovery(&self) -> &RecoveryLog {
        &self.log
    }
}
