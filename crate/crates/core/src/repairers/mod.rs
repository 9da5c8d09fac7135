//! Repair strategies. A strategy is told about failures as they happen and
//! is given the interval between consecutive failures to act in; all of its
//! node traffic goes through [`StorageIo`], which charges reads.

mod copy_ahead;
mod liquid;
mod plain;
mod small_code;

pub use copy_ahead::CopyAhead;
pub use liquid::{Liquid, LiquidConfig, Pacing};
pub use plain::{EqualRead, EqualReadWrite, PlainLayout, Scrambler, Starve};
pub use small_code::{SmallCode, SmallCodeConfig};

use crate::codes::{recoverable, CodeParams};
use crate::error::{Error, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;
use crate::storage::{Bits, BitsRef, StorageIo, SystemState};

/// The interval a strategy may act in: `[from, until)`, after the failures
/// in `history` and before the next one.
#[derive(Debug, Clone, Copy)]
pub struct ActCtx<'a> {
    pub from: f64,
    pub until: f64,
    pub history: &'a [FailureEvent],
}

/// An object became unrecoverable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEvent {
    pub time: f64,
    pub object: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecoveryLog {
    losses: Vec<LossEvent>,
}

impl RecoveryLog {
    pub fn record(&mut self, time: f64, object: u64) {
        self.losses.push(LossEvent { time, object });
    }

    pub fn losses(&self) -> &[LossEvent] {
        &self.losses
    }

    pub fn recoverable(&self) -> bool {
        self.losses.is_empty()
    }

    /// Whether the data was still recoverable at time `t`.
    pub fn recoverable_at(&self, t: f64) -> bool {
        self.first_loss_time().is_none_or(|l| l > t)
    }

    pub fn first_loss_time(&self) -> Option<f64> {
        self.losses.first().map(|l| l.time)
    }
}

pub trait RepairStrategy: Send {
    fn name(&self) -> &'static str;

    /// Lay out source data `x` (bit-exact mode); uncharged preprocessing.
    fn store(&mut self, x: &BitsRef, state: &mut SystemState) -> Result<()> {
        PlainLayout::new(state_params(state)).store(x, state)
    }

    /// Best-effort recovery of the source data from the current state.
    fn recover(&self, state: &SystemState) -> Result<Bits> {
        Ok(PlainLayout::new(state_params(state)).recover(state))
    }

    /// Bookkeeping at a failure; no node traffic.
    fn on_failure(&mut self, ev: &FailureEvent) -> Result<()>;

    fn act(&mut self, ctx: &ActCtx<'_>, io: &mut dyn StorageIo) -> Result<()>;

    fn recovery(&self) -> &RecoveryLog;
}

fn state_params(state: &SystemState) -> SystemParams {
    *StorageIo::params(state)
}

/// Per-object recoverability of presence maps, and whether all objects are
/// recoverable.
pub fn recoverability_check(presence: &[Vec<bool>], cp: &CodeParams) -> (Vec<bool>, bool) {
    let per: Vec<bool> = presence.iter().map(|p| recoverable(p, cp)).collect();
    let all = per.iter().all(|&r| r);
    (per, all)
}

/// Strategy selection as it appears in scenario configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    SmallCode(SmallCodeConfig),
    Liquid(LiquidConfig),
    EqualRead { gamma: u64, write: EqualReadWrite },
    CopyAhead,
    Starve,
    Scrambler,
}

impl StrategySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            StrategySpec::SmallCode(_) => "small_code_reactive",
            StrategySpec::Liquid(_) => "liquid_lazy",
            StrategySpec::EqualRead { .. } => "equal_read",
            StrategySpec::CopyAhead => "copy_ahead_oracle",
            StrategySpec::Starve => "starve",
            StrategySpec::Scrambler => "scrambler",
        }
    }

    /// Instantiate for a system. `future` is consulted only by the
    /// copy-ahead oracle, which refuses to run without it.
    pub fn build(
        &self,
        params: &SystemParams,
        seed: u64,
        future: Option<&[FailureEvent]>,
    ) -> Result<Box<dyn RepairStrategy>> {
        Ok(match self {
            StrategySpec::SmallCode(c) => Box::new(SmallCode::new(params, c.clone(), seed)?),
            StrategySpec::Liquid(c) => Box::new(Liquid::new(params, c.clone())?),
            StrategySpec::EqualRead { gamma, write } => Box::new(EqualRead::new(params, *gamma, *write)?),
            StrategySpec::CopyAhead => Box::new(CopyAhead::new(params, future.map(|f| f.to_vec()))?),
            StrategySpec::Starve => Box::new(Starve::new(params)),
            StrategySpec::Scrambler => Box::new(Scrambler::new(params, seed)),
        })
    }
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
