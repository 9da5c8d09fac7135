//! Simulation driver and per-run metrics.

use std::collections::HashSet;
use std::sync::Arc;

use crate::bounds::{composite_deltas, lni};
use crate::error::{invalid, Result};
use crate::failure::{gen_periodic, gen_poisson, FailureEvent, PeriodicIds};
use crate::params::{derive_phase_params, BoundInputs, SystemParams};
use crate::repairers::{ActCtx, RepairStrategy, StrategySpec};
use crate::storage::{StateConfig, Substrate, SystemState};

/// Run `events` through `strategy` on `state`.
///
/// Between failures `i−1` and `i` the strategy acts over `[t_{i−1}, t_i)`;
/// the failure then erases its node and the strategy is notified.
/// `stop(i, state)` is consulted just before failure `i`; returning true
/// ends the run after that failure. With `end` set the strategy also acts
/// over `[t_last, end)`. Returns the number of failures applied.
pub fn drive<S: Substrate>(
    state: &mut S,
    strategy: &mut dyn RepairStrategy,
    events: &[FailureEvent],
    end: Option<f64>,
    mut stop: impl FnMut(usize, &S) -> bool,
) -> Result<usize> {
    for (i, ev) in events.iter().enumerate() {
        if i > 0 {
            let ctx = ActCtx {
                from: events[i - 1].time,
                until: ev.time,
                history: &events[..i],
            };
            strategy.act(&ctx, state)?;
        }
        let halt = stop(i, state);
        state.fail(ev)?;
        strategy.on_failure(ev)?;
        if halt {
            return Ok(i + 1);
        }
    }
    if let (Some(end), Some(last)) = (end, events.last()) {
        if end > last.time {
            let ctx = ActCtx {
                from: last.time,
                until: end,
                history: events,
            };
            strategy.act(&ctx, state)?;
        }
        state.advance(end);
    }
    Ok(events.len())
}

/// Summary of one simulation run over a measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub seed: u64,
    pub failures: u64,
    pub distinct: u64,
    pub bits_read: u64,
    pub window_start: f64,
    pub window_end: f64,
    /// Bits read in the window per unit time.
    pub rrate: f64,
    /// Erased capacity in the window per unit time: failures in
    /// `(start, end]` times `nsize`, over the window length.
    pub erate: f64,
    pub ratio: f64,
    /// `(1−β′)/lni(2β′)`.
    pub lower_bound: f64,
    pub recoverable: bool,
    pub first_loss_time: Option<f64>,
}

/// Metrics for a finished run, measured over `[start, end]`.
pub fn measure(
    state: &SystemState,
    strategy: &dyn RepairStrategy,
    events: &[FailureEvent],
    seed: u64,
    start: f64,
    end: f64,
) -> Result<SimMetrics> {
    let params = *crate::storage::StorageIo::params(state);
    let rrate = state.total_read_rate(start, end)?;
    let in_window = events.iter().filter(|e| e.time > start && e.time <= end).count();
    let erate = in_window as f64 * params.nsize as f64 / (end - start);
    let lower_bound = derive_phase_params(&params)
        .ok()
        .filter(|pp| pp.beta_prime < 0.5)
        .and_then(|pp| lni(2.0 * pp.beta_prime).ok().map(|l| (1.0 - pp.beta_prime) / l))
        .unwrap_or(f64::NAN);
    let distinct: HashSet<usize> = events.iter().map(|e| e.node).collect();
    let log = strategy.recovery();
    Ok(SimMetrics {
        seed,
        failures: events.len() as u64,
        distinct: distinct.len() as u64,
        bits_read: state.ledger().total_charged(),
        window_start: start,
        window_end: end,
        rrate,
        erate,
        ratio: rrate / erate,
        lower_bound,
        recoverable: log.recoverable_at(end),
        first_loss_time: log.first_loss_time(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureModel {
    Poisson,
    Periodic { period: f64, ids: PeriodicIds },
    /// A recorded sequence, truncated to the horizon.
    Trace(Arc<[FailureEvent]>),
}

/// Where metrics are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// `[t_0, t_0 + Δ]` with `Δ` from the bound inputs; failures after the
    /// window are not simulated.
    Delta,
    /// `[t_0, t_last]`.
    AllFailures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub failures: FailureModel,
    pub strategy: StrategySpec,
    pub bounds: BoundInputs,
    pub seed: u64,
    pub horizon: usize,
    pub window: Window,
}

impl Scenario {
    pub fn events(&self) -> Result<Vec<FailureEvent>> {
        let seq = match &self.failures {
            FailureModel::Poisson => gen_poisson(&self.params, 0.0, self.horizon, self.seed)?,
            FailureModel::Periodic { period, ids } => {
                gen_periodic(&self.params, 0.0, *period, self.horizon, self.seed, *ids)?
            }
            FailureModel::Trace(events) => {
                let n = self.params.n_nodes as usize;
                if let Some(e) = events.iter().find(|e| e.node >= n) {
                    return Err(invalid(format!("failure {} names node {} but N = {n}", e.index, e.node)));
                }
                return Ok(events.iter().take(self.horizon).copied().collect());
            }
        };
        Ok(seq.events)
    }

    /// `Δ` for this scenario.
    pub fn delta_window(&self) -> Result<f64> {
        let pp = derive_phase_params(&self.params)?;
        Ok(composite_deltas(&pp, &self.bounds, self.params.nsize, self.params.lambda)?.window)
    }
}

/// Run a scenario in symbolic mode and measure it.
pub fn simulate(sc: &Scenario) -> Result<SimMetrics> {
    if sc.horizon == 0 {
        return Err(invalid("horizon must be at least one failure"));
    }
    let mut events = sc.events()?;
    let t0 = events[0].time;
    let end = match sc.window {
        Window::Delta => {
            let end = t0 + sc.delta_window()?;
            events.retain(|e| e.time <= end);
            Some(end)
        }
        Window::AllFailures => None,
    };
    let mut state = SystemState::new(sc.params, StateConfig::symbolic())?;
    let mut strategy = sc.strategy.build(&sc.params, sc.seed, Some(&events))?;
    drive(&mut state, strategy.as_mut(), &events, end, |_, _| false)?;
    let last = events.last().map_or(t0, |e| e.time);
    let end = end.unwrap_or(last);
    if !(end > t0) {
        return Err(invalid("measurement window is empty; raise the horizon"));
    }
    measure(&state, strategy.as_ref(), &events, sc.seed, t0, end)
}
