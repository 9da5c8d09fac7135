//! Phases over `M` distinct failures, and the compressed state `D` from
//! which a replay rebuilds the final state.

use std::collections::HashSet;
use std::io::Write;

use crate::bounds::gamma_threshold;
use crate::engine::drive;
use crate::error::{invalid, Error, Result};
use crate::failure::FailureEvent;
use crate::params::{PhaseParams, SystemParams};
use crate::repairers::{ActCtx, RepairStrategy};
use crate::storage::{
    Bits, BitsRef, Fidelity, Payload, ReadLedger, ReadRecord, Snapshot, StateConfig, StorageIo, Substrate,
    SystemState, TraceMode,
};

/// Why a phase ended, with the index of its last failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GammaExceeded(usize),
    Completed(usize),
}

impl Termination {
    pub fn index(&self) -> usize {
        match *self {
            Termination::GammaExceeded(i) | Termination::Completed(i) => i,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::GammaExceeded(_) => "gamma_exceeded",
            Termination::Completed(_) => "completed",
        }
    }
}

/// `Γ_i` for `i = 0..M−1`; entry 0 is unused and set to infinity.
pub fn gamma_thresholds(pp: &PhaseParams, nsize: u128, eps_c: f64) -> Result<Vec<f64>> {
    let mut g = vec![f64::INFINITY];
    for i in 1..pp.m {
        g.push(gamma_threshold(i, pp, nsize, eps_c)?);
    }
    Ok(g)
}

/// Outcome of the first execution of a phase.
#[derive(Debug, Clone)]
pub struct PhaseRecord {
    /// `S(t_0−)`.
    pub start: Snapshot,
    /// Global failure index of `id_0`.
    pub start_failure: usize,
    pub m: usize,
    /// Failures applied, `id_0` through the terminating one.
    pub events: Vec<FailureEvent>,
    /// `rsize_i` for `i = 0..=termination index`.
    pub rsize: Vec<u64>,
    pub rfsize_i: Vec<u64>,
    pub rfsize: u64,
    pub termination: Termination,
    /// Reads from later-failing nodes before their failure, in read order.
    pub rf: Vec<ReadRecord>,
    /// `S(t_{M−1}+)` or the state after the terminating failure.
    pub end: Snapshot,
}

impl PhaseRecord {
    pub fn rsize_digest(&self) -> u64 {
        digest(&self.rsize)
    }
}

/// FNV-1a over little-endian words.
pub fn digest(values: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn check_distinct(events: &[FailureEvent]) -> Result<()> {
    let mut seen = HashSet::new();
    if events.iter().all(|e| seen.insert(e.node)) {
        Ok(())
    } else {
        Err(Error::Precondition("phase identifiers are not distinct".into()))
    }
}

/// First execution: run the strategy normally over the `M` failures in
/// `events`, stopping after failure `i` when `rsize_i ≥ Γ_i`.
///
/// The state's ledger must keep per-node cells. A trace with payloads is
/// needed later for [`build_compressed_state`].
pub fn run_phase_first_execution(
    state: &mut SystemState,
    strategy: &mut dyn RepairStrategy,
    events: &[FailureEvent],
    gamma: Option<&[f64]>,
) -> Result<PhaseRecord> {
    check_distinct(events)?;
    if events.is_empty() {
        return Err(invalid("a phase needs at least one failure"));
    }
    if !state.ledger().has_cells() {
        return Err(Error::Precondition("phase runs need per-node ledger cells".into()));
    }
    if let Some(g) = gamma {
        if g.len() < events.len() {
            return Err(invalid("fewer Γ thresholds than phase failures"));
        }
    }
    let start = state.snapshot();
    let start_failure = state.ledger().failures().len();
    let applied = drive(state, strategy, events, None, |i, s| {
        i >= 1 && gamma.is_some_and(|g| s.ledger().phase(start_failure).rsize(i) as f64 >= g[i])
    })?;
    let last = applied - 1;
    let termination = if applied < events.len() || gamma.is_some_and(|g| {
        last >= 1 && state.ledger().phase(start_failure).rsize(last) as f64 >= g[last]
    }) {
        Termination::GammaExceeded(last)
    } else {
        Termination::Completed(last)
    };
    let ledger = state.ledger();
    let ph = ledger.phase(start_failure);
    let rsize: Vec<u64> = (0..applied).map(|i| ph.rsize(i)).collect();
    let rfsize_i: Vec<u64> = (0..applied).map(|i| ph.rfsize_i(i)).collect();
    let rf = if ledger.trace_mode() == TraceMode::Off {
        Vec::new()
    } else {
        ph.rf_records(applied).into_iter().cloned().collect()
    };
    Ok(PhaseRecord {
        start,
        start_failure,
        m: events.len(),
        events: events[..applied].to_vec(),
        rfsize: rfsize_i.iter().sum(),
        rsize,
        rfsize_i,
        termination,
        rf,
        end: state.snapshot(),
    })
}

/// `D = {V(t_0−), C_j(t_0−) for j ∉ idseq, RF}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedState {
    pub global: Bits,
    pub survivors: Vec<(usize, Bits)>,
    pub rf: Vec<ReadRecord>,
    /// Identifiers of the phase, in failure order.
    pub ids: Vec<usize>,
    pub clock: f64,
}

impl CompressedState {
    /// `len(D)` in bits.
    pub fn len_bits(&self) -> u128 {
        self.global.len() as u128
            + self.survivors.iter().map(|(_, b)| b.len() as u128).sum::<u128>()
            + self.rf.iter().map(|r| r.len as u128).sum::<u128>()
    }
}

/// `vsize + (N−M)·nsize + rfsize`.
pub fn compressed_len_identity(params: &SystemParams, m: usize, rfsize: u64) -> u128 {
    params.vsize + (params.n_nodes as u128 - m as u128) * params.nsize + rfsize as u128
}

/// Build `D` from a completed bit-exact phase.
pub fn build_compressed_state(rec: &PhaseRecord) -> Result<CompressedState> {
    if let Termination::GammaExceeded(i) = rec.termination {
        return Err(Error::PhaseIncomplete(i));
    }
    if rec.start.nodes.is_empty() {
        return Err(Error::Precondition("compressed state needs bit-exact contents".into()));
    }
    if rec.rf.iter().any(|r| r.payload.is_none()) && rec.rfsize > 0 {
        return Err(Error::Precondition("compressed state needs a payload trace".into()));
    }
    let ids: Vec<usize> = rec.events.iter().map(|e| e.node).collect();
    let survivors = (0..rec.start.nodes.len())
        .filter(|j| !ids.contains(j))
        .map(|j| (j, rec.start.nodes[j].clone()))
        .collect();
    Ok(CompressedState {
        global: rec.start.global.clone(),
        survivors,
        rf: rec.rf.clone(),
        ids,
        clock: rec.start.clock,
    })
}

/// Storage seen by the second execution: reads from nodes still flagged
/// (in the phase and not yet failed) are served from RF in order; writes to
/// them are dropped; a failure clears the flag and erases the node.
struct ReplayIo<'a> {
    inner: SystemState,
    flagged: Vec<bool>,
    rf: &'a [ReadRecord],
    cursor: usize,
}

impl StorageIo for ReplayIo<'_> {
    fn params(&self) -> &SystemParams {
        self.inner.params()
    }

    fn fidelity(&self) -> Fidelity {
        Fidelity::BitExact
    }

    fn now(&self) -> f64 {
        self.inner.now()
    }

    fn advance(&mut self, t: f64) {
        self.inner.advance(t)
    }

    fn read_as(&mut self, node: usize, offset: u64, len: u64, local: bool) -> Result<Payload> {
        if !self.flagged.get(node).copied().unwrap_or(false) {
            return self.inner.read_as(node, offset, len, local);
        }
        let rec = self
            .rf
            .get(self.cursor)
            .ok_or_else(|| Error::Replay(format!("RF exhausted at read of node {node}")))?;
        if rec.node != node || rec.offset != offset || rec.len != len {
            return Err(Error::Replay(format!(
                "RF record {} is ({}, {}, {}) but the replay read ({node}, {offset}, {len})",
                self.cursor, rec.node, rec.offset, rec.len
            )));
        }
        let bits = match &rec.payload {
            Some(p) if p.len() as u64 == len => p.clone(),
            None if len == 0 => Bits::new(),
            _ => return Err(Error::Replay(format!("RF record {} has a bad payload", self.cursor))),
        };
        self.cursor += 1;
        Ok(Payload::Bits(bits))
    }

    fn write(&mut self, node: usize, offset: u64, data: &Payload) -> Result<()> {
        if self.flagged.get(node).copied().unwrap_or(false) {
            if offset + data.len() > self.inner.node_size() {
                return Err(Error::Replay("out-of-range write during replay".into()));
            }
            return Ok(());
        }
        self.inner.write(node, offset, data)
    }

    fn global(&self) -> &BitsRef {
        self.inner.global()
    }

    fn global_mut(&mut self) -> &mut BitsRef {
        self.inner.global_mut()
    }
}

impl Substrate for ReplayIo<'_> {
    fn fail(&mut self, ev: &FailureEvent) -> Result<()> {
        if let Some(f) = self.flagged.get_mut(ev.node) {
            *f = false;
        }
        self.inner.fail(ev)
    }

    fn ledger(&self) -> &ReadLedger {
        self.inner.ledger()
    }
}

/// Second execution: rebuild the state at the end of the phase from `D`,
/// the failure sequence and a fresh instance of the strategy.
pub fn replay_second_execution(
    d: &CompressedState,
    params: &SystemParams,
    events: &[FailureEvent],
    strategy: &mut dyn RepairStrategy,
) -> Result<SystemState> {
    let n = params.n_nodes as usize;
    if events.iter().map(|e| e.node).ne(d.ids.iter().copied()) {
        return Err(Error::Replay("failure sequence differs from the phase identifiers".into()));
    }
    let mut nodes = vec![Bits::repeat(false, params.nsize as usize); n];
    for (j, bits) in &d.survivors {
        nodes[*j] = bits.clone();
    }
    let config = StateConfig {
        fidelity: Fidelity::BitExact,
        ledger_cells: false,
        trace: TraceMode::Off,
    };
    let mut inner = SystemState::from_contents(*params, config, d.global.clone(), nodes)?;
    inner.advance(d.clock);
    let mut flagged = vec![false; n];
    for &j in &d.ids {
        flagged[j] = true;
    }
    let mut io = ReplayIo {
        inner,
        flagged,
        rf: &d.rf,
        cursor: 0,
    };
    drive(&mut io, strategy, events, None, |_, _| false)?;
    if io.cursor != d.rf.len() {
        return Err(Error::Replay(format!(
            "replay consumed {} of {} RF records",
            io.cursor,
            d.rf.len()
        )));
    }
    Ok(io.inner)
}

/// Census of the compression bound over every source value.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusReport {
    pub total: u64,
    /// Source values with `len(D) ≤ dsize − ℓ`.
    pub small: u64,
    /// Of those, the ones the recoverer gets back from the replayed state.
    pub small_recovered: u64,
    pub fraction: f64,
    pub bound: f64,
}

impl CensusReport {
    pub fn holds(&self) -> bool {
        self.fraction <= self.bound
    }
}

pub const CENSUS_LIMIT: u128 = 20;

/// For every `x ∈ {0,1}^dsize`: store, run the phase, build `D`, replay
/// from `D` and apply the recoverer. Returns the fraction of all `x` whose
/// `D` has at most `dsize − ℓ` bits and which are still recovered.
pub fn compression_census(
    params: &SystemParams,
    factory: &dyn Fn() -> Result<Box<dyn RepairStrategy>>,
    events: &[FailureEvent],
    ell: u32,
) -> Result<CensusReport> {
    if params.dsize > CENSUS_LIMIT {
        return Err(Error::Precondition(format!(
            "exhaustive census needs dsize ≤ {CENSUS_LIMIT}, got {}",
            params.dsize
        )));
    }
    let dsize = params.dsize as usize;
    let total = 1u64 << dsize;
    let mut small = 0;
    let mut small_recovered = 0;
    for v in 0..total {
        let x: Bits = (0..dsize).map(|b| (v >> b) & 1 == 1).collect();
        let mut state = SystemState::new(*params, StateConfig::bit_exact())?;
        let mut first = factory()?;
        first.store(&x, &mut state)?;
        let rec = run_phase_first_execution(&mut state, first.as_mut(), events, None)?;
        let d = build_compressed_state(&rec)?;
        if d.len_bits() + ell as u128 > params.dsize {
            continue;
        }
        small += 1;
        let mut second = factory()?;
        let replayed = replay_second_execution(&d, params, events, second.as_mut())?;
        if second.recover(&replayed)? == x {
            small_recovered += 1;
        }
    }
    Ok(CensusReport {
        total,
        small,
        small_recovered,
        fraction: small_recovered as f64 / total as f64,
        bound: 2f64.powi(1 - ell as i32),
    })
}

/// One phase of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPhase {
    pub index: usize,
    pub start_failure: usize,
    pub failures: usize,
    pub distinct: usize,
    pub termination: Termination,
    /// `rsize` at each distinct failure after `id_0`.
    pub rsize: Vec<u64>,
    /// Only with per-node ledger cells.
    pub rfsize: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseChainStats {
    /// Distinct failures summed over phases.
    pub y: usize,
    /// All failures.
    pub y_prime: usize,
    pub phases: Vec<ChainPhase>,
}

/// Run phases back to back over a failure stream until `M` distinct
/// failures have accumulated, finishing the phase underway.
///
/// Within a phase the `i`-th new identifier is `T̂_i`; the phase ends after
/// `T̂_i` when `rsize_i ≥ Γ_i` (checked just before `T̂_i`) or when
/// `i = M−1`.
pub fn chain_phases(
    state: &mut SystemState,
    strategy: &mut dyn RepairStrategy,
    mut events: impl Iterator<Item = FailureEvent>,
    pp: &PhaseParams,
    gamma: Option<&[f64]>,
) -> Result<PhaseChainStats> {
    let m = pp.m as usize;
    if gamma.is_some_and(|g| g.len() < m) {
        return Err(invalid("fewer Γ thresholds than M"));
    }
    let mut history: Vec<FailureEvent> = Vec::new();
    let mut phases = Vec::new();
    let mut y = 0;
    let mut seen: Vec<usize> = Vec::new();
    let mut member = vec![false; state.params().n_nodes as usize];
    let mut hits: Vec<usize> = Vec::new();
    let mut rsize: Vec<u64> = Vec::new();
    let mut start_bits = 0u64;
    let mut start_failure = 0usize;
    loop {
        let ev = events
            .next()
            .ok_or_else(|| Error::Precondition("failure stream ended before the chain".into()))?;
        if let Some(last) = history.last() {
            let ctx = ActCtx {
                from: last.time,
                until: ev.time,
                history: &history,
            };
            strategy.act(&ctx, state)?;
        }
        let fresh = !member.get(ev.node).copied().unwrap_or(false);
        let mut end = None;
        if fresh && !seen.is_empty() {
            let i = seen.len();
            let rs = state.ledger().total_charged() - start_bits;
            rsize.push(rs);
            if gamma.is_some_and(|g| rs as f64 >= g[i]) {
                end = Some(Termination::GammaExceeded(i));
            } else if i == m - 1 {
                end = Some(Termination::Completed(i));
            }
        }
        let global_index = history.len();
        state.fail(&ev)?;
        strategy.on_failure(&ev)?;
        history.push(ev);
        if seen.is_empty() {
            start_bits = state.ledger().total_charged();
            start_failure = global_index;
        }
        if fresh {
            member[ev.node] = true;
            seen.push(ev.node);
            hits.push(global_index);
        }
        if m == 1 && seen.len() == 1 {
            end = Some(Termination::Completed(0));
        }
        if let Some(termination) = end {
            let ledger = state.ledger();
            let rfsize = ledger.has_cells().then(|| {
                hits.iter()
                    .zip(&seen)
                    .skip(1)
                    .map(|(&e, &node)| {
                        (start_failure + 1..=e)
                            .map(|ep| ledger.cell(ep as u64, node))
                            .sum::<u64>()
                    })
                    .sum()
            });
            y += seen.len();
            phases.push(ChainPhase {
                index: phases.len(),
                start_failure,
                failures: history.len() - start_failure,
                distinct: seen.len(),
                termination,
                rsize: std::mem::take(&mut rsize),
                rfsize,
            });
            for &j in &seen {
                member[j] = false;
            }
            seen.clear();
            hits.clear();
            if y >= m {
                break;
            }
        }
    }
    Ok(PhaseChainStats {
        y,
        y_prime: history.len(),
        phases,
    })
}

/// CSV export of chain statistics, one row per phase.
pub fn write_chain_csv<W: Write>(stats: &PhaseChainStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "phase",
        "termination",
        "termination_index",
        "failures",
        "distinct",
        "rsize_digest",
        "rfsize",
        "Y",
        "Y_prime",
    ])
    .map_err(err)?;
    for p in &stats.phases {
        w.write_record([
            p.index.to_string(),
            p.termination.label().to_string(),
            p.termination.index().to_string(),
            p.failures.to_string(),
            p.distinct.to_string(),
            format!("{:016x}", digest(&p.rsize)),
            p.rfsize.map(|r| r.to_string()).unwrap_or_default(),
            stats.y.to_string(),
            stats.y_prime.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// The tracked process `z_i = z_{i−1} + rfsize_i − i·ρ` with `z_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZProcess {
    pub rho: f64,
    pub z: Vec<f64>,
}

impl ZProcess {
    pub fn new(rfsize_i: &[u64], eps_c: f64, nsize: u64, f: u64) -> Self {
        let rho = (1.0 - eps_c) * nsize as f64 / (2 * f - 1) as f64;
        let mut z = vec![0.0];
        for (i, &r) in rfsize_i.iter().enumerate().skip(1) {
            let prev = z[i - 1];
            z.push(prev + r as f64 - i as f64 * rho);
        }
        ZProcess { rho, z }
    }

    /// `Σ_{ℓ≤i} rfsize_ℓ − τ_i·ρ` with `τ_i = i(i+1)/2`.
    pub fn closed_form(&self, rfsize_i: &[u64], i: usize) -> f64 {
        let sum: u64 = rfsize_i[1..=i].iter().sum();
        sum as f64 - (i * (i + 1) / 2) as f64 * self.rho
    }

    pub fn max_step(&self) -> f64 {
        self.z.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

/// Averaging `rfsize_i` over every candidate `ID_i`, against
/// `(rsize_i − Σ_{ℓ<i} rfsize_ℓ)/(N−i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondExpCheck {
    pub mean_rfsize: f64,
    pub formula: f64,
    /// Bits read from replacements of identifiers that already failed in
    /// the phase; equality needs this to be zero.
    pub replacement_reads: u64,
}

/// Run the prefix `id_0..id_{i−1}` followed by each of the `N−i`
/// candidates for `ID_i` at `next_time`, on fresh states from `setup`.
pub fn conditional_expectation_check(
    setup: &dyn Fn() -> Result<(SystemState, Box<dyn RepairStrategy>)>,
    prefix: &[FailureEvent],
    next_time: f64,
) -> Result<CondExpCheck> {
    check_distinct(prefix)?;
    let i = prefix.len();
    if i == 0 {
        return Err(invalid("the prefix must contain id_0"));
    }
    let mut rfsizes = Vec::new();
    let mut formula = None;
    let mut replacement = 0;
    let (probe, _) = setup()?;
    let n = StorageIo::n_nodes(&probe);
    for cand in (0..n).filter(|j| prefix.iter().all(|e| e.node != *j)) {
        let (mut state, mut strategy) = setup()?;
        if !state.ledger().has_cells() {
            return Err(Error::Precondition("conditional expectation needs ledger cells".into()));
        }
        let mut events = prefix.to_vec();
        events.push(FailureEvent {
            index: i as u64,
            time: next_time,
            node: cand,
        });
        drive(&mut state, strategy.as_mut(), &events, None, |_, _| false)?;
        let ledger = state.ledger();
        let ph = ledger.phase(0);
        rfsizes.push(ph.rfsize_i(i) as f64);
        let earlier: u64 = (1..i).map(|l| ph.rfsize_i(l)).sum();
        let value = (ph.rsize(i) - earlier) as f64 / (n - i) as f64;
        match formula {
            None => formula = Some(value),
            Some(f) if f != value => {
                return Err(Error::Precondition("reads before T̂_i depend on ID_i".into()));
            }
            _ => {}
        }
        let rep: u64 = (0..i)
            .map(|l| (l + 1..=i).map(|e| ledger.cell(e as u64, prefix[l].node)).sum::<u64>())
            .sum();
        replacement = replacement.max(rep);
    }
    Ok(CondExpCheck {
        mean_rfsize: rfsizes.iter().sum::<f64>() / rfsizes.len() as f64,
        formula: formula.unwrap_or(0.0),
        replacement_reads: replacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_phase_params;
    use crate::repairers::{EqualRead, EqualReadWrite, Scrambler, Starve};
    use crate::rng::{stream, Substream};
    use rand::Rng;

    fn small() -> SystemParams {
        SystemParams::new(6, 8, 8, 24, 1.0).unwrap()
    }

    fn events(ids: &[usize]) -> Vec<FailureEvent> {
        ids.iter()
            .enumerate()
            .map(|(i, &node)| FailureEvent {
                index: i as u64,
                time: i as f64,
                node,
            })
            .collect()
    }

    fn random_x(p: &SystemParams, seed: u64) -> Bits {
        let mut rng = stream(seed, Substream::Source);
        (0..p.dsize).map(|_| rng.random::<bool>()).collect()
    }

    fn first(p: &SystemParams, strat: &mut dyn RepairStrategy, x: &Bits, ev: &[FailureEvent]) -> PhaseRecord {
        let mut state = SystemState::new(*p, StateConfig::bit_exact()).unwrap();
        strat.store(x, &mut state).unwrap();
        run_phase_first_execution(&mut state, strat, ev, None).unwrap()
    }

    #[test]
    fn scrambler_replay_reproduces_final_state() {
        let p = small();
        let ev = events(&[2, 0, 5, 3]);
        for seed in 0..200 {
            let x = random_x(&p, seed);
            let rec = first(&p, &mut Scrambler::new(&p, seed), &x, &ev);
            let d = build_compressed_state(&rec).unwrap();
            assert_eq!(d.len_bits(), compressed_len_identity(&p, ev.len(), rec.rfsize));
            let replayed = replay_second_execution(&d, &p, &ev, &mut Scrambler::new(&p, seed)).unwrap();
            assert_eq!(replayed.snapshot(), rec.end, "seed {seed}");
        }
    }

    #[test]
    fn rotate_replay_and_rf_contents() {
        let p = small();
        let ev = events(&[1, 4, 0]);
        let x = random_x(&p, 9);
        let mut s = EqualRead::new(&p, 12, EqualReadWrite::Rotate).unwrap();
        let rec = first(&p, &mut s, &x, &ev);
        // nodes 4 and 0 are read (2 bits each) once and twice before failing
        assert_eq!(rec.rfsize_i, vec![0, 2, 4]);
        assert_eq!(rec.rsize, vec![0, 12, 24]);
        assert_eq!(rec.rf.len(), 3);
        let d = build_compressed_state(&rec).unwrap();
        let mut s2 = EqualRead::new(&p, 12, EqualReadWrite::Rotate).unwrap();
        let replayed = replay_second_execution(&d, &p, &ev, &mut s2).unwrap();
        assert_eq!(replayed.snapshot(), rec.end);
    }

    #[test]
    fn tampered_rf_is_rejected() {
        let p = small();
        let ev = events(&[1, 4, 0]);
        let mut s = EqualRead::new(&p, 12, EqualReadWrite::Nothing).unwrap();
        let rec = first(&p, &mut s, &random_x(&p, 1), &ev);
        let mut d = build_compressed_state(&rec).unwrap();
        d.rf[0].offset += 1;
        let err = replay_second_execution(&d, &p, &ev, &mut EqualRead::new(&p, 12, EqualReadWrite::Nothing).unwrap());
        assert!(matches!(err, Err(Error::Replay(_))));
        let mut d = build_compressed_state(&rec).unwrap();
        d.rf.pop();
        let err = replay_second_execution(&d, &p, &ev, &mut EqualRead::new(&p, 12, EqualReadWrite::Nothing).unwrap());
        assert!(matches!(err, Err(Error::Replay(_))));
    }

    #[test]
    fn early_termination_has_no_compressed_state() {
        let p = small();
        let ev = events(&[1, 4, 0]);
        let mut state = SystemState::new(p, StateConfig::bit_exact()).unwrap();
        let mut s = EqualRead::new(&p, 12, EqualReadWrite::Nothing).unwrap();
        let gamma = [f64::INFINITY, 100.0, 20.0];
        let rec = run_phase_first_execution(&mut state, &mut s, &ev, Some(&gamma)).unwrap();
        assert_eq!(rec.termination, Termination::GammaExceeded(2));
        assert_eq!(rec.events.len(), 3);
        assert!(matches!(build_compressed_state(&rec), Err(Error::PhaseIncomplete(2))));
    }

    #[test]
    fn repeated_ids_are_refused() {
        let p = small();
        let mut state = SystemState::new(p, StateConfig::bit_exact()).unwrap();
        let r = run_phase_first_execution(&mut state, &mut Starve::new(&p), &events(&[1, 1]), None);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn census_respects_the_bound() {
        let p = SystemParams::new(4, 4, 4, 12, 1.0).unwrap();
        let ev = events(&[3, 1, 2, 0]);
        let starve = || -> Result<Box<dyn RepairStrategy>> { Ok(Box::new(Starve::new(&p))) };
        let r = compression_census(&p, &starve, &ev, 6).unwrap();
        assert_eq!(r.total, 4096);
        assert_eq!(r.small, 4096);
        assert_eq!(r.small_recovered, 16);
        assert!(r.holds());
        let rot = || -> Result<Box<dyn RepairStrategy>> {
            Ok(Box::new(EqualRead::new(&p, 8, EqualReadWrite::Rotate)?))
        };
        let r = compression_census(&p, &rot, &ev, 2).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn z_process_matches_closed_form() {
        let rf = [0u64, 3, 0, 7, 2, 8];
        let z = ZProcess::new(&rf, 0.2, 8, 3);
        assert!((z.rho - 0.8 * 8.0 / 5.0).abs() < 1e-12);
        for i in 0..rf.len() {
            let c = if i == 0 { 0.0 } else { z.closed_form(&rf, i) };
            assert!((z.z[i] - c).abs() < 1e-9);
        }
        assert!(z.max_step() <= 8.0 + 5.0 * z.rho);
    }

    #[test]
    fn chain_with_starve_is_one_phase() {
        let p = SystemParams::new(10, 16, 16, 100, 1.0).unwrap();
        let pp = derive_phase_params(&p).unwrap();
        let mut state = SystemState::new(p, StateConfig::bit_exact()).unwrap();
        let g = gamma_thresholds(&pp, p.nsize, 0.5).unwrap();
        let it = crate::failure::UniformStream::periodic(10, 0.0, 1.0, 3);
        let stats = chain_phases(&mut state, &mut Starve::new(&p), it, &pp, Some(&g)).unwrap();
        assert_eq!(stats.phases.len(), 1);
        assert_eq!(stats.y, pp.m as usize);
        assert!(stats.y_prime >= stats.y);
        assert_eq!(stats.phases[0].termination, Termination::Completed(pp.m as usize - 1));
    }

    #[test]
    fn chain_with_heavy_reads_ends_every_phase_at_one() {
        let p = SystemParams::new(10, 16, 16, 100, 1.0).unwrap();
        let pp = derive_phase_params(&p).unwrap();
        let mut state = SystemState::new(p, StateConfig::bit_exact()).unwrap();
        let g = gamma_thresholds(&pp, p.nsize, 0.5).unwrap();
        let it = crate::failure::UniformStream::periodic(10, 0.0, 1.0, 3);
        let mut s = EqualRead::new(&p, 160, EqualReadWrite::Nothing).unwrap();
        let stats = chain_phases(&mut state, &mut s, it, &pp, Some(&g)).unwrap();
        assert!(stats.phases.iter().all(|ph| ph.termination == Termination::GammaExceeded(1)));
        assert!(stats.y >= pp.m as usize && stats.y < 2 * pp.m as usize);
        let mut out = Vec::new();
        write_chain_csv(&stats, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), stats.phases.len() + 1);
    }

    #[test]
    fn conditional_expectation_for_equal_read() {
        let p = small();
        let setup = || -> Result<(SystemState, Box<dyn RepairStrategy>)> {
            let s = SystemState::new(p, StateConfig::bit_exact())?;
            Ok((s, Box::new(EqualRead::new(&p, 18, EqualReadWrite::Nothing)?)))
        };
        let c = conditional_expectation_check(&setup, &events(&[0, 3]), 2.0).unwrap();
        assert!(c.replacement_reads > 0);
        assert!(c.mean_rfsize <= c.formula + 1e-12);
    }
}
