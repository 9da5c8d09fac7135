//! The system-state model: `N` nodes of `nsize` bits plus the repairer's
//! global memory, with interface-level read accounting.
//!
//! Reads over node interfaces are charged to a [`ReadLedger`]; writes and
//! global-memory access are free. A failure erases the node (sets every bit
//! to zero) and advances the failure index.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use bitvec::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::failure::FailureEvent;
use crate::params::SystemParams;

pub type Bits = BitVec<u8, Lsb0>;
pub type BitsRef = BitSlice<u8, Lsb0>;

/// Largest node or global-memory size materialised in bit-exact mode.
pub const BIT_EXACT_LIMIT: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// Node contents are real bit vectors.
    BitExact,
    /// Only lengths are tracked; contents live in strategy metadata.
    Symbolic,
}

/// Data moved over a node interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Bits(Bits),
    Symbolic(u64),
}

impl Payload {
    pub fn len(&self) -> u64 {
        match self {
            Payload::Bits(b) => b.len() as u64,
            Payload::Symbolic(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bits(&self) -> Option<&BitsRef> {
        match self {
            Payload::Bits(b) => Some(b.as_bitslice()),
            Payload::Symbolic(_) => None,
        }
    }
}

/// What the ledger keeps beyond per-epoch totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    Off,
    Lengths,
    Payloads,
}

/// One charged read request.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadRecord {
    pub seq: u64,
    pub time: f64,
    /// Number of failures that had occurred when the read was issued.
    pub epoch: u64,
    pub node: usize,
    pub offset: u64,
    pub len: u64,
    pub local: bool,
    pub payload: Option<Bits>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct EpochReads {
    total: u64,
    by_node: BTreeMap<usize, u64>,
}

/// Exact read accounting per failure index and node.
///
/// Epoch `e ≥ 1` holds reads issued after failure `e−1` and before failure
/// `e`. Reads issued before the first failure belong to the storer's
/// preprocessing and are kept out of every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadLedger {
    epochs: Vec<EpochReads>,
    failures: Vec<FailureEvent>,
    init_bits: u64,
    charged: u64,
    cells: bool,
    trace_mode: TraceMode,
    trace: Vec<ReadRecord>,
    next_seq: u64,
    timeline: Vec<(f64, u64)>,
}

impl ReadLedger {
    pub fn new(cells: bool, trace_mode: TraceMode) -> Self {
        ReadLedger {
            epochs: vec![EpochReads::default()],
            failures: Vec::new(),
            init_bits: 0,
            charged: 0,
            cells,
            trace_mode,
            trace: Vec::new(),
            next_seq: 0,
            timeline: Vec::new(),
        }
    }

    pub fn current_epoch(&self) -> u64 {
        self.failures.len() as u64
    }

    pub fn failures(&self) -> &[FailureEvent] {
        &self.failures
    }

    pub fn trace(&self) -> &[ReadRecord] {
        &self.trace
    }

    pub fn trace_mode(&self) -> TraceMode {
        self.trace_mode
    }

    /// Record a read of `len` bits from `node`.
    pub fn charge(&mut self, node: usize, offset: u64, len: u64, time: f64, local: bool, payload: Option<&BitsRef>) {
        let epoch = self.current_epoch();
        if epoch == 0 {
            self.init_bits += len;
            return;
        }
        let cell = &mut self.epochs[epoch as usize];
        cell.total += len;
        if self.cells {
            *cell.by_node.entry(node).or_insert(0) += len;
        }
        self.charged += len;
        match self.timeline.last_mut() {
            Some((t, cum)) if *t == time => *cum = self.charged,
            _ => self.timeline.push((time, self.charged)),
        }
        if self.trace_mode != TraceMode::Off {
            self.trace.push(ReadRecord {
                seq: self.next_seq,
                time,
                epoch,
                node,
                offset,
                len,
                local,
                payload: match self.trace_mode {
                    TraceMode::Payloads => payload.map(|p| p.to_bitvec()),
                    _ => None,
                },
            });
        }
        self.next_seq += 1;
    }

    pub fn record_failure(&mut self, ev: FailureEvent) {
        self.failures.push(ev);
        self.epochs.push(EpochReads::default());
    }

    /// Bits read from `node` in epoch `epoch`. Requires per-node cells.
    pub fn cell(&self, epoch: u64, node: usize) -> u64 {
        debug_assert!(self.cells, "per-node cells disabled");
        self.epochs
            .get(epoch as usize)
            .and_then(|e| e.by_node.get(&node).copied())
            .unwrap_or(0)
    }

    pub fn has_cells(&self) -> bool {
        self.cells
    }

    pub fn epoch_total(&self, epoch: u64) -> u64 {
        self.epochs.get(epoch as usize).map_or(0, |e| e.total)
    }

    pub fn epoch_cells(&self, epoch: u64) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.epochs
            .get(epoch as usize)
            .into_iter()
            .flat_map(|e| e.by_node.iter().map(|(&k, &v)| (k, v)))
    }

    /// All charged bits (reads after the first failure).
    pub fn total_charged(&self) -> u64 {
        self.charged
    }

    /// Bits read before the first failure; excluded from every metric.
    pub fn init_bits(&self) -> u64 {
        self.init_bits
    }

    /// Charged bits read at times in `[from, to]`.
    pub fn bits_in_window(&self, from: f64, to: f64) -> u64 {
        let before = |t: f64| -> u64 {
            // cumulative bits strictly before time t
            let idx = self.timeline.partition_point(|&(time, _)| time < t);
            if idx == 0 { 0 } else { self.timeline[idx - 1].1 }
        };
        let upto = |t: f64| -> u64 {
            let idx = self.timeline.partition_point(|&(time, _)| time <= t);
            if idx == 0 { 0 } else { self.timeline[idx - 1].1 }
        };
        upto(to) - before(from)
    }

    /// View of the ledger restricted to the phase that starts with failure
    /// `start` (its `id_0`).
    pub fn phase(&self, start: usize) -> PhaseLedger<'_> {
        PhaseLedger { ledger: self, start }
    }
}

/// Per-phase quantities: `rsize_{i,j}`, `rsize_i`, `rfsize_i`, `rfsize`.
///
/// Index `i` counts failures from the phase start, so phase failure `i` is
/// global failure `start + i`.
pub struct PhaseLedger<'a> {
    ledger: &'a ReadLedger,
    start: usize,
}

impl PhaseLedger<'_> {
    pub fn start(&self) -> usize {
        self.start
    }

    /// Bits read from node `j` between `t_0` and `t_i`.
    pub fn rsize_cell(&self, i: usize, j: usize) -> u64 {
        (self.start + 1..=self.start + i)
            .map(|e| self.ledger.cell(e as u64, j))
            .sum()
    }

    /// Bits read from all nodes between `t_0` and `t_i`.
    pub fn rsize(&self, i: usize) -> u64 {
        (self.start + 1..=self.start + i)
            .map(|e| self.ledger.epoch_total(e as u64))
            .sum()
    }

    /// Bits read from node `id_i` between `t_0` and its failure at `t_i`.
    pub fn rfsize_i(&self, i: usize) -> u64 {
        let node = self.ledger.failures[self.start + i].node;
        self.rsize_cell(i, node)
    }

    /// `Σ rfsize_i` over the first `count` failures of the phase.
    pub fn rfsize(&self, count: usize) -> u64 {
        (0..count).map(|i| self.rfsize_i(i)).sum()
    }

    /// Trace records of reads from nodes that fail later in the phase,
    /// issued before their failure, in read order. Requires a trace and
    /// distinct identifiers over the phase.
    pub fn rf_records(&self, count: usize) -> Vec<&ReadRecord> {
        let mut fail_epoch: BTreeMap<usize, u64> = BTreeMap::new();
        for i in 0..count {
            fail_epoch.insert(self.ledger.failures[self.start + i].node, (self.start + i) as u64);
        }
        let lo = self.start as u64;
        let hi = (self.start + count - 1) as u64;
        self.ledger
            .trace
            .iter()
            .filter(|r| r.epoch > lo && r.epoch <= hi)
            .filter(|r| fail_epoch.get(&r.node).is_some_and(|&f| r.epoch <= f))
            .collect()
    }
}

/// Immutable deep copy of the system contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub global: Bits,
    pub nodes: Vec<Bits>,
    pub clock: f64,
}

/// The interface a repair strategy sees.
pub trait StorageIo {
    fn params(&self) -> &SystemParams;
    fn fidelity(&self) -> Fidelity;
    fn now(&self) -> f64;
    /// Move the clock forward; earlier times are ignored.
    fn advance(&mut self, t: f64);
    /// Charged read; `local` marks locally computed bits.
    fn read_as(&mut self, node: usize, offset: u64, len: u64, local: bool) -> Result<Payload>;
    fn write(&mut self, node: usize, offset: u64, data: &Payload) -> Result<()>;
    fn global(&self) -> &BitsRef;
    fn global_mut(&mut self) -> &mut BitsRef;

    fn read(&mut self, node: usize, offset: u64, len: u64) -> Result<Payload> {
        self.read_as(node, offset, len, false)
    }

    fn n_nodes(&self) -> usize {
        self.params().n_nodes as usize
    }

    fn node_size(&self) -> u64 {
        self.params().nsize as u64
    }
}

/// A [`StorageIo`] that the engine can also fail nodes on.
pub trait Substrate: StorageIo {
    fn fail(&mut self, ev: &FailureEvent) -> Result<()>;
    fn ledger(&self) -> &ReadLedger;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateConfig {
    pub fidelity: Fidelity,
    pub ledger_cells: bool,
    pub trace: TraceMode,
}

impl StateConfig {
    pub fn bit_exact() -> Self {
        StateConfig {
            fidelity: Fidelity::BitExact,
            ledger_cells: true,
            trace: TraceMode::Payloads,
        }
    }

    pub fn symbolic() -> Self {
        StateConfig {
            fidelity: Fidelity::Symbolic,
            ledger_cells: false,
            trace: TraceMode::Off,
        }
    }
}

/// `S(t) = {V(t), C_0(t), …, C_{N−1}(t)}` plus the clock and ledger.
#[derive(Debug, Clone)]
pub struct SystemState {
    params: SystemParams,
    fidelity: Fidelity,
    nsize: u64,
    global: Bits,
    nodes: Vec<Bits>,
    clock: f64,
    ledger: ReadLedger,
}

impl SystemState {
    pub fn new(params: SystemParams, config: StateConfig) -> Result<Self> {
        params.validate()?;
        if params.nsize > u64::MAX as u128 {
            return Err(invalid("nsize must fit in 64 bits for simulation"));
        }
        let n = params.n_nodes as usize;
        let (global, nodes) = match config.fidelity {
            Fidelity::BitExact => {
                if params.nsize > BIT_EXACT_LIMIT || params.vsize > BIT_EXACT_LIMIT {
                    return Err(invalid("bit-exact mode needs nsize and vsize ≤ 2^24"));
                }
                (
                    bitvec![u8, Lsb0; 0; params.vsize as usize],
                    vec![bitvec![u8, Lsb0; 0; params.nsize as usize]; n],
                )
            }
            Fidelity::Symbolic => (Bits::new(), Vec::new()),
        };
        Ok(SystemState {
            params,
            fidelity: config.fidelity,
            nsize: params.nsize as u64,
            global,
            nodes,
            clock: f64::NEG_INFINITY,
            ledger: ReadLedger::new(config.ledger_cells, config.trace),
        })
    }

    pub fn ledger(&self) -> &ReadLedger {
        &self.ledger
    }

    pub fn ssize(&self) -> u128 {
        self.params.ssize()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Node contents in bit-exact mode; uncharged (recoverer and test access).
    pub fn node_bits(&self, node: usize) -> Option<&BitsRef> {
        self.nodes.get(node).map(|b| b.as_bitslice())
    }

    /// Overwrite a node's contents without charging: storer preprocessing.
    pub fn store_node(&mut self, node: usize, bits: &BitsRef) -> Result<()> {
        self.check_range(node, 0, bits.len() as u64)?;
        if let Some(c) = self.nodes.get_mut(node) {
            c[..bits.len()].copy_from_bitslice(bits);
        }
        Ok(())
    }

    pub fn store_global(&mut self, bits: &BitsRef) -> Result<()> {
        if bits.len() > self.global.len() {
            return Err(invalid("global memory overflow"));
        }
        self.global[..bits.len()].copy_from_bitslice(bits);
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            global: self.global.clone(),
            nodes: self.nodes.clone(),
            clock: self.clock,
        }
    }

    /// Rebuild a state from explicit contents, with a fresh ledger.
    pub fn from_contents(params: SystemParams, config: StateConfig, global: Bits, nodes: Vec<Bits>) -> Result<Self> {
        let mut s = SystemState::new(params, config)?;
        if config.fidelity != Fidelity::BitExact {
            return Err(invalid("explicit contents need bit-exact mode"));
        }
        if global.len() != s.global.len() || nodes.len() != s.nodes.len() || nodes.iter().any(|n| n.len() as u64 != s.nsize) {
            return Err(invalid("content sizes do not match the parameters"));
        }
        s.global = global;
        s.nodes = nodes;
        Ok(s)
    }

    /// Read rate over `[from, to]` in bits per unit time.
    pub fn total_read_rate(&self, from: f64, to: f64) -> Result<f64> {
        if !(to > from) {
            return Err(invalid(format!("empty window [{from}, {to}]")));
        }
        Ok(self.ledger.bits_in_window(from, to) as f64 / (to - from))
    }

    fn check_range(&self, node: usize, offset: u64, len: u64) -> Result<()> {
        let n = self.params.n_nodes as usize;
        if node >= n || offset.checked_add(len).is_none_or(|end| end > self.nsize) {
            return Err(Error::OutOfRange {
                node,
                offset,
                len,
                cap: self.nsize,
            });
        }
        Ok(())
    }
}

impl StorageIo for SystemState {
    fn params(&self) -> &SystemParams {
        &self.params
    }

    fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    fn now(&self) -> f64 {
        self.clock
    }

    fn advance(&mut self, t: f64) {
        if t > self.clock {
            self.clock = t;
        }
    }

    fn read_as(&mut self, node: usize, offset: u64, len: u64, local: bool) -> Result<Payload> {
        self.check_range(node, offset, len)?;
        let payload = match self.fidelity {
            Fidelity::BitExact => {
                let (o, l) = (offset as usize, len as usize);
                Payload::Bits(self.nodes[node][o..o + l].to_bitvec())
            }
            Fidelity::Symbolic => Payload::Symbolic(len),
        };
        self.ledger
            .charge(node, offset, len, self.clock, local, payload.bits());
        Ok(payload)
    }

    fn write(&mut self, node: usize, offset: u64, data: &Payload) -> Result<()> {
        self.check_range(node, offset, data.len())?;
        if let (Fidelity::BitExact, Payload::Bits(bits)) = (self.fidelity, data) {
            let o = offset as usize;
            self.nodes[node][o..o + bits.len()].copy_from_bitslice(bits);
        } else if self.fidelity == Fidelity::BitExact {
            return Err(invalid("bit-exact writes need bit payloads"));
        }
        Ok(())
    }

    fn global(&self) -> &BitsRef {
        &self.global
    }

    fn global_mut(&mut self) -> &mut BitsRef {
        &mut self.global
    }
}

impl Substrate for SystemState {
    fn fail(&mut self, ev: &FailureEvent) -> Result<()> {
        if ev.node >= self.params.n_nodes as usize {
            return Err(invalid(format!("failure of unknown node {}", ev.node)));
        }
        if ev.time < self.clock {
            return Err(invalid(format!(
                "failure at {} precedes the clock {}",
                ev.time, self.clock
            )));
        }
        self.clock = ev.time;
        if let Some(c) = self.nodes.get_mut(ev.node) {
            c.fill(false);
        }
        self.ledger.record_failure(*ev);
        Ok(())
    }

    fn ledger(&self) -> &ReadLedger {
        &self.ledger
    }
}

fn bits_to_string(bits: &BitsRef) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

fn bits_from_str(s: &str) -> Result<Bits> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Format(format!("bad payload character {other:?}"))),
        })
        .collect()
}

/// Write trace records as `seq,time,node,offset,length,payload` rows, the
/// payload as a `0`/`1` string (empty when not recorded).
pub fn write_trace_csv<'a, W: Write>(records: impl IntoIterator<Item = &'a ReadRecord>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["seq", "time", "node", "offset", "length", "payload"])
        .map_err(err)?;
    for r in records {
        w.write_record([
            r.seq.to_string(),
            format!("{:?}", r.time),
            r.node.to_string(),
            r.offset.to_string(),
            r.len.to_string(),
            r.payload.as_deref().map(bits_to_string).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Parse rows written by [`write_trace_csv`]. Epoch and local flags are not
/// part of the format and come back as zero and false.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<ReadRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Format(format!("missing field {i}")));
        let num = |i: usize| -> Result<u64> {
            field(i)?
                .parse()
                .map_err(|_| Error::Format(format!("bad integer in field {i}")))
        };
        let payload = field(5)?;
        out.push(ReadRecord {
            seq: num(0)?,
            time: field(1)?
                .parse()
                .map_err(|_| Error::Format("bad time".into()))?,
            epoch: 0,
            node: num(2)? as usize,
            offset: num(3)?,
            len: num(4)?,
            local: false,
            payload: if payload.is_empty() { None } else { Some(bits_from_str(payload)?) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams::new(4, 32, 8, 64, 1.0).unwrap()
    }

    fn ev(index: u64, time: f64, node: usize) -> FailureEvent {
        FailureEvent { index, time, node }
    }

    fn bits(pattern: &[u8]) -> Bits {
        pattern.iter().map(|&b| b == 1).collect()
    }

    #[test]
    fn read_your_writes() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        let data = bits(&[1, 0, 1, 1, 0, 1]);
        s.write(2, 5, &Payload::Bits(data.clone())).unwrap();
        assert_eq!(s.read(2, 5, 6).unwrap(), Payload::Bits(data));
    }

    #[test]
    fn failed_node_reads_zero_and_fail_is_idempotent() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.write(1, 0, &Payload::Bits(bits(&[1; 32]))).unwrap();
        s.fail(&ev(0, 1.0, 1)).unwrap();
        let once = s.snapshot();
        assert_eq!(s.read(1, 0, 32).unwrap(), Payload::Bits(bitvec![u8, Lsb0; 0; 32]));
        s.fail(&ev(1, 1.0, 1)).unwrap();
        assert_eq!(s.snapshot().nodes, once.nodes);
        assert_eq!(s.ledger().current_epoch(), 2);
    }

    #[test]
    fn last_writer_wins_and_global_is_free() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.fail(&ev(0, 0.0, 3)).unwrap();
        s.write(0, 0, &Payload::Bits(bits(&[1, 1, 1, 1]))).unwrap();
        s.write(0, 2, &Payload::Bits(bits(&[0, 0, 0]))).unwrap();
        assert_eq!(s.node_bits(0).unwrap()[..5], bits(&[1, 1, 0, 0, 0])[..]);
        s.global_mut().set(3, true);
        assert!(s.global()[3]);
        assert_eq!(s.ledger().total_charged(), 0);
    }

    #[test]
    fn reads_are_additive_per_epoch() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.fail(&ev(0, 0.0, 0)).unwrap();
        s.read(1, 0, 10).unwrap();
        s.read(2, 0, 20).unwrap();
        s.fail(&ev(1, 1.0, 3)).unwrap();
        assert_eq!(s.ledger().epoch_total(1), 30);
        assert_eq!(s.ledger().cell(1, 2), 20);
        assert_eq!(s.ledger().total_charged(), 30);
    }

    #[test]
    fn reads_before_first_failure_are_excluded() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.read(0, 0, 32).unwrap();
        assert_eq!(s.ledger().init_bits(), 32);
        assert_eq!(s.ledger().total_charged(), 0);
    }

    #[test]
    fn out_of_range_access() {
        let mut s = SystemState::new(params(), StateConfig::symbolic()).unwrap();
        assert!(matches!(s.read(0, 30, 3), Err(Error::OutOfRange { .. })));
        assert!(s.read(4, 0, 1).is_err());
        assert!(s.write(0, 33, &Payload::Symbolic(0)).is_err());
        assert!(s.fail(&ev(0, 1.0, 9)).is_err());
    }

    #[test]
    fn failure_time_must_not_go_backwards() {
        let mut s = SystemState::new(params(), StateConfig::symbolic()).unwrap();
        s.fail(&ev(0, 2.0, 0)).unwrap();
        assert!(s.fail(&ev(1, 1.0, 0)).is_err());
    }

    #[test]
    fn rfsize_matches_prior_reads() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.fail(&ev(0, 0.0, 0)).unwrap();
        s.read(2, 0, 7).unwrap();
        s.read(1, 0, 3).unwrap();
        s.fail(&ev(1, 1.0, 1)).unwrap();
        s.read(2, 0, 5).unwrap();
        s.fail(&ev(2, 2.0, 2)).unwrap();
        let ph = s.ledger().phase(0);
        assert_eq!(ph.rfsize_i(1), 3);
        assert_eq!(ph.rfsize_i(2), 12);
        assert_eq!(ph.rfsize(3), 15);
        assert_eq!(ph.rsize(2), 15);
        let rf: u64 = ph.rf_records(3).iter().map(|r| r.len).sum();
        assert_eq!(rf, 15);
    }

    #[test]
    fn read_rate_window() {
        let mut s = SystemState::new(params(), StateConfig::symbolic()).unwrap();
        assert_eq!(s.total_read_rate(0.0, 1.0).unwrap(), 0.0);
        s.fail(&ev(0, 0.0, 0)).unwrap();
        s.advance(0.5);
        s.read(1, 0, 32).unwrap();
        s.fail(&ev(1, 1.0, 1)).unwrap();
        s.advance(1.5);
        s.read(2, 0, 32).unwrap();
        assert_eq!(s.total_read_rate(0.0, 2.0).unwrap(), 32.0);
        assert_eq!(s.total_read_rate(1.0, 2.0).unwrap(), 32.0);
        assert!(s.total_read_rate(1.0, 1.0).is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let mut s = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
        s.write(1, 0, &Payload::Bits(bits(&[1, 0, 0, 1, 1]))).unwrap();
        s.fail(&ev(0, 0.125, 0)).unwrap();
        s.advance(0.3);
        s.read(1, 0, 5).unwrap();
        s.read(3, 2, 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(s.ledger().trace(), &mut buf).unwrap();
        let back = read_trace_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(s.ledger().trace()) {
            assert_eq!((a.seq, a.time, a.node, a.offset, a.len), (b.seq, b.time, b.node, b.offset, b.len));
            assert_eq!(a.payload.as_ref().map(|p| p.len()).unwrap_or(0), b.payload.as_ref().map(|p| p.len()).unwrap_or(0));
        }
        assert_eq!(back[0].payload, s.ledger().trace()[0].payload);
    }

    proptest! {
        // identical request streams charge identical ledgers in both modes,
        // and the cells sum to the total
        #[test]
        fn symbolic_and_bit_exact_charge_alike(reqs in proptest::collection::vec((0usize..4, 0u64..32, 0u64..32, proptest::bool::ANY), 1..60)) {
            let mut cfg = StateConfig::symbolic();
            cfg.ledger_cells = true;
            let mut a = SystemState::new(params(), StateConfig::bit_exact()).unwrap();
            let mut b = SystemState::new(params(), cfg).unwrap();
            let mut idx = 0;
            for (node, off, len, fail) in reqs {
                let len = len.min(32 - off);
                if fail {
                    let e = ev(idx, idx as f64, node);
                    idx += 1;
                    a.fail(&e).unwrap();
                    b.fail(&e).unwrap();
                } else {
                    a.read(node, off, len).unwrap();
                    b.read(node, off, len).unwrap();
                }
            }
            let (la, lb) = (a.ledger(), b.ledger());
            prop_assert_eq!(la.total_charged(), lb.total_charged());
            let mut cell_sum = 0;
            for e in 0..=la.current_epoch() {
                prop_assert_eq!(la.epoch_total(e), lb.epoch_total(e));
                for j in 0..4 {
                    prop_assert_eq!(la.cell(e, j), lb.cell(e, j));
                    if e > 0 { cell_sum += la.cell(e, j); }
                }
            }
            prop_assert_eq!(cell_sum, la.total_charged());
        }
    }
}
