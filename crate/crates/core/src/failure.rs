//! Failure-sequence generators. Timing is Poisson or periodic; the
//! identifier streams come in several flavours below.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Error, Result};
use crate::params::SystemParams;
use crate::rng::{stream, Substream};

/// One node failure: the node is erased at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureEvent {
    pub index: u64,
    pub time: f64,
    pub node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimingKind {
    Poisson,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Uniform,
    Distinct,
    GeometricConstructed,
    /// Uniform over all nodes except the one that failed just before.
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureSequence {
    pub events: Vec<FailureEvent>,
    pub timing: TimingKind,
    pub ids: IdKind,
}

impl FailureSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.node).collect()
    }

    /// Build a sequence from explicit times and identifiers.
    pub fn from_parts(times: &[f64], ids: &[usize], timing: TimingKind, kind: IdKind) -> Result<Self> {
        if times.len() != ids.len() {
            return Err(invalid("times and identifiers differ in length"));
        }
        let events = times
            .iter()
            .zip(ids)
            .enumerate()
            .map(|(i, (&time, &node))| FailureEvent {
                index: i as u64,
                time,
                node,
            })
            .collect();
        let seq = FailureSequence {
            events,
            timing,
            ids: kind,
        };
        seq.check_order()?;
        Ok(seq)
    }

    fn check_order(&self) -> Result<()> {
        for w in self.events.windows(2) {
            if !(w[1].time >= w[0].time) {
                return Err(invalid(format!(
                    "failure times must be non-decreasing (index {})",
                    w[1].index
                )));
            }
        }
        Ok(())
    }

    /// Write `index,time,id` rows. Times use the shortest round-trip
    /// representation so that import reproduces them bit for bit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["index", "time", "id"]).map_err(fmt_err)?;
        for e in &self.events {
            w.write_record([e.index.to_string(), format!("{:?}", e.time), e.node.to_string()])
                .map_err(fmt_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, timing: TimingKind, kind: IdKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut events = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::Format(format!("row {row}: expected 3 fields")));
            }
            let parse = |i: usize| -> Result<&str> { Ok(rec.get(i).unwrap_or("").trim()) };
            let index: u64 = parse(0)?
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: bad index")))?;
            let time: f64 = parse(1)?
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: bad time")))?;
            let node: usize = parse(2)?
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: bad id")))?;
            if index != row as u64 {
                return Err(Error::Format(format!("row {row}: index {index} out of order")));
            }
            events.push(FailureEvent { index, time, node });
        }
        let seq = FailureSequence {
            events,
            timing,
            ids: kind,
        };
        seq.check_order()?;
        Ok(seq)
    }
}

/// Poisson failures: gaps i.i.d. exponential with rate `λN`, identifiers
/// i.i.d. uniform over all nodes. The first event is at `t0`.
pub fn gen_poisson(params: &SystemParams, t0: f64, horizon: usize, seed: u64) -> Result<FailureSequence> {
    params.validate()?;
    let n = params.n_nodes as usize;
    let rate = params.lambda * params.n_nodes as f64;
    let exp = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let mut timing = stream(seed, Substream::Timing);
    let mut ids = stream(seed, Substream::Identifiers);
    let mut t = t0;
    let events = (0..horizon)
        .map(|i| {
            if i > 0 {
                t += exp.sample(&mut timing);
            }
            FailureEvent {
                index: i as u64,
                time: t,
                node: ids.random_range(0..n),
            }
        })
        .collect();
    Ok(FailureSequence {
        events,
        timing: TimingKind::Poisson,
        ids: IdKind::Uniform,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicIds {
    Uniform,
    Distinct,
    /// Never repeats the previous identifier.
    Fresh,
}

/// Failures at `t0 + i·period`.
pub fn gen_periodic(
    params: &SystemParams,
    t0: f64,
    period: f64,
    horizon: usize,
    seed: u64,
    id_mode: PeriodicIds,
) -> Result<FailureSequence> {
    params.validate()?;
    if !(period > 0.0) {
        return Err(invalid("period must be positive"));
    }
    let n = params.n_nodes as usize;
    let ids: Vec<usize> = match id_mode {
        PeriodicIds::Uniform => {
            let mut rng = stream(seed, Substream::Identifiers);
            (0..horizon).map(|_| rng.random_range(0..n)).collect()
        }
        PeriodicIds::Distinct => {
            if horizon > n {
                return Err(invalid(format!(
                    "distinct identifiers need horizon ≤ N ({horizon} > {n})"
                )));
            }
            if horizon == 0 {
                Vec::new()
            } else {
                let mut rng = stream(seed, Substream::Identifiers);
                let id0 = rng.random_range(0..n);
                distinct_from(n, id0, horizon, &mut rng)
            }
        }
        PeriodicIds::Fresh => {
            let mut rng = stream(seed, Substream::Identifiers);
            let mut ids: Vec<usize> = Vec::with_capacity(horizon);
            for i in 0..horizon {
                let id = match i {
                    0 => rng.random_range(0..n),
                    _ => {
                        let prev = ids[i - 1];
                        let j = rng.random_range(0..n - 1);
                        if j >= prev { j + 1 } else { j }
                    }
                };
                ids.push(id);
            }
            ids
        }
    };
    let events = ids
        .into_iter()
        .enumerate()
        .map(|(i, node)| FailureEvent {
            index: i as u64,
            time: t0 + i as f64 * period,
            node,
        })
        .collect();
    Ok(FailureSequence {
        events,
        timing: TimingKind::Periodic,
        ids: match id_mode {
            PeriodicIds::Uniform => IdKind::Uniform,
            PeriodicIds::Distinct => IdKind::Distinct,
            PeriodicIds::Fresh => IdKind::Fresh,
        },
    })
}

fn distinct_from<R: Rng>(n: usize, id0: usize, m: usize, rng: &mut R) -> Vec<usize> {
    // partial Fisher-Yates over the remaining identifiers
    let mut pool: Vec<usize> = (0..n).filter(|&j| j != id0).collect();
    let mut out = Vec::with_capacity(m);
    out.push(id0);
    for i in 0..m.saturating_sub(1) {
        let pick = rng.random_range(i..pool.len());
        pool.swap(i, pick);
        out.push(pool[i]);
    }
    out
}

/// `⟨id0, ID_1, …, ID_{M−1}⟩` uniformly distributed over distinct sequences
/// that start at `id0`.
pub fn gen_distinct_phase(n: usize, id0: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(invalid(format!("M ({m}) exceeds N ({n})")));
    }
    if id0 >= n {
        return Err(invalid(format!("id0 ({id0}) out of range for N = {n}")));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut rng = stream(seed, Substream::Identifiers);
    Ok(distinct_from(n, id0, m, &mut rng))
}

/// Geometric gaps `G_1..G_{M−1}` and their prefix sums `GS_0..GS_{M−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricStream {
    pub gaps: Vec<u64>,
    pub prefix: Vec<u64>,
}

impl GeometricStream {
    /// Positions in the identifier stream that carry a new distinct identifier.
    pub fn hit_positions(&self) -> &[u64] {
        &self.prefix
    }
}

/// `G = argmin_{j≥1} {B(j) ≤ (N−i)/N}` for i.i.d. uniform `B`.
pub fn draw_geometric<R: Rng>(n: usize, i: usize, rng: &mut R) -> u64 {
    let threshold = (n - i) as f64 / n as f64;
    let mut j = 1u64;
    loop {
        let b: f64 = rng.random();
        if b <= threshold {
            return j;
        }
        j += 1;
    }
}

/// Uniform identifier stream assembled from a distinct sequence and
/// geometric gaps: position `GS_i` carries `ID_i`, every other position a
/// uniform draw from the identifiers already failed. Times are unit-spaced
/// from zero.
pub fn gen_uniform_via_geometric(
    n: usize,
    id0: usize,
    m: usize,
    seed: u64,
) -> Result<(FailureSequence, GeometricStream)> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    let distinct = gen_distinct_phase(n, id0, m, seed)?;
    let mut geo = stream(seed, Substream::Geometric);
    let mut fill = stream(seed, Substream::Fill);
    let mut gaps = Vec::with_capacity(m - 1);
    let mut prefix = vec![0u64];
    let mut ids = vec![id0];
    for i in 1..m {
        let g = draw_geometric(n, i, &mut geo);
        gaps.push(g);
        prefix.push(prefix[i - 1] + g);
        for _ in 1..g {
            ids.push(distinct[fill.random_range(0..i)]);
        }
        ids.push(distinct[i]);
    }
    let times: Vec<f64> = (0..ids.len()).map(|i| i as f64).collect();
    let seq = FailureSequence::from_parts(&times, &ids, TimingKind::Periodic, IdKind::GeometricConstructed)?;
    Ok((seq, GeometricStream { gaps, prefix }))
}

/// Check the hit/non-hit structure of a geometric-constructed stream.
pub fn check_geometric_structure(seq: &FailureSequence, geo: &GeometricStream) -> bool {
    let hits: HashSet<u64> = geo.prefix.iter().copied().collect();
    let mut seen = HashSet::new();
    for e in &seq.events {
        let fresh = seen.insert(e.node);
        if fresh != hits.contains(&e.index) {
            return false;
        }
    }
    true
}

/// Lazily generated uniform identifier stream with an arbitrary timing
/// sequence, for phase chaining.
pub struct UniformStream {
    n: usize,
    timing: TimingSource,
    ids: rand_chacha::ChaCha20Rng,
    next_index: u64,
    t: f64,
}

enum TimingSource {
    Periodic(f64),
    Poisson(Exp<f64>, rand_chacha::ChaCha20Rng),
}

impl UniformStream {
    pub fn periodic(n: usize, t0: f64, period: f64, seed: u64) -> Self {
        UniformStream {
            n,
            timing: TimingSource::Periodic(period),
            ids: stream(seed, Substream::Identifiers),
            next_index: 0,
            t: t0,
        }
    }

    pub fn poisson(params: &SystemParams, t0: f64, seed: u64) -> Result<Self> {
        let exp = Exp::new(params.lambda * params.n_nodes as f64).map_err(|e| invalid(e.to_string()))?;
        Ok(UniformStream {
            n: params.n_nodes as usize,
            timing: TimingSource::Poisson(exp, stream(seed, Substream::Timing)),
            ids: stream(seed, Substream::Identifiers),
            next_index: 0,
            t: t0,
        })
    }
}

impl Iterator for UniformStream {
    type Item = FailureEvent;

    fn next(&mut self) -> Option<FailureEvent> {
        if self.next_index > 0 {
            self.t += match &mut self.timing {
                TimingSource::Periodic(p) => *p,
                TimingSource::Poisson(exp, rng) => exp.sample(rng),
            };
        }
        let ev = FailureEvent {
            index: self.next_index,
            time: self.t,
            node: self.ids.random_range(0..self.n),
        };
        self.next_index += 1;
        Some(ev)
    }
}
