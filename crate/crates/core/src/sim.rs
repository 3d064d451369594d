//! Two-valued, cycle-accurate simulation of generated netlists.
//!
//! Cycle `t` spans rising edge `t` to rising edge `t + 1`. The inputs of
//! cycle `t` (changed at the preceding falling edge) are sampled at edge
//! `t + 1`; a trace row for cycle `t` shows the inputs applied during the
//! cycle and the register contents between the two edges. Registers power
//! up at 0, so a sample applied in cycle `t` is visible on `y` in cycle
//! `t + 3`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::BoolSample;
use crate::error::{Error, Result};
use crate::hwgen::{GateKind, Netlist, Stage};
use crate::prune::{infer_pruned, PrunedModel};
use crate::train::RandomStream;

/// Rising edges between sampling an input and seeing its class on `y`.
pub const LATENCY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub x: u64,
    pub rst_n: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    cycles: Vec<Cycle>,
}

impl Stimulus {
    pub fn new(cycles: Vec<Cycle>) -> Result<Self> {
        if cycles.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(Stimulus { cycles })
    }

    /// `reset` cycles with `rst_n` low, one cycle per input, then `flush`
    /// idle cycles (x = 0) so the last input drains through the pipeline.
    pub fn stream(inputs: &[u64], reset: usize, flush: usize) -> Result<Self> {
        let low = (0..reset).map(|_| Cycle { x: 0, rst_n: false });
        let data = inputs.iter().map(|&x| Cycle { x, rst_n: true });
        let idle = (0..flush).map(|_| Cycle { x: 0, rst_n: true });
        Self::new(low.chain(data).chain(idle).collect())
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

/// Register bits of one rank, least significant first, in netlist order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bits {
    pub len: usize,
    pub words: Vec<u64>,
}

impl Bits {
    fn from_bools(bits: impl ExactSizeIterator<Item = bool>) -> Self {
        let len = bits.len();
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, b) in bits.enumerate() {
            words[i / 64] |= (b as u64) << (i % 64);
        }
        Bits { len, words }
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Most significant nibble first, `ceil(len / 4)` digits ("0" when empty).
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4).max(1);
        let mut s = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut v = 0u8;
            for b in 0..4 {
                let i = d * 4 + b;
                if i < self.len && self.get(i) {
                    v |= 1 << b;
                }
            }
            write!(s, "{v:x}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub cycle: usize,
    pub rst_n: bool,
    pub x: u64,
    pub y: u8,
    pub stage1: Bits,
    pub stage2: Bits,
    pub stage3: Bits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn outputs(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cycle,rst_n,x,y,s1,s2,s3\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{:016x},{:x},{},{},{}",
                r.cycle,
                r.rst_n as u8,
                r.x,
                r.y,
                r.stage1.to_hex(),
                r.stage2.to_hex(),
                r.stage3.to_hex()
            )
            .unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Inv(usize, usize),
    Nand(usize, usize, usize),
    Const(usize, bool),
}

/// Levelized evaluator holding the register state of one netlist.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    netlist: &'a Netlist,
    ops: Vec<Op>,
    /// `(q, d)` net pairs of every DFF, grouped by rank.
    ranks: [Vec<(usize, usize)>; 3],
    values: Vec<bool>,
    next: Vec<bool>,
    low_outputs: u64,
    evaluations: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(netlist: &'a Netlist) -> Result<Self> {
        netlist.validate()?;
        let ops = netlist
            .combinational_order()?
            .into_iter()
            .map(|gi| {
                let g = &netlist.gates[gi];
                let o = g.output.index();
                match g.kind {
                    GateKind::Inv => Op::Inv(o, g.inputs[0].index()),
                    GateKind::Nand2 => Op::Nand(o, g.inputs[0].index(), g.inputs[1].index()),
                    GateKind::Const0 => Op::Const(o, false),
                    GateKind::Const1 => Op::Const(o, true),
                    GateKind::Dff => unreachable!("combinational order excludes DFFs"),
                }
            })
            .collect();
        let mut ranks: [Vec<(usize, usize)>; 3] = Default::default();
        for g in netlist.dffs() {
            let stage = g.stage.expect("validated");
            ranks[stage.rank() - 1].push((g.output.index(), g.inputs[0].index()));
        }
        let n = netlist.net_count as usize;
        Ok(Simulator {
            netlist,
            ops,
            ranks,
            values: vec![false; n],
            next: Vec::new(),
            low_outputs: 0,
            evaluations: 0,
        })
    }

    /// Current `y` (the output register contents).
    pub fn y(&self) -> u8 {
        self.netlist
            .outputs
            .iter()
            .enumerate()
            .map(|(i, o)| (self.values[o.index()] as u8) << i)
            .sum()
    }

    fn rank_bits(&self, stage: Stage) -> Bits {
        Bits::from_bools(self.ranks[stage.rank() - 1].iter().map(|&(q, _)| self.values[q]))
    }

    fn evaluate(&mut self, cycle: Cycle) {
        for i in 0..self.netlist.inputs.len() {
            self.values[i] = (cycle.x >> i) & 1 == 1;
        }
        self.values[self.netlist.rst_n.index()] = cycle.rst_n;
        let mut low = 0;
        for op in &self.ops {
            match *op {
                Op::Inv(o, a) => {
                    self.values[o] = !self.values[a];
                    low += self.values[o] as u64 ^ 1;
                }
                Op::Nand(o, a, b) => {
                    self.values[o] = !(self.values[a] && self.values[b]);
                    low += self.values[o] as u64 ^ 1;
                }
                Op::Const(o, v) => self.values[o] = v,
            }
        }
        self.low_outputs += low;
        self.evaluations += 1;
    }

    fn clock(&mut self, rst_n: bool) {
        self.next.clear();
        for rank in &self.ranks {
            for &(_, d) in rank {
                self.next.push(rst_n && self.values[d]);
            }
        }
        let mut k = 0;
        for rank in &self.ranks {
            for &(q, _) in rank {
                self.values[q] = self.next[k];
                k += 1;
            }
        }
    }

    /// Runs one cycle: applies the inputs, records the row, then clocks.
    pub fn step(&mut self, cycle_index: usize, cycle: Cycle) -> TraceRow {
        self.evaluate(cycle);
        let row = TraceRow {
            cycle: cycle_index,
            rst_n: cycle.rst_n,
            x: cycle.x,
            y: self.y(),
            stage1: self.rank_bits(Stage::Stage1Input),
            stage2: self.rank_bits(Stage::Stage2Sum),
            stage3: self.rank_bits(Stage::Stage3Out),
        };
        self.clock(cycle.rst_n);
        row
    }

    /// Steps without building a trace row; returns `y` during the cycle.
    pub fn step_output(&mut self, cycle: Cycle) -> u8 {
        self.evaluate(cycle);
        let y = self.y();
        self.clock(cycle.rst_n);
        y
    }

    /// Mean fraction of INV/NAND2 outputs driving low over the cycles
    /// evaluated so far, or `None` before the first cycle or without logic.
    pub fn duty_low(&self) -> Option<f64> {
        let cells = self.ops.iter().filter(|op| !matches!(op, Op::Const(..))).count();
        (self.evaluations > 0 && cells > 0)
            .then(|| self.low_outputs as f64 / (self.evaluations as f64 * cells as f64))
    }
}

pub fn simulate(netlist: &Netlist, stim: &Stimulus) -> Result<Trace> {
    let mut sim = Simulator::new(netlist)?;
    let rows = stim
        .cycles()
        .iter()
        .enumerate()
        .map(|(t, &c)| sim.step(t, c))
        .collect();
    Ok(Trace { rows })
}

/// Measured low-output fraction of the combinational cells over a stimulus.
pub fn measure_duty_low(netlist: &Netlist, stim: &Stimulus) -> Result<Option<f64>> {
    let mut sim = Simulator::new(netlist)?;
    for &c in stim.cycles() {
        sim.step_output(c);
    }
    Ok(sim.duty_low())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub sample: usize,
    pub expected: u8,
    pub observed: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub latency_cycles: usize,
    pub cycles_simulated: usize,
    pub mismatches: Vec<Mismatch>,
    pub passed: bool,
}

/// Streams the samples back to back after one reset cycle and compares
/// every output, `LATENCY` cycles after its input, with `infer_pruned`.
pub fn check_equivalence(
    pruned: &PrunedModel,
    netlist: &Netlist,
    samples: &[BoolSample],
) -> Result<EquivalenceReport> {
    let inputs: Vec<u64> = samples.iter().map(|s| s.bits).collect();
    let stim = Stimulus::stream(&inputs, 1, LATENCY)?;
    let mut sim = Simulator::new(netlist)?;
    let ys: Vec<u8> = stim.cycles().iter().map(|&c| sim.step_output(c)).collect();
    let mismatches: Vec<Mismatch> = samples
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            let expected = infer_pruned(pruned, s);
            let observed = ys[1 + k + LATENCY];
            (expected != observed).then_some(Mismatch {
                sample: k,
                expected,
                observed,
            })
        })
        .collect();
    Ok(EquivalenceReport {
        samples: samples.len(),
        latency_cycles: LATENCY,
        cycles_simulated: stim.len(),
        passed: mismatches.is_empty(),
        mismatches,
    })
}

/// Uniformly random 64-bit inputs (labels are meaningless and set to 0).
pub fn random_samples(n: usize, seed: u64) -> Vec<BoolSample> {
    let mut rng = RandomStream::new(seed);
    (0..n).map(|_| BoolSample::new(rng.next_u64(), 0)).collect()
}

const VECTOR_HEADER: &str = "\
# test vectors: one sample per line\n\
# <x: 16 hex digits, bit i = x[i]> <expected y: 1 hex digit>\n\
# apply x for one cycle after reset; y follows 3 rising edges later\n";

/// One `(x, expected_y)` pair per line, computed with `infer_pruned`.
pub fn export_vectors(pruned: &PrunedModel, samples: &[BoolSample], path: impl AsRef<Path>) -> Result<()> {
    let vectors: Vec<(u64, u8)> = samples.iter().map(|s| (s.bits, infer_pruned(pruned, s))).collect();
    let path = path.as_ref();
    fs::write(path, vectors_to_string(&vectors)).map_err(|e| Error::io(path, e))
}

pub fn vectors_to_string(vectors: &[(u64, u8)]) -> String {
    let mut s = String::from(VECTOR_HEADER);
    for (x, y) in vectors {
        writeln!(s, "{x:016x} {y:x}").unwrap();
    }
    s
}

pub fn parse_vectors(text: &str) -> Result<Vec<(u64, u8)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let mut fields = line.split_whitespace();
        let (Some(x), Some(y), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err("expected two fields"));
        };
        if x.len() != 16 || y.len() != 1 {
            return Err(err("expected 16 hex digits and 1 hex digit"));
        }
        let x = u64::from_str_radix(x, 16).map_err(|e| err(&e.to_string()))?;
        let y = u8::from_str_radix(y, 16).map_err(|e| err(&e.to_string()))?;
        out.push((x, y));
    }
    Ok(out)
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<Vec<(u64, u8)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vectors(&text)
}
