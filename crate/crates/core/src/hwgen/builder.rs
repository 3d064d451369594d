//! Structurally hashed gate builder with constant folding.
//!
//! Every Boolean and arithmetic helper lowers to INV and NAND2. Identical
//! gates are shared, double inversions cancel and constants propagate, so
//! a constant never costs a gate unless it has to drive a register.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::netlist::{Gate, GateKind, NetId, Netlist, Stage, NETLIST_FORMAT, NETLIST_VERSION};
use crate::dataset::PIXELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sig {
    Const(bool),
    Net(NetId),
}

pub const ZERO: Sig = Sig::Const(false);
pub const ONE: Sig = Sig::Const(true);

/// Unsigned bundle, least significant bit first, with a known upper bound.
#[derive(Debug, Clone)]
pub struct Word {
    pub bits: Vec<Sig>,
    pub max: u64,
}

impl Word {
    pub fn bit(&self, i: usize) -> Sig {
        self.bits.get(i).copied().unwrap_or(ZERO)
    }
}

/// Bits needed to hold every value in `0..=max`.
pub fn bits_for(max: u64) -> usize {
    (u64::BITS - max.leading_zeros()) as usize
}

pub struct Builder {
    gates: Vec<Gate>,
    net_count: u32,
    strash: HashMap<(GateKind, NetId, NetId), NetId>,
    complement: HashMap<NetId, NetId>,
    consts: [Option<NetId>; 2],
    names: BTreeMap<NetId, String>,
}

impl Default for Builder {
    fn default() -> Self {
        Self::new()
    }
}

impl Builder {
    /// Starts with the primary inputs `x[0..64]` and `rst_n` allocated.
    pub fn new() -> Self {
        let mut names = BTreeMap::new();
        for i in 0..PIXELS {
            names.insert(NetId(i as u32), format!("x[{i}]"));
        }
        names.insert(NetId(PIXELS as u32), "rst_n".to_string());
        Builder {
            gates: Vec::new(),
            net_count: PIXELS as u32 + 1,
            strash: HashMap::new(),
            complement: HashMap::new(),
            consts: [None; 2],
            names,
        }
    }

    pub fn input(&self, i: usize) -> NetId {
        assert!(i < PIXELS);
        NetId(i as u32)
    }

    fn fresh(&mut self) -> NetId {
        let n = NetId(self.net_count);
        self.net_count += 1;
        n
    }

    fn push(&mut self, kind: GateKind, inputs: Vec<NetId>, stage: Option<Stage>) -> NetId {
        let output = self.fresh();
        self.gates.push(Gate {
            kind,
            inputs,
            output,
            stage,
        });
        output
    }

    /// Materializes a signal as a net (constants become tie cells).
    pub fn net(&mut self, s: Sig) -> NetId {
        match s {
            Sig::Net(n) => n,
            Sig::Const(v) => {
                if let Some(n) = self.consts[v as usize] {
                    return n;
                }
                let kind = if v { GateKind::Const1 } else { GateKind::Const0 };
                let n = self.push(kind, Vec::new(), None);
                self.consts[v as usize] = Some(n);
                n
            }
        }
    }

    pub fn inv(&mut self, a: Sig) -> Sig {
        match a {
            Sig::Const(v) => Sig::Const(!v),
            Sig::Net(n) => {
                if let Some(&c) = self.complement.get(&n) {
                    return Sig::Net(c);
                }
                let out = self.push(GateKind::Inv, vec![n], None);
                self.complement.insert(n, out);
                self.complement.insert(out, n);
                Sig::Net(out)
            }
        }
    }

    pub fn nand(&mut self, a: Sig, b: Sig) -> Sig {
        match (a, b) {
            (Sig::Const(false), _) | (_, Sig::Const(false)) => ONE,
            (Sig::Const(true), x) | (x, Sig::Const(true)) => self.inv(x),
            (Sig::Net(x), Sig::Net(y)) => {
                if x == y {
                    return self.inv(a);
                }
                if self.complement.get(&x) == Some(&y) {
                    return ONE;
                }
                let key = (GateKind::Nand2, x.min(y), x.max(y));
                if let Some(&n) = self.strash.get(&key) {
                    return Sig::Net(n);
                }
                let out = self.push(GateKind::Nand2, vec![key.1, key.2], None);
                self.strash.insert(key, out);
                Sig::Net(out)
            }
        }
    }

    pub fn and(&mut self, a: Sig, b: Sig) -> Sig {
        let n = self.nand(a, b);
        self.inv(n)
    }

    pub fn or(&mut self, a: Sig, b: Sig) -> Sig {
        let na = self.inv(a);
        let nb = self.inv(b);
        self.nand(na, nb)
    }

    /// Four-NAND exclusive or.
    pub fn xor(&mut self, a: Sig, b: Sig) -> Sig {
        match (a, b) {
            (Sig::Const(false), x) | (x, Sig::Const(false)) => x,
            (Sig::Const(true), x) | (x, Sig::Const(true)) => self.inv(x),
            _ if a == b => ZERO,
            _ => {
                let t = self.nand(a, b);
                let l = self.nand(a, t);
                let r = self.nand(b, t);
                self.nand(l, r)
            }
        }
    }

    /// `sel ? hi : lo`.
    pub fn mux(&mut self, sel: Sig, hi: Sig, lo: Sig) -> Sig {
        if hi == lo {
            return hi;
        }
        match sel {
            Sig::Const(true) => hi,
            Sig::Const(false) => lo,
            _ => {
                let nsel = self.inv(sel);
                let a = self.nand(hi, sel);
                let b = self.nand(lo, nsel);
                self.nand(a, b)
            }
        }
    }

    /// Majority of three, the carry of a full adder.
    pub fn maj(&mut self, a: Sig, b: Sig, c: Sig) -> Sig {
        match (a, b, c) {
            (Sig::Const(false), x, y) | (x, Sig::Const(false), y) | (x, y, Sig::Const(false)) => {
                self.and(x, y)
            }
            (Sig::Const(true), x, y) | (x, Sig::Const(true), y) | (x, y, Sig::Const(true)) => {
                self.or(x, y)
            }
            _ => {
                let ab = self.nand(a, b);
                let a_or_b = self.or(a, b);
                let c_ab = self.nand(c, a_or_b);
                self.nand(ab, c_ab)
            }
        }
    }

    /// `(sum, carry)` of `a + b`.
    pub fn half_adder(&mut self, a: Sig, b: Sig) -> (Sig, Sig) {
        let s = self.xor(a, b);
        let c = self.and(a, b);
        (s, c)
    }

    /// `(sum, carry)` of `a + b + c`: the nine-NAND full adder.
    pub fn full_adder(&mut self, a: Sig, b: Sig, c: Sig) -> (Sig, Sig) {
        if matches!(a, Sig::Const(_)) || matches!(b, Sig::Const(_)) || matches!(c, Sig::Const(_)) {
            let s = self.xor(a, b);
            let s = self.xor(s, c);
            return (s, self.maj(a, b, c));
        }
        let t1 = self.nand(a, b);
        let s1 = self.xor(a, b);
        let t4 = self.nand(s1, c);
        let l = self.nand(s1, t4);
        let r = self.nand(c, t4);
        let sum = self.nand(l, r);
        let carry = self.nand(t1, t4);
        (sum, carry)
    }

    /// Ripple-carry sum of two unsigned words.
    pub fn add(&mut self, a: &Word, b: &Word) -> Word {
        let max = a.max + b.max;
        let width = bits_for(max);
        let mut carry = ZERO;
        let mut bits = Vec::with_capacity(width);
        for i in 0..width {
            let (s, c) = self.full_adder(a.bit(i), b.bit(i), carry);
            bits.push(s);
            carry = c;
        }
        Word { bits, max }
    }

    /// Counts the true votes with a column-compression tree: full adders
    /// turn three bits of one weight into a sum of that weight and a carry of
    /// the next, half adders finish columns holding two bits. Bits are
    /// consumed in arrival order, so each column is reduced breadth first.
    pub fn popcount(&mut self, votes: &[Sig]) -> Word {
        let max = votes.len() as u64;
        let mut columns: Vec<VecDeque<Sig>> = vec![votes.iter().copied().collect()];
        let mut bits = Vec::new();
        let mut i = 0;
        while i < columns.len() {
            while columns[i].len() >= 2 {
                let a = columns[i].pop_front().expect("len checked");
                let b = columns[i].pop_front().expect("len checked");
                let (s, c) = if columns[i].is_empty() {
                    self.half_adder(a, b)
                } else {
                    let c = columns[i].pop_front().expect("len checked");
                    self.full_adder(a, b, c)
                };
                columns[i].push_back(s);
                if columns.len() == i + 1 {
                    columns.push(VecDeque::new());
                }
                columns[i + 1].push_back(c);
            }
            bits.push(columns[i].pop_front().unwrap_or(ZERO));
            i += 1;
        }
        bits.truncate(bits_for(max));
        Word { bits, max }
    }

    /// `a - b` in `width`-bit two's complement.
    pub fn subtract(&mut self, a: &Word, b: &Word, width: usize) -> Vec<Sig> {
        let mut carry = ONE;
        let mut bits = Vec::with_capacity(width);
        for i in 0..width {
            let nb = self.inv(b.bit(i));
            let (s, c) = self.full_adder(a.bit(i), nb, carry);
            bits.push(s);
            carry = c;
        }
        bits
    }

    /// `a > b` for `width`-bit two's-complement operands: the sign of
    /// `b - a` evaluated in `width + 1` bits.
    pub fn signed_greater(&mut self, a: &[Sig], b: &[Sig]) -> Sig {
        assert_eq!(a.len(), b.len());
        let width = a.len();
        if width == 0 {
            return ZERO;
        }
        let mut carry = ONE;
        for i in 0..width {
            let na = self.inv(a[i]);
            carry = self.maj(b[i], na, carry);
        }
        let na = self.inv(a[width - 1]);
        let top = self.xor(b[width - 1], na);
        self.xor(top, carry)
    }

    /// Adds a DFF sampling `d`. Returns its output net.
    pub fn dff(&mut self, d: Sig, stage: Stage, name: String) -> NetId {
        let d = self.net(d);
        let q = self.push(GateKind::Dff, vec![d], Some(stage));
        self.names.insert(q, name);
        q
    }

    /// Drops combinational gates that feed no register, then renumbers nets
    /// densely in creation order.
    pub fn finish(self, module_name: &str, outputs: Vec<NetId>) -> Netlist {
        let mut driver: HashMap<NetId, usize> = HashMap::new();
        for (i, g) in self.gates.iter().enumerate() {
            driver.insert(g.output, i);
        }
        let mut live = HashSet::new();
        let mut stack: Vec<usize> = self
            .gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.kind == GateKind::Dff)
            .map(|(i, _)| i)
            .collect();
        while let Some(g) = stack.pop() {
            if !live.insert(g) {
                continue;
            }
            for inp in &self.gates[g].inputs {
                if let Some(&d) = driver.get(inp) {
                    stack.push(d);
                }
            }
        }

        let fixed = PIXELS as u32 + 1;
        let mut remap: HashMap<NetId, NetId> = (0..fixed).map(|i| (NetId(i), NetId(i))).collect();
        let mut next = fixed;
        for (i, g) in self.gates.iter().enumerate() {
            if live.contains(&i) {
                remap.insert(g.output, NetId(next));
                next += 1;
            }
        }
        let gates = self
            .gates
            .iter()
            .enumerate()
            .filter(|(i, _)| live.contains(i))
            .map(|(_, g)| Gate {
                kind: g.kind,
                inputs: g.inputs.iter().map(|n| remap[n]).collect(),
                output: remap[&g.output],
                stage: g.stage,
            })
            .collect();
        let names = self
            .names
            .iter()
            .filter_map(|(n, name)| remap.get(n).map(|&m| (m, name.clone())))
            .collect();
        Netlist {
            format: NETLIST_FORMAT.to_string(),
            version: NETLIST_VERSION,
            module_name: module_name.to_string(),
            net_count: next,
            inputs: (0..PIXELS as u32).map(NetId).collect(),
            rst_n: NetId(PIXELS as u32),
            outputs: outputs.iter().map(|n| remap[n]).collect(),
            gates,
            names,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Evaluates the combinational gates of a builder directly.
    fn eval(b: &Builder, inputs: &HashMap<NetId, bool>, s: Sig) -> bool {
        let mut v: HashMap<NetId, bool> = inputs.clone();
        for g in &b.gates {
            let x = |i: usize| v[&g.inputs[i]];
            let out = match g.kind {
                GateKind::Inv => !x(0),
                GateKind::Nand2 => !(x(0) && x(1)),
                GateKind::Const0 => false,
                GateKind::Const1 => true,
                GateKind::Dff => continue,
            };
            v.insert(g.output, out);
        }
        match s {
            Sig::Const(c) => c,
            Sig::Net(n) => v[&n],
        }
    }

    fn three_inputs() -> (Builder, [Sig; 3]) {
        let b = Builder::new();
        let ins = [0, 1, 2].map(|i| Sig::Net(b.input(i)));
        (b, ins)
    }

    fn assignments(n: usize) -> impl Iterator<Item = (HashMap<NetId, bool>, Vec<bool>)> {
        (0..1u32 << n).map(move |m| {
            let vals: Vec<bool> = (0..n).map(|i| (m >> i) & 1 == 1).collect();
            let map = vals.iter().enumerate().map(|(i, &v)| (NetId(i as u32), v)).collect();
            (map, vals)
        })
    }

    #[test]
    fn full_adder_truth_table_and_cost() {
        let (mut b, [x, y, z]) = three_inputs();
        let (s, c) = b.full_adder(x, y, z);
        assert_eq!(b.gates.len(), 9);
        assert!(b.gates.iter().all(|g| g.kind == GateKind::Nand2));
        for (map, v) in assignments(3) {
            let total = v.iter().filter(|&&t| t).count();
            assert_eq!(eval(&b, &map, s), total % 2 == 1, "{v:?}");
            assert_eq!(eval(&b, &map, c), total >= 2, "{v:?}");
        }
    }

    #[test]
    fn primitive_truth_tables() {
        let (mut b, [x, y, z]) = three_inputs();
        let and = b.and(x, y);
        let or = b.or(x, y);
        let xor = b.xor(x, y);
        let mux = b.mux(z, x, y);
        let maj = b.maj(x, y, z);
        let (hs, hc) = b.half_adder(x, y);
        for (map, v) in assignments(3) {
            let (p, q, r) = (v[0], v[1], v[2]);
            assert_eq!(eval(&b, &map, and), p && q);
            assert_eq!(eval(&b, &map, or), p || q);
            assert_eq!(eval(&b, &map, xor), p ^ q);
            assert_eq!(eval(&b, &map, mux), if r { p } else { q });
            assert_eq!(eval(&b, &map, maj), (p as u8 + q as u8 + r as u8) >= 2);
            assert_eq!(eval(&b, &map, hs), p ^ q);
            assert_eq!(eval(&b, &map, hc), p && q);
        }
    }

    #[test]
    fn constant_folding_and_sharing() {
        let (mut b, [x, y, _]) = three_inputs();
        assert_eq!(b.nand(x, ZERO), ONE);
        let nx = b.inv(x);
        assert_eq!(b.inv(nx), x);
        assert_eq!(b.nand(x, nx), ONE);
        let g1 = b.nand(x, y);
        let g2 = b.nand(y, x);
        assert_eq!(g1, g2);
        assert_eq!(b.xor(x, x), ZERO);
        assert_eq!(b.mux(ONE, x, y), x);
        let (s, c) = b.full_adder(x, ZERO, ZERO);
        assert_eq!((s, c), (x, ZERO));
        assert_eq!(b.gates.len(), 2, "one INV and one NAND2");
    }

    #[test]
    fn popcount_and_subtract_exhaustive() {
        let mut b = Builder::new();
        let votes: Vec<Sig> = (0..5).map(|i| Sig::Net(b.input(i))).collect();
        let neg: Vec<Sig> = (5..8).map(|i| Sig::Net(b.input(i))).collect();
        let p = b.popcount(&votes);
        let n = b.popcount(&neg);
        assert_eq!(p.max, 5);
        let width = bits_for(5) + 1;
        let diff = b.subtract(&p, &n, width);
        for (map, v) in assignments(8) {
            let pc = v[..5].iter().filter(|&&t| t).count() as i64;
            let nc = v[5..].iter().filter(|&&t| t).count() as i64;
            let got: i64 = p.bits.iter().enumerate().map(|(i, &s)| (eval(&b, &map, s) as i64) << i).sum();
            assert_eq!(got, pc);
            let mut d: i64 = diff.iter().enumerate().map(|(i, &s)| (eval(&b, &map, s) as i64) << i).sum();
            if d >= 1 << (width - 1) {
                d -= 1 << width;
            }
            assert_eq!(d, pc - nc);
        }
    }

    #[test]
    fn signed_greater_exhaustive_three_bits() {
        let mut b = Builder::new();
        let a: Vec<Sig> = (0..3).map(|i| Sig::Net(b.input(i))).collect();
        let c: Vec<Sig> = (3..6).map(|i| Sig::Net(b.input(i))).collect();
        let gt = b.signed_greater(&a, &c);
        let signed = |bits: &[bool]| {
            let u = bits.iter().enumerate().map(|(i, &t)| (t as i32) << i).sum::<i32>();
            if u >= 4 {
                u - 8
            } else {
                u
            }
        };
        for (map, v) in assignments(6) {
            assert_eq!(eval(&b, &map, gt), signed(&v[..3]) > signed(&v[3..]), "{v:?}");
        }
    }
}
