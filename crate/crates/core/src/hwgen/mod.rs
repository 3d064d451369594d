//! Compiles pruned models into a three-rank pipelined gate netlist.
//!
//! Rank 1 registers the 64 input pixels. The clause AND trees and the per-class
//! vote adders sit between rank 1 and rank 2, which holds one signed sum per
//! class. The ArgMax tournament sits between rank 2 and rank 3, and rank 3
//! drives `y[3:0]` directly. A sample presented on `x` is therefore visible on
//! `y` three rising edges after it is sampled.

pub mod builder;
pub mod netlist;
pub mod verilog;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{CLASSES, LITERALS, PIXELS};
use crate::error::{Error, Result};
use crate::model::Polarity;
use crate::prune::PrunedModel;
use builder::{bits_for, Builder, Sig, ZERO};
pub use netlist::{gate_count, Gate, GateKind, GateWeights, NetId, Netlist, Stage, OUTPUT_BITS};
pub use verilog::{emit_hdl, parse_hdl};

pub const DEFAULT_MODULE: &str = "tm_classifier";

/// Signed width of the per-class sum registers for a model whose largest
/// single-polarity clause group has `p` members.
pub fn sum_width(p: usize) -> usize {
    bits_for(p as u64) + 1
}

pub fn build_netlist(pruned: &PrunedModel) -> Result<Netlist> {
    if pruned.classes.len() != CLASSES {
        return Err(Error::Structure(format!(
            "model has {} classes, expected {CLASSES}",
            pruned.classes.len()
        )));
    }
    for (c, bank) in pruned.classes.iter().enumerate() {
        for cl in bank {
            if let Some(&k) = cl.literals.iter().find(|&&k| k as usize >= LITERALS) {
                return Err(Error::Structure(format!(
                    "class {c} clause {} references literal {k}",
                    cl.index
                )));
            }
        }
    }

    let mut b = Builder::new();
    let q1: Vec<NetId> = (0..PIXELS)
        .map(|i| {
            let x = Sig::Net(b.input(i));
            b.dff(x, Stage::Stage1Input, format!("s1_q{i}"))
        })
        .collect();

    let width = sum_width(pruned.max_clauses_per_polarity());
    let mut values: Vec<Vec<Sig>> = Vec::with_capacity(CLASSES);
    for (c, bank) in pruned.classes.iter().enumerate() {
        if bank.is_empty() {
            values.push(vec![ZERO; width]);
            continue;
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for cl in bank {
            let lits: Vec<Sig> = cl
                .literals
                .iter()
                .map(|&k| {
                    let k = k as usize;
                    if k < PIXELS {
                        Sig::Net(q1[k])
                    } else {
                        b.inv(Sig::Net(q1[k - PIXELS]))
                    }
                })
                .collect();
            let out = and_tree(&mut b, lits);
            match cl.polarity {
                Polarity::Positive => pos.push(out),
                Polarity::Negative => neg.push(out),
            }
        }
        let p = b.popcount(&pos);
        let n = b.popcount(&neg);
        let diff = b.subtract(&p, &n, width);
        let regs = diff
            .into_iter()
            .enumerate()
            .map(|(i, d)| Sig::Net(b.dff(d, Stage::Stage2Sum, format!("s2_c{c}_q{i}"))))
            .collect();
        values.push(regs);
    }

    let mut round: Vec<(Vec<Sig>, Vec<Sig>)> = values
        .into_iter()
        .enumerate()
        .map(|(c, v)| (v, (0..OUTPUT_BITS).map(|i| Sig::Const((c >> i) & 1 == 1)).collect()))
        .collect();
    while round.len() > 1 {
        let mut next = Vec::with_capacity(round.len().div_ceil(2));
        let mut it = round.into_iter();
        while let Some(lo) = it.next() {
            match it.next() {
                None => next.push(lo),
                Some(hi) => {
                    let take_hi = b.signed_greater(&hi.0, &lo.0);
                    let value = hi.0.iter().zip(&lo.0).map(|(&h, &l)| b.mux(take_hi, h, l)).collect();
                    let index = hi.1.iter().zip(&lo.1).map(|(&h, &l)| b.mux(take_hi, h, l)).collect();
                    next.push((value, index));
                }
            }
        }
        round = next;
    }
    let (_, winner) = round.pop().expect("ten classes");
    let y: Vec<NetId> = winner
        .into_iter()
        .enumerate()
        .map(|(i, s)| b.dff(s, Stage::Stage3Out, format!("s3_q{i}")))
        .collect();
    Ok(b.finish(DEFAULT_MODULE, y))
}

/// Balanced AND over the literal signals of one clause.
fn and_tree(b: &mut Builder, mut level: Vec<Sig>) -> Sig {
    debug_assert!(!level.is_empty());
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match *pair {
                [x, y] => b.and(x, y),
                [x] => x,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetlistStats {
    pub inv: usize,
    pub nand2: usize,
    pub dff: usize,
    pub const_cells: usize,
    /// DFF count per register rank.
    pub registers: BTreeMap<Stage, usize>,
    /// Longest INV/NAND2 chain feeding each register rank.
    pub logic_depth: BTreeMap<Stage, usize>,
    /// Width of the widest per-class sum register (the subtractor width).
    pub sum_width: usize,
    /// Gate count with the default weights.
    pub nand2_equivalents: f64,
}

pub fn netlist_stats(netlist: &Netlist) -> NetlistStats {
    let mut s = NetlistStats::default();
    for g in &netlist.gates {
        match g.kind {
            GateKind::Inv => s.inv += 1,
            GateKind::Nand2 => s.nand2 += 1,
            GateKind::Dff => s.dff += 1,
            GateKind::Const0 | GateKind::Const1 => s.const_cells += 1,
        }
    }
    for stage in Stage::ALL {
        s.registers.insert(stage, netlist.dffs_in(stage).count());
        s.logic_depth.insert(stage, 0);
    }

    let mut level = vec![0usize; netlist.net_count as usize];
    if let Ok(order) = netlist.combinational_order() {
        for gi in order {
            let g = &netlist.gates[gi];
            let cost = matches!(g.kind, GateKind::Inv | GateKind::Nand2) as usize;
            let deepest = g.inputs.iter().map(|i| level[i.index()]).max().unwrap_or(0);
            level[g.output.index()] = deepest + cost;
        }
    }
    let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
    for g in netlist.dffs() {
        let stage = g.stage.expect("DFFs carry a stage");
        let d = level[g.inputs[0].index()];
        let e = s.logic_depth.entry(stage).or_insert(0);
        *e = (*e).max(d);
        if stage == Stage::Stage2Sum {
            if let Some(name) = netlist.names.get(&g.output) {
                let group = name.rsplit_once("_q").map_or(name.as_str(), |(p, _)| p);
                *per_class.entry(group).or_insert(0) += 1;
            }
        }
    }
    s.sum_width = per_class.values().copied().max().unwrap_or(0);
    s.nand2_equivalents = gate_count(netlist, &GateWeights::default());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TmModel, DEFAULT_STATES};
    use crate::prune::prune;

    fn single_clause() -> PrunedModel {
        let mut m = TmModel::empty(4);
        m.bank_mut(1)[0].set_state(0, DEFAULT_STATES + 1);
        prune(&m)
    }

    #[test]
    fn zero_clause_model_folds_to_constant_output() {
        let n = build_netlist(&PrunedModel::empty(10)).unwrap();
        n.validate().unwrap();
        n.check_pipeline().unwrap();
        let s = netlist_stats(&n);
        assert_eq!((s.inv, s.nand2), (0, 0));
        assert_eq!(s.registers[&Stage::Stage1Input], 64);
        assert_eq!(s.registers[&Stage::Stage2Sum], 0);
        assert_eq!(s.registers[&Stage::Stage3Out], 4);
        let const_drivers: Vec<_> = n
            .gates
            .iter()
            .filter(|g| g.kind == GateKind::Const0)
            .collect();
        assert_eq!(const_drivers.len(), 1);
    }

    #[test]
    fn single_clause_register_count() {
        let n = build_netlist(&single_clause()).unwrap();
        n.validate().unwrap();
        n.check_pipeline().unwrap();
        let s = netlist_stats(&n);
        assert_eq!(sum_width(1), 2);
        assert_eq!(s.sum_width, 2);
        assert_eq!(s.dff, 64 + 2 + 4);
    }

    #[test]
    fn out_of_range_literal_is_a_structural_error() {
        let mut p = single_clause();
        p.classes[1][0].literals = vec![200];
        assert!(matches!(build_netlist(&p), Err(Error::Structure(_))));
    }

    #[test]
    fn gate_count_arithmetic() {
        let mut n = build_netlist(&PrunedModel::empty(2)).unwrap();
        n.gates.clear();
        assert_eq!(gate_count(&n, &GateWeights::default()), 0.0);
        let g = |kind, stage| Gate {
            kind,
            inputs: vec![],
            output: NetId(0),
            stage,
        };
        n.gates = vec![
            g(GateKind::Nand2, None),
            g(GateKind::Nand2, None),
            g(GateKind::Inv, None),
            g(GateKind::Inv, None),
            g(GateKind::Dff, Some(Stage::Stage1Input)),
            g(GateKind::Const1, None),
        ];
        assert_eq!(gate_count(&n, &GateWeights::default()), 7.0);
    }

    #[test]
    fn stats_are_deterministic_and_json_round_trips() {
        let n = build_netlist(&single_clause()).unwrap();
        assert_eq!(build_netlist(&single_clause()).unwrap(), n);
        let back = Netlist::from_json(&n.to_json()).unwrap();
        assert_eq!(back, n);
        let s = netlist_stats(&n);
        let text = serde_json::to_string(&s).unwrap();
        let s2: NetlistStats = serde_json::from_str(&text).unwrap();
        assert_eq!(s, s2);
    }
}
