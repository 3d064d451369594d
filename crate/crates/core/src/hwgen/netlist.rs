//! Gate-level netlist over the {INV, NAND2, DFF} basis.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::PIXELS;
use crate::error::{Error, Result};

/// Output bits of the class index.
pub const OUTPUT_BITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NetId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Inv,
    Nand2,
    Dff,
    Const0,
    Const1,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Inv | GateKind::Dff => 1,
            GateKind::Nand2 => 2,
            GateKind::Const0 | GateKind::Const1 => 0,
        }
    }

    pub fn is_sequential(self) -> bool {
        self == GateKind::Dff
    }
}

/// Register rank of a DFF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Stage1Input,
    Stage2Sum,
    Stage3Out,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Stage1Input, Stage::Stage2Sum, Stage::Stage3Out];

    pub fn rank(self) -> usize {
        match self {
            Stage::Stage1Input => 1,
            Stage::Stage2Sum => 2,
            Stage::Stage3Out => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
    /// Set for DFFs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

/// Synchronous netlist with one clock domain and one synchronous active-low
/// reset shared by all DFFs (both implicit).
///
/// Nets `0..64` are the primary inputs `x[0..64]`, net 64 is `rst_n`. Every
/// other net is driven by exactly one gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub format: String,
    pub version: u32,
    pub module_name: String,
    pub net_count: u32,
    pub inputs: Vec<NetId>,
    pub rst_n: NetId,
    pub outputs: Vec<NetId>,
    pub gates: Vec<Gate>,
    /// Readable names for selected nets (registers, ports).
    pub names: BTreeMap<NetId, String>,
}

pub const NETLIST_FORMAT: &str = "flextm-netlist";
pub const NETLIST_VERSION: u32 = 1;

impl Netlist {
    pub fn dffs(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| g.kind == GateKind::Dff)
    }

    pub fn dffs_in(&self, stage: Stage) -> impl Iterator<Item = &Gate> {
        self.dffs().filter(move |g| g.stage == Some(stage))
    }

    /// Map from net to the index of the gate driving it.
    pub fn drivers(&self) -> Vec<Option<usize>> {
        let mut d = vec![None; self.net_count as usize];
        for (i, g) in self.gates.iter().enumerate() {
            d[g.output.index()] = Some(i);
        }
        d
    }

    /// Checks arity, single drivers, port layout and acyclicity of the
    /// combinational part.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Structure(m));
        if self.format != NETLIST_FORMAT || self.version != NETLIST_VERSION {
            return fail(format!("unsupported netlist {} v{}", self.format, self.version));
        }
        if self.inputs.len() != PIXELS
            || self.inputs.iter().enumerate().any(|(i, n)| n.index() != i)
            || self.rst_n.index() != PIXELS
        {
            return fail("primary inputs must be nets 0..64 with rst_n at 64".into());
        }
        if self.outputs.len() != OUTPUT_BITS {
            return fail(format!("expected {OUTPUT_BITS} outputs, found {}", self.outputs.len()));
        }
        let n = self.net_count as usize;
        let mut driven = vec![false; n];
        driven[..=PIXELS].fill(true);
        for (gi, g) in self.gates.iter().enumerate() {
            if g.inputs.len() != g.kind.arity() {
                return fail(format!("gate {gi} ({:?}) has {} inputs", g.kind, g.inputs.len()));
            }
            if g.kind.is_sequential() != g.stage.is_some() {
                return fail(format!("gate {gi}: stage tags are for DFFs only"));
            }
            if g.output.index() >= n || g.inputs.iter().any(|i| i.index() >= n) {
                return fail(format!("gate {gi} references a net beyond {n}"));
            }
            if std::mem::replace(&mut driven[g.output.index()], true) {
                return fail(format!("net {} has multiple drivers", g.output.0));
            }
        }
        for g in &self.gates {
            if let Some(i) = g.inputs.iter().find(|i| !driven[i.index()]) {
                return fail(format!("net {} is read but never driven", i.0));
            }
        }
        if let Some(o) = self.outputs.iter().find(|o| !driven[o.index()]) {
            return fail(format!("output net {} is undriven", o.0));
        }
        self.combinational_order().map(|_| ())
    }

    /// Combinational gates (including constants) in topological order.
    /// DFF outputs and primary inputs are sources.
    pub fn combinational_order(&self) -> Result<Vec<usize>> {
        let drivers = self.drivers();
        let comb: Vec<usize> = (0..self.gates.len())
            .filter(|&i| !self.gates[i].kind.is_sequential())
            .collect();
        let mut pending = vec![0usize; self.gates.len()];
        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); self.gates.len()];
        for &gi in &comb {
            for inp in &self.gates[gi].inputs {
                if let Some(d) = drivers[inp.index()] {
                    if !self.gates[d].kind.is_sequential() {
                        pending[gi] += 1;
                        fanout[d].push(gi);
                    }
                }
            }
        }
        let mut ready: Vec<usize> = comb.iter().copied().filter(|&g| pending[g] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(comb.len());
        while let Some(g) = ready.pop() {
            order.push(g);
            for &f in fanout[g].iter().rev() {
                pending[f] -= 1;
                if pending[f] == 0 {
                    ready.push(f);
                }
            }
        }
        if order.len() != comb.len() {
            return Err(Error::Structure("combinational cycle detected".into()));
        }
        Ok(order)
    }

    /// Verifies the three-rank pipeline: stage-1 DFFs sample primary inputs,
    /// the combinational cone of every stage-(k+1) DFF reads only stage-k
    /// DFFs (or constants), and the outputs are stage-3 DFFs.
    pub fn check_pipeline(&self) -> Result<()> {
        let drivers = self.drivers();
        let fail = |m: String| Err(Error::Structure(m));
        for g in self.dffs() {
            let stage = g.stage.expect("validated");
            let d = g.inputs[0];
            if stage == Stage::Stage1Input {
                if d.index() >= PIXELS {
                    return fail(format!("stage-1 register {} does not sample x", g.output.0));
                }
                continue;
            }
            let mut seen = HashSet::new();
            let mut stack = vec![d];
            while let Some(net) = stack.pop() {
                if !seen.insert(net) {
                    continue;
                }
                match drivers[net.index()] {
                    None => {
                        return fail(format!(
                            "{stage:?} register {} reaches primary input net {}",
                            g.output.0, net.0
                        ))
                    }
                    Some(src) => {
                        let sg = &self.gates[src];
                        match sg.kind {
                            GateKind::Dff => {
                                if sg.stage.map(Stage::rank) != Some(stage.rank() - 1) {
                                    return fail(format!(
                                        "{stage:?} register {} is fed by {:?} register {}",
                                        g.output.0, sg.stage, sg.output.0
                                    ));
                                }
                            }
                            _ => stack.extend(sg.inputs.iter().copied()),
                        }
                    }
                }
            }
        }
        for o in &self.outputs {
            let ok = drivers[o.index()]
                .map(|d| self.gates[d].stage == Some(Stage::Stage3Out))
                .unwrap_or(false);
            if !ok {
                return fail(format!("output net {} is not a stage-3 register", o.0));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("netlist serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let n: Netlist = serde_json::from_str(text)?;
        n.validate()?;
        Ok(n)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// NAND2-equivalent area weights per gate kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateWeights {
    pub inv: f64,
    pub nand2: f64,
    pub dff: f64,
}

impl Default for GateWeights {
    fn default() -> Self {
        GateWeights {
            inv: 0.5,
            nand2: 1.0,
            dff: 4.0,
        }
    }
}

impl GateWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.inv, self.nand2, self.dff].iter().all(|w| *w > 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("gate weights must be positive".into()))
        }
    }

    pub fn weight(&self, kind: GateKind) -> f64 {
        match kind {
            GateKind::Inv => self.inv,
            GateKind::Nand2 => self.nand2,
            GateKind::Dff => self.dff,
            GateKind::Const0 | GateKind::Const1 => 0.0,
        }
    }
}

/// Weighted gate count in NAND2 equivalents.
pub fn gate_count(netlist: &Netlist, weights: &GateWeights) -> f64 {
    netlist.gates.iter().map(|g| weights.weight(g.kind)).sum()
}
