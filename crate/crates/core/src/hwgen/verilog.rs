//! Structural Verilog-2001 writer and a reader for the same subset.
//!
//! Combinational cells become `not`/`nand` primitive instances, tie cells
//! become constant assigns and every DFF is a `reg` updated in a single
//! `always @(posedge clk)` block with a synchronous active-low reset.
//! Net `k` without a register name is called `n<k>`, so the text depends only
//! on the netlist.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write;

use super::netlist::{Gate, GateKind, NetId, Netlist, Stage, NETLIST_FORMAT, NETLIST_VERSION, OUTPUT_BITS};
use crate::dataset::PIXELS;
use crate::error::{Error, Result};

const KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "else", "end", "endmodule", "if", "initial", "inout", "input",
    "module", "nand", "nor", "not", "or", "output", "posedge", "negedge", "reg", "wire", "xor",
];
const PORTS: &[&str] = &["clk", "rst_n", "x", "y"];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Verilog identifier for every net.
fn net_names(netlist: &Netlist, module_name: &str) -> Result<Vec<String>> {
    let mut names: Vec<String> = (0..netlist.net_count).map(|k| format!("n{k}")).collect();
    for (i, name) in names.iter_mut().take(PIXELS).enumerate() {
        *name = format!("x[{i}]");
    }
    names[netlist.rst_n.index()] = "rst_n".to_string();
    for (net, name) in &netlist.names {
        if net.index() <= PIXELS {
            continue;
        }
        if net.index() >= names.len() {
            return Err(Error::Structure(format!("name {name:?} given to missing net {}", net.0)));
        }
        names[net.index()] = name.clone();
    }
    let mut seen = HashSet::new();
    seen.insert(module_name.to_string());
    for (k, name) in names.iter().enumerate().skip(PIXELS + 1) {
        if !is_identifier(name) || KEYWORDS.contains(&name.as_str()) || PORTS.contains(&name.as_str()) {
            return Err(Error::Structure(format!("net {k} has unusable name {name:?}")));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::Structure(format!("name collision on {name:?}")));
        }
    }
    Ok(names)
}

pub fn emit_hdl(netlist: &Netlist, module_name: &str) -> Result<String> {
    netlist.validate()?;
    if !is_identifier(module_name) || KEYWORDS.contains(&module_name) || PORTS.contains(&module_name) {
        return Err(Error::Structure(format!("invalid module name {module_name:?}")));
    }
    let names = net_names(netlist, module_name)?;
    let mut gates: Vec<&Gate> = netlist.gates.iter().collect();
    gates.sort_by_key(|g| g.output);

    let mut v = String::new();
    let counts = |k: GateKind| gates.iter().filter(|g| g.kind == k).count();
    writeln!(
        v,
        "// {} INV, {} NAND2, {} DFF",
        counts(GateKind::Inv),
        counts(GateKind::Nand2),
        counts(GateKind::Dff)
    )
    .unwrap();
    writeln!(v, "module {module_name} (").unwrap();
    v.push_str("    input  wire        clk,\n");
    v.push_str("    input  wire        rst_n,\n");
    v.push_str("    input  wire [63:0] x,\n");
    v.push_str("    output wire [3:0]  y\n");
    v.push_str(");\n\n");

    for g in &gates {
        let kw = if g.kind == GateKind::Dff { "reg " } else { "wire" };
        writeln!(v, "    {kw} {};", names[g.output.index()]).unwrap();
    }
    v.push('\n');
    for g in gates.iter().filter(|g| g.kind != GateKind::Dff) {
        let out = &names[g.output.index()];
        let arg = |i: usize| &names[g.inputs[i].index()];
        match g.kind {
            GateKind::Inv => writeln!(v, "    not  g{} ({out}, {});", g.output.0, arg(0)),
            GateKind::Nand2 => writeln!(v, "    nand g{} ({out}, {}, {});", g.output.0, arg(0), arg(1)),
            GateKind::Const0 => writeln!(v, "    assign {out} = 1'b0;"),
            GateKind::Const1 => writeln!(v, "    assign {out} = 1'b1;"),
            GateKind::Dff => unreachable!(),
        }
        .unwrap();
    }

    v.push_str("\n    always @(posedge clk) begin\n        if (!rst_n) begin\n");
    for g in gates.iter().filter(|g| g.kind == GateKind::Dff) {
        writeln!(v, "            {} <= 1'b0;", names[g.output.index()]).unwrap();
    }
    v.push_str("        end else begin\n");
    for g in gates.iter().filter(|g| g.kind == GateKind::Dff) {
        let stage = match g.stage.expect("validated") {
            Stage::Stage1Input => 1,
            Stage::Stage2Sum => 2,
            Stage::Stage3Out => 3,
        };
        writeln!(
            v,
            "            {} <= {}; // stage {stage}",
            names[g.output.index()],
            names[g.inputs[0].index()]
        )
        .unwrap();
    }
    v.push_str("        end\n    end\n\n");
    for (i, o) in netlist.outputs.iter().enumerate() {
        writeln!(v, "    assign y[{i}] = {};", names[o.index()]).unwrap();
    }
    v.push_str("endmodule\n");
    Ok(v)
}

/// Reads back text produced by [`emit_hdl`]. Net numbers follow the
/// declaration order, so `parse_hdl(&emit_hdl(n)?)` reproduces `n` whenever
/// the gates of `n` are listed in net order, as built netlists are.
pub fn parse_hdl(text: &str) -> Result<Netlist> {
    let err = |line: usize, m: &str| Error::Parse {
        line,
        message: m.to_string(),
    };
    let mut ids: HashMap<String, NetId> = HashMap::new();
    for i in 0..PIXELS {
        ids.insert(format!("x[{i}]"), NetId(i as u32));
    }
    ids.insert("rst_n".to_string(), NetId(PIXELS as u32));
    let mut next = PIXELS as u32 + 1;
    let mut module_name = None;
    let mut names = BTreeMap::new();
    let mut gates: Vec<Gate> = Vec::new();
    let mut registers: Vec<NetId> = Vec::new();
    let mut reg_inputs: HashMap<NetId, (NetId, Stage)> = HashMap::new();
    let mut outputs = vec![None; OUTPUT_BITS];
    let mut in_else = false;

    let lookup = |ids: &HashMap<String, NetId>, name: &str, line: usize| {
        ids.get(name).copied().ok_or_else(|| err(line, &format!("undeclared net {name}")))
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let s = raw.split("//").next().unwrap_or("").trim();
        let comment = raw.split_once("//").map(|(_, c)| c.trim());
        if s.is_empty() {
            continue;
        }
        let words: Vec<&str> = s.split_whitespace().collect();
        match words[0] {
            "module" => module_name = words.get(1).map(|w| w.trim_end_matches('(').to_string()),
            "wire" | "reg" => {
                let name = words.get(1).map(|w| w.trim_end_matches(';')).ok_or_else(|| err(line, "missing net name"))?;
                if ids.insert(name.to_string(), NetId(next)).is_some() {
                    return Err(err(line, &format!("duplicate declaration of {name}")));
                }
                if words[0] == "reg" {
                    registers.push(NetId(next));
                    names.insert(NetId(next), name.to_string());
                } else if !name.starts_with('n') || name[1..].parse::<u32>().is_err() {
                    names.insert(NetId(next), name.to_string());
                }
                next += 1;
            }
            "not" | "nand" => {
                let open = s.find('(').ok_or_else(|| err(line, "missing port list"))?;
                let close = s.rfind(')').ok_or_else(|| err(line, "missing port list"))?;
                let ports: Vec<&str> = s[open + 1..close].split(',').map(str::trim).collect();
                let (kind, arity) = if words[0] == "not" { (GateKind::Inv, 1) } else { (GateKind::Nand2, 2) };
                if ports.len() != arity + 1 {
                    return Err(err(line, "wrong number of ports"));
                }
                let output = lookup(&ids, ports[0], line)?;
                let inputs = ports[1..].iter().map(|p| lookup(&ids, p, line)).collect::<Result<_>>()?;
                gates.push(Gate {
                    kind,
                    inputs,
                    output,
                    stage: None,
                });
            }
            "assign" => {
                let body = s["assign".len()..].trim().trim_end_matches(';');
                let (lhs, rhs) = body.split_once('=').ok_or_else(|| err(line, "malformed assign"))?;
                let (lhs, rhs) = (lhs.trim(), rhs.trim());
                if let Some(bit) = lhs.strip_prefix("y[").and_then(|r| r.strip_suffix(']')) {
                    let bit: usize = bit.parse().map_err(|_| err(line, "bad output index"))?;
                    if bit >= OUTPUT_BITS {
                        return Err(err(line, "output index out of range"));
                    }
                    outputs[bit] = Some(lookup(&ids, rhs, line)?);
                } else {
                    let kind = match rhs {
                        "1'b0" => GateKind::Const0,
                        "1'b1" => GateKind::Const1,
                        _ => return Err(err(line, "only constant assigns are supported")),
                    };
                    gates.push(Gate {
                        kind,
                        inputs: Vec::new(),
                        output: lookup(&ids, lhs, line)?,
                        stage: None,
                    });
                }
            }
            "end" if words.get(1) == Some(&"else") => in_else = true,
            _ if in_else && s.contains("<=") => {
                let (lhs, rhs) = s.trim_end_matches(';').split_once("<=").expect("checked");
                let q = lookup(&ids, lhs.trim(), line)?;
                let d = lookup(&ids, rhs.trim(), line)?;
                let stage = match comment {
                    Some("stage 1") => Stage::Stage1Input,
                    Some("stage 2") => Stage::Stage2Sum,
                    Some("stage 3") => Stage::Stage3Out,
                    _ => return Err(err(line, "register without a stage tag")),
                };
                reg_inputs.insert(q, (d, stage));
            }
            "end" => in_else = false,
            _ => {}
        }
    }

    for q in registers {
        let (d, stage) = reg_inputs
            .get(&q)
            .copied()
            .ok_or_else(|| Error::Structure(format!("register {} is never assigned", names[&q])))?;
        gates.push(Gate {
            kind: GateKind::Dff,
            inputs: vec![d],
            output: q,
            stage: Some(stage),
        });
    }
    gates.sort_by_key(|g| g.output);
    for i in 0..PIXELS {
        names.insert(NetId(i as u32), format!("x[{i}]"));
    }
    names.insert(NetId(PIXELS as u32), "rst_n".to_string());
    let outputs = outputs
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Structure("not every output bit is assigned".into()))?;
    let netlist = Netlist {
        format: NETLIST_FORMAT.to_string(),
        version: NETLIST_VERSION,
        module_name: module_name.ok_or_else(|| Error::Structure("no module header".into()))?,
        net_count: next,
        inputs: (0..PIXELS as u32).map(NetId).collect(),
        rst_n: NetId(PIXELS as u32),
        outputs,
        gates,
        names,
    };
    netlist.validate()?;
    Ok(netlist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwgen::build_netlist;
    use crate::model::{TmModel, DEFAULT_STATES};
    use crate::prune::{prune, PrunedModel};

    fn tiny() -> PrunedModel {
        let mut m = TmModel::empty(4);
        m.bank_mut(1)[0].set_state(0, DEFAULT_STATES + 1);
        m.bank_mut(1)[1].set_state(65, DEFAULT_STATES + 1);
        m.bank_mut(3)[0].set_state(2, DEFAULT_STATES + 1);
        m.bank_mut(3)[0].set_state(70, DEFAULT_STATES + 1);
        prune(&m)
    }

    #[test]
    fn emission_is_byte_stable() {
        let a = emit_hdl(&build_netlist(&tiny()).unwrap(), "tm_tiny").unwrap();
        let b = emit_hdl(&build_netlist(&tiny()).unwrap(), "tm_tiny").unwrap();
        assert_eq!(a, b);
        assert!(a.contains("module tm_tiny ("));
        assert!(a.contains("if (!rst_n) begin"));
    }

    #[test]
    fn round_trip_reproduces_the_netlist() {
        for p in [tiny(), PrunedModel::empty(4)] {
            let n = build_netlist(&p).unwrap();
            let text = emit_hdl(&n, "tm_classifier").unwrap();
            assert_eq!(parse_hdl(&text).unwrap(), n);
        }
    }

    #[test]
    fn zero_clause_module_drives_constant_zero() {
        let text = emit_hdl(&build_netlist(&PrunedModel::empty(4)).unwrap(), "tm_classifier").unwrap();
        assert!(text.contains("= 1'b0;"));
        assert!(!text.contains("nand "));
        for i in 0..4 {
            assert!(text.contains(&format!("s3_q{i} <= n")), "{text}");
        }
    }

    #[test]
    fn collisions_and_bad_names_are_rejected() {
        let mut n = build_netlist(&tiny()).unwrap();
        let regs: Vec<NetId> = n.dffs().map(|g| g.output).take(2).collect();
        n.names.insert(regs[1], n.names[&regs[0]].clone());
        assert!(matches!(emit_hdl(&n, "m"), Err(Error::Structure(m)) if m.contains("collision")));
        let mut n = build_netlist(&tiny()).unwrap();
        n.names.insert(regs[0], "y".into());
        assert!(emit_hdl(&n, "m").is_err());
        let n = build_netlist(&tiny()).unwrap();
        assert!(emit_hdl(&n, "module").is_err());
        assert!(emit_hdl(&n, "s1_q0").is_err());
    }
}
