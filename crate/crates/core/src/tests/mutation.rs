use crate::hwgen::{GateKind, NetId, Stage};
use crate::sim::random_samples;
use crate::train::train;
use crate::{build_netlist, check_equivalence, prune, Dataset, Netlist, TrainConfig};

fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Rewires input `pin` of NAND gate `gate` to `net`.
fn swap_input(netlist: &Netlist, gate: usize, pin: usize, net: NetId) -> Netlist {
    let mut m = netlist.clone();
    assert_eq!(m.gates[gate].kind, GateKind::Nand2);
    m.gates[gate].inputs[pin] = net;
    m.validate().expect("mutation keeps the netlist well formed");
    m
}

#[test]
fn single_nand_input_swap_is_detected() {
    let dir = data_dir();
    let data = Dataset::load(dir.join("optdigits.tra"), dir.join("optdigits.tes"), 8).unwrap();
    let mut config = TrainConfig::compact().with_seed(7);
    config.epochs = 10;
    let pruned = prune(&train(&config, &data).unwrap());
    let netlist = build_netlist(&pruned).unwrap();
    assert!(check_equivalence(&pruned, &netlist, &data.test).unwrap().passed);

    // NANDs fed directly by a captured input bit sit in clause logic; moving
    // one of their pins to a different captured bit changes a clause.
    let captured: Vec<NetId> = netlist.dffs_in(Stage::Stage1Input).map(|g| g.output).collect();
    let candidates: Vec<(usize, usize)> = netlist
        .gates
        .iter()
        .enumerate()
        .filter(|(_, g)| g.kind == GateKind::Nand2)
        .filter_map(|(i, g)| g.inputs.iter().position(|n| captured.contains(n)).map(|pin| (i, pin)))
        .step_by(17)
        .take(8)
        .collect();
    assert_eq!(candidates.len(), 8);

    let mut stimulus = data.test.clone();
    stimulus.extend(random_samples(10_000, 3));
    for (gate, pin) in candidates {
        let old = netlist.gates[gate].inputs[pin];
        let pos = captured.iter().position(|&n| n == old).unwrap();
        let other = captured[(pos + 29) % captured.len()];
        let mutant = swap_input(&netlist, gate, pin, other);
        let report = check_equivalence(&pruned, &mutant, &stimulus).unwrap();
        assert!(
            !report.mismatches.is_empty(),
            "swap on gate {gate} pin {pin} went unnoticed"
        );
    }
}
