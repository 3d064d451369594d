
use std::path::PathBuf;

use super::support::pruned;
use crate::dataset::CLASSES;
use crate::hwgen::{parse_hdl, DEFAULT_MODULE};
use crate::{build_netlist, emit_hdl, PrunedModel};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the checked-in file; `FLEXTM_BLESS=1` rewrites it.
fn check(name: &str, text: &str) {
    let path = golden(name);
    if std::env::var_os("FLEXTM_BLESS").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with FLEXTM_BLESS=1 to create)", path.display()));
    assert!(expected == text, "{} differs from generated HDL", path.display());
}

fn tiny() -> PrunedModel {
    let mut classes = vec![Vec::new(); CLASSES];
    classes[0] = vec![(0, vec![0, 65]), (1, vec![2])];
    classes[3] = vec![(0, vec![1]), (2, vec![64, 66])];
    classes[9] = vec![(1, vec![3, 127])];
    pruned(3, classes)
}

fn hdl(m: &PrunedModel) -> String {
    emit_hdl(&build_netlist(m).unwrap(), DEFAULT_MODULE).unwrap()
}

#[test]
fn tiny_model_matches_golden() {
    let text = hdl(&tiny());
    assert_eq!(text, hdl(&tiny()));
    check("tiny.v", &text);
    assert_eq!(parse_hdl(&text).unwrap(), build_netlist(&tiny()).unwrap());
}

#[test]
fn zero_clause_model_matches_golden() {
    let text = hdl(&pruned(4, vec![Vec::new(); CLASSES]));
    check("zero.v", &text);
    for i in 0..4 {
        assert!(text.contains(&format!("assign y[{i}] = ")), "y[{i}] not driven");
    }
}
