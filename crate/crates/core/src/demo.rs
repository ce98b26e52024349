//! Small hand-built circuits used by tests, examples and the shipped data files.

use crate::locking::{lock_with_placements, LockedNetlist, PlacementRequest, ReplacementType};
use crate::netlist::{GateKind, Netlist, NetlistBuilder};

fn place(netlist: &Netlist, gate: &str, replacement: ReplacementType, g: &[&str]) -> PlacementRequest {
    PlacementRequest {
        gate_output: netlist.find_net(gate).expect("demo net exists"),
        replacement,
        g_nets: g.iter().map(|n| netlist.find_net(n).expect("demo net exists")).collect(),
    }
}

/// Nine wires `l1..l9` feeding one gate of each replacement target:
///
/// ```text
/// A = (l1 l2)'                      B = (l1 l2 + l3 l4 l5)'
/// C = (l6 l7 l8)'                   D = (l1 l2 + l3 l4 l5 + l6 l7 l8 + l9)'
/// ```
pub fn fig9() -> Netlist {
    let mut b = NetlistBuilder::new("fig9");
    for i in 1..=9 {
        b.input(&format!("l{i}"));
    }
    for o in ["A", "B", "C", "D"] {
        b.output(o);
    }
    b.gate("p12", GateKind::And, &["l1", "l2"]);
    b.gate("p345", GateKind::And, &["l3", "l4", "l5"]);
    b.gate("p678", GateKind::And, &["l6", "l7", "l8"]);
    b.gate("A", GateKind::Nand, &["l1", "l2"]);
    b.gate("B", GateKind::Nor, &["p12", "p345"]);
    b.gate("C", GateKind::Nand, &["l6", "l7", "l8"]);
    b.gate("D", GateKind::Nor, &["p12", "p345", "p678", "l9"]);
    b.build().expect("fig9 is well formed")
}

/// [`fig9`] with A cut to `l1`, B expanded by `l6`, C expanded by `l9` and D cut by
/// `l9`. Correct key: `0110`.
pub fn fig9_locked() -> LockedNetlist {
    let n = fig9();
    let req = [
        place(&n, "A", ReplacementType::A, &["l2"]),
        place(&n, "B", ReplacementType::B, &["l6"]),
        place(&n, "C", ReplacementType::C, &["l9"]),
        place(&n, "D", ReplacementType::D, &["l9"]),
    ];
    lock_with_placements(&n, &req).expect("fig9 placements are valid")
}

/// Three independent sub-modules with one, two and two lockable gates.
pub fn demo5() -> Netlist {
    let mut b = NetlistBuilder::new("demo5");
    for i in ["a0", "a1", "b0", "b1", "b2", "b3", "c0", "c1", "c2", "c3"] {
        b.input(i);
    }
    for o in ["ya", "yb", "yc"] {
        b.output(o);
    }
    b.gate("ya", GateKind::Nand, &["a0", "a1"]);
    b.gate("nb", GateKind::Nor, &["b0", "b1"]);
    b.gate("yb", GateKind::Nand, &["nb", "b2", "b3"]);
    b.gate("nc", GateKind::Nand, &["c0", "c1"]);
    b.gate("yc", GateKind::Nor, &["nc", "c2", "c3"]);
    b.build().expect("demo5 is well formed")
}

/// [`demo5`] locked at all five gates, every rGate configured from one snapshot.
/// Correct key: `01010`.
pub fn demo5_locked() -> LockedNetlist {
    let n = demo5();
    let req = [
        place(&n, "ya", ReplacementType::A, &["a1"]),
        place(&n, "nb", ReplacementType::B, &["b2"]),
        place(&n, "yb", ReplacementType::A, &["b3"]),
        place(&n, "nc", ReplacementType::C, &["c2"]),
        place(&n, "yc", ReplacementType::D, &["c3"]),
    ];
    lock_with_placements(&n, &req).expect("demo5 placements are valid")
}

/// The conventional variant: each sub-module configured on its own (groups 1, 2, 2).
pub fn demo5_split() -> LockedNetlist {
    let mut locked = demo5_locked();
    locked
        .set_domains(vec![vec![0], vec![1, 2], vec![3, 4]])
        .expect("domains cover the key");
    locked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitVector;

    #[test]
    fn correct_keys() {
        assert_eq!(fig9_locked().correct_key().unwrap().to_string(), "0110");
        assert_eq!(demo5_locked().correct_key().unwrap().to_string(), "01010");
    }

    #[test]
    fn demo5_only_correct_key_is_equivalent() {
        let original = demo5();
        let locked = demo5_locked();
        let mut scratch = Vec::new();
        let probes = crate::attack::ProbeSet::exhaustive(original.inputs().len());
        let golden: Vec<Vec<u64>> = probes
            .blocks()
            .map(|(w, _)| original.eval_outputs_packed(w, &mut Vec::new()))
            .collect();
        let passing: Vec<u64> = (0..32u64)
            .filter(|&v| {
                let key = BitVector::from_u64(v, 5);
                probes.blocks().zip(&golden).all(|((w, m), want)| {
                    let got = locked.eval_outputs_with_key(&key, w, &mut scratch);
                    got.iter().zip(want).all(|(g, w)| (g ^ w) & m == 0)
                })
            })
            .collect();
        assert_eq!(passing, vec![locked.correct_key().unwrap().to_u64()]);
    }
}
