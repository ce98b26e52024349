mod common;

use common::{bits, read_data, NaiveCircuit};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgatelock::demo;
use rgatelock::locking::{
    lock_netlist, lock_with_placements, parse_locked, parse_locked_attacker_view, parse_locked_parts, Cell,
    LockError, LockPolicy, PlacementRequest, ReplacementType,
};
use rgatelock::netlist::{parse_bench, Netlist};
use rgatelock::BitVector;

fn bench(name: &str) -> (Netlist, NaiveCircuit) {
    let text = read_data(&format!("iscas85/{name}.bench"));
    (parse_bench(&text).unwrap(), NaiveCircuit::parse(&text))
}

/// Value of output `name` of the Fig. 9 module under `key` with inputs l1..l9.
fn fig9_out(key: &str, l: [bool; 9], name: &str) -> bool {
    let mut locked = demo::fig9_locked();
    locked.apply_key(&key.parse().unwrap()).unwrap();
    let out = locked.evaluate(&BitVector::from_bits(l.to_vec())).unwrap();
    out.get(["A", "B", "C", "D"].iter().position(|n| *n == name).unwrap())
}

#[test]
fn fig9_gate_a_alternatives() {
    let mut l = [false; 9];
    for v in 0..4u64 {
        l[0] = v & 1 == 1;
        l[1] = v & 2 == 2;
        assert_eq!(fig9_out("0110", l, "A"), !(l[0] && l[1]));
        assert_eq!(fig9_out("1110", l, "A"), !l[0]);
    }
    // Flipped key exposed by l1 = 1, l2 = 0.
    l[0] = true;
    l[1] = false;
    assert_ne!(fig9_out("1001", l, "A"), fig9_out("0110", l, "A"));
    let locked = demo::fig9_locked();
    assert_eq!(locked.placement_log()[0].replacement, ReplacementType::A);
    assert!(!locked.correct_key().unwrap().get(0));
}

#[test]
fn fig9_gate_b_alternatives() {
    for v in 0..64u64 {
        let x = bits(v, 6);
        let mut l = [false; 9];
        l[..6].copy_from_slice(&x);
        let base = (l[0] && l[1]) || (l[2] && l[3] && l[4]);
        assert_eq!(fig9_out("0110", l, "B"), !base);
        assert_eq!(fig9_out("0010", l, "B"), !(base || l[5]));
    }
    assert!(demo::fig9_locked().correct_key().unwrap().get(1));
}

#[test]
fn fig9_correct_key_restores_everything() {
    let original = demo::fig9();
    let mut locked = demo::fig9_locked();
    locked.apply_key(&"0110".parse().unwrap()).unwrap();
    for v in 0..512u64 {
        let x = BitVector::from_u64(v, 9);
        assert_eq!(locked.evaluate(&x).unwrap(), original.evaluate(&x).unwrap());
    }
}

#[test]
fn too_many_rgates() {
    let (c17, _) = bench("c17");
    let err = lock_netlist(&c17, &LockPolicy::new(c17.gates().len() + 1, 0)).unwrap_err();
    assert!(matches!(err, LockError::NotEnoughEligibleGates { .. }));
}

#[test]
fn wrong_key_width() {
    let (c17, _) = bench("c17");
    let mut locked = lock_netlist(&c17, &LockPolicy::new(2, 1)).unwrap();
    assert!(matches!(
        locked.apply_key(&BitVector::zeros(3)),
        Err(LockError::WidthMismatch { expected: 2, actual: 3 })
    ));
}

#[test]
fn placement_rules_are_enforced() {
    let (c17, _) = bench("c17");
    let net = |n: &str| c17.find_net(n).unwrap();
    let bad = |replacement, g: &[&str]| {
        lock_with_placements(
            &c17,
            &[PlacementRequest {
                gate_output: net("16"),
                replacement,
                g_nets: g.iter().map(|n| net(n)).collect(),
            }],
        )
    };
    // Type B targets NOR/OR only.
    assert!(bad(ReplacementType::B, &["1"]).is_err());
    // Cut G must come from the gate's inputs; expand G must not.
    assert!(bad(ReplacementType::A, &["1"]).is_err());
    assert!(bad(ReplacementType::C, &["2"]).is_err());
    // Expand G deeper than the gate would change timing or create a loop.
    assert!(bad(ReplacementType::C, &["22"]).is_err());
    assert!(bad(ReplacementType::A, &["2", "11"]).is_err());
    assert!(bad(ReplacementType::C, &["1"]).is_ok());
}

#[test]
fn apply_key_writes_every_rgate_once() {
    let (c432, _) = bench("c432");
    let mut locked = lock_netlist(&c432, &LockPolicy::new(12, 4)).unwrap();
    let key = locked.correct_key().unwrap().clone();
    locked.apply_key(&key).unwrap();
    locked.apply_key(&key).unwrap();
    assert_eq!(locked.write_counts(), vec![2; 12]);
    assert_eq!(&locked.current_key(), &key);
}

#[test]
fn endurance_failure_is_whole_event_and_permanent() {
    let (c17, _) = bench("c17");
    let mut locked = lock_netlist(&c17, &LockPolicy::new(3, 2)).unwrap();
    locked.set_endurance_budget(2);
    let key = locked.correct_key().unwrap().clone();
    locked.apply_key(&key).unwrap();
    locked.apply_key(&key.inverted()).unwrap();
    assert!(matches!(locked.apply_key(&key), Err(LockError::DeviceFailed { .. })));
    assert!(locked.is_failed());
    assert_eq!(locked.write_counts(), vec![2; 3]);
    assert!(locked.evaluate(&BitVector::zeros(5)).is_err());
    assert!(locked.apply_key(&key).is_err());
}

#[test]
fn c432_correct_key_against_naive_interpreter() {
    let (c432, naive) = bench("c432");
    let mut rng = ChaCha8Rng::seed_from_u64(432);
    for (k, seed) in [(1, 1), (10, 2), (40, 3), (80, 4), (114, 5)] {
        let mut locked = lock_netlist(&c432, &LockPolicy::new(k, seed)).unwrap();
        let key = locked.correct_key().unwrap().clone();
        locked.apply_key(&key).unwrap();
        for _ in 0..64 {
            let x: Vec<bool> = (0..36).map(|_| rng.random()).collect();
            let got = locked.evaluate(&BitVector::from_bits(x.clone())).unwrap();
            assert_eq!(got.as_slice(), naive.eval(&x).as_slice(), "K={k}");
        }
        assert_eq!(locked.logic_depths().critical_path, naive.depth());
    }
}

#[test]
fn data_files_match_demo_builders() {
    let body = read_data("demo5.locked");
    let key = read_data("demo5.key");
    assert_eq!(body, demo::demo5_locked().body_text());
    assert_eq!(key, demo::demo5_locked().sidecar_text());
    assert_eq!(read_data("demo5_split.locked"), demo::demo5_split().body_text());
    assert_eq!(read_data("demo5.bench"), demo::demo5().to_bench());
    assert_eq!(read_data("fig9.locked"), demo::fig9_locked().body_text());
    assert_eq!(parse_locked_parts(&body, &key).unwrap(), demo::demo5_locked());
}

#[test]
fn lock_is_deterministic() {
    let (c880, _) = bench("c880");
    let a = lock_netlist(&c880, &LockPolicy::new(30, 9)).unwrap();
    let b = lock_netlist(&c880, &LockPolicy::new(30, 9)).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = lock_netlist(&c880, &LockPolicy::new(30, 10)).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn c17_locks_are_sound(k in 1usize..=4, seed in any::<u64>()) {
        let (c17, naive) = bench("c17");
        let mut locked = lock_netlist(&c17, &LockPolicy::new(k, seed)).unwrap();
        prop_assert_eq!(locked.key_width(), k);
        let key = locked.correct_key().unwrap().clone();
        locked.apply_key(&key).unwrap();
        for v in 0..32u64 {
            let x = bits(v, 5);
            let got = locked.evaluate(&BitVector::from_bits(x.clone())).unwrap();
            let want = naive.eval(&x);
            prop_assert_eq!(got.as_slice(), want.as_slice());
        }
        prop_assert_eq!(locked.logic_depths().critical_path, c17.logic_depths().critical_path);
        prop_assert_eq!(locked.restore_original().unwrap(), c17.clone());
    }

    #[test]
    fn placements_follow_type_rules(k in 1usize..=30, seed in any::<u64>()) {
        let (c880, _) = bench("c880");
        let locked = lock_netlist(&c880, &LockPolicy::new(k, seed)).unwrap();
        let depths = c880.logic_depths();
        for (i, p) in locked.placement_log().iter().enumerate() {
            prop_assert!(p.replacement.applies_to(p.original_kind));
            prop_assert_eq!(locked.correct_key().unwrap().get(i), !p.replacement.is_cut());
            if p.replacement.is_cut() {
                prop_assert!(p.g_nets.iter().all(|g| p.original_inputs.contains(g)));
            } else {
                prop_assert!(p.g_nets.iter().all(|g| !p.original_inputs.contains(g)));
                prop_assert!(p.g_nets.iter().all(|&g| depths.depth(g) < p.depth));
            }
            prop_assert!(depths.depth_slack(p.output) >= 1);
        }
        let rgates = locked.cells().iter().filter(|c| matches!(c, Cell::RGate { .. })).count();
        prop_assert_eq!(rgates, k);
    }

    #[test]
    fn text_round_trip(k in 1usize..=20, seed in any::<u64>()) {
        let (c432, _) = bench("c432");
        let locked = lock_netlist(&c432, &LockPolicy::new(k, seed)).unwrap();
        let text = locked.to_text();
        prop_assert_eq!(&parse_locked(&text).unwrap(), &locked);
        let view = parse_locked_attacker_view(&text).unwrap();
        prop_assert!(view.correct_key().is_none());
        prop_assert!(view.placement_log().is_empty());
        prop_assert_eq!(view, locked.attacker_view());
    }

    #[test]
    fn strict_slack_keeps_rgates_off_every_critical_path(k in 1usize..=20, seed in any::<u64>()) {
        let (c880, _) = bench("c880");
        let policy = LockPolicy { strict_path_slack: true, ..LockPolicy::new(k, seed) };
        let locked = lock_netlist(&c880, &policy).unwrap();
        let depths = c880.logic_depths();
        for p in locked.placement_log() {
            prop_assert!(depths.path_slack(p.output) >= 1);
        }
    }
}
