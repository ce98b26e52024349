//! One line per acceptance criterion. Exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{bits, read_data, NaiveCircuit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgatelock::attack::{
    correct_frequency, curve_selection, direct_traversal, separate_traversal, traversal_curve, CandidateOrder,
    CoreModel, CurveConfig, Oracle, Outcome, ToyCoreSource, TraversalCurve, UniformSource,
};
use rgatelock::demo;
use rgatelock::locking::{lock_netlist, parse_locked_parts};
use rgatelock::metrics::{error_rate, metrics_sweep, SamplingConfig, SweepTable, TraversalModel};
use rgatelock::netlist::parse_bench;
use rgatelock::stats::binomial_sigma;
use rgatelock::{BitVector, LockPolicy, Netlist};

// Tolerances and budgets.
const C1_LIMIT: Duration = Duration::from_secs(1);
const C2_LIMIT: Duration = Duration::from_secs(1);
const C3_REL_TOL: f64 = 0.05;
const C3_TRIALS: u64 = 100_000;
const C3_LIMIT: Duration = Duration::from_secs(30);
const C4_MODELS: usize = 1000;
const C4_LIMIT: Duration = Duration::from_secs(5);
const C5_SEEDS: u64 = 50;
const C5_MAX_CYCLES: u64 = 10_000_000;
const C5_MIN_R2: f64 = 0.9;
const C5_MIN_RATIO: f64 = 100.0;
const C5_LIMIT: Duration = Duration::from_secs(600);
const C6_SAMPLES: u64 = 1_000_000;
const C6_SIGMAS: f64 = 3.0;
const C6_LIMIT: Duration = Duration::from_secs(60);
const C7_SEEDS: u64 = 5;
const C7_MAX_P: f64 = 0.05;
const C7_SIGMAS: f64 = 3.0;
const C7_LIMIT: Duration = Duration::from_secs(300);

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn within(t0: Instant, limit: Duration) -> (bool, String) {
    let e = t0.elapsed();
    (e <= limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

fn load(name: &str) -> Netlist {
    parse_bench(&read_data(&format!("iscas85/{name}.bench"))).unwrap()
}

/// Every (netlist, K, seed) lock made by criteria 1 and 7, for criterion 9.
type LockLog = Vec<(&'static str, usize, u64)>;

fn c1_correct_key(log: &mut LockLog) -> Verdict {
    let t0 = Instant::now();
    let text = read_data("iscas85/c17.bench");
    let (c17, naive) = (parse_bench(&text).unwrap(), NaiveCircuit::parse(&text));
    let mut bad = 0;
    for k in 1..=4 {
        for seed in 0..20 {
            log.push(("c17", k, seed));
            let mut locked = lock_netlist(&c17, &LockPolicy::new(k, seed)).unwrap();
            locked.apply_key(&locked.correct_key().unwrap().clone()).unwrap();
            bad += (0..32u64)
                .filter(|&v| {
                    let x = bits(v, 5);
                    locked.evaluate(&BitVector::from_bits(x.clone())).unwrap().as_slice() != naive.eval(&x).as_slice()
                })
                .count();
        }
    }
    let (fast, time) = within(t0, C1_LIMIT);
    verdict(bad == 0 && fast, format!("80 locks x 32 vectors, {bad} mismatches, {time}"))
}

fn demo5_reports() -> (String, String) {
    let split = parse_locked_parts(&read_data("demo5_split.locked"), &read_data("demo5_split.key")).unwrap();
    let oracle = Oracle::from_locked(&split).unwrap();
    let correct = split.correct_key().unwrap().clone();
    let others: Vec<BitVector> = (0..32u64).map(|v| BitVector::from_u64(v, 5)).filter(|k| *k != correct).collect();
    let mut last = others.clone();
    last.push(correct.clone());
    let mut combined = direct_traversal(&demo::demo5_locked().attacker_view(), &oracle, &CandidateOrder::Explicit(last), 0)
        .unwrap();
    // Group-wise worst case: in each group every wrong assignment precedes the right one.
    let groups: [&[usize]; 3] = [&[0], &[1, 2], &[3, 4]];
    let mut keys = Vec::new();
    for j in 0..3 {
        let mut key = correct.clone();
        for g in groups {
            let wrong: Vec<u64> = (0..1u64 << g.len())
                .filter(|&v| g.iter().enumerate().any(|(i, &b)| ((v >> i) & 1 == 1) != correct.get(b)))
                .collect();
            let v = wrong[j.min(wrong.len() - 1)];
            for (i, &b) in g.iter().enumerate() {
                key.set(b, (v >> i) & 1 == 1);
            }
        }
        keys.push(key);
    }
    keys.push(correct);
    let mut separate =
        separate_traversal(&split.attacker_view(), &oracle, &[1, 2, 2], &CandidateOrder::Explicit(keys), 0).unwrap();
    combined.wall_time_ms = None;
    separate.wall_time_ms = None;
    (combined.to_json(), separate.to_json())
}

fn c2_demo_counts() -> (Verdict, String) {
    let t0 = Instant::now();
    let (combined, separate) = demo5_reports();
    let attempts = |json: &str| {
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        (v["success"].as_bool().unwrap(), v["key_attempts"].as_u64().unwrap())
    };
    let (c, s) = (attempts(&combined), attempts(&separate));
    let (fast, time) = within(t0, C2_LIMIT);
    let ok = c == (true, 32) && s == (true, 10) && fast;
    (verdict(ok, format!("separate {} attempts, combined {} attempts, {time}", s.1, c.1)), combined + &separate)
}

fn c3_geometric() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let m = rng.random_range(1..=8);
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..=1.0)).collect();
        let model = TraversalModel::with_unit_periods(p).unwrap();
        let exact = model.expected_modifications().e_m;
        let mc = model.monte_carlo_modifications(C3_TRIALS, 300 + i);
        worst = worst.max((mc - exact).abs() / exact);
    }
    let (fast, time) = within(t0, C3_LIMIT);
    verdict(worst <= C3_REL_TOL && fast, format!("10 models, worst relative error {worst:.4}, {time}"))
}

fn c4_bound() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let violations = (0..C4_MODELS)
        .filter(|_| {
            let m = rng.random_range(0..=16);
            let p = (0..m).map(|_| rng.random_range(1e-3..=1.0)).collect();
            let n = (0..m).map(|_| rng.random_range(1.0..100.0)).collect();
            let c = TraversalModel::new(p, n).unwrap().expected_cycles();
            c.t_m < c.lower_bound * (1.0 - 1e-12)
        })
        .count();
    let (fast, time) = within(t0, C4_LIMIT);
    verdict(violations == 0 && fast, format!("{C4_MODELS} models, {violations} violations, {time}"))
}

fn c5_curve() -> TraversalCurve {
    let cfg = CurveConfig {
        k_values: (3..=9).collect(),
        seeds: (0..C5_SEEDS).collect(),
        max_cycles: C5_MAX_CYCLES,
        core: CoreModel::ToyCore,
    };
    traversal_curve(&load("c432"), &cfg).unwrap()
}

fn c5_trend() -> (Verdict, String) {
    let t0 = Instant::now();
    let curve = c5_curve();
    let means: Vec<f64> = curve.summary.iter().map(|s| s.mean_cycles).collect();
    let censored: usize = curve.summary.iter().map(|s| s.censored).sum();
    // Faster than linear: cost per added bit keeps growing from end to end.
    let superlinear = means.last().unwrap() / means[0] > 9.0 / 3.0 && curve.fit.slope > 0.0;
    let ratio = curve.summary_for(9).unwrap().ratio;
    let (fast, time) = within(t0, C5_LIMIT);
    let ok = superlinear && curve.fit.r_squared >= C5_MIN_R2 && ratio >= C5_MIN_RATIO && censored == 0 && fast;
    let detail = format!(
        "means {:?}, slope {:.3}/bit, R2 {:.3}, ratio at K=9 {ratio:.1}x (need {C5_MIN_RATIO}x), {censored} censored, {time}",
        means.iter().map(|m| m.round() as u64).collect::<Vec<_>>(),
        curve.fit.slope,
        curve.fit.r_squared,
    );
    (verdict(ok, detail), curve.to_csv())
}

fn c6_frequency() -> Verdict {
    let t0 = Instant::now();
    let ks: Vec<usize> = (1..=12).collect();
    let mut src = UniformSource::new(12, 0);
    let target = 0b1011_0010_1101;
    let worst = correct_frequency(&mut src, target, &ks, C6_SAMPLES)
        .iter()
        .map(|r| {
            let p = 0.5f64.powi(r.k as i32);
            (r.frequency - p).abs() / binomial_sigma(p, C6_SAMPLES)
        })
        .fold(0.0, f64::max);
    let mut monotone = true;
    for group in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(60 + group);
        let target = rng.random::<u64>() & 0xFFF;
        let mut core = ToyCoreSource::new(curve_selection(12, 600 + group), group);
        let rows = correct_frequency(&mut core, target, &ks, C6_SAMPLES);
        monotone &= rows.windows(2).all(|w| w[1].normalized <= w[0].normalized);
    }
    let (fast, time) = within(t0, C6_LIMIT);
    verdict(
        worst <= C6_SIGMAS && monotone && fast,
        format!("null model worst deviation {worst:.2} sigma, real core non-increasing: {monotone}, {time}"),
    )
}

fn c7_sweep(log: &mut LockLog) -> SweepTable {
    let ks: Vec<usize> = (1..=8).map(|i| i * 10).collect();
    let seeds: Vec<u64> = (0..C7_SEEDS).collect();
    let mut table = SweepTable::default();
    for name in ["c432", "c880"] {
        for &k in &ks {
            for &s in &seeds {
                log.push((name, k, s));
            }
        }
        table.extend(metrics_sweep(&load(name), name, &ks, &seeds, &SamplingConfig::default()).unwrap());
    }
    table
}

fn c7_trend(log: &mut LockLog) -> (Verdict, String) {
    let t0 = Instant::now();
    let table = c7_sweep(log);
    let skipped = table.rows.iter().filter(|r| r.skipped()).count();
    let mut ok = skipped == 0;
    let mut detail = Vec::new();
    for name in ["c432", "c880"] {
        let (er, hd) = table.trend(name);
        ok &= er.rho > 0.0 && er.p_value < C7_MAX_P && hd.rho > 0.0 && hd.p_value < C7_MAX_P;
        detail.push(format!(
            "{name} error rho {:.2} p {:.1e}, hd rho {:.2} p {:.1e}",
            er.rho, er.p_value, hd.rho, hd.p_value
        ));
    }
    let c17 = load("c17");
    let locked = lock_netlist(&c17, &LockPolicy::new(2, 7)).unwrap();
    log.push(("c17", 2, 7));
    let exact = error_rate(&c17, &locked, &SamplingConfig::exhaustive()).unwrap().error_rate;
    let mc = error_rate(&c17, &locked, &SamplingConfig::monte_carlo(1000, 1000, 7)).unwrap().error_rate;
    // Key and input sampling each contribute at most p(1-p)/n.
    let sigma = (exact * (1.0 - exact) * 2.0 / 1000.0).sqrt();
    let dev = (mc - exact).abs() / sigma;
    ok &= dev <= C7_SIGMAS;
    let (fast, time) = within(t0, C7_LIMIT);
    detail.push(format!("c17 K=2 MC {mc:.4} vs exact {exact:.4} ({dev:.2} sigma), {skipped} skipped, {time}"));
    (verdict(ok && fast, detail.join("; ")), table.to_csv())
}

fn c8_endurance() -> Verdict {
    let t0 = Instant::now();
    let base = demo::demo5_locked();
    let oracle = Oracle::from_locked(&base).unwrap();
    let correct = base.correct_key().unwrap().clone();
    let mut order: Vec<BitVector> = (0..32u64).map(|v| BitVector::from_u64(v, 5)).filter(|k| *k != correct).collect();
    order.push(correct);
    let order = CandidateOrder::Explicit(order);
    let mut ok = true;
    for budget in 1..=40u64 {
        let mut locked = base.attacker_view();
        locked.set_endurance_budget(budget);
        let r = direct_traversal(&locked, &oracle, &order, 0).unwrap();
        ok &= r.writes_consumed.iter().all(|&w| w == r.key_attempts);
        if budget < 32 {
            ok &= r.outcome == Outcome::EnduranceExhausted
                && r.failed_at_attempt == Some(budget + 1)
                && r.key_attempts == budget;
        } else {
            ok &= r.success && r.key_attempts == 32;
        }
    }
    verdict(ok && t0.elapsed() < Duration::from_secs(1), "budgets 1..40 on the 5-bit demo, adversarial order")
}

fn c9_critical_path(log: &LockLog) -> Verdict {
    let mut bad = 0;
    let mut cache: Vec<(&str, Netlist)> = Vec::new();
    for &(name, k, seed) in log {
        if !cache.iter().any(|(n, _)| *n == name) {
            cache.push((name, load(name)));
        }
        let n = &cache.iter().find(|(x, _)| *x == name).unwrap().1;
        let locked = lock_netlist(n, &LockPolicy::new(k, seed)).unwrap();
        let configured = locked.configured_netlist(locked.correct_key().unwrap()).unwrap();
        let want = n.logic_depths().critical_path;
        bad += (locked.logic_depths().critical_path != want || configured.logic_depths().critical_path != want) as usize;
    }
    verdict(bad == 0, format!("{} locks, {bad} with a changed critical path", log.len()))
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut log = LockLog::new();

    results.push((1, "correct-key equivalence", c1_correct_key(&mut log)));
    let (v2, json2) = c2_demo_counts();
    results.push((2, "separate vs combined counts", v2));
    results.push((3, "geometric expectation", c3_geometric()));
    results.push((4, "cycle lower bound", c4_bound()));
    let (v5, csv5) = c5_trend();
    results.push((5, "traversal cost trend", v5));
    results.push((6, "correct-state frequency", c6_frequency()));
    let (v7, csv7) = c7_trend(&mut log);
    results.push((7, "obfuscation trend", v7));
    results.push((8, "endurance semantics", c8_endurance()));
    results.push((9, "critical-path preservation", c9_critical_path(&log)));

    let mut log2 = LockLog::new();
    let same = demo5_reports().0 + &demo5_reports().1 == json2
        && c5_curve().to_csv() == csv5
        && c7_sweep(&mut log2).to_csv() == csv7;
    results.push((10, "determinism", verdict(same, "criteria 2, 5 and 7 outputs repeated byte for byte")));

    let mut failed = 0;
    for (n, name, v) in &results {
        println!("[{}] criterion {n:>2} {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        failed += !v.ok as usize;
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
