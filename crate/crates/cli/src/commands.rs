use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use rgatelock::attack::{
    curve_selection, direct_traversal, iis_traversal, separate_traversal, traversal_curve, AttackReport,
    CandidateOrder, CoreModel, CurveConfig, IisConfig, Oracle, ToyCoreSource, UniformSource,
};
use rgatelock::keycore::{format_program, parse_program, run_iis, synthesize_iis, NodeSelection, SynthesisOptions};
use rgatelock::locking::{lock_netlist, parse_locked_attacker_view, parse_locked_parts};
use rgatelock::metrics::{metrics_sweep, InputPolicy, KeyPolicy, SamplingConfig, TraversalModel};
use rgatelock::netlist::parse_bench;
use rgatelock::{BitVector, LockPolicy, LockedNetlist, Netlist, ReplacementType};
use serde_json::{json, Value};

use crate::{AttackArgs, Core, KeygenArgs, LockArgs, MetricsArgs, ModelArgs, Order, SimArgs, Strategy};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON value serializes"));
}

fn load_bench(path: &Path) -> Result<Netlist> {
    parse_bench(&read(path)?).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "netlist".into(), |s| s.to_string_lossy().into_owned())
}

fn sidecar_path(locked: &Path) -> PathBuf {
    locked.with_extension("key")
}

fn is_bench(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bench")
}

/// The locked netlist with its key, from `<stem>.locked` plus `<stem>.key`.
fn load_locked_with_key(path: &Path) -> Result<LockedNetlist> {
    let key_path = sidecar_path(path);
    let sidecar = read(&key_path).map_err(|_| format!("no key sidecar at {}", key_path.display()))?;
    Ok(parse_locked_parts(&read(path)?, &sidecar).map_err(|e| format!("{}: {e}", path.display()))?)
}

pub fn lock(a: LockArgs) -> Result<()> {
    let netlist = load_bench(&a.bench)?;
    let allowed_types = a
        .types
        .iter()
        .map(|t| t.parse::<ReplacementType>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let policy = LockPolicy {
        allowed_types,
        g_width: a.g_width,
        depth_margin: a.depth_margin,
        strict_path_slack: a.strict_slack,
        ..LockPolicy::new(a.k, a.seed.seed)
    };
    let locked = lock_netlist(&netlist, &policy)?;
    fs::create_dir_all(&a.out_dir)?;
    let name = stem(&a.bench);
    let locked_path = a.out_dir.join(format!("{name}.locked"));
    let key_path = a.out_dir.join(format!("{name}.key"));
    write(&locked_path, &locked.body_text())?;
    write(&key_path, &locked.sidecar_text())?;

    let placements: Vec<Value> = locked
        .placement_log()
        .iter()
        .map(|p| {
            json!({
                "net": locked.net_name(p.output),
                "type": p.replacement.to_string(),
                "g": p.g_nets.iter().map(|&g| locked.net_name(g)).collect::<Vec<_>>(),
            })
        })
        .collect();
    print_json(&json!({
        "command": "lock",
        "seed": a.seed.seed,
        "config": {
            "input": a.bench.display().to_string(),
            "k": a.k,
            "types": a.types,
            "g_width": a.g_width,
            "depth_margin": a.depth_margin,
            "strict_slack": a.strict_slack,
        },
        "locked": locked_path.display().to_string(),
        "key_file": key_path.display().to_string(),
        "critical_path": netlist.logic_depths().critical_path,
        "placements": placements,
    }));
    Ok(())
}

pub fn attack(a: AttackArgs) -> Result<()> {
    if a.curve.is_some() {
        return curve(a);
    }
    let body = read(&a.locked)?;
    let view = parse_locked_attacker_view(&body).map_err(|e| format!("{}: {e}", a.locked.display()))?;
    let oracle = match &a.oracle {
        Some(p) => Oracle::from_netlist(load_bench(p)?),
        None => {
            let key_path = sidecar_path(&a.locked);
            if !key_path.exists() {
                return Err(format!(
                    "no oracle: pass --oracle or put the key sidecar at {}",
                    key_path.display()
                )
                .into());
            }
            eprintln!(
                "warning: {} read only to build the oracle; the attack sees the attacker view",
                key_path.display()
            );
            Oracle::from_locked(&load_locked_with_key(&a.locked)?)?
        }
    };
    let seed = a.seed.seed;
    let order = match a.order {
        Order::Seeded => CandidateOrder::Seeded(seed),
        Order::Ascending => CandidateOrder::Ascending,
    };
    let mut device = view;
    if let Some(b) = a.endurance {
        device.set_endurance_budget(b);
    }
    let mut report: AttackReport = match a.strategy {
        Strategy::Combined => direct_traversal(&device, &oracle, &order, seed)?,
        Strategy::Separate => {
            if a.groups.is_empty() {
                return Err("--strategy separate needs --groups".into());
            }
            separate_traversal(&device, &oracle, &a.groups, &order, seed)?
        }
        Strategy::Iis => {
            let k = device.key_width();
            let sel = match &a.sel {
                Some(p) => NodeSelection::from_json(&read(p)?)?,
                None => curve_selection(k, seed),
            };
            let cfg = IisConfig {
                max_cycles: a.max_cycles,
                endurance_budget: a.endurance,
                probe_seed: seed,
                seed: Some(seed),
            };
            match a.core {
                Core::Toy => iis_traversal(&device, &oracle, &mut ToyCoreSource::new(sel, seed), &cfg)?,
                Core::Uniform => iis_traversal(&device, &oracle, &mut UniformSource::new(k, seed), &cfg)?,
            }
        }
    };
    if !a.timing {
        report.wall_time_ms = None;
    }
    let strategy = match a.strategy {
        Strategy::Combined => "combined",
        Strategy::Separate => "separate",
        Strategy::Iis => "iis",
    };
    print_json(&json!({
        "command": "attack",
        "seed": seed,
        "config": {
            "input": a.locked.display().to_string(),
            "strategy": strategy,
            "groups": a.groups,
            "max_cycles": a.max_cycles,
            "endurance": a.endurance,
            "order": match a.order { Order::Seeded => "seeded", Order::Ascending => "ascending" },
        },
        "report": serde_json::to_value(&report)?,
    }));
    Ok(())
}

fn curve(a: AttackArgs) -> Result<()> {
    let out = a.curve.as_ref().expect("checked by caller");
    let netlist = if is_bench(&a.locked) {
        load_bench(&a.locked)?
    } else {
        load_locked_with_key(&a.locked)?.restore_original()?
    };
    let cfg = CurveConfig {
        k_values: a.k_range.0.clone(),
        seeds: (a.seed.seed..a.seed.seed + a.seeds).collect(),
        max_cycles: a.max_cycles,
        core: match a.core {
            Core::Toy => CoreModel::ToyCore,
            Core::Uniform => CoreModel::Uniform,
        },
    };
    let curve = traversal_curve(&netlist, &cfg)?;
    write(out, &curve.to_csv())?;
    print_json(&json!({
        "command": "attack-curve",
        "seed": a.seed.seed,
        "config": {
            "input": a.locked.display().to_string(),
            "k_values": cfg.k_values,
            "seeds": a.seeds,
            "max_cycles": a.max_cycles,
            "core": match a.core { Core::Toy => "toy", Core::Uniform => "uniform" },
        },
        "csv": out.display().to_string(),
        "summary": serde_json::to_value(&curve.summary)?,
        "fit": serde_json::to_value(curve.fit)?,
    }));
    Ok(())
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let netlist = load_bench(&a.bench)?;
    let module = stem(&a.bench);
    let sampling = SamplingConfig {
        keys: KeyPolicy::Random(a.keys),
        inputs: InputPolicy::Random(a.inputs),
        seed: a.seed.seed,
        auto_exhaustive: !a.no_exhaustive,
    };
    let seeds: Vec<u64> = (a.seed.seed..a.seed.seed + a.seeds).collect();
    let table = metrics_sweep(&netlist, &module, &a.k_sweep.0, &seeds, &sampling)?;
    let csv = table.to_csv();
    let Some(out) = &a.out else {
        print!("{csv}");
        return Ok(());
    };
    write(out, &csv)?;
    let (er, hd) = table.trend(&module);
    let corr = |c: rgatelock::stats::Correlation| json!({"rho": c.rho, "p_value": c.p_value, "n": c.n});
    print_json(&json!({
        "command": "metrics",
        "seed": a.seed.seed,
        "config": {
            "input": a.bench.display().to_string(),
            "k_values": a.k_sweep.0,
            "seeds": a.seeds,
            "keys": a.keys,
            "inputs": a.inputs,
            "exhaustive_allowed": !a.no_exhaustive,
        },
        "csv": out.display().to_string(),
        "aggregates": serde_json::to_value(table.aggregates())?,
        "trend": {"error_rate": corr(er), "hd_ratio": corr(hd)},
    }));
    Ok(())
}

pub fn model(a: ModelArgs) -> Result<()> {
    let model = TraversalModel::from_json(&read(&a.model)?)?;
    let m = model.expected_modifications();
    let c = model.expected_cycles();
    let mc = a.trials.map(|t| model.monte_carlo_modifications(t, a.seed.seed));
    print_json(&json!({
        "command": "model",
        "seed": a.seed.seed,
        "config": {"input": a.model.display().to_string(), "trials": a.trials},
        "e_mu": m.e_mu,
        "e_m": m.e_m,
        "t_m": c.t_m,
        "lower_bound": c.lower_bound,
        "monte_carlo_e_m": mc,
    }));
    Ok(())
}

pub fn keygen(a: KeygenArgs) -> Result<()> {
    let sel = NodeSelection::from_json(&read(&a.sel)?)?;
    if let Some(path) = &a.replay {
        let program = parse_program(&read(path)?)?;
        let trace = run_iis(None, &program, &sel)?;
        print_json(&json!({
            "command": "keygen-replay",
            "seed": a.seed.seed,
            "config": {"program": path.display().to_string(), "sel": a.sel.display().to_string()},
            "cycles": trace.entries.len(),
            "halted": trace.halted,
            "final_key": trace.final_key().map(|k| k.to_string()),
        }));
        return Ok(());
    }
    let target: BitVector = a.target.as_deref().expect("clap requires --target").parse()?;
    let opts = SynthesisOptions {
        seed: a.seed.seed,
        max_expansions: a.max_expansions,
        ..SynthesisOptions::default()
    };
    let program = synthesize_iis(&target, &sel, a.budget, &opts)?;
    let text = format!(
        "; target {target} over {}\n; seed {} budget {}\n{}",
        a.sel.display(),
        a.seed.seed,
        a.budget,
        format_program(&program)
    );
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn sim(a: SimArgs) -> Result<()> {
    let inputs: BitVector = a.vector.parse()?;
    let outputs = if is_bench(&a.netlist) {
        load_bench(&a.netlist)?.evaluate(&inputs)?
    } else {
        let mut locked = match &a.key {
            Some(_) => parse_locked_attacker_view(&read(&a.netlist)?)?,
            None => load_locked_with_key(&a.netlist)?,
        };
        let key = match &a.key {
            Some(k) => k.parse()?,
            None => locked.correct_key().cloned().ok_or("key sidecar has no key")?,
        };
        locked.apply_key(&key)?;
        locked.evaluate(&inputs)?
    };
    println!("{outputs}");
    Ok(())
}
