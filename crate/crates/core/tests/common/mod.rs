//! Test oracles that share no code with the library.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn read_data(rel: &str) -> String {
    std::fs::read_to_string(data(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// A `.bench` interpreter built from string splitting and recursive evaluation.
pub struct NaiveCircuit {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    gates: HashMap<String, (String, Vec<String>)>,
}

impl NaiveCircuit {
    pub fn parse(text: &str) -> Self {
        let mut c = NaiveCircuit {
            inputs: vec![],
            outputs: vec![],
            gates: HashMap::new(),
        };
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let inner = |s: &str| s[s.find('(').unwrap() + 1..s.rfind(')').unwrap()].to_string();
            if let Some((lhs, rhs)) = line.split_once('=') {
                let kind = rhs.trim()[..rhs.trim().find('(').unwrap()].trim().to_uppercase();
                let args = inner(rhs).split(',').map(|a| a.trim().to_string()).collect();
                c.gates.insert(lhs.trim().to_string(), (kind, args));
            } else if line.to_uppercase().starts_with("INPUT") {
                c.inputs.push(inner(line).trim().to_string());
            } else {
                c.outputs.push(inner(line).trim().to_string());
            }
        }
        c
    }

    fn value(&self, net: &str, memo: &mut HashMap<String, bool>) -> bool {
        if let Some(&v) = memo.get(net) {
            return v;
        }
        let (kind, args) = &self.gates[net];
        let vals: Vec<bool> = args.iter().map(|a| self.value(a, memo)).collect();
        let and = vals.iter().all(|&v| v);
        let or = vals.iter().any(|&v| v);
        let xor = vals.iter().filter(|&&v| v).count() % 2 == 1;
        let v = match kind.as_str() {
            "AND" => and,
            "NAND" => !and,
            "OR" => or,
            "NOR" => !or,
            "XOR" => xor,
            "XNOR" => !xor,
            "NOT" | "INV" => !vals[0],
            "BUF" | "BUFF" => vals[0],
            k => panic!("unknown kind {k}"),
        };
        memo.insert(net.to_string(), v);
        v
    }

    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        let mut memo: HashMap<String, bool> =
            self.inputs.iter().cloned().zip(inputs.iter().copied()).collect();
        self.outputs.iter().map(|o| self.value(o, &mut memo)).collect()
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    /// Longest gate chain to any output, by plain recursion.
    pub fn depth(&self) -> u32 {
        fn d(c: &NaiveCircuit, net: &str, memo: &mut HashMap<String, u32>) -> u32 {
            if let Some(&v) = memo.get(net) {
                return v;
            }
            let v = match c.gates.get(net) {
                None => 0,
                Some((_, args)) => 1 + args.iter().map(|a| d(c, a, memo)).max().unwrap(),
            };
            memo.insert(net.to_string(), v);
            v
        }
        let mut memo = HashMap::new();
        self.outputs.iter().map(|o| d(self, o, &mut memo)).max().unwrap_or(0)
    }
}

/// Bits of `v`, bit 0 first.
pub fn bits(v: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| (v >> i) & 1 == 1).collect()
}

pub const ISCAS: [&str; 9] = [
    "c17", "c432", "c499", "c880", "c1355", "c1908", "c2670", "c3540", "c5315",
];
