//! Combinational gate-level netlist IR.
//!
//! Nets are dense indices. Primary inputs take the first ids in declaration order,
//! followed by gate outputs in gate order, so a netlist parsed from its own
//! serialization gets identical ids.

pub(crate) mod bench;
mod depth;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::bits::BitVector;

pub use bench::{parse_bench, write_bench};
pub use depth::LogicDepths;

/// Dense handle into a netlist's net table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetId(pub u32);

impl NetId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Or,
    Nand,
    Nor,
    Not,
    Xor,
    Xnor,
    Buf,
}

impl GateKind {
    pub fn from_keyword(word: &str) -> Option<GateKind> {
        Some(match word.to_ascii_uppercase().as_str() {
            "AND" => GateKind::And,
            "OR" => GateKind::Or,
            "NAND" => GateKind::Nand,
            "NOR" => GateKind::Nor,
            "NOT" | "INV" => GateKind::Not,
            "XOR" => GateKind::Xor,
            "XNOR" => GateKind::Xnor,
            "BUF" | "BUFF" => GateKind::Buf,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Not => "NOT",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Buf => "BUFF",
        }
    }

    pub fn is_unary(self) -> bool {
        matches!(self, GateKind::Not | GateKind::Buf)
    }

    /// Evaluate on 64 packed patterns at once.
    #[inline]
    pub fn eval_word(self, mut inputs: impl Iterator<Item = u64>) -> u64 {
        match self {
            GateKind::And => inputs.fold(!0, |a, b| a & b),
            GateKind::Nand => !inputs.fold(!0, |a, b| a & b),
            GateKind::Or => inputs.fold(0, |a, b| a | b),
            GateKind::Nor => !inputs.fold(0, |a, b| a | b),
            GateKind::Xor => inputs.fold(0, |a, b| a ^ b),
            GateKind::Xnor => !inputs.fold(0, |a, b| a ^ b),
            GateKind::Not => !inputs.next().unwrap_or(0),
            GateKind::Buf => inputs.next().unwrap_or(0),
        }
    }

    pub fn eval(self, inputs: &[bool]) -> bool {
        self.eval_word(inputs.iter().map(|&b| if b { !0 } else { 0 })) & 1 == 1
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub output: NetId,
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown gate kind `{kind}`")]
    UnknownGateKind { line: usize, kind: String },
    #[error("line {line}: sequential element `{kind}` is not supported (combinational only)")]
    Sequential { line: usize, kind: String },
    #[error("{}net `{net}` is used but never driven", line_prefix(*.line))]
    UndrivenNet { line: Option<usize>, net: String },
    #[error("{}net `{net}` has more than one driver", line_prefix(*.line))]
    MultipleDrivers { line: Option<usize>, net: String },
    #[error("{}net `{net}` is declared as an output more than once", line_prefix(*.line))]
    DuplicateOutput { line: Option<usize>, net: String },
    #[error("{}combinational loop through net `{net}`", line_prefix(*.line))]
    CombinationalLoop { line: Option<usize>, net: String },
    #[error("{}gate `{net}` of kind {kind} has invalid arity {arity}", line_prefix(*.line))]
    BadArity {
        line: Option<usize>,
        net: String,
        kind: GateKind,
        arity: usize,
    },
    #[error("expected {expected} bits, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// A validated, acyclic combinational netlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Netlist {
    name: String,
    names: Vec<String>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
    order: Vec<usize>,
}

impl Netlist {
    /// Build and validate a netlist. `names[i]` names net `i`; every net must be
    /// driven by exactly one primary input or gate.
    pub fn new(
        name: impl Into<String>,
        names: Vec<String>,
        inputs: Vec<NetId>,
        outputs: Vec<NetId>,
        gates: Vec<Gate>,
    ) -> Result<Self, NetlistError> {
        Self::with_lines(name.into(), names, inputs, outputs, gates, None)
    }

    pub(crate) fn with_lines(
        name: String,
        names: Vec<String>,
        inputs: Vec<NetId>,
        outputs: Vec<NetId>,
        gates: Vec<Gate>,
        lines: Option<&LineInfo>,
    ) -> Result<Self, NetlistError> {
        let gate_line = |g: usize| lines.map(|l| l.gates[g]);
        let n = names.len();
        let mut driven = vec![false; n];
        for &pi in &inputs {
            if std::mem::replace(&mut driven[pi.index()], true) {
                return Err(NetlistError::MultipleDrivers {
                    line: None,
                    net: names[pi.index()].clone(),
                });
            }
        }
        for (gi, g) in gates.iter().enumerate() {
            let arity_ok = if g.kind.is_unary() {
                g.inputs.len() == 1
            } else {
                !g.inputs.is_empty()
            };
            if !arity_ok {
                return Err(NetlistError::BadArity {
                    line: gate_line(gi),
                    net: names[g.output.index()].clone(),
                    kind: g.kind,
                    arity: g.inputs.len(),
                });
            }
            if std::mem::replace(&mut driven[g.output.index()], true) {
                return Err(NetlistError::MultipleDrivers {
                    line: gate_line(gi),
                    net: names[g.output.index()].clone(),
                });
            }
        }
        for (gi, g) in gates.iter().enumerate() {
            if let Some(&u) = g.inputs.iter().find(|i| !driven[i.index()]) {
                return Err(NetlistError::UndrivenNet {
                    line: gate_line(gi),
                    net: names[u.index()].clone(),
                });
            }
        }
        let mut seen_out = vec![false; n];
        for (oi, &o) in outputs.iter().enumerate() {
            let line = lines.map(|l| l.outputs[oi]);
            if !driven[o.index()] {
                return Err(NetlistError::UndrivenNet {
                    line,
                    net: names[o.index()].clone(),
                });
            }
            if std::mem::replace(&mut seen_out[o.index()], true) {
                return Err(NetlistError::DuplicateOutput {
                    line,
                    net: names[o.index()].clone(),
                });
            }
        }
        if let Some(u) = (0..n).find(|&i| !driven[i]) {
            return Err(NetlistError::UndrivenNet {
                line: None,
                net: names[u].clone(),
            });
        }
        let order = topo_order(n, gates.iter().map(|g| (g.output, g.inputs.as_slice())))
            .map_err(|gi| NetlistError::CombinationalLoop {
                line: gate_line(gi),
                net: names[gates[gi].output.index()].clone(),
            })?;
        Ok(Netlist {
            name,
            names,
            inputs,
            outputs,
            gates,
            order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn net_count(&self) -> usize {
        self.names.len()
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.names[net.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find_net(&self, name: &str) -> Option<NetId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NetId(i as u32))
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Gate indices in a topological order.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    /// Index of the gate driving `net`, if it is not a primary input.
    pub fn driver(&self, net: NetId) -> Option<usize> {
        let first_gate_net = self.inputs.len();
        (net.index() >= first_gate_net)
            .then(|| self.gates.iter().position(|g| g.output == net))
            .flatten()
    }

    /// Evaluate a single input vector.
    pub fn evaluate(&self, inputs: &BitVector) -> Result<BitVector, NetlistError> {
        check_width(self.inputs.len(), inputs.width())?;
        let words: Vec<u64> = inputs.iter().map(|b| b as u64).collect();
        let mut scratch = Vec::new();
        self.eval_packed(&words, &mut scratch);
        Ok(self
            .outputs
            .iter()
            .map(|o| scratch[o.index()] & 1 == 1)
            .collect())
    }

    /// Evaluate 64 patterns at once. `inputs[i]` packs primary input `i`;
    /// on return `values[net]` holds every net's packed value.
    pub fn eval_packed(&self, inputs: &[u64], values: &mut Vec<u64>) {
        debug_assert_eq!(inputs.len(), self.inputs.len());
        values.clear();
        values.resize(self.names.len(), 0);
        for (&pi, &w) in self.inputs.iter().zip(inputs) {
            values[pi.index()] = w;
        }
        for &gi in &self.order {
            let g = &self.gates[gi];
            values[g.output.index()] = g.kind.eval_word(g.inputs.iter().map(|i| values[i.index()]));
        }
    }

    /// Packed primary outputs for 64 patterns.
    pub fn eval_outputs_packed(&self, inputs: &[u64], scratch: &mut Vec<u64>) -> Vec<u64> {
        self.eval_packed(inputs, scratch);
        self.outputs.iter().map(|o| scratch[o.index()]).collect()
    }

    pub fn logic_depths(&self) -> LogicDepths {
        LogicDepths::compute(
            self.names.len(),
            &self.order,
            |gi| (self.gates[gi].output, self.gates[gi].inputs.as_slice()),
            &self.outputs,
        )
    }

    pub fn to_bench(&self) -> String {
        write_bench(self)
    }
}

pub(crate) fn check_width(expected: usize, actual: usize) -> Result<(), NetlistError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NetlistError::WidthMismatch { expected, actual })
    }
}

/// Source lines of parsed constructs, for error reporting.
#[derive(Debug, Default)]
pub(crate) struct LineInfo {
    pub gates: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Kahn's algorithm over cells given as (output, inputs). Returns cell indices
/// in topological order, or the index of a cell on a cycle.
pub(crate) fn topo_order<'a>(
    net_count: usize,
    cells: impl Iterator<Item = (NetId, &'a [NetId])>,
) -> Result<Vec<usize>, usize> {
    let cells: Vec<(NetId, &[NetId])> = cells.collect();
    let mut driver: Vec<Option<usize>> = vec![None; net_count];
    for (ci, (out, _)) in cells.iter().enumerate() {
        driver[out.index()] = Some(ci);
    }
    let mut pending = vec![0usize; cells.len()];
    let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); cells.len()];
    for (ci, (_, ins)) in cells.iter().enumerate() {
        for i in ins.iter() {
            if let Some(d) = driver[i.index()] {
                pending[ci] += 1;
                fanout[d].push(ci);
            }
        }
    }
    let mut ready: Vec<usize> = (0..cells.len()).filter(|&c| pending[c] == 0).rev().collect();
    let mut order = Vec::with_capacity(cells.len());
    while let Some(c) = ready.pop() {
        order.push(c);
        for &f in fanout[c].iter().rev() {
            pending[f] -= 1;
            if pending[f] == 0 {
                ready.push(f);
            }
        }
    }
    if order.len() == cells.len() {
        Ok(order)
    } else {
        Err((0..cells.len()).find(|&c| pending[c] > 0).unwrap())
    }
}

/// Mutable helper for assembling netlists programmatically.
#[derive(Debug, Default)]
pub struct NetlistBuilder {
    name: String,
    names: Vec<String>,
    index: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn net(&mut self, name: &str) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = NetId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn input(&mut self, name: &str) -> NetId {
        let id = self.net(name);
        self.inputs.push(id);
        id
    }

    pub fn output(&mut self, name: &str) -> NetId {
        let id = self.net(name);
        self.outputs.push(id);
        id
    }

    pub fn gate(&mut self, out: &str, kind: GateKind, inputs: &[&str]) -> NetId {
        let output = self.net(out);
        let inputs = inputs.iter().map(|i| self.net(i)).collect();
        self.gates.push(Gate {
            output,
            kind,
            inputs,
        });
        output
    }

    /// Validate and renumber nets canonically (inputs first, then gate outputs).
    pub fn build(self) -> Result<Netlist, NetlistError> {
        let mut remap: Vec<Option<NetId>> = vec![None; self.names.len()];
        let mut names = Vec::with_capacity(self.names.len());
        let mut assign = |old: NetId, names: &mut Vec<String>| -> Result<NetId, NetlistError> {
            if remap[old.index()].is_some() {
                return Err(NetlistError::MultipleDrivers {
                    line: None,
                    net: self.names[old.index()].clone(),
                });
            }
            let id = NetId(names.len() as u32);
            names.push(self.names[old.index()].clone());
            remap[old.index()] = Some(id);
            Ok(id)
        };
        let inputs = self
            .inputs
            .iter()
            .map(|&i| assign(i, &mut names))
            .collect::<Result<Vec<_>, _>>()?;
        for g in &self.gates {
            assign(g.output, &mut names)?;
        }
        let map = |n: NetId| {
            remap[n.index()].ok_or_else(|| NetlistError::UndrivenNet {
                line: None,
                net: self.names[n.index()].clone(),
            })
        };
        let gates = self
            .gates
            .iter()
            .map(|g| {
                Ok(Gate {
                    output: map(g.output)?,
                    kind: g.kind,
                    inputs: g.inputs.iter().map(|&i| map(i)).collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<Vec<_>, NetlistError>>()?;
        let outputs = self
            .outputs
            .iter()
            .map(|&o| map(o))
            .collect::<Result<Vec<_>, _>>()?;
        Netlist::new(self.name, names, inputs, outputs, gates)
    }
}
