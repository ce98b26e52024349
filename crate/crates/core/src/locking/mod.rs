//! Gate-to-rGate replacement pass.
//!
//! Replacement rules (the replaced gate keeps its output net):
//!
//! | type | target      | rGate | F / G                         | original | key bit |
//! |------|-------------|-------|-------------------------------|----------|---------|
//! | A    | NAND / AND  | 1     | G cut from the input cone     | `(FG)'`  | 0       |
//! | B    | NOR / OR    | 2     | F = all inputs, G = extra net | `(F)'`   | 1       |
//! | C    | NAND / AND  | 1     | F = all inputs, G = extra net | `(F)'`   | 1       |
//! | D    | NOR / OR    | 2     | G cut from the input cone     | `(F+G)'` | 0       |
//!
//! rGates have inverted outputs, so AND/OR targets get a free output inverter.
//! Expanded G nets are drawn from nets strictly shallower than the target, which
//! keeps the graph acyclic and leaves every unit-delay level unchanged.

mod format;

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitVector;
use crate::netlist::{
    check_width, topo_order, Gate, GateKind, LogicDepths, NetId, Netlist, NetlistError,
};
use crate::rgate::{eval_function, Polarization, RGate, RGateError, RGateKind};

pub use format::{parse_locked, parse_locked_attacker_view, parse_locked_parts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReplacementType {
    A,
    B,
    C,
    D,
}

impl ReplacementType {
    pub const ALL: [ReplacementType; 4] = [
        ReplacementType::A,
        ReplacementType::B,
        ReplacementType::C,
        ReplacementType::D,
    ];

    pub fn rgate_kind(self) -> RGateKind {
        match self {
            ReplacementType::A | ReplacementType::C => RGateKind::Type1,
            ReplacementType::B | ReplacementType::D => RGateKind::Type2,
        }
    }

    /// Cut types split the original cone into F and G; expand types add G.
    pub fn is_cut(self) -> bool {
        matches!(self, ReplacementType::A | ReplacementType::D)
    }

    /// Key bit that restores the original function.
    pub fn correct_key_bit(self) -> bool {
        !self.is_cut()
    }

    /// Types that apply to a gate kind, and whether an output inverter is needed.
    pub fn for_gate(kind: GateKind) -> Option<([ReplacementType; 2], bool)> {
        use ReplacementType::*;
        match kind {
            GateKind::Nand => Some(([A, C], false)),
            GateKind::And => Some(([A, C], true)),
            GateKind::Nor => Some(([B, D], false)),
            GateKind::Or => Some(([B, D], true)),
            _ => None,
        }
    }

    pub fn applies_to(self, kind: GateKind) -> bool {
        Self::for_gate(kind).is_some_and(|(ts, _)| ts.contains(&self))
    }
}

impl fmt::Display for ReplacementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ReplacementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(ReplacementType::A),
            "B" | "b" => Ok(ReplacementType::B),
            "C" | "c" => Ok(ReplacementType::C),
            "D" | "d" => Ok(ReplacementType::D),
            other => Err(format!("unknown replacement type `{other}`")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LockError {
    #[error("requested {requested} rGates but only {eligible} gates are eligible")]
    NotEnoughEligibleGates { requested: usize, eligible: usize },
    #[error("requested {requested} rGates but only {feasible} eligible gates admit a valid G choice")]
    NoValidGChoice { requested: usize, feasible: usize },
    #[error("invalid placement on `{net}`: {reason}")]
    InvalidPlacement { net: String, reason: String },
    #[error("expected a {expected}-bit key, got {actual} bits")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("rGate `{rgate}` failed: {source}")]
    DeviceFailed {
        rgate: String,
        #[source]
        source: RGateError,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("inconsistent key bindings: {0}")]
    InconsistentBindings(String),
    #[error("correct key is not available (attacker view)")]
    MissingKey,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

/// Knobs for [`lock_netlist`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockPolicy {
    /// Number of rGates, which is also the key width.
    pub key_bits: usize,
    pub seed: u64,
    pub allowed_types: Vec<ReplacementType>,
    /// Nets per G cone.
    pub g_width: usize,
    /// Minimum `critical_path - depth(gate)` for a gate to be replaced.
    pub depth_margin: u32,
    /// Measure slack along the longest path through the gate instead of its depth alone,
    /// which keeps rGates off every critical path.
    pub strict_path_slack: bool,
}

impl LockPolicy {
    pub fn new(key_bits: usize, seed: u64) -> Self {
        LockPolicy {
            key_bits,
            seed,
            allowed_types: ReplacementType::ALL.to_vec(),
            g_width: 1,
            depth_margin: 1,
            strict_path_slack: false,
        }
    }
}

/// Record of one replacement; enough to undo it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    pub output: NetId,
    pub original_kind: GateKind,
    pub original_inputs: Vec<NetId>,
    pub replacement: ReplacementType,
    pub g_nets: Vec<NetId>,
    /// Unit-delay depth of the replaced gate in the original netlist.
    pub depth: u32,
}

impl Placement {
    pub fn inverter_added(&self) -> bool {
        matches!(self.original_kind, GateKind::And | GateKind::Or)
    }

    pub fn original_gate(&self) -> Gate {
        Gate {
            output: self.output,
            kind: self.original_kind,
            inputs: self.original_inputs.clone(),
        }
    }
}

/// A cell of a locked netlist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Gate(Gate),
    RGate {
        output: NetId,
        rgate: RGate,
        /// Free output inverter (AND/OR targets).
        inverted: bool,
        key_index: usize,
    },
}

impl Cell {
    pub fn output(&self) -> NetId {
        match self {
            Cell::Gate(g) => g.output,
            Cell::RGate { output, .. } => *output,
        }
    }

    fn fanin(&self) -> Vec<NetId> {
        match self {
            Cell::Gate(g) => g.inputs.clone(),
            Cell::RGate { rgate, .. } => rgate
                .f_inputs
                .iter()
                .chain(&rgate.g_inputs)
                .copied()
                .collect(),
        }
    }
}

/// A netlist in which some gates are rGates bound to key bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LockedNetlist {
    pub(crate) name: String,
    pub(crate) names: Vec<String>,
    pub(crate) inputs: Vec<NetId>,
    pub(crate) outputs: Vec<NetId>,
    pub(crate) cells: Vec<Cell>,
    pub(crate) order: Vec<usize>,
    /// `bindings[k]` is the cell index of the rGate driven by key bit `k`.
    pub(crate) bindings: Vec<usize>,
    pub(crate) correct_key: Option<BitVector>,
    pub(crate) placement_log: Vec<Placement>,
    /// Key-bit groups that can be configured separately. `None` means all rGates
    /// are reconfigured together from one key snapshot.
    pub(crate) domains: Option<Vec<Vec<usize>>>,
}

impl LockedNetlist {
    pub(crate) fn assemble(
        name: String,
        names: Vec<String>,
        inputs: Vec<NetId>,
        outputs: Vec<NetId>,
        cells: Vec<Cell>,
        key_bits: usize,
    ) -> Result<Self, LockError> {
        // Driver/arity/loop checks are shared with plain netlists through the
        // configured-netlist view.
        let fanins: Vec<Vec<NetId>> = cells.iter().map(Cell::fanin).collect();
        let order = topo_order(
            names.len(),
            cells.iter().zip(&fanins).map(|(c, f)| (c.output(), f.as_slice())),
        )
        .map_err(|ci| NetlistError::CombinationalLoop {
            line: None,
            net: names[cells[ci].output().index()].clone(),
        })?;
        let mut bindings = vec![usize::MAX; key_bits];
        for (ci, cell) in cells.iter().enumerate() {
            if let Cell::RGate { key_index, output, .. } = cell {
                let slot = bindings.get_mut(*key_index).ok_or_else(|| {
                    LockError::InconsistentBindings(format!(
                        "rGate `{}` bound to key bit {key_index} of a {key_bits}-bit key",
                        names[output.index()]
                    ))
                })?;
                if *slot != usize::MAX {
                    return Err(LockError::InconsistentBindings(format!(
                        "key bit {key_index} bound twice"
                    )));
                }
                *slot = ci;
            }
        }
        if let Some(k) = bindings.iter().position(|&b| b == usize::MAX) {
            return Err(LockError::InconsistentBindings(format!(
                "key bit {k} of {key_bits} is not bound to any rGate"
            )));
        }
        let locked = LockedNetlist {
            name,
            names,
            inputs,
            outputs,
            cells,
            order,
            bindings,
            correct_key: None,
            placement_log: Vec::new(),
            domains: None,
        };
        // Validates drivers and arity of the plain gates.
        locked.configured_netlist(&BitVector::zeros(key_bits))?;
        Ok(locked)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key_width(&self) -> usize {
        self.bindings.len()
    }

    pub fn inputs(&self) -> &[NetId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn net_name(&self, net: NetId) -> &str {
        &self.names[net.index()]
    }

    pub fn net_count(&self) -> usize {
        self.names.len()
    }

    pub fn correct_key(&self) -> Option<&BitVector> {
        self.correct_key.as_ref()
    }

    pub fn placement_log(&self) -> &[Placement] {
        &self.placement_log
    }

    pub fn domains(&self) -> Option<&[Vec<usize>]> {
        self.domains.as_deref()
    }

    /// Declare separately configurable key-bit groups (conventional per-module locking).
    pub fn set_domains(&mut self, domains: Vec<Vec<usize>>) -> Result<(), LockError> {
        let mut seen = vec![false; self.key_width()];
        for &k in domains.iter().flatten() {
            match seen.get_mut(k) {
                Some(s) if !*s => *s = true,
                _ => {
                    return Err(LockError::InconsistentBindings(format!(
                        "key bit {k} appears in no domain slot or in two domains"
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(LockError::InconsistentBindings(
                "domains do not cover every key bit".into(),
            ));
        }
        self.domains = Some(domains);
        Ok(())
    }

    /// The same netlist without the correct key or placement log.
    pub fn attacker_view(&self) -> LockedNetlist {
        LockedNetlist {
            correct_key: None,
            placement_log: Vec::new(),
            ..self.clone()
        }
    }

    /// The rGate bound to key bit `k`.
    pub fn rgate(&self, k: usize) -> &RGate {
        match &self.cells[self.bindings[k]] {
            Cell::RGate { rgate, .. } => rgate,
            Cell::Gate(_) => unreachable!("binding points at a plain gate"),
        }
    }

    fn rgate_mut(&mut self, k: usize) -> &mut RGate {
        match &mut self.cells[self.bindings[k]] {
            Cell::RGate { rgate, .. } => rgate,
            Cell::Gate(_) => unreachable!("binding points at a plain gate"),
        }
    }

    /// Output net name of the rGate bound to key bit `k`.
    pub fn rgate_name(&self, k: usize) -> &str {
        self.net_name(self.cells[self.bindings[k]].output())
    }

    pub fn set_endurance_budget(&mut self, budget: u64) {
        for k in 0..self.key_width() {
            self.rgate_mut(k).set_endurance_budget(budget);
        }
    }

    /// Per-key-bit write counts.
    pub fn write_counts(&self) -> Vec<u64> {
        (0..self.key_width()).map(|k| self.rgate(k).write_count()).collect()
    }

    pub fn is_failed(&self) -> bool {
        (0..self.key_width()).any(|k| self.rgate(k).is_failed())
    }

    /// Key bits currently held by the devices.
    pub fn current_key(&self) -> BitVector {
        (0..self.key_width())
            .map(|k| self.rgate(k).state().key_bit())
            .collect()
    }

    /// Reconfigure every rGate from one key snapshot: one write per rGate. If any
    /// device is out of endurance the whole event fails and those devices are dead.
    pub fn apply_key(&mut self, key: &BitVector) -> Result<(), LockError> {
        check_key_width(self.key_width(), key)?;
        let all: Vec<usize> = (0..self.key_width()).collect();
        self.write_bits(&all, key.as_slice())
    }

    /// Reconfigure only the rGates bound to `key_bits`, taking values from `bits`.
    pub(crate) fn write_bits(&mut self, key_bits: &[usize], bits: &[bool]) -> Result<(), LockError> {
        debug_assert_eq!(key_bits.len(), bits.len());
        if let Some(&k) = key_bits.iter().find(|&&k| self.rgate(k).writes_left() == 0) {
            let name = self.rgate_name(k).to_string();
            let mut dead = Vec::new();
            for &j in key_bits {
                if self.rgate(j).writes_left() == 0 {
                    dead.push(j);
                }
            }
            let mut first = None;
            for j in dead {
                if let Err(e) = self.rgate_mut(j).reconfigure(false) {
                    first.get_or_insert(e);
                }
            }
            return Err(LockError::DeviceFailed {
                rgate: name,
                source: first.expect("at least one device is out of budget"),
            });
        }
        for (&k, &b) in key_bits.iter().zip(bits) {
            self.rgate_mut(k)
                .reconfigure(b)
                .expect("write budget checked above");
        }
        Ok(())
    }

    fn eval_cells(
        &self,
        inputs: &[u64],
        values: &mut Vec<u64>,
        state: impl Fn(usize) -> Polarization,
    ) {
        values.clear();
        values.resize(self.names.len(), 0);
        for (&pi, &w) in self.inputs.iter().zip(inputs) {
            values[pi.index()] = w;
        }
        for &ci in &self.order {
            let out = match &self.cells[ci] {
                Cell::Gate(g) => g.kind.eval_word(g.inputs.iter().map(|i| values[i.index()])),
                Cell::RGate {
                    rgate,
                    inverted,
                    key_index,
                    ..
                } => {
                    let w = eval_function(
                        rgate.kind,
                        state(*key_index),
                        rgate.f_inputs.iter().map(|i| values[i.index()]),
                        rgate.g_inputs.iter().map(|i| values[i.index()]),
                    );
                    if *inverted {
                        !w
                    } else {
                        w
                    }
                }
            };
            values[self.cells[ci].output().index()] = out;
        }
    }

    fn ensure_alive(&self) -> Result<(), LockError> {
        match (0..self.key_width()).find(|&k| self.rgate(k).is_failed()) {
            None => Ok(()),
            Some(k) => Err(LockError::DeviceFailed {
                rgate: self.rgate_name(k).to_string(),
                source: RGateError::DeviceFailed {
                    writes: self.rgate(k).write_count(),
                    budget: self.rgate(k).endurance_budget(),
                },
            }),
        }
    }

    /// Computing mode: evaluate with the polarizations currently held by the devices.
    pub fn evaluate(&self, inputs: &BitVector) -> Result<BitVector, LockError> {
        check_width(self.inputs.len(), inputs.width())?;
        let words: Vec<u64> = inputs.iter().map(|b| b as u64).collect();
        let outs = self.eval_outputs_packed(&words, &mut Vec::new())?;
        Ok(outs.iter().map(|w| w & 1 == 1).collect())
    }

    /// Packed computing-mode evaluation of 64 patterns; returns packed outputs.
    pub fn eval_outputs_packed(
        &self,
        inputs: &[u64],
        scratch: &mut Vec<u64>,
    ) -> Result<Vec<u64>, LockError> {
        self.ensure_alive()?;
        let states: Vec<Polarization> = (0..self.key_width()).map(|k| self.rgate(k).state()).collect();
        self.eval_cells(inputs, scratch, |k| states[k]);
        Ok(self.outputs.iter().map(|o| scratch[o.index()]).collect())
    }

    /// Functional evaluation under `key` without touching the devices.
    pub fn eval_outputs_with_key(
        &self,
        key: &BitVector,
        inputs: &[u64],
        scratch: &mut Vec<u64>,
    ) -> Vec<u64> {
        debug_assert_eq!(key.width(), self.key_width());
        self.eval_cells(inputs, scratch, |k| Polarization::from_key_bit(key.get(k)));
        self.outputs.iter().map(|o| scratch[o.index()]).collect()
    }

    /// Plain netlist computing what this locked netlist computes under `key`.
    pub fn configured_netlist(&self, key: &BitVector) -> Result<Netlist, LockError> {
        check_key_width(self.key_width(), key)?;
        let gates = self
            .cells
            .iter()
            .map(|c| match c {
                Cell::Gate(g) => g.clone(),
                Cell::RGate {
                    output,
                    rgate,
                    inverted,
                    key_index,
                } => {
                    let mut inputs = rgate.f_inputs.clone();
                    if !key.get(*key_index) {
                        inputs.extend(&rgate.g_inputs);
                    }
                    let kind = match (rgate.kind, inverted) {
                        (RGateKind::Type1, false) => GateKind::Nand,
                        (RGateKind::Type1, true) => GateKind::And,
                        (RGateKind::Type2, false) => GateKind::Nor,
                        (RGateKind::Type2, true) => GateKind::Or,
                    };
                    Gate {
                        output: *output,
                        kind,
                        inputs,
                    }
                }
            })
            .collect();
        Ok(Netlist::new(
            self.name.clone(),
            self.names.clone(),
            self.inputs.clone(),
            self.outputs.clone(),
            gates,
        )?)
    }

    /// Undo every replacement using the placement log.
    pub fn restore_original(&self) -> Result<Netlist, LockError> {
        if self.placement_log.len() != self.key_width() {
            return Err(LockError::MissingKey);
        }
        let gates = self
            .cells
            .iter()
            .map(|c| match c {
                Cell::Gate(g) => g.clone(),
                Cell::RGate { key_index, .. } => self.placement_log[*key_index].original_gate(),
            })
            .collect();
        Ok(Netlist::new(
            self.name.clone(),
            self.names.clone(),
            self.inputs.clone(),
            self.outputs.clone(),
            gates,
        )?)
    }

    /// Structural unit-delay levels. An rGate (with its free inverter) counts as one
    /// level over all of its F and G inputs.
    pub fn logic_depths(&self) -> LogicDepths {
        let fanins: Vec<Vec<NetId>> = self.cells.iter().map(Cell::fanin).collect();
        LogicDepths::compute(
            self.names.len(),
            &self.order,
            |ci| (self.cells[ci].output(), fanins[ci].as_slice()),
            &self.outputs,
        )
    }

    pub fn to_text(&self) -> String {
        format::write_locked(self, true)
    }

    /// Structure only: no key sidecar.
    pub fn body_text(&self) -> String {
        format::write_locked(self, false)
    }

    /// The `#KEY` / `#PLACE` sidecar section alone.
    pub fn sidecar_text(&self) -> String {
        format::write_sidecar(self)
    }
}

fn check_key_width(expected: usize, key: &BitVector) -> Result<(), LockError> {
    if key.width() == expected {
        Ok(())
    } else {
        Err(LockError::WidthMismatch {
            expected,
            actual: key.width(),
        })
    }
}

/// Explicit replacement request for [`lock_with_placements`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementRequest {
    pub gate_output: NetId,
    pub replacement: ReplacementType,
    /// For cut types: the inputs moved into G. For expand types: the extra nets.
    pub g_nets: Vec<NetId>,
}

fn build_locked(
    netlist: &Netlist,
    depths: &LogicDepths,
    placements: Vec<Placement>,
) -> Result<LockedNetlist, LockError> {
    let mut cells: Vec<Cell> = netlist.gates().iter().cloned().map(Cell::Gate).collect();
    let gate_of = |net: NetId| netlist.driver(net);
    for (k, p) in placements.iter().enumerate() {
        let gi = gate_of(p.output).expect("placement targets a gate");
        let f_inputs: Vec<NetId> = if p.replacement.is_cut() {
            p.original_inputs
                .iter()
                .copied()
                .filter(|i| !p.g_nets.contains(i))
                .collect()
        } else {
            p.original_inputs.clone()
        };
        cells[gi] = Cell::RGate {
            output: p.output,
            rgate: RGate::new(p.replacement.rgate_kind(), f_inputs, p.g_nets.clone()),
            inverted: p.inverter_added(),
            key_index: k,
        };
    }
    let key: BitVector = placements
        .iter()
        .map(|p| p.replacement.correct_key_bit())
        .collect();
    let mut locked = LockedNetlist::assemble(
        netlist.name().to_string(),
        netlist.names().to_vec(),
        netlist.inputs().to_vec(),
        netlist.outputs().to_vec(),
        cells,
        placements.len(),
    )?;
    debug_assert_eq!(locked.logic_depths().critical_path, depths.critical_path);
    locked.correct_key = Some(key);
    locked.placement_log = placements;
    Ok(locked)
}

/// Lock with explicitly chosen gates, types and G nets.
pub fn lock_with_placements(
    netlist: &Netlist,
    requests: &[PlacementRequest],
) -> Result<LockedNetlist, LockError> {
    let depths = netlist.logic_depths();
    let mut placements = Vec::with_capacity(requests.len());
    for req in requests {
        let name = netlist.net_name(req.gate_output).to_string();
        let invalid = |reason: &str| LockError::InvalidPlacement {
            net: name.clone(),
            reason: reason.to_string(),
        };
        let gi = netlist
            .driver(req.gate_output)
            .ok_or_else(|| invalid("net is not driven by a gate"))?;
        let gate = &netlist.gates()[gi];
        if !req.replacement.applies_to(gate.kind) {
            return Err(invalid(&format!(
                "type {} does not apply to {}",
                req.replacement, gate.kind
            )));
        }
        if placements.iter().any(|p: &Placement| p.output == req.gate_output) {
            return Err(invalid("gate replaced twice"));
        }
        if req.g_nets.is_empty() {
            return Err(invalid("empty G cone"));
        }
        let depth = depths.depth(gate.output);
        if req.replacement.is_cut() {
            if !req.g_nets.iter().all(|g| gate.inputs.contains(g)) {
                return Err(invalid("cut G must come from the gate's own inputs"));
            }
            if gate.inputs.iter().all(|i| req.g_nets.contains(i)) {
                return Err(invalid("cut leaves an empty F cone"));
            }
        } else {
            if req.g_nets.iter().any(|g| gate.inputs.contains(g)) {
                return Err(invalid("expanded G must be disjoint from F"));
            }
            if req.g_nets.iter().any(|&g| depths.depth(g) >= depth) {
                return Err(invalid("expanded G must be shallower than the gate"));
            }
        }
        placements.push(Placement {
            output: gate.output,
            original_kind: gate.kind,
            original_inputs: gate.inputs.clone(),
            replacement: req.replacement,
            g_nets: req.g_nets.clone(),
            depth,
        });
    }
    build_locked(netlist, &depths, placements)
}

/// Nets sorted by (depth, id): expand-type G candidates for a gate at depth `d`
/// are a prefix of this list.
fn nets_by_depth(netlist: &Netlist, depths: &LogicDepths) -> Vec<NetId> {
    let mut nets: Vec<NetId> = (0..netlist.net_count() as u32).map(NetId).collect();
    nets.sort_by_key(|&n| (depths.depth(n), n));
    nets
}

/// Replace `policy.key_bits` randomly chosen gates with rGates.
pub fn lock_netlist(netlist: &Netlist, policy: &LockPolicy) -> Result<LockedNetlist, LockError> {
    assert!(policy.g_width >= 1, "g_width must be at least 1");
    let depths = netlist.logic_depths();
    let by_depth = nets_by_depth(netlist, &depths);
    // Number of nets with depth < d.
    let shallower = |d: u32| by_depth.partition_point(|&n| depths.depth(n) < d);

    let slack = |net: NetId| {
        if policy.strict_path_slack {
            depths.path_slack(net)
        } else {
            depths.depth_slack(net)
        }
    };
    let expand_candidates = |gate: &Gate| -> Vec<NetId> {
        // Shallower nets cannot lie in the gate's transitive fan-out.
        by_depth[..shallower(depths.depth(gate.output))]
            .iter()
            .copied()
            .filter(|n| !gate.inputs.contains(n))
            .collect()
    };
    let feasible = |gate: &Gate, t: ReplacementType| -> bool {
        if t.is_cut() {
            let mut distinct = gate.inputs.clone();
            distinct.sort();
            distinct.dedup();
            distinct.len() > policy.g_width
        } else {
            let d = depths.depth(gate.output);
            let distinct_inputs = {
                let mut v = gate.inputs.clone();
                v.sort();
                v.dedup();
                v.len()
            };
            shallower(d) - distinct_inputs >= policy.g_width
        }
    };

    let mut eligible: Vec<usize> = Vec::new();
    let mut feasible_gates: Vec<(usize, Vec<ReplacementType>)> = Vec::new();
    for (gi, gate) in netlist.gates().iter().enumerate() {
        let Some((types, _)) = ReplacementType::for_gate(gate.kind) else {
            continue;
        };
        if slack(gate.output) < policy.depth_margin {
            continue;
        }
        let allowed: Vec<ReplacementType> = types
            .into_iter()
            .filter(|t| policy.allowed_types.contains(t))
            .collect();
        if allowed.is_empty() {
            continue;
        }
        eligible.push(gi);
        let ok: Vec<ReplacementType> = allowed.into_iter().filter(|&t| feasible(gate, t)).collect();
        if !ok.is_empty() {
            feasible_gates.push((gi, ok));
        }
    }
    if eligible.len() < policy.key_bits {
        return Err(LockError::NotEnoughEligibleGates {
            requested: policy.key_bits,
            eligible: eligible.len(),
        });
    }
    if feasible_gates.len() < policy.key_bits {
        return Err(LockError::NoValidGChoice {
            requested: policy.key_bits,
            feasible: feasible_gates.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let gate_net = |gi: usize| netlist.gates()[gi].output;
    feasible_gates.sort_by_key(|(gi, _)| (depths.depth(gate_net(*gi)), gate_net(*gi)));
    feasible_gates.shuffle(&mut rng);
    feasible_gates.truncate(policy.key_bits);

    let mut placements = Vec::with_capacity(policy.key_bits);
    for (gi, types) in feasible_gates {
        let gate = &netlist.gates()[gi];
        let replacement = *types.choose(&mut rng).expect("non-empty type list");
        let g_nets: Vec<NetId> = if replacement.is_cut() {
            let mut distinct = gate.inputs.clone();
            distinct.sort_by_key(|&n| (depths.depth(n), n));
            distinct.dedup();
            distinct.shuffle(&mut rng);
            distinct.truncate(policy.g_width);
            distinct
        } else {
            let mut cands = expand_candidates(gate);
            cands.dedup();
            cands
                .choose_multiple(&mut rng, policy.g_width)
                .copied()
                .collect()
        };
        placements.push(Placement {
            output: gate.output,
            original_kind: gate.kind,
            original_inputs: gate.inputs.clone(),
            replacement,
            g_nets,
            depth: depths.depth(gate.output),
        });
    }
    build_locked(netlist, &depths, placements)
}
