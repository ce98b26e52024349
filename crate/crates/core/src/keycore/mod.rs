//! The key-generating core: a single-cycle register machine whose selected
//! internal bits form the key.
//!
//! State is sixteen 16-bit registers, a 16-bit program counter and zero/carry
//! flags (274 bits). One instruction retires per cycle. Reset is all-zero.
//!
//! | opcode | operands        | effect                                   | flags         |
//! |--------|-----------------|------------------------------------------|---------------|
//! | LDI    | rd, imm8        | rd = imm (zero-extended)                 | Z, C=0        |
//! | ADD    | rd, ra, rb      | rd = ra + rb (mod 2^16)                  | Z, C=carry out|
//! | SUB    | rd, ra, rb      | rd = ra - rb (mod 2^16)                  | Z, C=borrow   |
//! | AND/OR/XOR | rd, ra, rb  | bitwise                                  | Z, C=0        |
//! | SHL    | rd, ra, sh4     | rd = ra << sh                            | Z, C=last out |
//! | SHR    | rd, ra, sh4     | rd = ra >> sh (logical)                  | Z, C=last out |
//! | MOV    | rd, ra          | rd = ra                                  | unchanged     |
//! | BEQZ   | ra, off8        | pc += off if ra == 0 else pc += 1        | unchanged     |
//!
//! Every other instruction advances pc by one. There is no memory.

mod asm;
mod synth;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitVector;

pub use asm::{format_program, parse_program};
pub use synth::{synthesize_iis, SynthesisOptions};

pub const REGISTER_COUNT: usize = 16;
pub const REGISTER_BITS: usize = 16;
pub const PC_BITS: usize = 16;
/// Total state width S.
pub const STATE_BITS: usize = REGISTER_COUNT * REGISTER_BITS + 2 + PC_BITS;
/// Cycle cap for [`run_iis`] on programs with backward branches.
pub const DEFAULT_RUN_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyCoreError {
    #[error("node {0} is out of range for this core")]
    NodeOutOfRange(Node),
    #[error("node {0} is selected twice")]
    DuplicateNode(Node),
    #[error("register r{0} does not exist")]
    BadRegister(u8),
    #[error("instruction {index}: branch target {target} is outside the program (length {len})")]
    BranchOutOfBounds { index: usize, target: i64, len: usize },
    #[error("program is empty")]
    EmptyProgram,
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key width {actual} does not match selection width {expected}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("no program reaching the target within {budget} instructions ({expanded} states explored)")]
    NotFound { budget: usize, expanded: usize },
    #[error("selection of {requested} bits exceeds the {available} available")]
    SelectionTooLarge { requested: usize, available: usize },
    #[error("invalid selection JSON: {0}")]
    Json(String),
}

/// Register index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub fn new(index: u8) -> Result<Reg, KeyCoreError> {
        if (index as usize) < REGISTER_COUNT {
            Ok(Reg(index))
        } else {
            Err(KeyCoreError::BadRegister(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Shorthand for tests and examples. Panics on an invalid index.
pub fn r(index: u8) -> Reg {
    Reg::new(index).expect("register index in range")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Ldi { dst: Reg, imm: u8 },
    Add { dst: Reg, a: Reg, b: Reg },
    Sub { dst: Reg, a: Reg, b: Reg },
    And { dst: Reg, a: Reg, b: Reg },
    Or { dst: Reg, a: Reg, b: Reg },
    Xor { dst: Reg, a: Reg, b: Reg },
    Shl { dst: Reg, src: Reg, amount: u8 },
    Shr { dst: Reg, src: Reg, amount: u8 },
    Mov { dst: Reg, src: Reg },
    Beqz { src: Reg, offset: i8 },
}

impl Instruction {
    pub const OPCODES: usize = 10;

    /// Uniform over opcodes, then uniform over operands and immediates.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Instruction {
        let reg = |rng: &mut R| Reg(rng.random_range(0..REGISTER_COUNT as u8));
        match rng.random_range(0..Self::OPCODES) {
            0 => Instruction::Ldi {
                dst: reg(rng),
                imm: rng.random(),
            },
            1 => Instruction::Add {
                dst: reg(rng),
                a: reg(rng),
                b: reg(rng),
            },
            2 => Instruction::Sub {
                dst: reg(rng),
                a: reg(rng),
                b: reg(rng),
            },
            3 => Instruction::And {
                dst: reg(rng),
                a: reg(rng),
                b: reg(rng),
            },
            4 => Instruction::Or {
                dst: reg(rng),
                a: reg(rng),
                b: reg(rng),
            },
            5 => Instruction::Xor {
                dst: reg(rng),
                a: reg(rng),
                b: reg(rng),
            },
            6 => Instruction::Shl {
                dst: reg(rng),
                src: reg(rng),
                amount: rng.random_range(0..16),
            },
            7 => Instruction::Shr {
                dst: reg(rng),
                src: reg(rng),
                amount: rng.random_range(0..16),
            },
            8 => Instruction::Mov {
                dst: reg(rng),
                src: reg(rng),
            },
            _ => Instruction::Beqz {
                src: reg(rng),
                offset: rng.random(),
            },
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Ldi { dst, imm } => write!(f, "LDI {dst}, {imm}"),
            Instruction::Add { dst, a, b } => write!(f, "ADD {dst}, {a}, {b}"),
            Instruction::Sub { dst, a, b } => write!(f, "SUB {dst}, {a}, {b}"),
            Instruction::And { dst, a, b } => write!(f, "AND {dst}, {a}, {b}"),
            Instruction::Or { dst, a, b } => write!(f, "OR {dst}, {a}, {b}"),
            Instruction::Xor { dst, a, b } => write!(f, "XOR {dst}, {a}, {b}"),
            Instruction::Shl { dst, src, amount } => write!(f, "SHL {dst}, {src}, {amount}"),
            Instruction::Shr { dst, src, amount } => write!(f, "SHR {dst}, {src}, {amount}"),
            Instruction::Mov { dst, src } => write!(f, "MOV {dst}, {src}"),
            Instruction::Beqz { src, offset } => write!(f, "BEQZ {src}, {offset}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CpuState {
    pub regs: [u16; REGISTER_COUNT],
    pub pc: u16,
    pub zero: bool,
    pub carry: bool,
    pub cycle: u64,
}

impl CpuState {
    pub fn reset() -> CpuState {
        CpuState::default()
    }

    /// Execute one instruction (one clock cycle).
    pub fn step(&mut self, instr: &Instruction) {
        let regs = &mut self.regs;
        let mut alu = |dst: Reg, value: u16, carry: bool, regs: &mut [u16; REGISTER_COUNT]| {
            regs[dst.index()] = value;
            self.zero = value == 0;
            self.carry = carry;
        };
        let mut next_pc = self.pc.wrapping_add(1);
        match *instr {
            Instruction::Ldi { dst, imm } => alu(dst, imm as u16, false, regs),
            Instruction::Add { dst, a, b } => {
                let (v, c) = regs[a.index()].overflowing_add(regs[b.index()]);
                alu(dst, v, c, regs)
            }
            Instruction::Sub { dst, a, b } => {
                let (v, c) = regs[a.index()].overflowing_sub(regs[b.index()]);
                alu(dst, v, c, regs)
            }
            Instruction::And { dst, a, b } => {
                let v = regs[a.index()] & regs[b.index()];
                alu(dst, v, false, regs)
            }
            Instruction::Or { dst, a, b } => {
                let v = regs[a.index()] | regs[b.index()];
                alu(dst, v, false, regs)
            }
            Instruction::Xor { dst, a, b } => {
                let v = regs[a.index()] ^ regs[b.index()];
                alu(dst, v, false, regs)
            }
            Instruction::Shl { dst, src, amount } => {
                let s = (amount & 15) as u32;
                let x = regs[src.index()];
                let c = s > 0 && (x >> (16 - s)) & 1 == 1;
                alu(dst, x << s, c, regs)
            }
            Instruction::Shr { dst, src, amount } => {
                let s = (amount & 15) as u32;
                let x = regs[src.index()];
                let c = s > 0 && (x >> (s - 1)) & 1 == 1;
                alu(dst, x >> s, c, regs)
            }
            Instruction::Mov { dst, src } => regs[dst.index()] = regs[src.index()],
            Instruction::Beqz { src, offset } => {
                if regs[src.index()] == 0 {
                    next_pc = self.pc.wrapping_add_signed(offset as i16);
                }
            }
        }
        self.pc = next_pc;
        self.cycle += 1;
    }

    pub fn node(&self, node: Node) -> Result<bool, KeyCoreError> {
        node.check()?;
        Ok(match node {
            Node::Reg { reg, bit } => (self.regs[reg as usize] >> bit) & 1 == 1,
            Node::Flag { flag: Flag::Zero } => self.zero,
            Node::Flag { flag: Flag::Carry } => self.carry,
            Node::Pc { pc } => (self.pc >> pc) & 1 == 1,
        })
    }
}

/// Functional form of [`CpuState::step`].
pub fn step(state: &CpuState, instr: &Instruction) -> CpuState {
    let mut next = state.clone();
    next.step(instr);
    next
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Zero,
    Carry,
}

/// One observable state bit. JSON forms: `{"reg": 0, "bit": 7}`, `{"flag": "zero"}`,
/// `{"pc": 3}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Reg { reg: u8, bit: u8 },
    Flag { flag: Flag },
    Pc { pc: u8 },
}

impl Node {
    fn check(self) -> Result<(), KeyCoreError> {
        let ok = match self {
            Node::Reg { reg, bit } => (reg as usize) < REGISTER_COUNT && (bit as usize) < REGISTER_BITS,
            Node::Flag { .. } => true,
            Node::Pc { pc } => (pc as usize) < PC_BITS,
        };
        if ok {
            Ok(())
        } else {
            Err(KeyCoreError::NodeOutOfRange(self))
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Reg { reg, bit } => write!(f, "r{reg}[{bit}]"),
            Node::Flag { flag } => write!(f, "{flag:?}"),
            Node::Pc { pc } => write!(f, "pc[{pc}]"),
        }
    }
}

/// Ordered, distinct nodes whose values form the key (node `i` is key bit `i`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Node>", into = "Vec<Node>")]
pub struct NodeSelection {
    nodes: Vec<Node>,
}

impl TryFrom<Vec<Node>> for NodeSelection {
    type Error = KeyCoreError;

    fn try_from(nodes: Vec<Node>) -> Result<Self, Self::Error> {
        NodeSelection::new(nodes)
    }
}

impl From<NodeSelection> for Vec<Node> {
    fn from(sel: NodeSelection) -> Self {
        sel.nodes
    }
}

impl NodeSelection {
    pub fn new(nodes: Vec<Node>) -> Result<Self, KeyCoreError> {
        let mut seen = std::collections::HashSet::new();
        for &n in &nodes {
            n.check()?;
            if !seen.insert(n) {
                return Err(KeyCoreError::DuplicateNode(n));
            }
        }
        Ok(NodeSelection { nodes })
    }

    /// Bits of one register, in the given order.
    pub fn register_bits(reg: u8, bits: impl IntoIterator<Item = u8>) -> Result<Self, KeyCoreError> {
        Self::new(bits.into_iter().map(|bit| Node::Reg { reg, bit }).collect())
    }

    /// `k` distinct register bits drawn uniformly (pc and flags excluded).
    pub fn random_register_bits<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Self, KeyCoreError> {
        let all = REGISTER_COUNT * REGISTER_BITS;
        if k > all {
            return Err(KeyCoreError::SelectionTooLarge {
                requested: k,
                available: all,
            });
        }
        let picks = rand::seq::index::sample(rng, all, k);
        Self::new(
            picks
                .iter()
                .map(|i| Node::Reg {
                    reg: (i / REGISTER_BITS) as u8,
                    bit: (i % REGISTER_BITS) as u8,
                })
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, KeyCoreError> {
        serde_json::from_str(text).map_err(|e| KeyCoreError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn width(&self) -> usize {
        self.nodes.len()
    }

    /// First `k` nodes.
    pub fn prefix(&self, k: usize) -> NodeSelection {
        NodeSelection {
            nodes: self.nodes[..k.min(self.nodes.len())].to_vec(),
        }
    }

    /// Key packed into an integer, node `i` at bit `i`. Requires width <= 64.
    #[inline]
    pub fn extract_u64(&self, state: &CpuState) -> u64 {
        debug_assert!(self.nodes.len() <= 64);
        let mut key = 0u64;
        for (i, node) in self.nodes.iter().enumerate() {
            let bit = match *node {
                Node::Reg { reg, bit } => (state.regs[reg as usize] >> bit) & 1 == 1,
                Node::Flag { flag: Flag::Zero } => state.zero,
                Node::Flag { flag: Flag::Carry } => state.carry,
                Node::Pc { pc } => (state.pc >> pc) & 1 == 1,
            };
            key |= (bit as u64) << i;
        }
        key
    }
}

/// Read the selected nodes out of a state.
pub fn extract_key(state: &CpuState, sel: &NodeSelection) -> Result<BitVector, KeyCoreError> {
    sel.nodes.iter().map(|&n| state.node(n)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub cycle: u64,
    pub key: BitVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    /// One entry per executed cycle, sampled after the instruction retires.
    pub entries: Vec<TraceEntry>,
    pub final_state: CpuState,
    /// False if the cycle cap stopped a looping program.
    pub halted: bool,
}

impl Trace {
    pub fn final_key(&self) -> Option<&BitVector> {
        self.entries.last().map(|e| &e.key)
    }
}

/// Check register operands and branch targets of a straight-line program image.
pub fn validate_program(program: &[Instruction]) -> Result<(), KeyCoreError> {
    if program.is_empty() {
        return Err(KeyCoreError::EmptyProgram);
    }
    for (index, instr) in program.iter().enumerate() {
        if let Instruction::Beqz { offset, .. } = instr {
            let target = index as i64 + *offset as i64;
            if target < 0 || target > program.len() as i64 {
                return Err(KeyCoreError::BranchOutOfBounds {
                    index,
                    target,
                    len: program.len(),
                });
            }
        }
    }
    Ok(())
}

/// Run `program` from `start` (reset if `None`) until it falls off the end, sampling
/// the key every cycle. Fetch starts at index 0.
pub fn run_iis(
    start: Option<&CpuState>,
    program: &[Instruction],
    sel: &NodeSelection,
) -> Result<Trace, KeyCoreError> {
    run_iis_bounded(start, program, sel, DEFAULT_RUN_LIMIT)
}

pub fn run_iis_bounded(
    start: Option<&CpuState>,
    program: &[Instruction],
    sel: &NodeSelection,
    max_cycles: u64,
) -> Result<Trace, KeyCoreError> {
    validate_program(program)?;
    let mut state = start.cloned().unwrap_or_default();
    state.pc = 0;
    let mut entries = Vec::new();
    let mut executed = 0u64;
    while (state.pc as usize) < program.len() {
        if executed == max_cycles {
            return Ok(Trace {
                entries,
                final_state: state,
                halted: false,
            });
        }
        let instr = program[state.pc as usize];
        state.step(&instr);
        executed += 1;
        entries.push(TraceEntry {
            cycle: state.cycle,
            key: extract_key(&state, sel)?,
        });
    }
    Ok(Trace {
        entries,
        final_state: state,
        halted: true,
    })
}
