//! Designer-side IIS construction: seeded best-first search over straight-line
//! programs, scored by Hamming distance between the extracted key and the target.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{run_iis, CpuState, Instruction, KeyCoreError, Node, NodeSelection, Reg, REGISTER_COUNT};
use crate::bits::BitVector;

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub seed: u64,
    /// Cap on expanded search states before giving up.
    pub max_expansions: usize,
    /// Unused registers offered to the search as temporaries.
    pub scratch_registers: usize,
    /// Extra uniformly random instructions tried at each expansion.
    pub random_candidates: usize,
    pub start: Option<CpuState>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            seed: 0,
            max_expansions: 20_000,
            scratch_registers: 2,
            random_candidates: 8,
            start: None,
        }
    }
}

struct SearchNode {
    state: CpuState,
    program: Vec<Instruction>,
}

fn candidates(
    state: &CpuState,
    regs: &[Reg],
    wanted: &[(Reg, u16, u16)],
    rng: &mut ChaCha8Rng,
    extra: usize,
) -> Vec<Instruction> {
    let mut out = Vec::new();
    for &(dst, mask, value) in wanted {
        let desired = (state.regs[dst.index()] & !mask) | value;
        for imm in [desired as u8, (desired >> 8) as u8] {
            for &d in regs {
                out.push(Instruction::Ldi { dst: d, imm });
            }
        }
    }
    for &d in regs {
        out.push(Instruction::Ldi { dst: d, imm: 0 });
        out.push(Instruction::Ldi { dst: d, imm: 0xFF });
        for &a in regs {
            out.push(Instruction::Mov { dst: d, src: a });
            for amount in 1..16 {
                out.push(Instruction::Shl { dst: d, src: a, amount });
                out.push(Instruction::Shr { dst: d, src: a, amount });
            }
            for &b in regs {
                out.push(Instruction::Add { dst: d, a, b });
                out.push(Instruction::Sub { dst: d, a, b });
                out.push(Instruction::And { dst: d, a, b });
                out.push(Instruction::Or { dst: d, a, b });
                out.push(Instruction::Xor { dst: d, a, b });
            }
        }
    }
    for _ in 0..extra {
        let i = Instruction::random(rng);
        if !matches!(i, Instruction::Beqz { .. }) {
            out.push(i);
        }
    }
    out.shuffle(rng);
    out
}

/// Find a straight-line program of at most `budget` instructions whose replay ends
/// with `extract_key == target`. Returned programs are always verified by replay.
pub fn synthesize_iis(
    target: &BitVector,
    sel: &NodeSelection,
    budget: usize,
    opts: &SynthesisOptions,
) -> Result<Vec<Instruction>, KeyCoreError> {
    if target.width() != sel.width() {
        return Err(KeyCoreError::WidthMismatch {
            expected: sel.width(),
            actual: target.width(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // Per-register (mask, value) of the selected target bits.
    let mut wanted: Vec<(Reg, u16, u16)> = Vec::new();
    for (i, node) in sel.nodes().iter().enumerate() {
        if let Node::Reg { reg, bit } = *node {
            let reg = Reg::new(reg)?;
            let pos = match wanted.iter().position(|w| w.0 == reg) {
                Some(p) => p,
                None => {
                    wanted.push((reg, 0, 0));
                    wanted.len() - 1
                }
            };
            wanted[pos].1 |= 1 << bit;
            if target.get(i) {
                wanted[pos].2 |= 1 << bit;
            }
        }
    }
    let mut regs: Vec<Reg> = wanted.iter().map(|w| w.0).collect();
    regs.extend(
        (0..REGISTER_COUNT as u8)
            .map(Reg)
            .filter(|r| !wanted.iter().any(|w| w.0 == *r))
            .take(opts.scratch_registers),
    );
    if regs.is_empty() {
        regs.push(Reg(0));
    }

    let start = opts.start.clone().unwrap_or_default();
    let distance = |s: &CpuState| {
        let key = super::extract_key(s, sel).expect("selection validated");
        key.hamming(target)
    };
    let key_of = |s: &CpuState| (s.regs, s.zero, s.carry);

    let mut nodes = vec![SearchNode {
        state: start.clone(),
        program: Vec::new(),
    }];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((distance(&start), 0usize, 0usize)));
    let mut seen = HashSet::new();
    seen.insert((key_of(&start), 0usize));
    let mut expanded = 0usize;

    while let Some(Reverse((_, len, idx))) = heap.pop() {
        if len >= budget {
            continue;
        }
        if expanded == opts.max_expansions {
            break;
        }
        expanded += 1;
        let parent_state = nodes[idx].state.clone();
        for instr in candidates(&parent_state, &regs, &wanted, &mut rng, opts.random_candidates) {
            let mut next = parent_state.clone();
            next.pc = len as u16;
            next.step(&instr);
            let h = distance(&next);
            let mut program = nodes[idx].program.clone();
            program.push(instr);
            if h == 0 {
                let trace = run_iis(opts.start.as_ref(), &program, sel)?;
                if trace.final_key() == Some(target) {
                    return Ok(program);
                }
                continue;
            }
            // The length is part of the key because pc-selected nodes depend on it.
            if !seen.insert((key_of(&next), len + 1)) {
                continue;
            }
            nodes.push(SearchNode {
                state: next,
                program,
            });
            heap.push(Reverse((h, len + 1, nodes.len() - 1)));
        }
    }
    Err(KeyCoreError::NotFound { budget, expanded })
}
