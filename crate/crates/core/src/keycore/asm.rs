//! Text form of instruction streams: one instruction per line,
//! `OP operand, operand, ...`, with `;` or `#` comments. Registers are `r0`..`r15`;
//! immediates are decimal, `0x` hex or `0b` binary (a leading `-` is allowed for
//! branch offsets).

use super::{Instruction, KeyCoreError, Reg};

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b").or_else(|| body.strip_prefix("0B")) {
        i64::from_str_radix(b, 2).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_line(line: usize, text: &str) -> Result<Instruction, KeyCoreError> {
    let err = |msg: String| KeyCoreError::Syntax { line, msg };
    let (op, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
    let args: Vec<&str> = if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    };
    let op = op.to_ascii_uppercase();
    let reg = |s: &str| -> Result<Reg, KeyCoreError> {
        let idx = s
            .strip_prefix(['r', 'R'])
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| err(format!("expected a register, found `{s}`")))?;
        Reg::new(idx).map_err(|_| err(format!("register `{s}` does not exist")))
    };
    let imm = |s: &str, lo: i64, hi: i64| -> Result<i64, KeyCoreError> {
        let v = parse_int(s).ok_or_else(|| err(format!("expected an integer, found `{s}`")))?;
        if v < lo || v > hi {
            return Err(err(format!("immediate {v} outside {lo}..={hi}")));
        }
        Ok(v)
    };
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(err(format!("{op} takes {n} operands, found {}", args.len())))
        }
    };
    let three = |f: fn(Reg, Reg, Reg) -> Instruction| -> Result<Instruction, KeyCoreError> {
        arity(3)?;
        Ok(f(reg(args[0])?, reg(args[1])?, reg(args[2])?))
    };
    match op.as_str() {
        "LDI" => {
            arity(2)?;
            Ok(Instruction::Ldi {
                dst: reg(args[0])?,
                imm: imm(args[1], 0, 255)? as u8,
            })
        }
        "ADD" => three(|dst, a, b| Instruction::Add { dst, a, b }),
        "SUB" => three(|dst, a, b| Instruction::Sub { dst, a, b }),
        "AND" => three(|dst, a, b| Instruction::And { dst, a, b }),
        "OR" => three(|dst, a, b| Instruction::Or { dst, a, b }),
        "XOR" => three(|dst, a, b| Instruction::Xor { dst, a, b }),
        "SHL" | "SHR" => {
            arity(3)?;
            let (dst, src, amount) = (reg(args[0])?, reg(args[1])?, imm(args[2], 0, 15)? as u8);
            Ok(if op == "SHL" {
                Instruction::Shl { dst, src, amount }
            } else {
                Instruction::Shr { dst, src, amount }
            })
        }
        "MOV" => {
            arity(2)?;
            Ok(Instruction::Mov {
                dst: reg(args[0])?,
                src: reg(args[1])?,
            })
        }
        "BEQZ" => {
            arity(2)?;
            Ok(Instruction::Beqz {
                src: reg(args[0])?,
                offset: imm(args[1], -128, 127)? as i8,
            })
        }
        _ => Err(err(format!("unknown opcode `{op}`"))),
    }
}

pub fn parse_program(text: &str) -> Result<Vec<Instruction>, KeyCoreError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let content = raw.split([';', '#']).next().unwrap_or("").trim();
            (!content.is_empty()).then(|| parse_line(i + 1, content))
        })
        .collect()
}

pub fn format_program(program: &[Instruction]) -> String {
    program.iter().map(|i| format!("{i}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keycore::r;

    #[test]
    fn round_trip() {
        let text = "LDI r0, 0xFF ; low byte\nSHL r1, r0, 8\nBEQZ r2, -1\nMOV r3, r1\nXOR r4, r4, r4\n";
        let prog = parse_program(text).unwrap();
        assert_eq!(prog[0], Instruction::Ldi { dst: r(0), imm: 255 });
        assert_eq!(prog[2], Instruction::Beqz { src: r(2), offset: -1 });
        assert_eq!(parse_program(&format_program(&prog)).unwrap(), prog);
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, line) in [
            ("LDI r0, 256", 1),
            ("\nADD r0, r1", 2),
            ("MOV r16, r0", 1),
            ("SHL r0, r0, 16", 1),
            ("JMP 3", 1),
            ("LDI x, 1", 1),
        ] {
            match parse_program(text) {
                Err(KeyCoreError::Syntax { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
