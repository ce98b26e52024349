//! Locked-netlist text format.
//!
//! A locked file is a `.bench` body with three extra statements, followed by an
//! optional sidecar holding the defender's secrets:
//!
//! ```text
//! KEYS(<K>)                                     key width, required, before any RGATE
//! RGATE <net> TYPE<1|2> F(<nets>) G(<nets>) BIND(<k>) [INV]
//! DOMAIN(<k>, <k>, ...)                         optional; see below
//!
//! #KEY <K bits, bit 0 first>                    sidecar
//! #PLACE <net> <A|B|C|D> <KIND>(<original inputs>) G(<nets>) DEPTH(<d>)
//! ```
//!
//! `RGATE` drives `<net>` with an rGate whose key terminal is key bit `<k>`; `INV`
//! marks the free output inverter used for AND/OR targets. The `BIND` indices of all
//! rGates must be exactly `0..K`.
//!
//! `DOMAIN` lines partition the key bits into groups with separate key ports that an
//! attacker can configure one at a time. Files without `DOMAIN` lines describe a
//! single, simultaneously configured key.
//!
//! Sidecar lines start with `#`, so `.bench` tools and the attacker-view loader see
//! them as comments. Writers emit them last.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Cell, LockError, LockedNetlist, Placement, ReplacementType};
use crate::bits::BitVector;
use crate::netlist::bench::{content_lines, gate_kind, header_name, parse_stmt, split_call, Stmt};
use crate::netlist::{Gate, NetId};
use crate::rgate::{RGate, RGateKind};

/// `WORD` or `WORD(args)` groups of a directive line.
fn groups(line_no: usize, s: &str) -> Result<Vec<(String, Option<Vec<String>>)>, LockError> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(')
            .unwrap_or(rest.len());
        let word = rest[..end].to_string();
        rest = &rest[end..];
        let trimmed = rest.trim_start();
        if trimmed.starts_with('(') {
            let close = trimmed.find(')').ok_or_else(|| LockError::Syntax {
                line: line_no,
                msg: format!("unclosed parenthesis after `{word}`"),
            })?;
            let inner = &trimmed[1..close];
            let args = inner
                .split(',')
                .map(|a| a.trim().to_string())
                .filter(|a| !a.is_empty())
                .collect();
            out.push((word, Some(args)));
            rest = trimmed[close + 1..].trim_start();
        } else {
            out.push((word, None));
            rest = trimmed;
        }
    }
    Ok(out)
}

fn syntax(line: usize, msg: impl Into<String>) -> LockError {
    LockError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_usize(line: usize, s: &str) -> Result<usize, LockError> {
    s.trim()
        .parse()
        .map_err(|_| syntax(line, format!("expected a non-negative integer, got `{s}`")))
}

struct RawRGate {
    line: usize,
    out: String,
    kind: RGateKind,
    f: Vec<String>,
    g: Vec<String>,
    bind: usize,
    inverted: bool,
}

fn parse_rgate(line: usize, rest: &str) -> Result<RawRGate, LockError> {
    let gs = groups(line, rest)?;
    let mut it = gs.into_iter();
    let out = match it.next() {
        Some((name, None)) => name,
        _ => return Err(syntax(line, "RGATE needs an output net name")),
    };
    let mut kind = None;
    let (mut f, mut g, mut bind, mut inverted) = (None, None, None, false);
    for (word, args) in it {
        match (word.to_ascii_uppercase().as_str(), args) {
            ("TYPE1", None) => kind = Some(RGateKind::Type1),
            ("TYPE2", None) => kind = Some(RGateKind::Type2),
            ("F", Some(a)) => f = Some(a),
            ("G", Some(a)) => g = Some(a),
            ("BIND", Some(a)) if a.len() == 1 => bind = Some(parse_usize(line, &a[0])?),
            ("INV", None) => inverted = true,
            (w, _) => return Err(syntax(line, format!("unexpected `{w}` in RGATE"))),
        }
    }
    let kind = kind.ok_or_else(|| syntax(line, "RGATE needs TYPE1 or TYPE2"))?;
    let f = f.filter(|v| !v.is_empty()).ok_or_else(|| syntax(line, "RGATE needs a non-empty F(...)"))?;
    let g = g.filter(|v| !v.is_empty()).ok_or_else(|| syntax(line, "RGATE needs a non-empty G(...)"))?;
    let bind = bind.ok_or_else(|| syntax(line, "RGATE needs BIND(<key index>)"))?;
    Ok(RawRGate {
        line,
        out,
        kind,
        f,
        g,
        bind,
        inverted,
    })
}

enum RawCell<'a> {
    Gate {
        line: usize,
        out: &'a str,
        kind: &'a str,
        inputs: Vec<&'a str>,
    },
    RGate(RawRGate),
}

struct RawPlace {
    line: usize,
    out: String,
    replacement: ReplacementType,
    kind: String,
    inputs: Vec<String>,
    g: Vec<String>,
    depth: u32,
}

fn parse_place(line: usize, rest: &str) -> Result<RawPlace, LockError> {
    let gs = groups(line, rest)?;
    match gs.as_slice() {
        [(out, None), (ty, None), (kind, Some(inputs)), (gw, Some(g)), (dw, Some(d))]
            if gw.eq_ignore_ascii_case("G") && dw.eq_ignore_ascii_case("DEPTH") && d.len() == 1 =>
        {
            Ok(RawPlace {
                line,
                out: out.clone(),
                replacement: ty.parse().map_err(|e: String| syntax(line, e))?,
                kind: kind.clone(),
                inputs: inputs.clone(),
                g: g.clone(),
                depth: parse_usize(line, &d[0])? as u32,
            })
        }
        _ => Err(syntax(
            line,
            "expected #PLACE <net> <type> <KIND>(<inputs>) G(<nets>) DEPTH(<d>)",
        )),
    }
}

/// Parse a locked file including its sidecar (if present).
pub fn parse_locked(text: &str) -> Result<LockedNetlist, LockError> {
    parse_inner(text, true)
}

/// Parse a locked file, ignoring any key sidecar.
pub fn parse_locked_attacker_view(text: &str) -> Result<LockedNetlist, LockError> {
    parse_inner(text, false)
}

/// Parse a body and a separately stored sidecar.
pub fn parse_locked_parts(body: &str, sidecar: &str) -> Result<LockedNetlist, LockError> {
    let body_lines = body.lines().count();
    let mut text = body.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str(sidecar);
    parse_inner(&text, true).map_err(|e| match e {
        // Report sidecar errors relative to the sidecar file.
        LockError::Syntax { line, msg } if line > body_lines => LockError::Syntax {
            line: line - body_lines,
            msg: format!("sidecar: {msg}"),
        },
        e => e,
    })
}

fn parse_inner(text: &str, with_sidecar: bool) -> Result<LockedNetlist, LockError> {
    let mut key_bits: Option<usize> = None;
    let mut inputs: Vec<(usize, &str)> = Vec::new();
    let mut outputs: Vec<(usize, &str)> = Vec::new();
    let mut raw_cells: Vec<RawCell> = Vec::new();
    let mut domains: Vec<Vec<usize>> = Vec::new();
    for (line, content) in content_lines(text) {
        let head = content
            .split(|c: char| c.is_whitespace() || c == '(')
            .next()
            .unwrap_or("");
        if head.eq_ignore_ascii_case("RGATE") && !content.contains('=') {
            raw_cells.push(RawCell::RGate(parse_rgate(line, &content[head.len()..])?));
            continue;
        }
        if head.eq_ignore_ascii_case("KEYS") || head.eq_ignore_ascii_case("DOMAIN") {
            let (_, args) = split_call(content).ok_or_else(|| syntax(line, "expected WORD(...)"))?;
            let nums = args
                .iter()
                .map(|a| parse_usize(line, a))
                .collect::<Result<Vec<_>, _>>()?;
            if head.eq_ignore_ascii_case("KEYS") {
                if key_bits.is_some() || nums.len() != 1 {
                    return Err(syntax(line, "expected a single KEYS(<K>) declaration"));
                }
                key_bits = Some(nums[0]);
            } else {
                domains.push(nums);
            }
            continue;
        }
        match parse_stmt(line, content)? {
            Stmt::Input(n) => inputs.push((line, n)),
            Stmt::Output(n) => outputs.push((line, n)),
            Stmt::Gate { out, kind, inputs } => raw_cells.push(RawCell::Gate {
                line,
                out,
                kind,
                inputs,
            }),
        }
    }
    let key_bits = key_bits.ok_or_else(|| {
        LockError::InconsistentBindings("missing KEYS(<K>) declaration".into())
    })?;
    let rgate_count = raw_cells
        .iter()
        .filter(|c| matches!(c, RawCell::RGate(_)))
        .count();
    if rgate_count != key_bits {
        return Err(LockError::InconsistentBindings(format!(
            "KEYS({key_bits}) declared but {rgate_count} rGates bound"
        )));
    }

    // Canonical ids: inputs, then cell outputs in file order.
    let mut index: HashMap<String, NetId> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut define = |n: &str, line: usize, names: &mut Vec<String>| {
        if index.contains_key(n) {
            return Err(LockError::Netlist(
                crate::netlist::NetlistError::MultipleDrivers {
                    line: Some(line),
                    net: n.to_string(),
                },
            ));
        }
        let id = NetId(names.len() as u32);
        index.insert(n.to_string(), id);
        names.push(n.to_string());
        Ok(id)
    };
    let input_ids = inputs
        .iter()
        .map(|&(l, n)| define(n, l, &mut names))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &raw_cells {
        match c {
            RawCell::Gate { line, out, .. } => define(out, *line, &mut names)?,
            RawCell::RGate(r) => define(&r.out, r.line, &mut names)?,
        };
    }
    let lookup = |n: &str, line: usize| -> Result<NetId, LockError> {
        index.get(n).copied().ok_or_else(|| {
            LockError::Netlist(crate::netlist::NetlistError::UndrivenNet {
                line: Some(line),
                net: n.to_string(),
            })
        })
    };
    let lookup_all = |ns: &[String], line: usize| -> Result<Vec<NetId>, LockError> {
        ns.iter().map(|n| lookup(n, line)).collect()
    };
    let mut cells = Vec::with_capacity(raw_cells.len());
    for c in raw_cells {
        cells.push(match c {
            RawCell::Gate {
                line,
                out,
                kind,
                inputs,
            } => Cell::Gate(Gate {
                output: index[out],
                kind: gate_kind(line, kind)?,
                inputs: inputs
                    .iter()
                    .map(|i| lookup(i, line))
                    .collect::<Result<_, _>>()?,
            }),
            RawCell::RGate(r) => Cell::RGate {
                output: index[&r.out],
                rgate: RGate::new(r.kind, lookup_all(&r.f, r.line)?, lookup_all(&r.g, r.line)?),
                inverted: r.inverted,
                key_index: r.bind,
            },
        });
    }
    let output_ids = outputs
        .iter()
        .map(|&(l, n)| lookup(n, l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut locked = LockedNetlist::assemble(
        header_name(text),
        names,
        input_ids,
        output_ids,
        cells,
        key_bits,
    )?;
    if !domains.is_empty() {
        locked.set_domains(domains)?;
    }
    if with_sidecar {
        read_sidecar(text, &mut locked, &lookup_all)?;
    }
    Ok(locked)
}

fn read_sidecar(
    text: &str,
    locked: &mut LockedNetlist,
    lookup_all: &dyn Fn(&[String], usize) -> Result<Vec<NetId>, LockError>,
) -> Result<(), LockError> {
    let mut places: Vec<RawPlace> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix("#KEY") {
            if locked.correct_key.is_some() {
                return Err(syntax(line, "duplicate #KEY line"));
            }
            let key: BitVector = rest
                .trim()
                .parse()
                .map_err(|e| syntax(line, format!("bad key: {e}")))?;
            if key.width() != locked.key_width() {
                return Err(LockError::InconsistentBindings(format!(
                    "#KEY has {} bits but KEYS({}) declared",
                    key.width(),
                    locked.key_width()
                )));
            }
            locked.correct_key = Some(key);
        } else if let Some(rest) = t.strip_prefix("#PLACE") {
            places.push(parse_place(line, rest)?);
        }
    }
    if places.is_empty() {
        return Ok(());
    }
    let k = locked.key_width();
    let mut log: Vec<Option<Placement>> = vec![None; k];
    for p in places {
        let key_index = (0..k)
            .find(|&j| locked.rgate_name(j) == p.out)
            .ok_or_else(|| syntax(p.line, format!("#PLACE for unknown rGate `{}`", p.out)))?;
        let original_kind = gate_kind(p.line, &p.kind)?;
        let slot = &mut log[key_index];
        if slot.is_some() {
            return Err(syntax(p.line, format!("duplicate #PLACE for `{}`", p.out)));
        }
        *slot = Some(Placement {
            output: locked.cells[locked.bindings[key_index]].output(),
            original_kind,
            original_inputs: lookup_all(&p.inputs, p.line)?,
            replacement: p.replacement,
            g_nets: lookup_all(&p.g, p.line)?,
            depth: p.depth,
        });
    }
    locked.placement_log = log
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            p.ok_or_else(|| {
                LockError::InconsistentBindings(format!("no #PLACE record for key bit {j}"))
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(())
}

fn net_list(locked: &LockedNetlist, nets: &[NetId]) -> String {
    nets.iter()
        .map(|&n| locked.net_name(n))
        .collect::<Vec<_>>()
        .join(", ")
}

pub(super) fn write_locked(locked: &LockedNetlist, with_sidecar: bool) -> String {
    let mut out = String::new();
    writeln!(out, "# {}", locked.name).unwrap();
    writeln!(out, "# locked netlist, {} key bits", locked.key_width()).unwrap();
    writeln!(out, "KEYS({})", locked.key_width()).unwrap();
    out.push('\n');
    for &i in &locked.inputs {
        writeln!(out, "INPUT({})", locked.net_name(i)).unwrap();
    }
    out.push('\n');
    for &o in &locked.outputs {
        writeln!(out, "OUTPUT({})", locked.net_name(o)).unwrap();
    }
    out.push('\n');
    for cell in &locked.cells {
        match cell {
            Cell::Gate(g) => writeln!(
                out,
                "{} = {}({})",
                locked.net_name(g.output),
                g.kind.keyword(),
                net_list(locked, &g.inputs)
            )
            .unwrap(),
            Cell::RGate {
                output,
                rgate,
                inverted,
                key_index,
            } => writeln!(
                out,
                "RGATE {} TYPE{} F({}) G({}) BIND({}){}",
                locked.net_name(*output),
                rgate.kind.number(),
                net_list(locked, &rgate.f_inputs),
                net_list(locked, &rgate.g_inputs),
                key_index,
                if *inverted { " INV" } else { "" }
            )
            .unwrap(),
        }
    }
    if let Some(domains) = &locked.domains {
        out.push('\n');
        for d in domains {
            let ks: Vec<String> = d.iter().map(|k| k.to_string()).collect();
            writeln!(out, "DOMAIN({})", ks.join(", ")).unwrap();
        }
    }
    if with_sidecar {
        let side = write_sidecar(locked);
        if !side.is_empty() {
            out.push('\n');
            out.push_str(&side);
        }
    }
    out
}

pub(super) fn write_sidecar(locked: &LockedNetlist) -> String {
    let mut out = String::new();
    if let Some(key) = &locked.correct_key {
        writeln!(out, "#KEY {key}").unwrap();
    }
    for p in &locked.placement_log {
        writeln!(
            out,
            "#PLACE {} {} {}({}) G({}) DEPTH({})",
            locked.net_name(p.output),
            p.replacement,
            p.original_kind.keyword(),
            net_list(locked, &p.original_inputs),
            net_list(locked, &p.g_nets),
            p.depth
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# small
KEYS(1)
INPUT(a)
INPUT(b)
OUTPUT(y)
RGATE y TYPE1 F(a) G(b) BIND(0)
#KEY 0
#PLACE y A NAND(a, b) G(b) DEPTH(1)
";

    #[test]
    fn reads_sidecar() {
        let l = parse_locked(SMALL).unwrap();
        assert_eq!(l.key_width(), 1);
        assert_eq!(l.correct_key().unwrap().to_string(), "0");
        assert_eq!(l.placement_log().len(), 1);
        assert_eq!(parse_locked(&l.to_text()).unwrap(), l);
    }

    #[test]
    fn attacker_view_strips_key() {
        let l = parse_locked_attacker_view(SMALL).unwrap();
        assert!(l.correct_key().is_none());
        assert!(l.placement_log().is_empty());
        assert_eq!(l.key_width(), 1);
        assert_eq!(l.rgate_name(0), "y");
    }

    #[test]
    fn declared_width_must_match_bindings() {
        let bad = SMALL.replace("KEYS(1)", "KEYS(2)");
        assert!(matches!(
            parse_locked(&bad),
            Err(LockError::InconsistentBindings(_))
        ));
        let bad = SMALL.replace("BIND(0)", "BIND(3)");
        assert!(matches!(
            parse_locked(&bad),
            Err(LockError::InconsistentBindings(_))
        ));
        let bad = SMALL.replace("#KEY 0", "#KEY 01");
        assert!(matches!(
            parse_locked(&bad),
            Err(LockError::InconsistentBindings(_))
        ));
    }

    #[test]
    fn syntax_errors() {
        let bad = SMALL.replace("BIND(0)", "BIND(x)");
        assert!(matches!(parse_locked(&bad), Err(LockError::Syntax { line: 6, .. })));
        let bad = SMALL.replace("TYPE1", "TYPE7");
        assert!(matches!(parse_locked(&bad), Err(LockError::Syntax { .. })));
    }

    #[test]
    fn parts_round_trip() {
        let l = parse_locked(SMALL).unwrap();
        let again = parse_locked_parts(&l.body_text(), &l.sidecar_text()).unwrap();
        assert_eq!(again, l);
        assert!(!l.body_text().contains("#KEY"));
    }
}
