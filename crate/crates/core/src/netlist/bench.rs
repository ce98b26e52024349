//! ISCAS `.bench` reader and writer.
//!
//! Grammar (one statement per line, whitespace-insensitive):
//!
//! ```text
//! line    := comment | input | output | gate | <blank>
//! comment := '#' <any>
//! input   := 'INPUT' '(' name ')'
//! output  := 'OUTPUT' '(' name ')'
//! gate    := name '=' KIND '(' name (',' name)* ')'
//! KIND    := AND | OR | NAND | NOR | NOT | XOR | XNOR | BUF | BUFF   (case-insensitive)
//! name    := [^\s(),=#]+                                             (case-sensitive)
//! ```
//!
//! `DFF` gates are rejected. Gates may appear in any order.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Gate, GateKind, LineInfo, NetId, Netlist, NetlistError};

/// One parsed non-comment line.
#[derive(Debug)]
pub(crate) enum Stmt<'a> {
    Input(&'a str),
    Output(&'a str),
    Gate {
        out: &'a str,
        kind: &'a str,
        inputs: Vec<&'a str>,
    },
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '=' | '#'))
}

/// Split `HEAD(args)` into head and argument list.
pub(crate) fn split_call(s: &str) -> Option<(&str, Vec<&str>)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].trim_end().strip_suffix(')')?;
    let head = s[..open].trim();
    let args: Vec<&str> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Some((head, args))
}

pub(crate) fn parse_stmt(line_no: usize, line: &str) -> Result<Stmt<'_>, NetlistError> {
    let syntax = |msg: &str| NetlistError::Syntax {
        line: line_no,
        msg: msg.to_string(),
    };
    if let Some((lhs, rhs)) = line.split_once('=') {
        let out = lhs.trim();
        if !valid_name(out) {
            return Err(syntax("invalid net name on left-hand side"));
        }
        let (kind, inputs) = split_call(rhs.trim()).ok_or_else(|| syntax("expected KIND(a, b, ...)"))?;
        if inputs.is_empty() || !inputs.iter().all(|i| valid_name(i)) {
            return Err(syntax("invalid gate input list"));
        }
        return Ok(Stmt::Gate { out, kind, inputs });
    }
    let (head, args) = split_call(line).ok_or_else(|| syntax("unrecognised statement"))?;
    let single = || match args.as_slice() {
        [n] if valid_name(n) => Ok(*n),
        _ => Err(syntax("expected exactly one net name")),
    };
    match head {
        h if h.eq_ignore_ascii_case("INPUT") => Ok(Stmt::Input(single()?)),
        h if h.eq_ignore_ascii_case("OUTPUT") => Ok(Stmt::Output(single()?)),
        _ => Err(syntax("expected INPUT, OUTPUT or a gate assignment")),
    }
}

/// Strip comments and whitespace, returning (1-based line number, content).
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("").trim();
        (!content.is_empty()).then_some((i + 1, content))
    })
}

pub(crate) fn gate_kind(line: usize, kind: &str) -> Result<GateKind, NetlistError> {
    GateKind::from_keyword(kind).ok_or_else(|| {
        if kind.eq_ignore_ascii_case("DFF") {
            NetlistError::Sequential {
                line,
                kind: kind.to_string(),
            }
        } else {
            NetlistError::UnknownGateKind {
                line,
                kind: kind.to_string(),
            }
        }
    })
}

/// Collects statements and assigns canonical net ids.
#[derive(Default)]
pub(crate) struct BenchAssembler<'a> {
    inputs: Vec<(usize, &'a str)>,
    outputs: Vec<(usize, &'a str)>,
    gates: Vec<(usize, &'a str, GateKind, Vec<&'a str>)>,
}

impl<'a> BenchAssembler<'a> {
    pub(crate) fn push(&mut self, line: usize, stmt: Stmt<'a>) -> Result<(), NetlistError> {
        match stmt {
            Stmt::Input(n) => self.inputs.push((line, n)),
            Stmt::Output(n) => self.outputs.push((line, n)),
            Stmt::Gate { out, kind, inputs } => {
                self.gates.push((line, out, gate_kind(line, kind)?, inputs));
            }
        }
        Ok(())
    }

    /// Canonical name table: inputs, then gate outputs in statement order.
    pub(crate) fn finish(self, name: String) -> Result<Netlist, NetlistError> {
        let mut index: HashMap<&str, NetId> = HashMap::new();
        let mut names: Vec<String> = Vec::new();
        let mut define = |n: &'a str, line: usize, names: &mut Vec<String>| {
            if index.contains_key(n) {
                return Err(NetlistError::MultipleDrivers {
                    line: Some(line),
                    net: n.to_string(),
                });
            }
            let id = NetId(names.len() as u32);
            index.insert(n, id);
            names.push(n.to_string());
            Ok(id)
        };
        let inputs = self
            .inputs
            .iter()
            .map(|&(line, n)| define(n, line, &mut names))
            .collect::<Result<Vec<_>, _>>()?;
        for &(line, out, _, _) in &self.gates {
            define(out, line, &mut names)?;
        }
        let lookup = |n: &str, line: usize| {
            index.get(n).copied().ok_or_else(|| NetlistError::UndrivenNet {
                line: Some(line),
                net: n.to_string(),
            })
        };
        let mut info = LineInfo::default();
        let mut gates = Vec::with_capacity(self.gates.len());
        for (line, out, kind, ins) in &self.gates {
            gates.push(Gate {
                output: index[out],
                kind: *kind,
                inputs: ins
                    .iter()
                    .map(|i| lookup(i, *line))
                    .collect::<Result<_, _>>()?,
            });
            info.gates.push(*line);
        }
        let outputs = self
            .outputs
            .iter()
            .map(|&(line, n)| {
                info.outputs.push(line);
                lookup(n, line)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Netlist::with_lines(name, names, inputs, outputs, gates, Some(&info))
    }
}

/// Name for the netlist: first comment line if it looks like `# name`, else "netlist".
pub(crate) fn header_name(text: &str) -> String {
    text.lines()
        .next()
        .and_then(|l| l.trim().strip_prefix('#'))
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.contains(char::is_whitespace))
        .unwrap_or("netlist")
        .to_string()
}

/// Parse a combinational `.bench` document.
pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    let mut asm = BenchAssembler::default();
    for (line, content) in content_lines(text) {
        asm.push(line, parse_stmt(line, content)?)?;
    }
    asm.finish(header_name(text))
}

pub(crate) fn write_ports(out: &mut String, netlist: &Netlist) {
    writeln!(out, "# {}", netlist.name()).unwrap();
    writeln!(
        out,
        "# {} inputs, {} outputs",
        netlist.inputs().len(),
        netlist.outputs().len()
    )
    .unwrap();
    out.push('\n');
    for &i in netlist.inputs() {
        writeln!(out, "INPUT({})", netlist.net_name(i)).unwrap();
    }
    out.push('\n');
    for &o in netlist.outputs() {
        writeln!(out, "OUTPUT({})", netlist.net_name(o)).unwrap();
    }
    out.push('\n');
}

pub(crate) fn write_gate(out: &mut String, netlist: &Netlist, g: &Gate) {
    let ins: Vec<&str> = g.inputs.iter().map(|&i| netlist.net_name(i)).collect();
    writeln!(
        out,
        "{} = {}({})",
        netlist.net_name(g.output),
        g.kind.keyword(),
        ins.join(", ")
    )
    .unwrap();
}

/// Serialize to `.bench`: one gate per line, gate and input order preserved.
pub fn write_bench(netlist: &Netlist) -> String {
    let mut out = String::new();
    write_ports(&mut out, netlist);
    for g in netlist.gates() {
        write_gate(&mut out, netlist, g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)").unwrap();
        assert_eq!(n.inputs().len(), 2);
        assert_eq!(n.outputs().len(), 1);
        assert_eq!(n.gates().len(), 1);
        assert_eq!(n.gates()[0].kind, GateKind::And);
    }

    #[test]
    fn undriven_without_inputs() {
        let err = parse_bench("y = AND(a, b)").unwrap_err();
        assert_eq!(
            err,
            NetlistError::UndrivenNet {
                line: Some(1),
                net: "a".into()
            }
        );
    }

    #[test]
    fn error_kinds_carry_lines() {
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\n\ny = FOO(a)").unwrap_err();
        assert_eq!(
            e,
            NetlistError::UnknownGateKind {
                line: 4,
                kind: "FOO".into()
            }
        );
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUFF(a)").unwrap_err();
        assert!(matches!(e, NetlistError::MultipleDrivers { line: Some(4), .. }));
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\nx = AND(a, y)\ny = NOT(x)").unwrap_err();
        assert!(matches!(e, NetlistError::CombinationalLoop { line: Some(3), .. }));
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\ny = DFF(a)").unwrap_err();
        assert!(matches!(e, NetlistError::Sequential { line: 3, .. }));
        let e = parse_bench("INPUT(a)\nOUTPUT(y\ny = NOT(a)").unwrap_err();
        assert!(matches!(e, NetlistError::Syntax { line: 2, .. }));
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\nOUTPUT(y)\ny = NOT(a)").unwrap_err();
        assert!(matches!(e, NetlistError::DuplicateOutput { line: Some(3), .. }));
    }

    #[test]
    fn names_are_case_sensitive() {
        let e = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(A)").unwrap_err();
        assert!(matches!(e, NetlistError::UndrivenNet { .. }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let n = parse_bench("# demo\n\nINPUT(a) # first\nOUTPUT(y)\n  y = not( a )  \n").unwrap();
        assert_eq!(n.name(), "demo");
        assert_eq!(n.gates()[0].kind, GateKind::Not);
    }
}
