//! Text formats: protocol files, configuration literals and run files.
//!
//! Parsing reports errors with 1-based line and column numbers. Printing
//! produces a canonical form that parses back to an equal value.

use crate::error::{Error, Result};
use crate::multiset::Multiset;
use crate::protocol::{Model, Protocol, Rule, Transition};
use crate::semantics::{Configuration, Run};
use std::fmt::Write as _;

/// Strips a `#` comment and returns the remaining text.
pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Whitespace-separated tokens with their 1-based columns.
pub(crate) fn tokens(s: &str, base_col: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some(st) = start.take() {
                out.push((base_col + st, &s[st..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((base_col + st, &s[st..]));
    }
    out
}

pub(crate) fn valid_ident(s: &str) -> bool {
    !s.is_empty()
        && !s.chars().any(|c| c.is_whitespace() || "{}[]:,|#!?^=".contains(c))
        && s != "->"
}

/// Parses a protocol file.
pub fn parse_protocol(text: &str) -> Result<Protocol> {
    struct Pending {
        line: usize,
        col: usize,
        name: String,
        kind: &'static str,
        toks: Vec<(usize, String)>,
    }
    let mut model: Option<Model> = None;
    let mut nondet = false;
    let mut states: Vec<String> = Vec::new();
    let mut messages: Vec<String> = Vec::new();
    let mut inits: Vec<(usize, usize, String, String)> = Vec::new();
    let mut outs: Vec<(usize, usize, String, u8)> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let Some(colon) = line.find(':') else {
            return Err(Error::parse(line_no, 1, "expected `keyword:`"));
        };
        let head = line[..colon].trim();
        let rest = &line[colon + 1..];
        let toks = tokens(rest, colon + 2);
        let (key, name) = match head.find('[') {
            Some(b) if head.ends_with(']') => (&head[..b], head[b + 1..head.len() - 1].to_string()),
            _ => (head, String::new()),
        };
        if !name.is_empty() && !valid_ident(&name) {
            return Err(Error::parse(line_no, 1, format!("invalid transition name `{name}`")));
        }
        match key {
            "model" => {
                let Some(&(c, m)) = toks.first() else {
                    return Err(Error::parse(line_no, colon + 2, "missing model"));
                };
                model = Some(m.parse().map_err(|_| Error::parse(line_no, c, format!("unknown model `{m}`")))?);
                for &(c, t) in &toks[1..] {
                    if t == "nondet" {
                        nondet = true;
                    } else {
                        return Err(Error::parse(line_no, c, format!("unexpected `{t}`")));
                    }
                }
            }
            "states" | "messages" => {
                let target = if key == "states" { &mut states } else { &mut messages };
                for &(c, t) in &toks {
                    if !valid_ident(t) {
                        return Err(Error::parse(line_no, c, format!("invalid identifier `{t}`")));
                    }
                    if target.iter().any(|s| s == t) {
                        return Err(Error::parse(line_no, c, format!("duplicate identifier `{t}`")));
                    }
                    target.push(t.to_string());
                }
            }
            "init" => {
                if toks.len() != 3 || toks[1].1 != "->" {
                    return Err(Error::parse(line_no, colon + 2, "expected `init: symbol -> state`"));
                }
                inits.push((line_no, toks[2].0, toks[0].1.to_string(), toks[2].1.to_string()));
            }
            "out" => {
                if toks.len() != 3 || toks[1].1 != "=" {
                    return Err(Error::parse(line_no, colon + 2, "expected `out: state = 0|1`"));
                }
                let b = match toks[2].1 {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(Error::parse(line_no, toks[2].0, format!("output `{other}` is not a bit"))),
                };
                outs.push((line_no, toks[0].0, toks[0].1.to_string(), b));
            }
            "trans" | "send" | "recv" => {
                let kind = match key {
                    "trans" => "trans",
                    "send" => "send",
                    _ => "recv",
                };
                pending.push(Pending {
                    line: line_no,
                    col: colon + 2,
                    name,
                    kind,
                    toks: toks.iter().map(|&(c, t)| (c, t.to_string())).collect(),
                });
            }
            other => return Err(Error::parse(line_no, 1, format!("unknown keyword `{other}`"))),
        }
    }
    let model = model.ok_or_else(|| Error::parse(1, 1, "missing `model:` line"))?;
    let mut p = Protocol::new(model, states, messages);
    p.nondeterministic = nondet;
    let st = |p: &Protocol, line: usize, col: usize, s: &str| {
        p.state_id(s).map_err(|_| Error::parse(line, col, format!("unknown state `{s}`")))
    };
    let ms = |p: &Protocol, line: usize, col: usize, s: &str| {
        p.msg_id(s).map_err(|_| Error::parse(line, col, format!("unknown message `{s}`")))
    };
    for (line, col, sym, q) in &inits {
        let qi = st(&p, *line, *col, q)?;
        if p.inputs.iter().any(|s| s == sym) {
            return Err(Error::parse(*line, 1, format!("duplicate input symbol `{sym}`")));
        }
        p.add_input(sym, qi);
    }
    for (line, col, q, b) in &outs {
        let qi = st(&p, *line, *col, q)?;
        p.output[qi] = *b;
    }
    for pd in &pending {
        let t: Vec<&str> = pd.toks.iter().map(|x| x.1.as_str()).collect();
        let c = |i: usize| pd.toks.get(i).map(|x| x.0).unwrap_or(pd.col);
        let rule = match (pd.kind, t.as_slice()) {
            ("trans", [a, b, "->", c3, d]) => Rule::Pair {
                q1: st(&p, pd.line, c(0), a)?,
                q2: st(&p, pd.line, c(1), b)?,
                q3: st(&p, pd.line, c(3), c3)?,
                q4: st(&p, pd.line, c(4), d)?,
            },
            ("trans", [a, "->", b, "obs", o]) => Rule::Observe {
                from: st(&p, pd.line, c(0), a)?,
                to: st(&p, pd.line, c(2), b)?,
                obs: st(&p, pd.line, c(4), o)?,
            },
            ("send", [a, "->", b, "!", m]) => Rule::Send {
                from: st(&p, pd.line, c(0), a)?,
                to: st(&p, pd.line, c(2), b)?,
                msg: ms(&p, pd.line, c(4), m)?,
            },
            ("recv", [a, "?", m, "->", b]) => Rule::Receive {
                from: st(&p, pd.line, c(0), a)?,
                msg: ms(&p, pd.line, c(2), m)?,
                to: st(&p, pd.line, c(4), b)?,
            },
            ("trans", _) => {
                return Err(Error::parse(pd.line, pd.col, "expected `q1 q2 -> q3 q4` or `q -> q' obs o`"))
            }
            ("send", _) => return Err(Error::parse(pd.line, pd.col, "expected `q -> q' ! m`")),
            _ => return Err(Error::parse(pd.line, pd.col, "expected `q ? m -> q'`")),
        };
        let id = p.transitions.len();
        let name = if pd.name.is_empty() { format!("t{}", id + 1) } else { pd.name.clone() };
        if p.transitions.iter().any(|x| x.name == name) {
            return Err(Error::parse(pd.line, 1, format!("duplicate transition name `{name}`")));
        }
        p.transitions.push(Transition { name, rule, implicit: false });
    }
    if matches!(model, Model::DT | Model::DO) {
        p.complete_receives();
    }
    Ok(p)
}

/// Prints a protocol in canonical form.
pub fn print_protocol(p: &Protocol) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}{}", p.model, if p.nondeterministic { " nondet" } else { "" });
    let _ = writeln!(s, "states: {}", p.states.join(" "));
    if !p.messages.is_empty() {
        let _ = writeln!(s, "messages: {}", p.messages.join(" "));
    }
    for (sym, &q) in p.inputs.iter().zip(&p.init) {
        let _ = writeln!(s, "init: {sym} -> {}", p.states[q]);
    }
    for (q, &b) in p.output.iter().enumerate() {
        if b != 0 {
            let _ = writeln!(s, "out: {} = {b}", p.states[q]);
        }
    }
    for (i, t) in p.transitions.iter().enumerate() {
        if t.implicit {
            continue;
        }
        let tag = if t.name == format!("t{}", i + 1) { String::new() } else { format!("[{}]", t.name) };
        let n = |q: usize| p.states[q].as_str();
        let _ = match t.rule {
            Rule::Pair { q1, q2, q3, q4 } => {
                writeln!(s, "trans{tag}: {} {} -> {} {}", n(q1), n(q2), n(q3), n(q4))
            }
            Rule::Observe { from, obs, to } => writeln!(s, "trans{tag}: {} -> {} obs {}", n(from), n(to), n(obs)),
            Rule::Send { from, to, msg } => {
                writeln!(s, "send{tag}: {} -> {} ! {}", n(from), n(to), p.messages[msg])
            }
            Rule::Receive { from, msg, to } => {
                writeln!(s, "recv{tag}: {} ? {} -> {}", n(from), p.messages[msg], n(to))
            }
        };
    }
    s
}

fn parse_counts(
    part: &str,
    names: &[String],
    kind: &'static str,
    line: usize,
    col0: usize,
) -> Result<Multiset> {
    let mut m = Multiset::zeros(names.len());
    let mut offset = 0;
    for item in part.split(',') {
        let col = col0 + offset + (item.len() - item.trim_start().len());
        offset += item.len() + 1;
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (name, count) = match item.split_once(':') {
            Some((n, c)) => {
                let c = c.trim();
                let k: u64 = c.parse().map_err(|_| Error::parse(line, col, format!("bad count `{c}`")))?;
                (n.trim(), k)
            }
            None => (item, 1),
        };
        let i = names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::parse(line, col, format!("unknown {kind} `{name}`")))?;
        m.add(i, count);
    }
    Ok(m)
}

/// Parses a configuration literal `{q1:4, q3:1 | a:2}`.
pub fn parse_config(p: &Protocol, text: &str) -> Result<Configuration> {
    parse_config_at(p, text, 1, 1)
}

fn parse_config_at(p: &Protocol, text: &str, line: usize, col: usize) -> Result<Configuration> {
    let lead = text.len() - text.trim_start().len();
    let t = text.trim();
    if !t.starts_with('{') || !t.ends_with('}') {
        return Err(Error::parse(line, col + lead, "configuration must be written `{state:count, ... | msg:count}`"));
    }
    let inner = &t[1..t.len() - 1];
    let (ag, msg) = match inner.split_once('|') {
        Some((a, m)) => (a, Some(m)),
        None => (inner, None),
    };
    let agents = parse_counts(ag, &p.states, "state", line, col + lead + 1)?;
    let messages = match msg {
        Some(m) => parse_counts(m, &p.messages, "message", line, col + lead + ag.len() + 2)?,
        None => Multiset::zeros(p.num_messages()),
    };
    Ok(Configuration { agents, messages })
}

fn print_counts(m: &Multiset, names: &[String]) -> String {
    m.support().map(|i| format!("{}:{}", names[i], m.get(i))).collect::<Vec<_>>().join(", ")
}

/// Prints a configuration literal.
pub fn print_config(p: &Protocol, c: &Configuration) -> String {
    if c.messages.is_empty() {
        format!("{{{}}}", print_counts(&c.agents, &p.states))
    } else {
        format!("{{{} | {}}}", print_counts(&c.agents, &p.states), print_counts(&c.messages, &p.messages))
    }
}

/// Parses a run file: a `start:` line followed by `name^k` tokens.
pub fn parse_run(p: &Protocol, text: &str) -> Result<Run> {
    let mut start = None;
    let mut steps = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.trim_start().strip_prefix("start:") {
            let col = line.find("start:").unwrap() + 7;
            start = Some(parse_config_at(p, rest, line_no, col)?);
            continue;
        }
        for (col, tok) in tokens(line, 1) {
            let (name, k) = match tok.rsplit_once('^') {
                Some((n, k)) => {
                    let k: u64 =
                        k.parse().map_err(|_| Error::parse(line_no, col, format!("bad multiplicity in `{tok}`")))?;
                    (n, k)
                }
                None => (tok, 1),
            };
            let t = p
                .trans_id(name)
                .map_err(|_| Error::parse(line_no, col, format!("unknown transition `{name}`")))?;
            steps.push((t, k));
        }
    }
    let start = start.ok_or_else(|| Error::parse(1, 1, "missing `start:` line"))?;
    Ok(Run { start, steps })
}

/// Prints a run file.
pub fn print_run(p: &Protocol, r: &Run) -> String {
    let body: Vec<String> = r
        .steps
        .iter()
        .map(|&(t, k)| {
            if k == 1 {
                p.transitions[t].name.clone()
            } else {
                format!("{}^{}", p.transitions[t].name, k)
            }
        })
        .collect();
    format!("start: {}\n{}\n", print_config(p, &r.start), body.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    const IO_FILE: &str = "\
# three-state example
model: IO
states: q1 q2 q3
init: s1 -> q1
init: s2 -> q2
init: s3 -> q3
out: q3 = 1
trans: q1 -> q2 obs q1
trans: q2 -> q3 obs q2
trans: q1 -> q3 obs q3
trans: q2 -> q3 obs q3
";

    #[test]
    fn parses_io_example() {
        let p = parse_protocol(IO_FILE).unwrap();
        assert_eq!(p, catalog::io_example());
        assert!(p.validate().is_empty());
    }

    #[test]
    fn round_trips() {
        for p in [
            catalog::io_example(),
            catalog::two_state(),
            catalog::mfdo_ab(),
            catalog::do_ab(),
            catalog::more_than_half(),
            catalog::qt_example(),
        ] {
            let text = print_protocol(&p);
            assert_eq!(parse_protocol(&text).unwrap(), p, "{text}");
        }
    }

    #[test]
    fn unknown_state_reports_position() {
        let text = "model: IO\nstates: a b\ntrans: a -> c obs b\n";
        match parse_protocol(text) {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(col, 13);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_literal() {
        let p = catalog::do_ab();
        let c = parse_config(&p, "{a:4, ab:1 | b:2}").unwrap();
        assert_eq!(c.agents.counts(), &[4, 0, 1]);
        assert_eq!(c.messages.counts(), &[0, 2, 0]);
        assert_eq!(parse_config(&p, &print_config(&p, &c)).unwrap(), c);
        assert!(parse_config(&p, "{zz:1}").is_err());
    }

    #[test]
    fn run_file() {
        let p = catalog::io_example();
        let r = parse_run(&p, "start: {q1:4, q3:1}\nt3 t1^2 t3 t2 t4\n").unwrap();
        assert_eq!(r.steps, vec![(2, 1), (0, 2), (2, 1), (1, 1), (3, 1)]);
        assert_eq!(parse_run(&p, &print_run(&p, &r)).unwrap(), r);
    }
}
