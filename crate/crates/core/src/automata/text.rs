//! Plain-text DFA format:
//!
//! ```text
//! states 3 start 0
//! accepting 0
//! state 0: 0->2 1->1
//! state 1: 0->0 1->2
//! state 2: 0->2 1->2
//! ```

use std::fmt::Write;

use super::Dfa;
use crate::error::{Error, Result};

pub(super) fn write(d: &Dfa) -> String {
    let mut out = String::new();
    writeln!(out, "states {} start {}", d.num_states(), d.start).unwrap();
    out.push_str("accepting");
    for q in d.accepting_states() {
        write!(out, " {q}").unwrap();
    }
    out.push('\n');
    for (q, row) in d.transitions.iter().enumerate() {
        write!(out, "state {q}:").unwrap();
        for (sym, t) in d.alphabet.iter().zip(row) {
            write!(out, " {sym}->{t}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn num(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| perr(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| perr(line, format!("bad {what}")))
}

pub(super) fn parse(s: &str) -> Result<Dfa> {
    let mut lines = s
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("states") {
        return Err(perr(ln, "expected `states N start S`"));
    }
    let n = num(toks.next(), ln, "state count")?;
    if toks.next() != Some("start") {
        return Err(perr(ln, "expected `start`"));
    }
    let start = num(toks.next(), ln, "start state")?;

    let (ln, acc_line) = lines.next().ok_or_else(|| perr(ln + 1, "missing accepting line"))?;
    let mut toks = acc_line.split_whitespace();
    if toks.next() != Some("accepting") {
        return Err(perr(ln, "expected `accepting ...`"));
    }
    let accepting = toks
        .map(|t| t.parse().map_err(|_| perr(ln, format!("bad state {t:?}"))))
        .collect::<Result<Vec<usize>>>()?;

    let mut alphabet: Option<Vec<char>> = None;
    let mut rows: Vec<Option<Vec<usize>>> = vec![None; n];
    for (ln, line) in lines {
        let rest = line
            .strip_prefix("state")
            .ok_or_else(|| perr(ln, "expected `state i: ...`"))?;
        let (id, arcs) = rest
            .split_once(':')
            .ok_or_else(|| perr(ln, "missing ':'"))?;
        let q = num(Some(id.trim()), ln, "state id")?;
        if q >= n {
            return Err(perr(ln, format!("state {q} out of range")));
        }
        let mut syms = Vec::new();
        let mut targets = Vec::new();
        for arc in arcs.split_whitespace() {
            let (sym, t) = arc
                .split_once("->")
                .ok_or_else(|| perr(ln, format!("bad arc {arc:?}")))?;
            let mut chars = sym.chars();
            let c = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(perr(ln, format!("symbol must be one character: {sym:?}"))),
            };
            syms.push(c);
            targets.push(num(Some(t), ln, "target")?);
        }
        match &alphabet {
            None => alphabet = Some(syms),
            Some(a) if *a != syms => return Err(perr(ln, "arcs differ in symbol order")),
            _ => {}
        }
        if rows[q].replace(targets).is_some() {
            return Err(perr(ln, format!("state {q} listed twice")));
        }
    }
    let transitions = rows
        .into_iter()
        .enumerate()
        .map(|(q, r)| r.ok_or_else(|| Error::MalformedDfa(format!("state {q} has no transition line"))))
        .collect::<Result<Vec<_>>>()?;
    Dfa::new(alphabet.unwrap_or_default(), transitions, start, accepting)
}
