//! Protocol generators for the hardness reductions: bounded Turing machines to
//! IO, boolean circuits to DO, and VASS reachability to DT.

pub mod circuit;
pub mod tm;
pub mod vass;

pub use circuit::{circuit_to_do, parse_circuit, qbf_holds, Circuit, CircuitProtocol, Gate, Op, Quantifier};
pub use tm::{parse_tm, tm_to_io, TmConfig, TmEncoding, TmOutcome, TuringMachine};
pub use vass::{parse_vass, pm1_to_dt, vass_to_pm1, Pm1Protocol, Vass, VassQuery};

use crate::error::{Error, Result};
use crate::format::{strip_comment, tokens};

/// One non-empty line of a generator input file, tokenized.
pub(crate) struct Line<'a> {
    pub no: usize,
    pub toks: Vec<(usize, &'a str)>,
}

impl<'a> Line<'a> {
    pub fn err(&self, i: usize, msg: impl Into<String>) -> Error {
        let col = self.toks.get(i).map_or(1, |t| t.0);
        Error::parse(self.no, col, msg)
    }

    pub fn tok(&self, i: usize) -> Result<&'a str> {
        self.toks.get(i).map(|t| t.1).ok_or_else(|| {
            let col = self.toks.last().map_or(1, |t| t.0 + t.1.len());
            Error::parse(self.no, col, "unexpected end of line")
        })
    }

    pub fn num<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.tok(i)?.parse().map_err(|_| self.err(i, format!("expected a number, found `{}`", self.toks[i].1)))
    }
}

pub(crate) fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let toks = tokens(strip_comment(l), 1);
        (!toks.is_empty()).then_some(Line { no: i + 1, toks })
    })
}
