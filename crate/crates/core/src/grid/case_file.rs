//! Plain-text case files.
//!
//! Three sections introduced by a line holding only `BUS`, `GEN` or
//! `BRANCH`. Rows are whitespace separated, `#` starts a comment:
//!
//! ```text
//! BUS
//! # id load_MW
//! 1 0
//! 2 10
//! GEN
//! # bus_id p_MW p_max_MW
//! 1 10 20
//! BRANCH
//! # from to susceptance capacity_MW
//! 1 2 5.0 15
//! ```
//!
//! Several generator rows on one bus are summed.

use super::{Bus, Generator, Grid, Line};
use crate::error::{Error, Result};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaseFormat {
    #[default]
    Text,
}

impl FromStr for CaseFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case" | "text" => Ok(CaseFormat::Text),
            other => Err(Error::InvalidArgument(format!("unknown case format {other:?}"))),
        }
    }
}

pub fn load_grid(path: &Path, format: CaseFormat) -> Result<Grid> {
    let text = std::fs::read_to_string(path)?;
    match format {
        CaseFormat::Text => parse_case(&text, path),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
}

pub fn parse_case(text: &str, path: &Path) -> Result<Grid> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut section = Section::None;
    let mut seen = [false; 3];
    let mut buses: Vec<Bus> = Vec::new();
    // (line number, bus id, p, p_max)
    let mut gens: Vec<(usize, u32, f64, f64)> = Vec::new();
    let mut branches: Vec<(usize, u32, u32, f64, f64)> = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        match content {
            "BUS" | "GEN" | "BRANCH" => {
                let (s, slot) = match content {
                    "BUS" => (Section::Bus, 0),
                    "GEN" => (Section::Gen, 1),
                    _ => (Section::Branch, 2),
                };
                if seen[slot] {
                    return Err(err(lineno, format!("duplicate section {content}")));
                }
                seen[slot] = true;
                section = s;
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(lineno, format!("not a number: {:?}", fields[i])))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {:?}", fields[i])));
            }
            Ok(v)
        };
        let id = |i: usize| -> Result<u32> {
            fields[i]
                .parse()
                .map_err(|_| err(lineno, format!("not a bus id: {:?}", fields[i])))
        };
        let expect = |n: usize| -> Result<()> {
            if fields.len() != n {
                Err(err(lineno, format!("expected {n} fields, found {}", fields.len())))
            } else {
                Ok(())
            }
        };
        match section {
            Section::None => {
                return Err(err(lineno, "data row before any section header".into()));
            }
            Section::Bus => {
                expect(2)?;
                let (bid, load) = (id(0)?, num(1)?);
                if load < 0.0 {
                    return Err(err(lineno, format!("bus {bid}: negative load")));
                }
                if buses.iter().any(|b| b.id == bid) {
                    return Err(err(lineno, format!("duplicate bus id {bid}")));
                }
                buses.push(Bus { id: bid, load, generator: None });
            }
            Section::Gen => {
                expect(3)?;
                gens.push((lineno, id(0)?, num(1)?, num(2)?));
            }
            Section::Branch => {
                expect(4)?;
                branches.push((lineno, id(0)?, id(1)?, num(2)?, num(3)?));
            }
        }
    }
    for (name, ok) in ["BUS", "GEN", "BRANCH"].iter().zip(seen) {
        if !ok {
            return Err(err(text.lines().count(), format!("missing section {name}")));
        }
    }

    let ids: std::collections::HashMap<u32, usize> = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let index_of = |bid: u32| ids.get(&bid).copied();
    let mut gen_acc: Vec<Option<Generator>> = vec![None; buses.len()];
    for &(lineno, bid, p, pmax) in &gens {
        let i = index_of(bid).ok_or_else(|| err(lineno, format!("generator on unknown bus {bid}")))?;
        if pmax < 0.0 || p < 0.0 || p > pmax {
            return Err(err(
                lineno,
                format!("generator at bus {bid}: output {p} outside [0, {pmax}]"),
            ));
        }
        let g = gen_acc[i].get_or_insert(Generator { output: 0.0, max_output: 0.0 });
        g.output += p;
        g.max_output += pmax;
    }
    for (b, g) in buses.iter_mut().zip(gen_acc) {
        b.generator = g;
    }

    let mut lines = Vec::with_capacity(branches.len());
    for &(lineno, a, b, sus, cap) in &branches {
        let from = index_of(a).ok_or_else(|| err(lineno, format!("branch {a}-{b}: unknown bus {a}")))?;
        let to = index_of(b).ok_or_else(|| err(lineno, format!("branch {a}-{b}: unknown bus {b}")))?;
        if from == to {
            return Err(err(lineno, format!("branch {a}-{b}: endpoints coincide")));
        }
        if sus <= 0.0 {
            return Err(err(lineno, format!("branch {a}-{b}: nonpositive susceptance")));
        }
        if cap <= 0.0 {
            return Err(err(lineno, format!("branch {a}-{b}: nonpositive capacity")));
        }
        lines.push(Line { from, to, susceptance: sus, capacity: cap });
    }
    Grid::new(buses, lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "BUS\n1 0\n2 1\nGEN\n1 1 2\nBRANCH\n1 2 5 3\n";

    fn parse(s: &str) -> Result<Grid> {
        parse_case(s, Path::new("toy.case"))
    }

    #[test]
    fn two_bus_toy() {
        let g = parse(TOY).unwrap();
        assert_eq!(g.n_buses(), 2);
        assert_eq!(g.n_lines(), 1);
        assert_eq!(g.slack_bus(), 0);
    }

    #[test]
    fn zero_susceptance_is_rejected() {
        let e = parse("BUS\n1 0\n2 1\nGEN\n1 1 2\nBRANCH\n1 2 0 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("nonpositive susceptance"), "{msg}");
        assert!(msg.contains("line 7"), "{msg}");
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse("BUS\n1 0\n2 x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = parse("# header\n\nBUS # buses\n1 0\n2 1 # load\nGEN\n1 1 2\nBRANCH\n1 2 5 3\n").unwrap();
        assert_eq!(g.n_lines(), 1);
    }

    #[test]
    fn missing_section() {
        assert!(parse("BUS\n1 0\nGEN\n1 0 1\n").is_err());
    }

    #[test]
    fn unknown_bus_in_branch() {
        let e = parse("BUS\n1 0\nGEN\n1 0 1\nBRANCH\n1 9 1 1\n").unwrap_err();
        assert!(e.to_string().contains("unknown bus 9"));
    }
}
