//! Network topology and the plain-text case format.
//!
//! A case file holds one record per line, keyed by section:
//!
//! ```text
//! # comment
//! BUS <id> <p_demand_pu> <q_demand_pu> [gen_share]
//! LINE <id> <from_bus> <to_bus> <reactance_pu> <rating_pu>
//! SLACK <bus_id>
//! CANDIDATE <line_id>
//! ```
//!
//! `gen_share` is the fraction of the system demand dispatched at that bus;
//! the slack bus absorbs whatever remains.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;
pub type LineId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub p_demand: f64,
    pub q_demand: f64,
    pub gen_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub from: BusId,
    pub to: BusId,
    pub reactance: f64,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub name: String,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack_bus: BusId,
    pub candidate_lines: Vec<LineId>,
}

const TOY5: &str = include_str!("cases/toy5.case");
const IEEE30: &str = include_str!("cases/ieee30.case");

/// Names of the cases compiled into the crate.
pub const BUNDLED_CASES: &[&str] = &["toy5", "ieee30"];

/// Loads a bundled case by name, or parses the file at the given path.
pub fn load_case(name_or_path: &str) -> Result<GridTopology> {
    match name_or_path {
        "toy5" => parse_case("toy5", TOY5),
        "ieee30" => parse_case("ieee30", IEEE30),
        other => {
            let path = Path::new(other);
            if !path.exists() {
                return Err(Error::UnknownCase(other.to_string()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| other.to_string());
            parse_case(&name, &text)
        }
    }
}

fn field<T: std::str::FromStr>(
    parts: &[&str],
    idx: usize,
    name: &str,
    line: usize,
) -> Result<T> {
    let raw = parts.get(idx).ok_or_else(|| Error::MalformedCase {
        line,
        field: name.to_string(),
        reason: "missing".into(),
    })?;
    raw.parse().map_err(|_| Error::MalformedCase {
        line,
        field: name.to_string(),
        reason: format!("cannot parse `{raw}`"),
    })
}

pub fn parse_case(name: &str, text: &str) -> Result<GridTopology> {
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut slack = None;
    let mut candidates = Vec::new();
    // first line number at which each record id appeared, for error reporting
    let mut line_of_line: BTreeMap<LineId, usize> = BTreeMap::new();
    let mut candidate_lineno = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parts: Vec<&str> = content.split_whitespace().collect();
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if parts.len() < lo || parts.len() > hi {
                Err(Error::MalformedCase {
                    line: lineno,
                    field: parts[0].to_string(),
                    reason: format!("expected {} to {} fields, found {}", lo - 1, hi - 1, parts.len() - 1),
                })
            } else {
                Ok(())
            }
        };
        match parts[0].to_ascii_uppercase().as_str() {
            "BUS" => {
                arity(4, 5)?;
                let bus = Bus {
                    id: field(&parts, 1, "bus id", lineno)?,
                    p_demand: field(&parts, 2, "p_demand", lineno)?,
                    q_demand: field(&parts, 3, "q_demand", lineno)?,
                    gen_share: if parts.len() == 5 {
                        field(&parts, 4, "gen_share", lineno)?
                    } else {
                        0.0
                    },
                };
                if bus.p_demand < 0.0 || bus.q_demand < 0.0 {
                    return Err(Error::MalformedCase {
                        line: lineno,
                        field: "p_demand".into(),
                        reason: "demand must be non-negative".into(),
                    });
                }
                if !(0.0..=1.0).contains(&bus.gen_share) {
                    return Err(Error::MalformedCase {
                        line: lineno,
                        field: "gen_share".into(),
                        reason: "must lie in [0, 1]".into(),
                    });
                }
                buses.push((lineno, bus));
            }
            "LINE" => {
                arity(6, 6)?;
                let line = Line {
                    id: field(&parts, 1, "line id", lineno)?,
                    from: field(&parts, 2, "from bus", lineno)?,
                    to: field(&parts, 3, "to bus", lineno)?,
                    reactance: field(&parts, 4, "reactance", lineno)?,
                    rating: field(&parts, 5, "rating", lineno)?,
                };
                if !(line.reactance > 0.0) {
                    return Err(Error::MalformedCase {
                        line: lineno,
                        field: "reactance".into(),
                        reason: "must be strictly positive".into(),
                    });
                }
                if !(line.rating > 0.0) {
                    return Err(Error::MalformedCase {
                        line: lineno,
                        field: "rating".into(),
                        reason: "must be strictly positive".into(),
                    });
                }
                line_of_line.entry(line.id).or_insert(lineno);
                lines.push((lineno, line));
            }
            "SLACK" => {
                arity(2, 2)?;
                if slack.is_some() {
                    return Err(Error::MalformedCase {
                        line: lineno,
                        field: "SLACK".into(),
                        reason: "slack bus declared twice".into(),
                    });
                }
                slack = Some((lineno, field::<BusId>(&parts, 1, "slack bus", lineno)?));
            }
            "CANDIDATE" => {
                arity(2, 2)?;
                candidates.push(field::<LineId>(&parts, 1, "candidate line", lineno)?);
                candidate_lineno.push(lineno);
            }
            other => {
                return Err(Error::MalformedCase {
                    line: lineno,
                    field: "record".into(),
                    reason: format!("unknown record type `{other}`"),
                })
            }
        }
    }

    let mut bus_ids = BTreeSet::new();
    for (lineno, b) in &buses {
        if !bus_ids.insert(b.id) {
            return Err(Error::MalformedCase {
                line: *lineno,
                field: "bus id".into(),
                reason: format!("duplicate bus {}", b.id),
            });
        }
    }
    let mut seen_lines = BTreeSet::new();
    for (lineno, l) in &lines {
        if !seen_lines.insert(l.id) {
            return Err(Error::MalformedCase {
                line: *lineno,
                field: "line id".into(),
                reason: format!("duplicate line {}", l.id),
            });
        }
        for (end, bus) in [("from bus", l.from), ("to bus", l.to)] {
            if !bus_ids.contains(&bus) {
                return Err(Error::MalformedCase {
                    line: *lineno,
                    field: end.into(),
                    reason: format!("bus {bus} is not declared"),
                });
            }
        }
        if l.from == l.to {
            return Err(Error::MalformedCase {
                line: *lineno,
                field: "to bus".into(),
                reason: "line endpoints must differ".into(),
            });
        }
    }
    let (slack_line, slack_bus) = slack.ok_or_else(|| Error::MalformedCase {
        line: text.lines().count(),
        field: "SLACK".into(),
        reason: "no slack bus declared".into(),
    })?;
    if !bus_ids.contains(&slack_bus) {
        return Err(Error::MalformedCase {
            line: slack_line,
            field: "slack bus".into(),
            reason: format!("bus {slack_bus} is not declared"),
        });
    }
    let mut seen_cand = BTreeSet::new();
    for (c, lineno) in candidates.iter().zip(&candidate_lineno) {
        if !seen_lines.contains(c) {
            return Err(Error::MalformedCase {
                line: *lineno,
                field: "candidate line".into(),
                reason: format!("line {c} is not declared"),
            });
        }
        if !seen_cand.insert(*c) {
            return Err(Error::MalformedCase {
                line: *lineno,
                field: "candidate line".into(),
                reason: format!("line {c} listed twice"),
            });
        }
    }

    let topo = GridTopology {
        name: name.to_string(),
        buses: buses.into_iter().map(|(_, b)| b).collect(),
        lines: lines.into_iter().map(|(_, l)| l).collect(),
        slack_bus,
        candidate_lines: candidates,
    };
    topo.validate()?;
    Ok(topo)
}

impl GridTopology {
    /// Checks every structural invariant, including connectivity.
    pub fn validate(&self) -> Result<()> {
        if self.buses.is_empty() {
            return Err(Error::InvalidTopology("no buses".into()));
        }
        let ids: BTreeSet<BusId> = self.buses.iter().map(|b| b.id).collect();
        if ids.len() != self.buses.len() {
            return Err(Error::InvalidTopology("duplicate bus ids".into()));
        }
        if !ids.contains(&self.slack_bus) {
            return Err(Error::InvalidTopology(format!(
                "slack bus {} is not a listed bus",
                self.slack_bus
            )));
        }
        for l in &self.lines {
            if !ids.contains(&l.from) || !ids.contains(&l.to) {
                return Err(Error::InvalidTopology(format!(
                    "line {} references an unknown bus",
                    l.id
                )));
            }
            if !(l.reactance > 0.0 && l.rating > 0.0) {
                return Err(Error::InvalidTopology(format!(
                    "line {} needs positive reactance and rating",
                    l.id
                )));
            }
        }
        let mut cand = BTreeSet::new();
        for c in &self.candidate_lines {
            if self.line_index(*c).is_none() || !cand.insert(*c) {
                return Err(Error::InvalidTopology(format!(
                    "candidate line {c} is unknown or duplicated"
                )));
            }
        }
        let all = vec![true; self.lines.len()];
        if !self.is_connected(&all) {
            return Err(Error::InvalidTopology("graph is disconnected".into()));
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn line_index(&self, id: LineId) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// 1-based position of a line in the candidate list, 0 if not a candidate.
    pub fn candidate_slot(&self, id: LineId) -> Option<usize> {
        self.candidate_lines.iter().position(|&c| c == id).map(|p| p + 1)
    }

    /// Connectivity over the lines whose mask entry is `true`.
    pub fn is_connected(&self, active: &[bool]) -> bool {
        let n = self.buses.len();
        let index: BTreeMap<BusId, usize> =
            self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let mut adj = vec![Vec::new(); n];
        for (l, on) in self.lines.iter().zip(active) {
            if *on {
                let (a, b) = (index[&l.from], index[&l.to]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
