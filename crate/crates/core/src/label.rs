//! Scan labels of the wire-cut study and pair categories.
//!
//! Labels have the form `T{tool}{edge}W-L{location}-R{repetition}`, e.g.
//! `T1AW-LI-R1`: tool 1, blade edge A, inner cutting location, first cut.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("malformed scan label {0:?}: expected T<1-5><A-D>W-L<I|M|O>-R<1-2>")]
    MalformedLabel(String),
    #[error("pair refers to the same scan {0}")]
    IdenticalScan(ScanLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Edge {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Location {
    /// Closest to the jaw.
    I,
    M,
    O,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::A, Edge::B, Edge::C, Edge::D];

    fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(Edge::A),
            'B' => Some(Edge::B),
            'C' => Some(Edge::C),
            'D' => Some(Edge::D),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Edge::A => 'A',
            Edge::B => 'B',
            Edge::C => 'C',
            Edge::D => 'D',
        }
    }
}

impl Location {
    pub const ALL: [Location; 3] = [Location::I, Location::M, Location::O];

    fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Location::I),
            'M' => Some(Location::M),
            'O' => Some(Location::O),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Location::I => 'I',
            Location::M => 'M',
            Location::O => 'O',
        }
    }
}

/// Identity of one scan in the study design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScanLabel {
    pub tool: u8,
    pub edge: Edge,
    pub location: Location,
    pub repetition: u8,
}

impl ScanLabel {
    pub const TOOLS: std::ops::RangeInclusive<u8> = 1..=5;
    pub const REPETITIONS: std::ops::RangeInclusive<u8> = 1..=2;

    pub fn new(tool: u8, edge: Edge, location: Location, repetition: u8) -> Result<Self, LabelError> {
        let label = Self {
            tool,
            edge,
            location,
            repetition,
        };
        if Self::TOOLS.contains(&tool) && Self::REPETITIONS.contains(&repetition) {
            Ok(label)
        } else {
            Err(LabelError::MalformedLabel(format!(
                "T{tool}{}W-L{}-R{repetition}",
                edge.as_char(),
                location.as_char()
            )))
        }
    }

    /// All 5 × 4 × 3 × 2 = 120 labels of the study, in sorted order.
    pub fn all() -> impl Iterator<Item = ScanLabel> {
        Self::TOOLS.flat_map(|tool| {
            Edge::ALL.into_iter().flat_map(move |edge| {
                Location::ALL.into_iter().flat_map(move |location| {
                    Self::REPETITIONS.map(move |repetition| ScanLabel {
                        tool,
                        edge,
                        location,
                        repetition,
                    })
                })
            })
        })
    }
}

impl fmt::Display for ScanLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T{}{}W-L{}-R{}",
            self.tool,
            self.edge.as_char(),
            self.location.as_char(),
            self.repetition
        )
    }
}

pub fn parse_label(name: &str) -> Result<ScanLabel, LabelError> {
    let bad = || LabelError::MalformedLabel(name.to_string());
    let c: Vec<char> = name.chars().collect();
    // T d E W - L l - R d
    if c.len() != 10 || c[0] != 'T' || c[3] != 'W' || c[4] != '-' || c[5] != 'L' || c[7] != '-' || c[8] != 'R' {
        return Err(bad());
    }
    let tool = c[1].to_digit(10).ok_or_else(bad)? as u8;
    let edge = Edge::from_char(c[2]).ok_or_else(bad)?;
    let location = Location::from_char(c[6]).ok_or_else(bad)?;
    let repetition = c[9].to_digit(10).ok_or_else(bad)? as u8;
    ScanLabel::new(tool, edge, location, repetition).map_err(|_| bad())
}

impl FromStr for ScanLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// Ground-truth relation between two scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCategory {
    /// Same tool, edge and location; only the repetition differs.
    SameSource,
    DifferentTool,
    /// Same tool, but edge or location differ.
    SameToolDifferentSite,
    /// At least one side has no parseable label.
    Unknown,
}

impl PairCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            PairCategory::SameSource => "same-source",
            PairCategory::DifferentTool => "different-tool",
            PairCategory::SameToolDifferentSite => "same-tool-different-site",
            PairCategory::Unknown => "unknown",
        }
    }
}

impl fmt::Display for PairCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-source" => Ok(PairCategory::SameSource),
            "different-tool" => Ok(PairCategory::DifferentTool),
            "same-tool-different-site" => Ok(PairCategory::SameToolDifferentSite),
            "unknown" => Ok(PairCategory::Unknown),
            other => Err(format!("unknown pair category {other:?}")),
        }
    }
}

pub fn pair_category(a: &ScanLabel, b: &ScanLabel) -> Result<PairCategory, LabelError> {
    if a == b {
        return Err(LabelError::IdenticalScan(*a));
    }
    Ok(if a.tool != b.tool {
        PairCategory::DifferentTool
    } else if a.edge == b.edge && a.location == b.location {
        PairCategory::SameSource
    } else {
        PairCategory::SameToolDifferentSite
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> ScanLabel {
        parse_label(s).unwrap()
    }

    #[test]
    fn parses_study_names() {
        assert_eq!(
            l("T1AW-LI-R1"),
            ScanLabel {
                tool: 1,
                edge: Edge::A,
                location: Location::I,
                repetition: 1
            }
        );
        assert_eq!(
            l("T5DW-LO-R2"),
            ScanLabel {
                tool: 5,
                edge: Edge::D,
                location: Location::O,
                repetition: 2
            }
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "T6AW-LI-R1",
            "T0AW-LI-R1",
            "T1EW-LI-R1",
            "T1AW-LX-R1",
            "T1AW-LI-R3",
            "T1A-LI-R1",
            "T1AV-LI-R1",
            "t1AW-LI-R1",
            "T1AW-LI-R1x",
            "",
        ] {
            assert_eq!(parse_label(bad), Err(LabelError::MalformedLabel(bad.to_string())), "{bad}");
        }
    }

    #[test]
    fn all_labels_round_trip() {
        let all: Vec<_> = ScanLabel::all().collect();
        assert_eq!(all.len(), 120);
        for label in &all {
            assert_eq!(parse_label(&label.to_string()).unwrap(), *label);
        }
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 120);
    }

    #[test]
    fn categories() {
        let a = l("T1AW-LI-R1");
        assert_eq!(pair_category(&a, &l("T1AW-LI-R2")), Ok(PairCategory::SameSource));
        assert_eq!(pair_category(&a, &l("T2AW-LI-R1")), Ok(PairCategory::DifferentTool));
        assert_eq!(pair_category(&a, &l("T1BW-LI-R1")), Ok(PairCategory::SameToolDifferentSite));
        assert_eq!(pair_category(&a, &l("T1AW-LM-R2")), Ok(PairCategory::SameToolDifferentSite));
        assert_eq!(pair_category(&a, &a), Err(LabelError::IdenticalScan(a)));
    }

    #[test]
    fn category_is_symmetric() {
        let all: Vec<_> = ScanLabel::all().collect();
        for a in &all {
            for b in &all {
                assert_eq!(pair_category(a, b), pair_category(b, a).map_err(|_| LabelError::IdenticalScan(*a)));
            }
        }
    }

    #[test]
    fn category_names_round_trip() {
        for c in [
            PairCategory::SameSource,
            PairCategory::DifferentTool,
            PairCategory::SameToolDifferentSite,
            PairCategory::Unknown,
        ] {
            assert_eq!(c.as_str().parse::<PairCategory>(), Ok(c));
        }
    }
}
