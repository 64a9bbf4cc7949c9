//! Plain-text set-family files.
//!
//! ```text
//! # comment
//! N=6
//! 0 1
//! 2 3 w=0.25
//! w=0.1
//! ```
//!
//! A header line `N=<int>` declares the universe and must precede the sets.
//! Each remaining line is one set: space-separated element indices with an
//! optional trailing `w=<weight>`. A line holding only `w=<weight>` is the
//! empty set. Blank lines and text after `#` are ignored. Weights are either
//! given on every set line or on none.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::setcore::{SubsetMask, Universe};

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyFile {
    pub universe: Universe,
    /// Sets in file order, duplicates preserved.
    pub sets: Vec<SubsetMask>,
    pub weights: Option<Vec<f64>>,
}

pub fn parse_family_file(text: &str) -> Result<FamilyFile> {
    let mut universe: Option<Universe> = None;
    let mut sets = Vec::new();
    let mut weights: Vec<Option<f64>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("N=") {
            if universe.is_some() {
                return Err(parse_err("duplicate N= header".into()));
            }
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad universe size {rest:?}")))?;
            universe = Some(Universe::new(n).map_err(|e| parse_err(e.to_string()))?);
            continue;
        }
        let x = universe.ok_or_else(|| parse_err("set line before N= header".into()))?;

        let mut elements = Vec::new();
        let mut weight = None;
        for tok in line.split_whitespace() {
            if weight.is_some() {
                return Err(parse_err("w= must be the last token".into()));
            }
            if let Some(w) = tok.strip_prefix("w=") {
                let w: f64 = w
                    .parse()
                    .map_err(|_| parse_err(format!("bad weight {w:?}")))?;
                if !w.is_finite() || w < 0.0 {
                    return Err(parse_err(format!("weight must be finite and >= 0, got {w}")));
                }
                weight = Some(w);
            } else {
                let e: usize = tok
                    .parse()
                    .map_err(|_| parse_err(format!("bad element {tok:?}")))?;
                elements.push(e);
            }
        }
        if elements.is_empty() && weight.is_none() {
            return Err(parse_err("empty set lines need an explicit w=".into()));
        }
        sets.push(x.subset(&elements).map_err(|e| parse_err(e.to_string()))?);
        weights.push(weight);
    }

    let universe = universe.ok_or(Error::Parse {
        line: 0,
        message: "missing N= header".into(),
    })?;
    let weighted = weights.iter().filter(|w| w.is_some()).count();
    let weights = if weighted == 0 {
        None
    } else if weighted == weights.len() {
        Some(weights.into_iter().map(Option::unwrap).collect())
    } else {
        return Err(Error::Parse {
            line: 0,
            message: "weights must be given on all set lines or none".into(),
        });
    };
    Ok(FamilyFile {
        universe,
        sets,
        weights,
    })
}

/// Writes the format read by [`parse_family_file`]. Weights are forced onto
/// every line when a set is empty, since a bare empty line is not a set.
pub fn write_family_file(universe: Universe, sets: &[SubsetMask], weights: Option<&[f64]>) -> String {
    let uniform;
    let weights = match weights {
        Some(w) => Some(w),
        None if sets.iter().any(SubsetMask::is_empty) => {
            uniform = vec![1.0 / sets.len() as f64; sets.len()];
            Some(&uniform[..])
        }
        None => None,
    };
    let mut out = String::new();
    let _ = writeln!(out, "N={}", universe.size());
    for (i, s) in sets.iter().enumerate() {
        let mut line = s
            .elements()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        if let Some(w) = weights {
            if !line.is_empty() {
                line.push(' ');
            }
            let _ = write!(line, "w={}", w[i]);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_weights_comments_and_empty_set() {
        let text = "# demo\nN=6\n\n0 1 w=0.5  # first\n2 3 w=0.25\nw=0.25\n";
        let f = parse_family_file(text).unwrap();
        assert_eq!(f.universe.size(), 6);
        assert_eq!(f.sets.len(), 3);
        assert_eq!(f.sets[0].to_string(), "{0,1}");
        assert!(f.sets[2].is_empty());
        assert_eq!(f.weights, Some(vec![0.5, 0.25, 0.25]));
    }

    #[test]
    fn unweighted_file() {
        let f = parse_family_file("N=3\n0\n1 2\n").unwrap();
        assert_eq!(f.weights, None);
        assert_eq!(f.sets[1].to_string(), "{1,2}");
    }

    #[test]
    fn rejects_malformed_input() {
        let cases = [
            "0 1\n",
            "N=3\n0 5\n",
            "N=3\n0 x\n",
            "N=3\n0 w=0.5\n1\n",
            "N=3\n0 w=-1\n",
            "N=3\nN=4\n",
            "N=0\n",
            "N=3\nw=0.2 1\n",
            "# nothing\n",
        ];
        for c in cases {
            assert!(parse_family_file(c).is_err(), "accepted {c:?}");
        }
    }

    #[test]
    fn write_then_parse() {
        let x = Universe::new(5).unwrap();
        let sets = vec![x.subset(&[0, 4]).unwrap(), x.empty(), x.subset(&[2]).unwrap()];
        let text = write_family_file(x, &sets, Some(&[0.5, 0.125, 0.375]));
        let back = parse_family_file(&text).unwrap();
        assert_eq!(back.sets, sets);
        assert_eq!(back.weights, Some(vec![0.5, 0.125, 0.375]));

        let text = write_family_file(x, &sets, None);
        let back = parse_family_file(&text).unwrap();
        assert_eq!(back.sets, sets);
        assert!(back.weights.is_some());
    }
}
