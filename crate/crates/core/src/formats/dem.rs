//! Detector error model (DEM) text format.
//!
//! Supported instructions, one per line:
//!
//! ```text
//! error(p) D0 D1 L0          # independent mechanism; `^` separators are accepted
//! detector(x, y, t) D4       # or `detector D4`
//! logical_observable L0
//! shift_detectors(0, 0, 1) 4 # offsets later ids and coordinates
//! ```
//!
//! `repeat` blocks are rejected. Ids are stored absolute, after shifts.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub id: usize,
    /// Absolute coordinates; the last entry is the time coordinate.
    pub coords: Vec<f64>,
}

/// One independent error mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct Mechanism {
    pub probability: f64,
    /// Sorted, unique.
    pub detectors: Vec<usize>,
    /// Sorted, unique.
    pub observables: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DetectorModel {
    pub n_detectors: usize,
    pub n_observables: usize,
    /// Declared detectors in order of appearance.
    pub detectors: Vec<Detector>,
    pub mechanisms: Vec<Mechanism>,
}

impl DetectorModel {
    /// Coordinates of detector `id`, if it was declared with any.
    pub fn coords_of(&self, id: usize) -> Option<&[f64]> {
        self.detectors.iter().find(|d| d.id == id).map(|d| d.coords.as_slice())
    }

    /// Checks the structural invariants; the parser only produces valid models.
    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.mechanisms.iter().enumerate() {
            if !(0.0..=1.0).contains(&m.probability) {
                return Err(Error::Validation(format!(
                    "mechanism {i} has probability {} outside [0, 1]",
                    m.probability
                )));
            }
            if m.detectors.windows(2).any(|w| w[0] >= w[1]) || m.observables.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "mechanism {i} targets are not sorted and unique"
                )));
            }
            if m.detectors.iter().any(|&d| d >= self.n_detectors)
                || m.observables.iter().any(|&o| o >= self.n_observables)
            {
                return Err(Error::Validation(format!(
                    "mechanism {i} references an id out of range"
                )));
            }
        }
        if let Some(d) = self.detectors.iter().find(|d| d.id >= self.n_detectors) {
            return Err(Error::Validation(format!("detector D{} out of range", d.id)));
        }
        Ok(())
    }
}

/// Re-serializes as flat DEM text with absolute ids and coordinates.
impl fmt::Display for DetectorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.detectors {
            if d.coords.is_empty() {
                writeln!(f, "detector D{}", d.id)?;
            } else {
                let coords: Vec<String> = d.coords.iter().map(|c| c.to_string()).collect();
                writeln!(f, "detector({}) D{}", coords.join(", "), d.id)?;
            }
        }
        for j in 0..self.n_observables {
            writeln!(f, "logical_observable L{j}")?;
        }
        for m in &self.mechanisms {
            write!(f, "error({})", m.probability)?;
            for d in &m.detectors {
                write!(f, " D{d}")?;
            }
            for o in &m.observables {
                write!(f, " L{o}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Splits `name(args) targets...` into its three parts. Tags (`name[tag]`) are dropped.
fn split_instruction(line: &str, lineno: usize) -> Result<(&str, Option<&str>, &str)> {
    let name_end = line
        .find(|c: char| c == '(' || c == '[' || c.is_whitespace())
        .unwrap_or(line.len());
    let name = &line[..name_end];
    let mut rest = &line[name_end..];
    if let Some(stripped) = rest.strip_prefix('[') {
        let close = stripped
            .find(']')
            .ok_or_else(|| parse_err(lineno, "unterminated instruction tag"))?;
        rest = &stripped[close + 1..];
    }
    let mut args = None;
    if let Some(stripped) = rest.strip_prefix('(') {
        let close = stripped
            .find(')')
            .ok_or_else(|| parse_err(lineno, "unterminated argument list"))?;
        args = Some(&stripped[..close]);
        rest = &stripped[close + 1..];
    }
    Ok((name, args, rest.trim()))
}

fn parse_args(args: Option<&str>, lineno: usize) -> Result<Vec<f64>> {
    let Some(args) = args else {
        return Ok(Vec::new());
    };
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|a| {
            let a = a.trim();
            let v: f64 = a
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad numeric argument {a:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(lineno, format!("non-finite argument {a:?}")))
            }
        })
        .collect()
}

fn parse_target_id(tok: &str, prefix: char, lineno: usize) -> Result<usize> {
    tok.strip_prefix(prefix)
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| parse_err(lineno, format!("bad target {tok:?}")))
}

/// Toggles `id` in a sorted set (XOR semantics for repeated targets).
fn toggle(set: &mut Vec<usize>, id: usize) {
    match set.binary_search(&id) {
        Ok(pos) => {
            set.remove(pos);
        }
        Err(pos) => set.insert(pos, id),
    }
}

/// Parses DEM text into a [`DetectorModel`].
pub fn parse_dem(text: &str) -> Result<DetectorModel> {
    let mut model = DetectorModel::default();
    let mut det_offset = 0usize;
    let mut coord_shift: Vec<f64> = Vec::new();
    let mut max_det: Option<usize> = None;
    let mut max_obs: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, args, targets) = split_instruction(line, lineno)?;
        match name {
            "error" => {
                let args = parse_args(args, lineno)?;
                let [p] = args[..] else {
                    return Err(parse_err(lineno, "error takes exactly one probability"));
                };
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "line {lineno}: probability {p} outside [0, 1]"
                    )));
                }
                let mut detectors = Vec::new();
                let mut observables = Vec::new();
                for tok in targets.split_whitespace() {
                    if tok == "^" {
                        continue;
                    }
                    if tok.starts_with('D') {
                        let id = parse_target_id(tok, 'D', lineno)? + det_offset;
                        max_det = max_det.max(Some(id));
                        toggle(&mut detectors, id);
                    } else if tok.starts_with('L') {
                        let id = parse_target_id(tok, 'L', lineno)?;
                        max_obs = max_obs.max(Some(id));
                        toggle(&mut observables, id);
                    } else {
                        return Err(parse_err(lineno, format!("bad error target {tok:?}")));
                    }
                }
                model.mechanisms.push(Mechanism {
                    probability: p,
                    detectors,
                    observables,
                });
            }
            "detector" => {
                let mut coords = parse_args(args, lineno)?;
                for (c, s) in coords.iter_mut().zip(&coord_shift) {
                    *c += s;
                }
                if targets.is_empty() {
                    return Err(parse_err(lineno, "detector without a target"));
                }
                for tok in targets.split_whitespace() {
                    let id = parse_target_id(tok, 'D', lineno)? + det_offset;
                    if model.detectors.iter().any(|d| d.id == id) {
                        return Err(parse_err(lineno, format!("detector D{id} declared twice")));
                    }
                    max_det = max_det.max(Some(id));
                    model.detectors.push(Detector {
                        id,
                        coords: coords.clone(),
                    });
                }
            }
            "logical_observable" => {
                if args.is_some() {
                    return Err(parse_err(lineno, "logical_observable takes no arguments"));
                }
                for tok in targets.split_whitespace() {
                    let id = parse_target_id(tok, 'L', lineno)?;
                    max_obs = max_obs.max(Some(id));
                }
            }
            "shift_detectors" => {
                let shift = parse_args(args, lineno)?;
                let mut toks = targets.split_whitespace();
                let amount = match (toks.next(), toks.next()) {
                    (Some(tok), None) => tok
                        .parse::<usize>()
                        .map_err(|_| parse_err(lineno, format!("bad shift amount {tok:?}")))?,
                    (None, _) => 0,
                    _ => return Err(parse_err(lineno, "shift_detectors takes one integer")),
                };
                det_offset += amount;
                if coord_shift.len() < shift.len() {
                    coord_shift.resize(shift.len(), 0.0);
                }
                for (c, s) in coord_shift.iter_mut().zip(&shift) {
                    *c += s;
                }
            }
            "repeat" | "}" => {
                return Err(Error::Unsupported {
                    line: lineno,
                    instruction: name.to_string(),
                })
            }
            other => {
                return Err(parse_err(lineno, format!("unknown instruction {other:?}")));
            }
        }
    }
    model.n_detectors = max_det.map_or(0, |m| m + 1);
    model.n_observables = max_obs.map_or(0, |m| m + 1);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_error() {
        let m = parse_dem("error(0.1) D0 D1 L0\n").unwrap();
        assert_eq!(m.n_detectors, 2);
        assert_eq!(m.n_observables, 1);
        assert_eq!(
            m.mechanisms,
            vec![Mechanism {
                probability: 0.1,
                detectors: vec![0, 1],
                observables: vec![0]
            }]
        );
    }

    #[test]
    fn shift_applies_to_ids_and_coords() {
        let m = parse_dem("detector(1, 2, 0) D0\nshift_detectors(0, 0, 1) 1\ndetector(1, 2, 0) D0\n").unwrap();
        assert_eq!(m.n_detectors, 2);
        assert_eq!(
            m.detectors[0],
            Detector {
                id: 0,
                coords: vec![1.0, 2.0, 0.0]
            }
        );
        assert_eq!(
            m.detectors[1],
            Detector {
                id: 1,
                coords: vec![1.0, 2.0, 1.0]
            }
        );
    }

    #[test]
    fn shifts_accumulate() {
        let m =
            parse_dem("shift_detectors(0, 1) 2\nshift_detectors(0, 1) 3\ndetector(5, 5) D1\nerror(0.1) D0\n").unwrap();
        assert_eq!(
            m.detectors[0],
            Detector {
                id: 6,
                coords: vec![5.0, 7.0]
            }
        );
        assert_eq!(m.mechanisms[0].detectors, vec![5]);
        assert_eq!(m.n_detectors, 7);
    }

    #[test]
    fn repeated_targets_cancel() {
        let m = parse_dem("error(0.25) D0 D0 D1\n").unwrap();
        assert_eq!(m.mechanisms[0].detectors, vec![1]);
        assert!(m.mechanisms[0].observables.is_empty());
        // D0 is still referenced, so it still counts towards n_detectors
        assert_eq!(m.n_detectors, 2);
    }

    #[test]
    fn comments_tags_and_separators() {
        let m = parse_dem("# header\n\nerror[hook](0.01) D0 ^ D1 L0 # trailing\nlogical_observable L2\ndetector D3\n")
            .unwrap();
        assert_eq!(m.mechanisms[0].detectors, vec![0, 1]);
        assert_eq!(m.n_observables, 3);
        assert_eq!(m.n_detectors, 4);
        assert!(m.detectors[0].coords.is_empty());
    }

    #[test]
    fn rejects_repeat() {
        let err = parse_dem("error(0.1) D0\nrepeat 3 {\nerror(0.1) D0\n}\n").unwrap_err();
        match err {
            Error::Unsupported { line, instruction } => {
                assert_eq!(line, 2);
                assert_eq!(instruction, "repeat");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_unknown_and_bad_probability() {
        match parse_dem("error(0.1) D0\nfrobnicate D1\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(parse_dem("error(1.5) D0").unwrap_err(), Error::Validation(_)));
        assert!(matches!(parse_dem("error(-0.1) D0").unwrap_err(), Error::Validation(_)));
        assert!(parse_dem("error(0.1, 0.2) D0").is_err());
        assert!(parse_dem("error(0.1) X0").is_err());
        assert!(parse_dem("detector(1) D0\ndetector(2) D0").is_err());
    }

    #[test]
    fn display_parses_back() {
        let text = "detector(0.5, 1, 0) D0\nshift_detectors(0, 0, 1) 1\ndetector(0.5, 1, 0) D0\n\
                    error(0.0123456789) D0 D1 L1\nerror(1e-7) D1\nerror(0) L0\n";
        let m = parse_dem(text).unwrap();
        m.validate().unwrap();
        let again = parse_dem(&m.to_string()).unwrap();
        assert_eq!(again, m);
    }
}
