//! System builders and the `alpern-system v1` text format.
//!
//! The format is line oriented UTF-8. `#` starts a comment, blank lines are
//! ignored, and the first significant line must be the header. One `cells`
//! line precedes any `column`/`edge` line:
//!
//! ```text
//! alpern-system v1
//! cells 2 P1 P2
//! column c0 1/4 1,2,1,2
//! edge c0 0 c0 1/4
//! ```
//!
//! Labels accept three forms: comma-separated integers, comma-separated runs
//! `<cell>x<count>`, and (only when `t <= 9`) a compact digit string such as
//! `1212`. Widths are reduced `p/q`. Parsing then serializing a valid system
//! reproduces it exactly, including every rational's canonical form.

use num_integer::Integer;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::model::{cell_measures, validate_system, Column, ColumnSystem, PartitionSpec, SeamEdge};
use crate::ratio::{parse_ratio, rat_int, Ratio};

const HEADER: &str = "alpern-system v1";

/// An irrational-free stand-in for a circle rotation: step `p/q` in lowest
/// terms and partition breakpoints on the `1/q` grid, the first at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotationSpec {
    pub p: i64,
    pub q: u64,
    pub breakpoints: Vec<Ratio>,
}

/// Builds the one-column system whose orbit reads off `labels` cyclically.
/// The column gets width `1/R` and a single full-width seam edge to itself.
pub fn build_cyclic(labels: Vec<u32>, partition: PartitionSpec) -> Result<ColumnSystem> {
    if labels.is_empty() {
        return Err(Error::Format("cyclic system needs at least one level".into()));
    }
    let r = labels.len() as i64;
    let width = rat_int(1) / rat_int(r);
    let sys = ColumnSystem {
        partition,
        columns: vec![Column {
            id: "c0".to_string(),
            width: width.clone(),
            labels,
        }],
        edges: vec![SeamEdge {
            from: "c0".to_string(),
            order: 0,
            to: "c0".to_string(),
            width,
        }],
    };
    let structural: Vec<_> = validate_system(&sys)
        .into_iter()
        .filter(|v| !matches!(v, crate::model::Violation::ZeroCellMeasure { .. }))
        .collect();
    if !structural.is_empty() {
        return Err(Error::Validation(structural));
    }
    cell_measures(&sys)?;
    Ok(sys)
}

/// Builds the height-`q` column whose level labels follow the rotation orbit
/// `frac(r * p/q)` through the breakpoint intervals.
pub fn build_rotation(spec: &RotationSpec, partition: PartitionSpec) -> Result<ColumnSystem> {
    let q = spec.q;
    if q == 0 {
        return Err(Error::Format("rotation needs q >= 1".into()));
    }
    let step = spec.p.rem_euclid(q as i64) as u64;
    if step.gcd(&q) != 1 {
        return Err(Error::Format(format!(
            "rotation step {}/{} is not in lowest terms",
            spec.p, q
        )));
    }
    let t = spec.breakpoints.len() as u32;
    if t == 0 {
        return Err(Error::Format("rotation needs at least one breakpoint".into()));
    }
    if partition.len() != t {
        return Err(Error::Format(format!(
            "partition has {} names for {} breakpoints",
            partition.len(),
            t
        )));
    }

    // Snap breakpoints onto the 1/q grid; they must already lie on it.
    let mut grid_breaks: Vec<u64> = Vec::with_capacity(t as usize);
    for bp in &spec.breakpoints {
        if bp.is_negative() || *bp >= rat_int(1) {
            return Err(Error::Format(format!(
                "breakpoint {} is outside [0, 1)",
                crate::ratio::fmt_ratio(bp)
            )));
        }
        let scaled = bp * rat_int(q as i64);
        if !scaled.is_integer() {
            return Err(Error::BreakpointOffGrid {
                breakpoint: crate::ratio::fmt_ratio(bp),
                q,
            });
        }
        grid_breaks.push(u64::try_from(scaled.to_integer()).expect("breakpoint in [0, q)"));
    }
    if grid_breaks[0] != 0 {
        return Err(Error::Format("first breakpoint must be 0".into()));
    }
    for w in grid_breaks.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Format(
                "breakpoints must be strictly increasing".into(),
            ));
        }
    }

    // Cell of grid point g: the last breakpoint at or below it.
    let cell_of = |g: u64| -> u32 {
        match grid_breaks.binary_search(&g) {
            Ok(j) => j as u32 + 1,
            Err(j) => j as u32,
        }
    };
    let mut labels = Vec::with_capacity(q as usize);
    let mut seen = vec![false; q as usize];
    let mut g: u64 = 0;
    for _ in 0..q {
        labels.push(cell_of(g));
        seen[g as usize] = true;
        g = (g + step) % q;
    }
    assert!(seen.iter().all(|&s| s), "orbit must visit every grid point");

    let width = rat_int(1) / rat_int(q as i64);
    let sys = ColumnSystem {
        partition,
        columns: vec![Column {
            id: "c0".to_string(),
            width: width.clone(),
            labels,
        }],
        edges: vec![SeamEdge {
            from: "c0".to_string(),
            order: 0,
            to: "c0".to_string(),
            width,
        }],
    };
    cell_measures(&sys)?;
    let violations = validate_system(&sys);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(sys)
}

/// Parses one labels token. `t_hint` bounds compact-digit parsing; when it
/// is `None` the compact form is still accepted (digits `1..9`).
pub fn parse_labels(token: &str, t_hint: Option<u32>) -> std::result::Result<Vec<u32>, String> {
    if token.is_empty() {
        return Err("empty labels".to_string());
    }
    let comma_form = token.contains(',') || token.contains('x');
    if !comma_form {
        if !token.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad labels token {token:?}"));
        }
        if let Some(t) = t_hint {
            if t > 9 {
                return Err(format!(
                    "compact digit labels need t <= 9, but t = {t}; use the comma form"
                ));
            }
        }
        let mut labels = Vec::with_capacity(token.len());
        for b in token.bytes() {
            let d = (b - b'0') as u32;
            if d == 0 {
                return Err("label 0 is not a cell".to_string());
            }
            labels.push(d);
        }
        return Ok(labels);
    }
    let mut labels = Vec::new();
    for entry in token.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            return Err("empty label entry".to_string());
        }
        let (cell_s, count) = match entry.split_once('x') {
            Some((c, k)) => {
                let k: u64 = k
                    .parse()
                    .map_err(|_| format!("bad run length in {entry:?}"))?;
                if k == 0 {
                    return Err(format!("zero run length in {entry:?}"));
                }
                (c, k)
            }
            None => (entry, 1),
        };
        let cell: u32 = cell_s
            .parse()
            .map_err(|_| format!("bad cell in {entry:?}"))?;
        if cell == 0 {
            return Err("label 0 is not a cell".to_string());
        }
        for _ in 0..count {
            labels.push(cell);
        }
    }
    Ok(labels)
}

/// Encodes labels in the comma form, run-length compressing runs of 3+.
fn encode_labels(labels: &[u32]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let cell = labels[i];
        let mut j = i + 1;
        while j < labels.len() && labels[j] == cell {
            j += 1;
        }
        let run = j - i;
        if run >= 3 {
            parts.push(format!("{cell}x{run}"));
        } else {
            for _ in 0..run {
                parts.push(cell.to_string());
            }
        }
        i = j;
    }
    parts.join(",")
}

fn check_token(s: &str, what: &str, line: usize) -> Result<()> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '#') {
        return Err(Error::Syntax {
            line,
            msg: format!("bad {what} token {s:?}"),
        });
    }
    Ok(())
}

/// Parses the `alpern-system v1` text form and validates the result.
pub fn parse_system(text: &str) -> Result<ColumnSystem> {
    let mut header_seen = false;
    let mut partition: Option<PartitionSpec> = None;
    let mut columns: Vec<Column> = Vec::new();
    let mut edges: Vec<SeamEdge> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != HEADER {
                return Err(Error::Syntax {
                    line: line_no,
                    msg: format!("expected header {HEADER:?}, found {line:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "cells" => {
                if partition.is_some() {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: "duplicate cells line".to_string(),
                    });
                }
                if tokens.len() < 2 {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: "cells needs a count and names".to_string(),
                    });
                }
                let t: u32 = tokens[1].parse().map_err(|_| Error::Syntax {
                    line: line_no,
                    msg: format!("bad cell count {:?}", tokens[1]),
                })?;
                let names: Vec<String> = tokens[2..].iter().map(|s| s.to_string()).collect();
                if names.len() as u32 != t {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: format!("cells says {t} but lists {} names", names.len()),
                    });
                }
                for name in &names {
                    check_token(name, "cell name", line_no)?;
                }
                partition = Some(PartitionSpec::new(names));
            }
            "column" => {
                let part = partition.as_ref().ok_or(Error::Syntax {
                    line: line_no,
                    msg: "column before cells line".to_string(),
                })?;
                if tokens.len() != 4 {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: "column needs: id width labels".to_string(),
                    });
                }
                check_token(tokens[1], "column id", line_no)?;
                let width = parse_ratio(tokens[2]).map_err(|msg| Error::Syntax {
                    line: line_no,
                    msg,
                })?;
                let labels =
                    parse_labels(tokens[3], Some(part.len())).map_err(|msg| Error::Syntax {
                        line: line_no,
                        msg,
                    })?;
                columns.push(Column {
                    id: tokens[1].to_string(),
                    width,
                    labels,
                });
            }
            "edge" => {
                if partition.is_none() {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: "edge before cells line".to_string(),
                    });
                }
                if tokens.len() != 5 {
                    return Err(Error::Syntax {
                        line: line_no,
                        msg: "edge needs: from order to width".to_string(),
                    });
                }
                check_token(tokens[1], "column id", line_no)?;
                check_token(tokens[3], "column id", line_no)?;
                let order: u32 = tokens[2].parse().map_err(|_| Error::Syntax {
                    line: line_no,
                    msg: format!("bad edge order {:?}", tokens[2]),
                })?;
                let width = parse_ratio(tokens[4]).map_err(|msg| Error::Syntax {
                    line: line_no,
                    msg,
                })?;
                edges.push(SeamEdge {
                    from: tokens[1].to_string(),
                    order,
                    to: tokens[3].to_string(),
                    width,
                });
            }
            other => {
                return Err(Error::Syntax {
                    line: line_no,
                    msg: format!("unknown directive {other:?}"),
                });
            }
        }
    }

    if !header_seen {
        return Err(Error::Syntax {
            line: text.lines().count().max(1),
            msg: format!("missing header {HEADER:?}"),
        });
    }
    let partition = partition.ok_or(Error::Syntax {
        line: text.lines().count().max(1),
        msg: "missing cells line".to_string(),
    })?;
    let sys = ColumnSystem {
        partition,
        columns,
        edges,
    };
    let violations = validate_system(&sys);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(sys)
}

/// Serializes to the canonical text form: header, cells, columns in order,
/// edges in order, one trailing newline. Output is byte-deterministic.
pub fn serialize_system(sys: &ColumnSystem) -> String {
    use crate::ratio::fmt_ratio;
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("cells {}", sys.t()));
    for name in sys.partition.names() {
        out.push(' ');
        out.push_str(name);
    }
    out.push('\n');
    for col in &sys.columns {
        out.push_str(&format!(
            "column {} {} {}\n",
            col.id,
            fmt_ratio(&col.width),
            encode_labels(&col.labels)
        ));
    }
    for edge in &sys.edges {
        out.push_str(&format!(
            "edge {} {} {} {}\n",
            edge.from,
            edge.order,
            edge.to,
            fmt_ratio(&edge.width)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Violation;
    use crate::ratio::rat;
    use proptest::prelude::*;

    #[test]
    fn cyclic_small() {
        let sys = build_cyclic(vec![1, 2, 1, 2], PartitionSpec::numbered(2)).unwrap();
        assert_eq!(sys.columns[0].width, rat(1, 4));
        assert_eq!(sys.columns[0].labels, vec![1, 2, 1, 2]);
        assert_eq!(sys.edges.len(), 1);
        assert!(validate_system(&sys).is_empty());
    }

    #[test]
    fn cyclic_rejects_out_of_range_label() {
        let err = build_cyclic(vec![1, 2, 1, 3], PartitionSpec::numbered(2)).unwrap_err();
        match err {
            Error::Validation(vs) => assert!(vs
                .iter()
                .any(|v| matches!(v, Violation::LabelOutOfRange { label: 3, .. }))),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn cyclic_rejects_absent_cell() {
        let err = build_cyclic(vec![1, 1, 1], PartitionSpec::numbered(2)).unwrap_err();
        assert!(matches!(err, Error::ZeroCell { cell: 2 }));
    }

    #[test]
    fn rotation_quarter_with_half_break() {
        // Orbit of 1/4: 0, 1/4, 1/2, 3/4 against cells [0,1/2) and [1/2,1).
        let spec = RotationSpec {
            p: 1,
            q: 4,
            breakpoints: vec![rat(0, 1), rat(1, 2)],
        };
        let sys = build_rotation(&spec, PartitionSpec::numbered(2)).unwrap();
        assert_eq!(sys.columns[0].labels, vec![1, 1, 2, 2]);
    }

    #[test]
    fn rotation_two_fifths() {
        // Orbit of 2/5: 0, 2/5, 4/5, 1/5, 3/5 against cells [0,3/5) and [3/5,1).
        let spec = RotationSpec {
            p: 2,
            q: 5,
            breakpoints: vec![rat(0, 1), rat(3, 5)],
        };
        let sys = build_rotation(&spec, PartitionSpec::numbered(2)).unwrap();
        assert_eq!(sys.columns[0].labels, vec![1, 1, 2, 1, 2]);
    }

    #[test]
    fn rotation_off_grid_breakpoint() {
        let spec = RotationSpec {
            p: 1,
            q: 4,
            breakpoints: vec![rat(0, 1), rat(1, 3)],
        };
        let err = build_rotation(&spec, PartitionSpec::numbered(2)).unwrap_err();
        match err {
            Error::BreakpointOffGrid { breakpoint, q } => {
                assert_eq!(breakpoint, "1/3");
                assert_eq!(q, 4);
            }
            other => panic!("expected BreakpointOffGrid, got {other:?}"),
        }
    }

    #[test]
    fn rotation_rejects_common_factor() {
        let spec = RotationSpec {
            p: 2,
            q: 4,
            breakpoints: vec![rat(0, 1), rat(1, 2)],
        };
        assert!(build_rotation(&spec, PartitionSpec::numbered(2)).is_err());
    }

    #[test]
    fn label_forms() {
        assert_eq!(parse_labels("1212", Some(2)).unwrap(), vec![1, 2, 1, 2]);
        assert_eq!(parse_labels("1,2,1,2", Some(2)).unwrap(), vec![1, 2, 1, 2]);
        assert_eq!(
            parse_labels("1x3,2x2", Some(2)).unwrap(),
            vec![1, 1, 1, 2, 2]
        );
        assert_eq!(parse_labels("12", None).unwrap(), vec![1, 2]);
        assert_eq!(parse_labels("12x2", None).unwrap(), vec![12, 12]);
        assert!(parse_labels("0", Some(2)).is_err());
        assert!(parse_labels("1x0", Some(2)).is_err());
        assert!(parse_labels("", Some(2)).is_err());
    }

    #[test]
    fn parse_rejects_with_line_numbers() {
        let text = "alpern-system v1\ncells 2 P1 P2\ncolumn c0 1/4 1,2,1,zap\n";
        match parse_system(text) {
            Err(Error::Syntax { line: 3, .. }) => {}
            other => panic!("expected syntax error on line 3, got {other:?}"),
        }
    }

    #[test]
    fn parse_requires_header() {
        match parse_system("cells 1 P1\n") {
            Err(Error::Syntax { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn parse_validates() {
        let text = "alpern-system v1\ncells 2 P1 P2\ncolumn c0 1/3 1212\nedge c0 0 c0 1/3\n";
        match parse_system(text) {
            Err(Error::Validation(vs)) => {
                assert!(vs.iter().any(|v| matches!(v, Violation::TotalMass { .. })))
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_with_comments_and_rle() {
        let text = "alpern-system v1\n# a comment\ncells 2 left right  # trailing\n\ncolumn c0 1/1540 1x770,2x770\nedge c0 0 c0 1/1540\n";
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.columns[0].height(), 1540);
        let re = serialize_system(&sys);
        let sys2 = parse_system(&re).unwrap();
        assert_eq!(sys, sys2);
        assert_eq!(serialize_system(&sys2), re);
    }

    #[test]
    fn multi_column_round_trip() {
        let text = concat!(
            "alpern-system v1\n",
            "cells 2 P1 P2\n",
            "column c0 1/8 1,2,1,2\n",
            "column c1 1/8 2,1,2,1\n",
            "edge c0 0 c1 1/16\n",
            "edge c0 1 c0 1/16\n",
            "edge c1 0 c0 1/16\n",
            "edge c1 1 c1 1/16\n",
        );
        let sys = parse_system(text).unwrap();
        let re = serialize_system(&sys);
        assert_eq!(parse_system(&re).unwrap(), sys);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Serialize-then-parse is the identity on valid cyclic systems.
        #[test]
        fn round_trip_cyclic(t in 1u32..4, tail in proptest::collection::vec(1u32..4, 1..40)) {
            let mut labels: Vec<u32> = (1..=t).collect();
            labels.extend(tail.iter().map(|&c| (c - 1) % t + 1));
            let sys = build_cyclic(labels, PartitionSpec::numbered(t)).unwrap();
            let text = serialize_system(&sys);
            let back = parse_system(&text).unwrap();
            prop_assert_eq!(&back, &sys);
            prop_assert_eq!(serialize_system(&back), text);
        }

        /// Serialize-then-parse is the identity on valid two-column cycles.
        #[test]
        fn round_trip_two_columns(
            h0 in 2u32..12,
            h1 in 2u32..12,
            seed in proptest::collection::vec(1u32..3, 24),
        ) {
            let total = (h0 + h1) as i64;
            let width = rat_int(1) / rat_int(total);
            let mk = |height: u32, offset: usize| -> Vec<u32> {
                let mut v: Vec<u32> = vec![1, 2];
                v.extend((2..height as usize).map(|k| seed[(offset + k) % seed.len()]));
                v.truncate(height as usize);
                v
            };
            let sys = ColumnSystem {
                partition: PartitionSpec::numbered(2),
                columns: vec![
                    Column { id: "c0".into(), width: width.clone(), labels: mk(h0, 0) },
                    Column { id: "c1".into(), width: width.clone(), labels: mk(h1, 7) },
                ],
                edges: vec![
                    SeamEdge { from: "c0".into(), order: 0, to: "c1".into(), width: width.clone() },
                    SeamEdge { from: "c1".into(), order: 0, to: "c0".into(), width: width.clone() },
                ],
            };
            prop_assert!(validate_system(&sys).is_empty());
            let text = serialize_system(&sys);
            let back = parse_system(&text).unwrap();
            prop_assert_eq!(back, sys);
        }
    }
}
