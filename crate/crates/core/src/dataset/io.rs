use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{DatasetError, RawSequence, Result};

/// Rounds to `digits` significant decimal digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("formatted float parses")
}

fn rounded(seq: &RawSequence) -> RawSequence {
    let r = |x: f64| round_significant(x, 9);
    let mut out = seq.clone();
    out.hz = r(out.hz);
    for f in &mut out.frames {
        f.t = r(f.t);
        let e = &mut f.ego;
        (e.x, e.y, e.phi, e.v) = (r(e.x), r(e.y), r(e.phi), r(e.v));
        for a in &mut f.agents {
            (a.x, a.y, a.phi, a.v) = (r(a.x), r(a.y), r(a.phi), r(a.v));
        }
    }
    for l in &mut out.lanes {
        for p in &mut l.centerline {
            *p = [r(p[0]), r(p[1])];
        }
    }
    out
}

/// One JSON line, floats rounded to 9 significant digits.
pub fn to_jsonl_line(seq: &RawSequence) -> String {
    serde_json::to_string(&rounded(seq)).expect("sequence serializes")
}

pub fn write_jsonl<'a>(path: &Path, seqs: impl IntoIterator<Item = &'a RawSequence>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in seqs {
        writeln!(out, "{}", to_jsonl_line(s))?;
    }
    out.flush()?;
    Ok(())
}

/// Parses JSON lines, skipping blank lines; every sequence is validated.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<RawSequence>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: RawSequence =
            serde_json::from_str(&line).map_err(|source| DatasetError::Parse {
                line: i + 1,
                source,
            })?;
        seq.validate()?;
        out.push(seq);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawSequence>> {
    parse_jsonl(BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;
    use crate::lane_graph::LaneSegment;
    use crate::scene_graph::{AgentState, EgoPose};

    fn sample() -> RawSequence {
        RawSequence {
            id: "a".into(),
            source: "unit".into(),
            hz: 4.0,
            frames: vec![Frame {
                t: 0.0,
                ego: EgoPose {
                    x: 1.0 / 3.0,
                    y: -2.5,
                    phi: 0.1,
                    v: 7.0,
                },
                agents: vec![AgentState {
                    track_id: 4,
                    x: 12.345678912345,
                    y: 0.0,
                    phi: 0.0,
                    v: 3.0,
                }],
                label: Some(1),
            }],
            lanes: vec![LaneSegment::new("l", vec![[0.0, 0.0], [3.0, 0.0]]).with_successors(&[])],
        }
    }

    #[test]
    fn line_has_fixed_field_order() {
        let line = to_jsonl_line(&sample());
        let keys = ["\"id\"", "\"source\"", "\"hz\"", "\"frames\"", "\"lanes\""];
        let pos: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
        let frame_keys = ["\"t\"", "\"ego\"", "\"agents\"", "\"label\""];
        let pos: Vec<usize> = frame_keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(line.contains("\"pts\":[[0.0,0.0],[3.0,0.0]],\"suc\":[],\"pre\":[]"));
        assert!(line.contains("0.333333333,"));
        assert!(line.contains("12.3456789,"));
    }

    #[test]
    fn round_trip_is_stable() {
        let line = to_jsonl_line(&sample());
        let back = parse_jsonl(line.as_bytes()).unwrap();
        assert_eq!(to_jsonl_line(&back[0]), line);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = format!("{}\n\n{{oops\n", to_jsonl_line(&sample()));
        match parse_jsonl(text.as_bytes()) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn significant_rounding() {
        assert_eq!(round_significant(123456789.4, 9), 123456789.0);
        assert_eq!(round_significant(0.1234567891, 9), 0.123456789);
        assert_eq!(round_significant(0.0, 9), 0.0);
    }
}
