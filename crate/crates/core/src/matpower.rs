//! MATPOWER version 2 `.m` case files.

use std::fmt::Write as _;

use crate::case::{Branch, Bus, BusId, BusKind, Generator, NetworkCase};
use crate::error::{Error, Result};

const BUS_COLS: usize = 9;
const GEN_COLS: usize = 8;
const BRANCH_COLS: usize = 11;

struct Block {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_matpower_case(text: &str) -> Result<NetworkCase> {
    let lines: Vec<&str> = text.lines().map(strip_comment).collect();

    let name = text
        .lines()
        .find_map(|l| {
            let l = l.trim();
            l.strip_prefix("function")
                .and_then(|rest| rest.split('=').nth(1))
                .map(|n| n.trim().trim_end_matches(';').to_string())
        })
        .unwrap_or_else(|| "case".to_string());

    let base_mva = find_scalar(&lines, "baseMVA")?;
    let bus_block = find_matrix(&lines, "bus")?;
    let gen_block = find_matrix(&lines, "gen")?;
    let branch_block = find_matrix(&lines, "branch")?;

    let mut buses = Vec::with_capacity(bus_block.rows.len());
    for (line, row) in &bus_block.rows {
        require_cols(*line, row, BUS_COLS, "bus")?;
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => continue,
            other => return Err(Error::malformed(*line, format!("unknown bus type {other}"))),
        };
        buses.push(Bus {
            id: bus_id(*line, row[0])?,
            kind,
            p_load: row[2] / base_mva,
            q_load: row[3] / base_mva,
            shunt_g: row[4] / base_mva,
            shunt_b: row[5] / base_mva,
            v_set: row[7],
            angle_set: row[8].to_radians(),
        });
    }

    let mut generators = Vec::with_capacity(gen_block.rows.len());
    for (line, row) in &gen_block.rows {
        require_cols(*line, row, GEN_COLS, "gen")?;
        generators.push(Generator {
            bus: bus_id(*line, row[0])?,
            p_set: row[1] / base_mva,
            q_set: row[2] / base_mva,
            v_set: row[5],
            status: row[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_block.rows.len());
    for (line, row) in &branch_block.rows {
        require_cols(*line, row, BRANCH_COLS, "branch")?;
        branches.push(Branch {
            from: bus_id(*line, row[0])?,
            to: bus_id(*line, row[1])?,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            tap_ratio: if row[8] == 0.0 { 1.0 } else { row[8] },
            phase_shift: row[9].to_radians(),
            status: row[10] > 0.0,
        });
    }

    if buses.is_empty() {
        return Err(Error::malformed(bus_block.line, "bus block is empty"));
    }
    NetworkCase::new(name, base_mva, buses, branches, generators)
}

/// Serializes a case back to MATPOWER text. Columns this model does not carry
/// are written with neutral defaults.
pub fn write_matpower_case(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let mut out = String::new();
    let fname: String = case
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    let _ = writeln!(out, "function mpc = {fname}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {base:?};");
    let _ = writeln!(out, "\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(out, "mpc.bus = [");
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t1\t{:?}\t{:?}\t0\t1\t1.1\t0.9;",
            b.id,
            kind,
            b.p_load * base,
            b.q_load * base,
            b.shunt_g * base,
            b.shunt_b * base,
            b.v_set,
            b.angle_set.to_degrees()
        );
    }
    let _ = writeln!(out, "];\n\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t{:?}\t{:?}\t0\t0\t{:?}\t{:?}\t{};",
            g.bus,
            g.p_set * base,
            g.q_set * base,
            g.v_set,
            base,
            u8::from(g.status)
        );
    }
    let _ = writeln!(
        out,
        "];\n\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus"
    );
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{:?}\t{:?}\t{:?}\t0\t0\t0\t{:?}\t{:?}\t{};",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_charging,
            br.tap_ratio,
            br.phase_shift.to_degrees(),
            u8::from(br.status)
        );
    }
    let _ = writeln!(out, "];");
    out
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn field_start(line: &str, field: &str) -> Option<usize> {
    let key = format!("mpc.{field}");
    let pos = line.find(&key)?;
    let rest = line[pos + key.len()..].trim_start();
    rest.starts_with('=').then_some(pos)
}

fn find_scalar(lines: &[&str], field: &str) -> Result<f64> {
    for (k, line) in lines.iter().enumerate() {
        if field_start(line, field).is_some() {
            let value = line
                .split('=')
                .nth(1)
                .map(|v| v.trim().trim_end_matches(';').trim())
                .unwrap_or("");
            return value
                .parse::<f64>()
                .map_err(|_| Error::malformed(k + 1, format!("mpc.{field} is not numeric")));
        }
    }
    Err(Error::malformed(0, format!("missing mpc.{field}")))
}

fn find_matrix(lines: &[&str], field: &str) -> Result<Block> {
    let start = lines
        .iter()
        .position(|l| field_start(l, field).is_some())
        .ok_or_else(|| Error::malformed(0, format!("missing mpc.{field} block")))?;
    let first = lines[start];
    let open = first
        .find('[')
        .ok_or_else(|| Error::malformed(start + 1, format!("mpc.{field} is not a matrix")))?;

    let mut rows = Vec::new();
    let mut pending: Vec<f64> = Vec::new();
    let mut pending_line = start + 1;
    let mut chunk = &first[open + 1..];
    let mut k = start;
    loop {
        let (body, closed) = match chunk.find(']') {
            Some(c) => (&chunk[..c], true),
            None => (chunk, false),
        };
        for (piece_idx, piece) in body.split(';').enumerate() {
            if piece_idx > 0 {
                flush(&mut rows, &mut pending, pending_line);
            }
            for tok in piece.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                if pending.is_empty() {
                    pending_line = k + 1;
                }
                let value = parse_number(tok).ok_or_else(|| {
                    Error::malformed(k + 1, format!("non-numeric token `{tok}` in mpc.{field}"))
                })?;
                pending.push(value);
            }
        }
        // A newline ends a row as well.
        flush(&mut rows, &mut pending, pending_line);
        if closed {
            break;
        }
        k += 1;
        if k >= lines.len() {
            return Err(Error::malformed(start + 1, format!("mpc.{field} is not terminated")));
        }
        chunk = lines[k];
    }
    Ok(Block {
        line: start + 1,
        rows,
    })
}

fn flush(rows: &mut Vec<(usize, Vec<f64>)>, pending: &mut Vec<f64>, line: usize) {
    if !pending.is_empty() {
        rows.push((line, std::mem::take(pending)));
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok(),
    }
}

fn require_cols(line: usize, row: &[f64], n: usize, block: &str) -> Result<()> {
    if row.len() < n {
        return Err(Error::malformed(
            line,
            format!("{block} row has {} columns, need {n}", row.len()),
        ));
    }
    Ok(())
}

fn bus_id(line: usize, v: f64) -> Result<BusId> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::malformed(line, format!("invalid bus number {v}")));
    }
    Ok(BusId(v as u32))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1.02\t0\t135\t1\t1.1\t0.9;
\t2\t1\t50\t20\t1\t-2\t1\t1\t0\t135\t1\t1.1\t0.9;  % trailing comment
\t3\t2\t10.5\t0\t0\t0\t1\t1\t0\t135\t1\t1.1\t0.9
];
mpc.gen = [
\t1\t0\t0\t0\t0\t1.02\t100\t1;
\t3\t40\t0\t0\t0\t1.01\t100\t1;
\t3\t5\t0\t0\t0\t1.01\t100\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1;
\t2\t3\t0.02\t0.2\t0\t0\t0\t0\t0.95\t3\t1;
\t1\t3\t0.02\t0.2\t0\t0\t0\t0\t0\t0\t0;
];
";

    #[test]
    fn parses_tiny_case() {
        let case = parse_matpower_case(TINY).unwrap();
        assert_eq!(case.name, "tiny");
        assert_eq!(case.buses.len(), 3);
        assert_eq!(case.branches.len(), 2);
        assert_eq!(case.generators.len(), 2);
        let b2 = &case.buses[1];
        assert!((b2.p_load - 0.5).abs() < 1e-15);
        assert!((b2.shunt_b + 0.02).abs() < 1e-15);
        assert_eq!(case.buses[2].kind, BusKind::Pv);
        assert!((case.buses[2].v_set - 1.01).abs() < 1e-15);
        assert!((case.branches[1].tap_ratio - 0.95).abs() < 1e-15);
        assert!((case.branches[1].phase_shift - 3f64.to_radians()).abs() < 1e-15);
        assert!((case.generator_at(BusId(3)).unwrap().p_set - 0.4).abs() < 1e-15);
    }

    #[test]
    fn missing_bus_block_is_malformed() {
        let text = TINY.replace("mpc.bus =", "mpc.buses =");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(Error::MalformedCase { .. })
        ));
    }

    #[test]
    fn non_numeric_token_is_malformed() {
        let text = TINY.replace("10.5", "ten");
        match parse_matpower_case(&text) {
            Err(Error::MalformedCase { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_slack_is_topology_error() {
        let text = TINY.replace("\t1\t3\t0", "\t1\t1\t0");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(Error::InvalidTopology(_))
        ));
    }

    #[test]
    fn round_trip() {
        let case = parse_matpower_case(TINY).unwrap();
        let again = parse_matpower_case(&write_matpower_case(&case)).unwrap();
        assert_eq!(case.buses.len(), again.buses.len());
        for (a, b) in case.buses.iter().zip(&again.buses) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.kind, b.kind);
            assert!((a.p_load - b.p_load).abs() < 1e-14);
            assert!((a.angle_set - b.angle_set).abs() < 1e-14);
        }
        for (a, b) in case.branches.iter().zip(&again.branches) {
            assert!((a.phase_shift - b.phase_shift).abs() < 1e-14);
            assert_eq!(a.tap_ratio, b.tap_ratio);
        }
        assert_eq!(case.generators, again.generators);
    }
}
