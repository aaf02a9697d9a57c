//! CSV formats.
//!
//! Sweep rows: `axis,value,N,bell,p_success,correlator_<n>...` with one
//! correlator column per setting mask of the largest party count present.
//! Outcome tables: `g,n,probability` with `g` and `n` written as bit
//! strings, party 1 leftmost, rows ordered by `n` then `g`.

use std::io::{Read, Write};

use swapbell::optimize::CurvePoint;
use swapbell::OutcomeTable;

use crate::CliError;

const SIGNIFICANT: i32 = 12;

/// `v` with 12 significant digits, positional where that stays short.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exponent = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        let decimals = (SIGNIFICANT - 1 - exponent).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{:.*e}", (SIGNIFICANT - 1) as usize, v)
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Config(format!("CSV: {e}"))
}

/// Writes sweep rows. Rows keep the order given.
pub fn write_sweep<W: Write>(out: W, axis: &str, rows: &[CurvePoint]) -> Result<(), CliError> {
    let width = rows.iter().map(|r| r.correlators.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["axis", "value", "N", "bell", "p_success"].map(String::from).to_vec();
    header.extend((0..width).map(|n| format!("correlator_{n}")));
    w.write_record(&header).map_err(csv_error)?;
    for row in rows {
        let mut rec = vec![
            axis.to_string(),
            format_sig(row.value),
            row.parties.to_string(),
            format_sig(row.bell),
            format_sig(row.p_success),
        ];
        rec.extend((0..width).map(|n| row.correlators.get(n).map(|&c| format_sig(c)).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| CliError::Config(format!("write failed: {e}")))
}

fn bits(value: usize, parties: usize) -> String {
    (0..parties).map(|p| if value >> p & 1 == 1 { '1' } else { '0' }).collect()
}

fn parse_bits(s: &str) -> Option<usize> {
    s.chars().enumerate().try_fold(0usize, |acc, (p, c)| match c {
        '0' => Some(acc),
        '1' => Some(acc | 1 << p),
        _ => None,
    })
}

pub fn write_outcomes<W: Write>(out: W, table: &OutcomeTable) -> Result<(), CliError> {
    let n = table.parties();
    let size = 1usize << n;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g", "n", "probability"]).map_err(csv_error)?;
    for s in 0..size {
        for g in 0..size {
            w.write_record([bits(g, n), bits(s, n), format_sig(table.get(g, s))])
                .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| CliError::Config(format!("write failed: {e}")))
}

/// Reads an outcome table; every `(g, n)` pair must appear exactly once.
pub fn read_outcomes<R: Read>(input: R) -> Result<OutcomeTable, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["g", "n", "probability"] {
        return Err(CliError::Config(format!("expected header g,n,probability, got {headers:?}")));
    }
    let mut parties = None;
    let mut entries = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let bad = |what: &str| CliError::Config(format!("row {}: {what}", line + 2));
        let (g, n, p) = (&rec[0], &rec[1], &rec[2]);
        let width = g.len();
        if width == 0 || width > 8 || n.len() != width {
            return Err(bad("outcome and setting strings must have equal length 1..=8"));
        }
        match parties {
            None => parties = Some(width),
            Some(w) if w != width => return Err(bad("inconsistent party count")),
            _ => {}
        }
        let g = parse_bits(g).ok_or_else(|| bad("outcome must be a 0/1 string"))?;
        let s = parse_bits(n).ok_or_else(|| bad("setting must be a 0/1 string"))?;
        let p: f64 = p.parse().map_err(|_| bad("probability is not a number"))?;
        entries.push((s, g, p));
    }
    let parties = parties.ok_or_else(|| CliError::Config("outcome table is empty".into()))?;
    let size = 1usize << parties;
    let mut probs = vec![f64::NAN; size * size];
    for (s, g, p) in entries {
        let slot = &mut probs[s * size + g];
        if !slot.is_nan() {
            return Err(CliError::Config(format!(
                "duplicate entry for g = {}, n = {}",
                bits(g, parties),
                bits(s, parties)
            )));
        }
        *slot = p;
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(CliError::Config(format!("outcome table needs all {} (g, n) entries", size * size)));
    }
    OutcomeTable::new(parties, probs).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(1.0566312345678), "1.05663123457");
        assert_eq!(format_sig(0.00505), "0.00505000000000");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.25), "-0.250000000000");
        assert_eq!(format_sig(1e-7), "1.00000000000e-7");
        assert_eq!(format_sig(2.5e-4).parse::<f64>().unwrap(), 2.5e-4);
    }

    #[test]
    fn bit_strings_put_party_one_first() {
        assert_eq!(bits(0b001, 3), "100");
        assert_eq!(parse_bits("100"), Some(1));
        assert_eq!(parse_bits("011"), Some(0b110));
        assert_eq!(parse_bits("0x1"), None);
    }

    #[test]
    fn outcome_csv_round_trip() {
        let table = OutcomeTable::deterministic(&[[true, false], [false, true]]).unwrap();
        let mut buf = Vec::new();
        write_outcomes(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("g,n,probability\n00,00,0\n10,00,1"));
        assert_eq!(read_outcomes(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn malformed_outcome_csv() {
        let cases = [
            "",
            "a,b,c\n",
            "g,n,probability\n0,0,1\n",
            "g,n,probability\n0,0,0.5\n1,0,0.5\n0,1,0.5\n1,1,0.5\n0,1,0.5\n",
            "g,n,probability\n0,0,x\n",
            "g,n,probability\n0,00,1\n",
            "g,n,probability\n2,0,1\n",
            "g,n,probability\n0,0,0.7\n1,0,0.7\n0,1,0.3\n1,1,0.7\n",
        ];
        for c in cases {
            let err = read_outcomes(c.as_bytes()).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{c:?}: {err}");
        }
        let ok = "g,n,probability\n0,0,0.5\n1,0,0.5\n0,1,0.25\n1,1,0.75\n";
        assert_eq!(read_outcomes(ok.as_bytes()).unwrap().parties(), 1);
    }
}
