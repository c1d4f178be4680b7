use std::io::{BufRead, Write};
use std::path::Path;

use super::experiment::{ResultRow, ResultTable};
use crate::error::{Error, Result};

pub const RESULTS_CSV_HEADER: &str =
    "objective,d,kappa,alpha_rule,seed,cr_hat,stderr,scaled_rate,stop_reason,wall_ms";

/// Seed column value of aggregate rows.
pub const AGGREGATE_SEED: &str = "aggregate";

/// Write the table; floats use the shortest representation that parses back
/// to the same value.
pub fn write_csv<W: Write>(table: &ResultTable, mut w: W) -> Result<()> {
    writeln!(w, "{RESULTS_CSV_HEADER}")?;
    for r in &table.rows {
        let seed = r
            .seed
            .map_or_else(|| AGGREGATE_SEED.to_string(), |s| s.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{:?},{:?},{:?},{},{:.3}",
            r.objective,
            r.d,
            r.kappa,
            r.alpha_rule,
            seed,
            r.cr_hat,
            r.stderr,
            r.scaled_rate,
            r.stop_reason,
            r.wall_ms
        )?;
    }
    Ok(())
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<ResultTable> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some(RESULTS_CSV_HEADER) {
        return Err(Error::invalid("missing or unexpected CSV header"));
    }
    let mut table = ResultTable::default();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::invalid(format!(
                "row {} has {} fields",
                i + 1,
                f.len()
            )));
        }
        let bad = |what: &str| Error::invalid(format!("row {}: bad {what}", i + 1));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        table.rows.push(ResultRow {
            objective: f[0].to_string(),
            d: f[1].parse().map_err(|_| bad("d"))?,
            kappa: f[2].parse().map_err(|_| bad("kappa"))?,
            alpha_rule: f[3].parse()?,
            seed: if f[4] == AGGREGATE_SEED {
                None
            } else {
                Some(f[4].parse().map_err(|_| bad("seed"))?)
            },
            cr_hat: num(f[5], "cr_hat")?,
            stderr: num(f[6], "stderr")?,
            scaled_rate: num(f[7], "scaled_rate")?,
            stop_reason: f[8].to_string(),
            wall_ms: num(f[9], "wall_ms")?,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AlphaRule;

    fn row(seed: Option<u64>, cr: f64) -> ResultRow {
        ResultRow {
            objective: "h1".into(),
            d: 10,
            kappa: 2,
            alpha_rule: AlphaRule::Sqrt,
            seed,
            cr_hat: cr,
            stderr: 1.0 / 3.0,
            scaled_rate: f64::NAN,
            stop_reason: "budget".into(),
            wall_ms: 1.5,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&ResultTable::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{RESULTS_CSV_HEADER}\n")
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let table = ResultTable {
            rows: vec![
                row(Some(u64::MAX), 0.1 + 0.2),
                row(None, 1e-300),
                row(Some(0), f64::NAN),
            ],
        };
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        for (a, b) in table.rows.iter().zip(&back.rows) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.cr_hat.to_bits(), b.cr_hat.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
            assert!(b.scaled_rate.is_nan());
            assert_eq!((a.d, a.kappa, a.alpha_rule), (b.d, b.kappa, b.alpha_rule));
        }
    }
}
