//! CSV serialization. Reals use 17 significant digits so files are bit-stable
//! and round-trip exactly.

use crate::cem::SearchDistribution;
use crate::error::{Error, Result};
use crate::search::{EvalEntry, RunRecord};

pub const RECORDS_HEADER: &str =
    "generation,nre_used,best_score_so_far,generation_mean_score,mu_norm,var_trace_mean,diversity";

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// One row per record. `wall_time` is left out so reruns are byte-identical;
/// see [`timings_csv`].
pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{RECORDS_HEADER}\n");
    for r in records {
        out += &format!(
            "{},{},{},{},{},{},{}\n",
            r.generation,
            r.nre_used,
            real(r.best_score_so_far),
            real(r.generation_mean_score),
            opt(r.mu_norm),
            opt(r.var_trace_mean),
            opt(r.diversity)
        );
    }
    out
}

pub fn timings_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("generation,wall_time\n");
    for r in records {
        out += &format!("{},{}\n", r.generation, real(r.wall_time));
    }
    out
}

pub fn evals_csv(log: &[EvalEntry]) -> String {
    let mut out = String::from("eval_index,generation,score\n");
    for e in log {
        out += &format!("{},{},{}\n", e.eval_index, e.generation, real(e.score));
    }
    out
}

pub fn distribution_csv(d: &SearchDistribution) -> String {
    let mut out = String::from("index,mu,sigma2\n");
    for (i, (m, s)) in d.mu.iter().zip(&d.sigma2).enumerate() {
        out += &format!("{i},{},{}\n", real(*m), real(*s));
    }
    out
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    parse_real(field).map(Some)
}

fn parse_real(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("not a number: {field:?}")))
}

/// Inverse of [`records_csv`]; `wall_time` reads back as 0.
pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(Error::InvalidArgument("records.csv header mismatch".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::InvalidArgument(format!("bad records row {line:?}")));
            }
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::InvalidArgument(format!("not an integer: {s:?}")))
            };
            Ok(RunRecord {
                generation: int(f[0])? as usize,
                nre_used: int(f[1])?,
                best_score_so_far: parse_real(f[2])?,
                generation_mean_score: parse_real(f[3])?,
                mu_norm: parse_opt(f[4])?,
                var_trace_mean: parse_opt(f[5])?,
                diversity: parse_opt(f[6])?,
                wall_time: 0.0,
            })
        })
        .collect()
}

/// `nre_used` and `best_score_so_far` never decrease.
pub fn check_monotone(records: &[RunRecord]) -> Result<()> {
    for w in records.windows(2) {
        if w[1].nre_used < w[0].nre_used || w[1].best_score_so_far < w[0].best_score_so_far {
            return Err(Error::InvalidArgument(format!(
                "records not monotone between generations {} and {}",
                w[0].generation, w[1].generation
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(g: usize, nre: u64, best: f64) -> RunRecord {
        RunRecord {
            generation: g,
            nre_used: nre,
            best_score_so_far: best,
            generation_mean_score: best - 1.0 / 3.0,
            mu_norm: Some(0.1),
            var_trace_mean: None,
            diversity: Some(std::f64::consts::PI),
            wall_time: 1.5,
        }
    }

    #[test]
    fn real_has_17_significant_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(-336.5), "-3.3650000000000000e2");
        for v in [1.0 / 3.0, -1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn records_roundtrip() {
        let rs = vec![rec(0, 10, -5.0), rec(1, 20, -4.25)];
        let text = records_csv(&rs);
        assert!(text.starts_with(RECORDS_HEADER));
        assert!(!text.contains("1.5"));
        let back = parse_records_csv(&text).unwrap();
        for (a, b) in rs.iter().zip(&back) {
            assert_eq!(RunRecord { wall_time: 0.0, ..a.clone() }, *b);
        }
        check_monotone(&back).unwrap();
        assert!(check_monotone(&[rec(0, 10, -4.0), rec(1, 20, -5.0)]).is_err());
        assert!(check_monotone(&[rec(0, 20, -4.0), rec(1, 10, -4.0)]).is_err());
    }
}
