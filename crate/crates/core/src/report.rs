//! CSV emission and parsing for per-episode metrics and aggregates.

use crate::engine::{MetricsRow, RunResult, RunSummary};
use crate::error::{Error, Result};

/// Formats with 11 significant digits, enough to reparse within 1e-10
/// relative error. Negative zero is folded into plain zero so files diff
/// cleanly.
pub fn fmt_num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.10e}")
}

fn parse_num(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Config(format!("bad numeric CSV field `{field}`")))
}

pub fn run_csv_header(n_players: usize) -> String {
    let mut cols = vec!["seed".to_string(), "phase".into(), "episode".into()];
    cols.extend((1..=n_players).map(|i| format!("coop_prob_{i}")));
    cols.push("p_all_c".into());
    cols.push("welfare".into());
    cols.extend((1..=n_players).map(|i| format!("extra_{i}")));
    cols.push("aar_contrib".into());
    cols.push("cum_extra".into());
    cols.push("mod_greed".into());
    cols.push("mod_fear".into());
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// One per-run CSV: header plus one line per episode.
pub fn run_csv(run: &RunResult) -> String {
    let n = run.rows.first().map_or(0, |r| r.coop_probs.len());
    let mut out = run_csv_header(n);
    out.push('\n');
    for row in &run.rows {
        let mut fields = vec![
            run.seed.to_string(),
            row.phase.to_string(),
            row.episode.to_string(),
        ];
        fields.extend(row.coop_probs.iter().map(|&v| fmt_num(v)));
        fields.push(fmt_num(row.p_all_c));
        fields.push(fmt_num(row.welfare));
        fields.extend(row.extras.iter().map(|&v| fmt_num(v)));
        fields.push(fmt_num(row.aar_contrib));
        fields.push(fmt_num(row.cum_extra));
        fields.push(opt(row.mod_greed));
        fields.push(opt(row.mod_fear));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads a per-run CSV back. The player count is recovered from the header.
pub fn parse_run_csv(text: &str) -> Result<RunResult> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty per-run CSV".into()))?;
    let n = header.split(',').filter(|c| c.starts_with("coop_prob_")).count();
    if header != run_csv_header(n) {
        return Err(Error::Config(format!("unexpected per-run CSV header `{header}`")));
    }
    let mut seed = 0;
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 * n + 9 {
            return Err(Error::Config(format!(
                "CSV row has {} fields, expected {}",
                f.len(),
                2 * n + 9
            )));
        }
        seed = f[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad seed field `{}`", f[0])))?;
        let phase = f[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad phase field `{}`", f[1])))?;
        let episode = f[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad episode field `{}`", f[2])))?;
        let coop_probs = f[3..3 + n].iter().map(|s| parse_num(s)).collect::<Result<Vec<_>>>()?;
        let p_all_c = parse_num(f[3 + n])?;
        let welfare = parse_num(f[4 + n])?;
        let extras =
            f[5 + n..5 + 2 * n].iter().map(|s| parse_num(s)).collect::<Result<Vec<_>>>()?;
        let aar_contrib = parse_num(f[5 + 2 * n])?;
        let cum_extra = parse_num(f[6 + 2 * n])?;
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { parse_num(s).map(Some) }
        };
        rows.push(MetricsRow {
            phase,
            episode,
            coop_probs,
            p_all_c,
            welfare,
            extras,
            aar_contrib,
            cum_extra,
            mod_greed: parse_opt(f[7 + 2 * n])?,
            mod_fear: parse_opt(f[8 + 2 * n])?,
        });
    }
    let aar = {
        let phase1: Vec<&MetricsRow> = rows.iter().filter(|r| r.phase == 1).collect();
        if phase1.is_empty() {
            0.0
        } else {
            phase1.iter().map(|r| r.aar_contrib).sum::<f64>() / phase1.len() as f64
        }
    };
    Ok(RunResult { seed, rows, aar })
}

pub const AGGREGATE_HEADER: &str = "experiment,metric,mean,std,n_seeds";

/// Aggregate CSV: one line per summary metric. A missing std (single seed)
/// serializes as an empty field.
pub fn aggregate_csv(experiment: &str, summary: &RunSummary) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for (metric, stat) in [
        ("final_p_all_c", summary.final_p_all_c),
        ("final_welfare", summary.final_welfare),
        ("aar", summary.aar),
    ] {
        out.push_str(&format!(
            "{experiment},{metric},{},{},{}\n",
            fmt_num(stat.mean),
            opt(stat.std),
            summary.n_seeds
        ));
    }
    out
}
