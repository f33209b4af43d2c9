//! The four subcommands. Each returns the process exit code on success and
//! maps failures through the library's error codes: 2 for anything the
//! caller can fix at the command line, 1 for runtime and check failures.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use mechsim::config;
use mechsim::engine::{run_experiment, ExperimentConfig, RunSummary, Stat};
use mechsim::report::{aggregate_csv, fmt_num, run_csv, AGGREGATE_HEADER};
use mechsim::reproduce::{
    comparison_csv, fig1_config, fig1_panel_csv, fig2_arms, t4_arms, t5_arms, Arm, MeasuredArm,
};
use mechsim::verify::{run_all, VerifyOptions};
use mechsim::{Error, Result};

/// Accepts `--key=value` or `key=value`; returns the key and raw value.
pub fn parse_override(raw: &str) -> Result<(String, String)> {
    let body = raw.strip_prefix("--").unwrap_or(raw);
    match body.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::Config(format!(
            "override `{raw}` is not of the form --key=value"
        ))),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            config::parse(&text)
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_summary(label: &str, s: &RunSummary) {
    let std_of = |st: &Stat| st.std.map(fmt_num).unwrap_or_else(|| "-".into());
    println!(
        "{label}: final_p_all_c {} (std {}), final_welfare {} (std {}), aar {} (std {}), seeds {}",
        fmt_num(s.final_p_all_c.mean),
        std_of(&s.final_p_all_c),
        fmt_num(s.final_welfare.mean),
        std_of(&s.final_welfare),
        fmt_num(s.aar.mean),
        std_of(&s.aar),
        s.n_seeds
    );
}

/// Aggregate rows for one experiment without the header, for stacked files.
fn aggregate_rows(label: &str, summary: &RunSummary) -> String {
    let csv = aggregate_csv(label, summary);
    csv.lines().skip(1).map(|l| format!("{l}\n")).collect()
}

pub fn cmd_run(config: Option<&Path>, overrides: &[String], out_dir: &Path) -> Result<i32> {
    let mut cfg = load_config(config)?;
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        config::apply_override(&mut cfg, &key, &value)?;
    }
    cfg.validate()?;
    let result = run_experiment(&cfg)?;

    fs::create_dir_all(out_dir)?;
    for run in &result.runs {
        write_file(&out_dir.join(format!("run_seed{}.csv", run.seed)), &run_csv(run))?;
    }
    let label = format!("run_{}", cfg.game.preset);
    write_file(&out_dir.join("aggregate.csv"), &aggregate_csv(&label, &result.summary))?;
    print_summary(&label, &result.summary);
    Ok(0)
}

fn run_arms(arms: Vec<Arm>) -> Result<Vec<(Arm, RunSummary)>> {
    arms.into_par_iter()
        .map(|arm| {
            let result = run_experiment(&arm.cfg)?;
            Ok((arm, result.summary))
        })
        .collect()
}

fn reproduce_table(target: &str, arms: Vec<Arm>, out_dir: &Path) -> Result<i32> {
    let results = run_arms(arms)?;
    let measured: Vec<MeasuredArm> = results
        .iter()
        .map(|(arm, summary)| MeasuredArm {
            game: arm.game,
            condition: arm.condition,
            summary: summary.clone(),
        })
        .collect();
    let mut agg = String::from(AGGREGATE_HEADER);
    agg.push('\n');
    for (arm, summary) in &results {
        let label = format!("{target}_{}_{}", arm.game, arm.condition);
        agg.push_str(&aggregate_rows(&label, summary));
        print_summary(&label, summary);
    }
    write_file(&out_dir.join(format!("{target}_aggregates.csv")), &agg)?;
    write_file(
        &out_dir.join(format!("{target}_comparison.csv")),
        &comparison_csv(target, &measured)?,
    )?;
    Ok(0)
}

pub fn cmd_reproduce(target: &str, out_dir: &Path) -> Result<i32> {
    fs::create_dir_all(out_dir)?;
    match target {
        "t4" => reproduce_table(target, t4_arms(), out_dir),
        "t5" => reproduce_table(target, t5_arms(), out_dir),
        "fig1" => {
            let cfg = fig1_config();
            let csv = fig1_panel_csv(&cfg, cfg.seeds[0])?;
            write_file(&out_dir.join("fig1_trace.csv"), &csv)?;
            let last: Vec<&str> = csv.lines().last().unwrap_or_default().split(',').collect();
            if last.len() >= 11 {
                println!(
                    "fig1: final coop_probs ({}, {}), final mod_greed {}, mod_fear {}",
                    last[1], last[2], last[9], last[10]
                );
            }
            Ok(0)
        }
        "fig2" => {
            let results = run_arms(fig2_arms())?;
            let mut agg = String::from(AGGREGATE_HEADER);
            agg.push('\n');
            for (arm, summary) in &results {
                let label = format!("fig2_{}", arm.condition);
                agg.push_str(&aggregate_rows(&label, summary));
                print_summary(&label, summary);
            }
            // The ten-player story is about per-player cooperation, which the
            // product over all ten players hides; add it as an extra metric.
            for (arm, _) in &results {
                let result = run_experiment(&arm.cfg)?;
                let per_run: Vec<f64> = result
                    .runs
                    .iter()
                    .map(|r| {
                        let last = r.rows.last().expect("runs have rows");
                        last.coop_probs.iter().sum::<f64>() / last.coop_probs.len() as f64
                    })
                    .collect();
                let stat = Stat::from_values(&per_run)?;
                let label = format!("fig2_{}", arm.condition);
                agg.push_str(&format!(
                    "{label},mean_final_coop,{},{},{}\n",
                    fmt_num(stat.mean),
                    stat.std.map(fmt_num).unwrap_or_default(),
                    per_run.len()
                ));
                println!("{label}: mean_final_coop {}", fmt_num(stat.mean));
            }
            write_file(&out_dir.join("fig2_aggregates.csv"), &agg)?;
            Ok(0)
        }
        other => Err(Error::Config(format!(
            "unknown reproduce target `{other}`; expected t4, t5, fig1, fig2"
        ))),
    }
}

pub fn cmd_verify(opts: &VerifyOptions) -> i32 {
    let results = run_all(opts);
    let mut failures = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    println!("{}/{} checks passed", results.len() - failures, results.len());
    if failures == 0 {
        0
    } else {
        1
    }
}

/// One `key=v1,v2,...` sweep axis.
pub fn parse_spec(raw: &str) -> Result<(String, Vec<String>)> {
    let (key, joined) = parse_override(raw)?;
    let values: Vec<String> =
        joined.split(',').filter(|v| !v.is_empty()).map(str::to_string).collect();
    if values.is_empty() {
        return Err(Error::Config(format!("sweep spec `{raw}` lists no values")));
    }
    Ok((key, values))
}

/// Cartesian product over the axes, in spec order.
pub fn grid(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for point in &points {
            for v in values {
                let mut p = point.clone();
                p.push((key.clone(), v.clone()));
                next.push(p);
            }
        }
        points = next;
    }
    points
}

pub fn cmd_sweep(config: Option<&Path>, specs: &[String], out_dir: &Path) -> Result<i32> {
    if specs.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one key=v1,v2,... spec".into(),
        ));
    }
    let base = load_config(config)?;
    let axes: Vec<(String, Vec<String>)> =
        specs.iter().map(|s| parse_spec(s)).collect::<Result<_>>()?;
    for (i, (key, _)) in axes.iter().enumerate() {
        if axes[..i].iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("sweep key `{key}` listed twice")));
        }
    }

    let points = grid(&axes);
    let results: Vec<(String, RunSummary)> = points
        .par_iter()
        .map(|assignment| {
            let mut cfg = base.clone();
            for (key, value) in assignment {
                config::apply_override(&mut cfg, key, value)?;
            }
            cfg.validate()?;
            let label = format!(
                "sweep_{}",
                assignment
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(";")
            );
            let result = run_experiment(&cfg)?;
            Ok((label, result.summary))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(out_dir)?;
    let mut agg = String::from(AGGREGATE_HEADER);
    agg.push('\n');
    for (label, summary) in &results {
        agg.push_str(&aggregate_rows(label, summary));
        print_summary(label, summary);
    }
    write_file(&out_dir.join("sweep_aggregate.csv"), &agg)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_syntax() {
        assert_eq!(
            parse_override("--planner.bound=5").unwrap(),
            ("planner.bound".into(), "5".into())
        );
        assert_eq!(parse_override("seeds=1,2").unwrap(), ("seeds".into(), "1,2".into()));
        assert!(parse_override("planner.bound").is_err());
        assert!(parse_override("--=5").is_err());
    }

    #[test]
    fn sweep_grid_is_cartesian_in_spec_order() {
        let axes = vec![
            parse_spec("--planner.bound=2,3").unwrap(),
            parse_spec("learner.step_size=0.01").unwrap(),
        ];
        let points = grid(&axes);
        assert_eq!(points.len(), 2);
        assert_eq!(points[0][0].1, "2");
        assert_eq!(points[1][0].1, "3");
        assert!(points.iter().all(|p| p[1] == ("learner.step_size".into(), "0.01".into())));
    }

    #[test]
    fn sweep_spec_rejects_empty_values() {
        assert!(parse_spec("--planner.bound=").is_err());
        assert!(parse_spec("--planner.bound=,,").is_err());
    }
}
