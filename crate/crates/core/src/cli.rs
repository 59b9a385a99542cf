//! Command-line front end. Exit codes: 0 success, 1 failed check,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::config::{set_json_path, ExperimentConfig};
use crate::bench::experiment::{run_experiment, trajectories_to_reach, ExperimentOutput};
use crate::bench::oracle::{oracle_check, ORACLE_TOL};
use crate::bench::output::{emit_csv, emit_svg, CsvMeta, XAxis};
use crate::error::{Error, Result};
use crate::mdp::BoyanChain;

/// RMSE level used by `sweep` to report how fast each curve gets there.
const SWEEP_THRESHOLD: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "tdeval", version, about = "Linear TD-family policy evaluation on the Boyan chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write per-curve CSVs and SVG charts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the incremental engine against the dense batch oracle.
    OracleCheck {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
    /// Print the exact state values of a Boyan chain as CSV.
    TrueValues {
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
    /// Re-run a config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// JSON path of the parameter, e.g. `algorithms[0].alpha`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, each parsed as JSON (commas inside
        /// `{}` or `[]` do not split).
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Also write the full CSVs of each run under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out: dir } => cmd_run(&config, dir.as_deref(), out),
        Command::OracleCheck { n, seed, cases } => cmd_oracle(n, seed, cases, out),
        Command::TrueValues { states, gamma } => cmd_true_values(states, gamma, out),
        Command::Sweep { config, param, values, out: dir } => {
            cmd_sweep(&config, &param, &split_values(&values), dir.as_deref(), out)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn cmd_run(config_path: &Path, dir: Option<&Path>, out: &mut impl Write) -> Result<i32> {
    let config = ExperimentConfig::load(config_path)?;
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    let result = run_experiment(&config)?;
    write_outputs(&result, &dir)?;
    for (label, records) in &result.curves {
        let last = records.last().expect("every curve has its initial record");
        let _ = writeln!(out, "{label}: {} trajectories, rmse {:.4}, {} macs", last.trajectories, last.rmse, last.macs);
    }
    let _ = writeln!(out, "wrote {}", dir.display());
    Ok(0)
}

/// Writes `<label>.csv` per curve and one `rmse_vs_<axis>.svg` per axis.
pub fn write_outputs(result: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = CsvMeta {
        seed: result.seed,
        config_hash: result.config_hash.clone(),
        stream_checksum: result.stream_checksum.clone(),
    };
    for (label, records) in &result.curves {
        emit_csv(records, &meta, &dir.join(format!("{label}.csv")))?;
    }
    let all: Vec<_> = result.records().cloned().collect();
    for axis in XAxis::ALL {
        emit_svg(&all, axis, &dir.join(format!("rmse_vs_{}.svg", axis.name())))?;
    }
    Ok(())
}

fn cmd_oracle(n: usize, seed: u64, cases: usize, out: &mut impl Write) -> Result<i32> {
    if n == 0 {
        return Err(Error::InvalidConfig("--n must be at least 1".into()));
    }
    let report = oracle_check(n, seed, cases)?;
    let _ = writeln!(
        out,
        "oracle-check: {} cases, worst relative error {:.3e}, {} failures (tolerance {ORACLE_TOL:e})",
        report.cases,
        report.worst_error,
        report.failures.len()
    );
    if report.failures.is_empty() {
        Ok(0)
    } else {
        let _ = writeln!(out, "failing cases: {:?}", report.failures);
        Ok(1)
    }
}

fn cmd_true_values(states: usize, gamma: f64, out: &mut impl Write) -> Result<i32> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("--gamma {gamma} is outside [0, 1]")));
    }
    let chain = BoyanChain::new(states, 1)?;
    let values = chain.exact_values(gamma);
    let _ = writeln!(out, "state,value");
    for (state, v) in values.iter().enumerate().skip(1) {
        let _ = writeln!(out, "{state},{v}");
    }
    Ok(0)
}

fn cmd_sweep(
    config_path: &Path,
    param: &str,
    values: &[String],
    dir: Option<&Path>,
    out: &mut impl Write,
) -> Result<i32> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("--values must list at least one value".into()));
    }
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let base: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::config("", format!("{}: {e}", config_path.display())))?;
    let _ = writeln!(out, "value,curve,final_rmse,mean_rmse,trajectories_to_rmse_{SWEEP_THRESHOLD}");
    for raw in values {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
        let mut doc = base.clone();
        set_json_path(&mut doc, param, value)?;
        let config = ExperimentConfig::from_json(&doc.to_string())?;
        let result = run_experiment(&config)?;
        if let Some(dir) = dir {
            write_outputs(&result, &dir.join(format!("{}={}", sanitize(param), sanitize(raw))))?;
        }
        for (label, records) in &result.curves {
            let last = records.last().expect("every curve has its initial record");
            let mean = records.iter().map(|r| r.rmse).sum::<f64>() / records.len() as f64;
            let reach = trajectories_to_reach(records, SWEEP_THRESHOLD).map_or("never".to_owned(), |t| t.to_string());
            let _ = writeln!(out, "{raw},{label},{:.6},{mean:.6},{reach}", last.rmse);
        }
    }
    Ok(0)
}

/// Splits on commas that are not nested inside brackets or braces.
fn split_values(list: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    for c in list.chars() {
        match c {
            '{' | '[' => depth += 1,
            '}' | ']' => depth -= 1,
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut current).trim().to_owned());
                continue;
            }
            _ => {}
        }
        current.push(c);
    }
    items.push(current.trim().to_owned());
    items.retain(|s| !s.is_empty());
    items
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("tdeval").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn true_values_rows() {
        let (code, out, _) = call(&["true-values", "--states", "4", "--gamma", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out, "state,value\n1,-2\n2,-4\n3,-6\n4,-8\n");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["true-values"]).0, 2);
        assert_eq!(call(&["true-values", "--states", "1"]).0, 2);
        assert_eq!(call(&["true-values", "--states", "4", "--gamma", "2"]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("oracle-check"));
    }

    #[test]
    fn missing_config_names_the_path() {
        let (code, _, err) = call(&["run", "definitely-missing.json"]);
        assert_eq!(code, 2);
        assert!(err.contains("definitely-missing.json"), "{err}");
    }

    #[test]
    fn oracle_check_small() {
        let (code, out, _) = call(&["oracle-check", "--n", "3", "--cases", "10", "--seed", "5"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("0 failures"));
    }

    #[test]
    fn sweep_values_split_at_top_level() {
        assert_eq!(split_values("0.1, 0.2"), vec!["0.1", "0.2"]);
        assert_eq!(
            split_values(r#"{"alpha0": 1, "c": 2},3"#),
            vec![r#"{"alpha0": 1, "c": 2}"#.to_owned(), "3".to_owned()]
        );
        assert!(split_values("").is_empty());
    }

    #[test]
    fn run_and_sweep_write_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("c.json");
        fs::write(
            &config,
            r#"{"environment": {"n_states": 8, "feature_spacing": 4}, "lambda": 0.5,
                "n_trajectories": 4, "seed": 2,
                "algorithms": [{"kind": "td", "label": "td", "alpha": 0.1},
                               {"kind": "lstd", "label": "lstd"}]}"#,
        )
        .unwrap();
        let out_dir = dir.path().join("out");
        let (code, _, err) = call(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        for name in ["td.csv", "lstd.csv", "rmse_vs_trajectories.svg", "rmse_vs_macs.svg", "rmse_vs_wall_seconds.svg"] {
            assert!(out_dir.join(name).exists(), "{name}");
        }

        let (code, out, err) =
            call(&["sweep", config.to_str().unwrap(), "--param", "algorithms[0].alpha", "--values", "0.01,0.2"]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(out.lines().count(), 1 + 2 * 2);
        assert!(out.lines().nth(1).unwrap().starts_with("0.01,td,"));

        let (code, _, err) =
            call(&["sweep", config.to_str().unwrap(), "--param", "algorithms[0].alpha", "--values", "-1"]);
        assert_eq!(code, 2);
        assert!(err.contains("algorithms[0].alpha"), "{err}");

        let (code, _, _) = call(&["sweep", config.to_str().unwrap(), "--param", "seed", "--values", " , "]);
        assert_eq!(code, 2);
    }
}
