//! Command line, configuration files and result files.
//!
//! Output layout for one invocation: `manifest.json` (resolved parameters,
//! grids, solver settings and wall times), one `<experiment>.csv` per
//! experiment and `verdicts.json`. CSV files hold no timing data, so two runs
//! with the same configuration produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    exp_interaction, run_experiment, Ansatz, Experiment, ExperimentOutput, Params, Tolerances,
};
use crate::spectral::{Field, SpectralGrid};

/// Bumped whenever a CSV column set or the manifest layout changes.
pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const OUT_ENV: &str = "BO_WAVES_OUT";

#[derive(Debug, Parser)]
#[command(name = "bo-waves", version, about = "Benjamin-Ono wave-packet experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment, or `all` of them.
    Run(RunArgs),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// hsnorm-limit, commutator, residual, ulow, ansatz-error, separation,
    /// soliton-check or all.
    pub experiment: String,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated frequency ladder.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Comma-separated carrier phases.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    /// Comma-separated sample times.
    #[arg(long = "t-grid", value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    /// Half-length of the periodic box, overriding the grid policy.
    #[arg(long = "L")]
    pub half_length: Option<f64>,
    /// Number of grid nodes, overriding the grid policy.
    #[arg(long = "N")]
    pub size: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Output directory (default: $BO_WAVES_OUT, then ./bo-waves-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Verdict tolerance as name=value; `--tol-<name> <value>` is accepted too.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
}

/// Rewrites `--tol-<name> v` and `--tol-<name>=v` into `--tol <name>=v`.
pub fn normalize_args<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = args.into_iter().peekable();
    while let Some(arg) = iter.next() {
        match arg.strip_prefix("--tol-") {
            Some(rest) => {
                out.push("--tol".to_string());
                match rest.split_once('=') {
                    Some((name, value)) => out.push(format!("{name}={value}")),
                    None => {
                        let value = iter.next().unwrap_or_default();
                        out.push(format!("{rest}={value}"));
                    }
                }
            }
            None => out.push(arg),
        }
    }
    out
}

/// Keys accepted in a TOML configuration file.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub s: Option<f64>,
    pub omega: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    #[serde(rename = "L")]
    pub half_length: Option<f64>,
    #[serde(rename = "N")]
    pub size: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub ansatz: Option<Vec<Ansatz>>,
    pub low_grid_size: Option<usize>,
    pub defect_step: Option<f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

/// What to run, with fully resolved parameters.
#[derive(Debug, Clone)]
pub struct Plan {
    pub experiments: Vec<(Experiment, Params)>,
    pub out: PathBuf,
}

fn parse_tolerance(entry: &str) -> Result<(String, f64)> {
    let (name, value) = entry
        .split_once('=')
        .ok_or_else(|| Error::config(format!("tolerance '{entry}' must look like name=value")))?;
    let value = value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::config(format!("tolerance {name} has a non-numeric value '{value}'")))?;
    Ok((name.trim().to_string(), value))
}

/// Merges built-in references, the config file and flags (flags win).
pub fn resolve(args: &RunArgs) -> Result<Plan> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let run_all = args.experiment == "all";
    let experiments: Vec<Experiment> = if run_all {
        Experiment::ALL.to_vec()
    } else {
        vec![args.experiment.parse()?]
    };

    let mut tolerances = Tolerances::default();
    for (name, value) in &file.tolerances {
        tolerances.set(name, *value)?;
    }
    for entry in &args.tol {
        let (name, value) = parse_tolerance(entry)?;
        tolerances.set(&name, value)?;
    }

    let delta = args.delta.or(file.delta);
    let s = args.s.or(file.s);
    let mut planned = Vec::new();
    for e in experiments {
        let mut p = Params::reference(e);
        let packet_based = e != Experiment::SolitonCheck;
        if packet_based && !run_all {
            // A single experiment states its own regularity point.
            p.delta = delta.ok_or_else(|| {
                Error::config(format!("missing required field 'delta' for {e}"))
            })?;
            p.s = s.ok_or_else(|| Error::config(format!("missing required field 's' for {e}")))?;
        } else {
            p.delta = delta.unwrap_or(p.delta);
            p.s = s.unwrap_or(p.s);
        }
        if let Some(l) = args.lambda.clone().or(file.lambda.clone()) {
            p.lambdas = l;
        }
        if let Some(w) = args.omega.or(file.omega) {
            p.omega = w;
        }
        if let Some(a) = args.alpha.clone().or(file.alpha.clone()) {
            p.alphas = a;
        }
        if let Some(t) = args.t_grid.clone().or(file.t_grid.clone()) {
            p.t_grid = t;
        }
        if let Some(a) = file.ansatz.clone() {
            p.ansatz = a;
        }
        p.grid.half_length = args.half_length.or(file.half_length);
        p.grid.size = args.size.or(file.size);
        if let Some(n) = file.low_grid_size {
            p.grid.low_size = n;
        }
        if let Some(h) = file.defect_step {
            p.defect_step = h;
        }
        p.dt = args.dt.or(file.dt);
        p.tolerances = tolerances.clone();
        p.validate(e)?;
        planned.push((e, p));
    }

    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("bo-waves-out"));
    Ok(Plan {
        experiments: planned,
        out,
    })
}

/// Runs a plan. Interaction experiments with identical parameters share
/// their solves. Stops at the first error and returns what finished.
pub fn execute(plan: &Plan) -> (Vec<(Params, ExperimentOutput)>, Option<Error>) {
    let mut done: Vec<(Params, ExperimentOutput)> = Vec::new();
    let mut pending: Option<(Params, ExperimentOutput)> = None;
    for (e, p) in &plan.experiments {
        if let Some((cached_params, cached)) = pending.take() {
            if cached.experiment == *e && cached_params == *p {
                done.push((cached_params, cached));
                continue;
            }
        }
        log::info!("running {e}");
        let result = if e.is_interaction() {
            exp_interaction(p).map(|(ansatz, separation)| {
                let (mine, other) = match e {
                    Experiment::AnsatzError => (ansatz, separation),
                    _ => (separation, ansatz),
                };
                pending = Some((p.clone(), other));
                mine
            })
        } else {
            run_experiment(*e, p)
        };
        match result {
            Ok(out) => done.push((p.clone(), out)),
            Err(err) => return (done, Some(err)),
        }
    }
    (done, None)
}

/// Formats a record set as CSV. Numbers use `{:.16e}`.
pub fn to_csv(output: &ExperimentOutput) -> String {
    let mut text = String::new();
    let Some(first) = output.records.first() else {
        return text;
    };
    let columns = first.columns();
    text.push_str(&columns.join(","));
    text.push('\n');
    for record in &output.records {
        debug_assert_eq!(record.columns(), columns);
        let cells: Vec<String> = record
            .labels
            .iter()
            .map(|(_, v)| v.clone())
            .chain(record.values.iter().map(|(_, v)| format!("{v:.16e}")))
            .collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    experiment: &'a str,
    csv: String,
    params: &'a Params,
    points: &'a [crate::experiments::PointInfo],
}

#[derive(Serialize)]
struct Manifest<'a> {
    format_version: u32,
    tool_version: &'static str,
    experiments: Vec<ManifestEntry<'a>>,
    error: Option<String>,
}

#[derive(Serialize)]
struct VerdictEntry<'a> {
    experiment: &'a str,
    #[serde(flatten)]
    verdict: &'a crate::experiments::Verdict,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes CSVs, `verdicts.json` and `manifest.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    results: &[(Params, ExperimentOutput)],
    error: Option<&Error>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut verdicts = Vec::new();
    for (params, out) in results {
        let csv = format!("{}.csv", out.experiment.name());
        write_file(&dir.join(&csv), &to_csv(out))?;
        entries.push(ManifestEntry {
            experiment: out.experiment.name(),
            csv,
            params,
            points: &out.points,
        });
        verdicts.extend(out.verdicts.iter().map(|verdict| VerdictEntry {
            experiment: out.experiment.name(),
            verdict,
        }));
    }
    write_file(&dir.join("verdicts.json"), &to_json(&verdicts))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        experiments: entries,
        error: error.map(|e| e.to_string()),
    };
    write_file(&dir.join("manifest.json"), &to_json(&manifest))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// Entry point shared by the binary and tests. Returns the exit code.
pub fn run_cli<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let Command::Run(args) = cli.command;
    let plan = match resolve(&args) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (results, error) = execute(&plan);
    if let Err(e) = write_outputs(&plan.out, &results, error.as_ref()) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    for (_, out) in &results {
        for v in &out.verdicts {
            println!(
                "{} {:<34} measured {:>12.5e}  target {:>12.5e}  {}",
                if v.passed { "PASS" } else { "FAIL" },
                format!("{}/{}", out.experiment, v.criterion),
                v.measured,
                v.target,
                v.detail
            );
        }
    }
    println!("results written to {}", plan.out.display());
    match error {
        Some(e @ Error::Divergence { .. }) => {
            eprintln!("error: {e}");
            EXIT_DIVERGENCE
        }
        Some(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        None if results.iter().all(|(_, o)| o.passed()) => EXIT_OK,
        None => EXIT_VERDICT,
    }
}

/// Writes a field as CSV: `#`-prefixed `key=value` metadata, then `x,u` rows.
/// Values use the shortest round-trip representation, so
/// [`import_field`] restores them bit for bit.
pub fn export_field(path: &Path, field: &Field, metadata: &[(&str, String)]) -> Result<()> {
    let grid = field.grid();
    let mut text = String::new();
    text.push_str(&format!("# format={FORMAT_VERSION}\n"));
    text.push_str(&format!("# half_length={:e}\n", grid.half_length()));
    text.push_str(&format!("# size={}\n", grid.size()));
    for (k, v) in metadata {
        if k.contains('=') || v.contains('\n') {
            return Err(Error::config(format!("metadata entry '{k}' is not a plain key=value")));
        }
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str("x,u\n");
    for (j, u) in field.values().iter().enumerate() {
        text.push_str(&format!("{:e},{:e}\n", grid.node(j), u));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_field`].
pub fn import_field(path: &Path) -> Result<(Field, BTreeMap<String, String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let context = path.display().to_string();
    let bad = |line: usize, msg: &str| Error::parse(format!("{context}:{line}"), msg.to_string());
    let mut meta = BTreeMap::new();
    let mut values = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| bad(line_no, "metadata must be key=value"))?;
            meta.insert(k.to_string(), v.to_string());
        } else if !header_seen {
            if line.trim() != "x,u" {
                return Err(bad(line_no, "expected header 'x,u'"));
            }
            header_seen = true;
        } else {
            let (_, u) = line
                .split_once(',')
                .ok_or_else(|| bad(line_no, "expected two columns"))?;
            values.push(u.trim().parse::<f64>().map_err(|_| bad(line_no, "bad number"))?);
        }
    }
    let get = |key: &str| {
        meta.get(key)
            .ok_or_else(|| Error::parse(context.clone(), format!("missing metadata '{key}'")))
    };
    let half_length: f64 = get("half_length")?
        .parse()
        .map_err(|_| Error::parse(context.clone(), "bad half_length"))?;
    let size: usize = get("size")?
        .parse()
        .map_err(|_| Error::parse(context.clone(), "bad size"))?;
    if values.len() != size {
        return Err(Error::parse(
            context,
            format!("expected {size} rows, found {}", values.len()),
        ));
    }
    let grid = SpectralGrid::new(half_length, size)?;
    Ok((Field::new(grid, values)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn run_args(list: &[&str]) -> RunArgs {
        let cli = Cli::try_parse_from(normalize_args(args(list))).unwrap();
        let Command::Run(a) = cli.command;
        a
    }

    #[test]
    fn tolerance_flags_are_rewritten() {
        let a = normalize_args(args(&["x", "--tol-hsnorm-limit", "0.1", "--tol-soliton-error=2e-3"]));
        assert_eq!(a, args(&["x", "--tol", "hsnorm-limit=0.1", "--tol", "soliton-error=2e-3"]));
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(
            &cfg,
            "lambda = [16, 32]\ndelta = 0.5\ns = 1.0\nomega = 0.5\n[tolerances]\nhsnorm-limit = 0.3\n",
        )
        .unwrap();
        let a = run_args(&[
            "bo-waves", "run", "hsnorm-limit", "--config", cfg.to_str().unwrap(), "--omega", "-1",
            "--tol-hsnorm-alpha", "0.2", "--out", "o",
        ]);
        let plan = resolve(&a).unwrap();
        let (e, p) = &plan.experiments[0];
        assert_eq!(*e, Experiment::HsnormLimit);
        assert_eq!(p.lambdas, vec![16.0, 32.0]);
        assert_eq!(p.omega, -1.0);
        assert_eq!(p.tolerances.hsnorm_limit, 0.3);
        assert_eq!(p.tolerances.hsnorm_alpha, 0.2);
        assert_eq!(plan.out, PathBuf::from("o"));
    }

    #[test]
    fn missing_delta_is_named() {
        let a = run_args(&["bo-waves", "run", "separation", "--lambda", "16,32,64", "--s", "1"]);
        let err = resolve(&a).unwrap_err().to_string();
        assert!(err.contains("delta"), "{err}");
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "lamda = [16]\n").unwrap();
        let a = run_args(&["bo-waves", "run", "all", "--config", cfg.to_str().unwrap()]);
        let err = resolve(&a).unwrap_err().to_string();
        assert!(err.contains("lamda"), "{err}");
    }

    #[test]
    fn all_uses_reference_points() {
        let plan = resolve(&run_args(&["bo-waves", "run", "all"])).unwrap();
        assert_eq!(plan.experiments.len(), Experiment::ALL.len());
        for (_, p) in &plan.experiments {
            assert_eq!((p.delta, p.s, p.omega), (0.5, 1.0, 1.0));
        }
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let grid = SpectralGrid::new(3.7, 64).unwrap();
        let f = Field::from_fn(grid, |x| (x * 1.3).sin() / 3.0 + 1e-300 * x);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        export_field(&path, &f, &[("t", "0.5".into())]).unwrap();
        let (g, meta) = import_field(&path).unwrap();
        assert_eq!(g.grid(), f.grid());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(meta.get("t").map(String::as_str), Some("0.5"));
    }

    #[test]
    fn import_rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        fs::write(&path, "# half_length=1\n# size=4\nx,u\n0,1\n").unwrap();
        assert!(matches!(import_field(&path), Err(Error::Parse { .. })));
    }

    fn run_in(dir: &Path, list: &[&str]) -> i32 {
        let mut a = args(&["bo-waves", "run"]);
        a.extend(args(list));
        a.push("--out".into());
        a.push(dir.to_str().unwrap().into());
        run_cli(a)
    }

    fn read_json(path: PathBuf) -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn passing_run_writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_in(
            dir.path(),
            &["hsnorm-limit", "--lambda", "16,32", "--delta", "0.5", "--s", "1", "--alpha", "0,1"],
        );
        assert_eq!(code, EXIT_OK);
        let csv = fs::read_to_string(dir.path().join("hsnorm-limit.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "lambda,delta,s,alpha,L,N,norm_Hs,normalized,target,ratio"
        );
        assert_eq!(lines.count(), 2 * 2 * 2);

        let manifest = read_json(dir.path().join("manifest.json"));
        assert_eq!(manifest["format_version"], FORMAT_VERSION);
        let entry = &manifest["experiments"][0];
        assert_eq!(entry["params"]["delta"], 0.5);
        assert_eq!(entry["points"].as_array().unwrap().len(), 4);
        assert!(entry["points"][0]["wall_seconds"].is_number());

        let verdicts = read_json(dir.path().join("verdicts.json"));
        assert!(verdicts.as_array().unwrap().iter().all(|v| v["passed"] == true));
    }

    #[test]
    fn failed_verdict_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_in(
            dir.path(),
            &["hsnorm-limit", "--lambda", "16", "--delta", "0.5", "--s", "1", "--tol-hsnorm-limit", "1e-9"],
        );
        assert_eq!(code, EXIT_VERDICT);
        let verdicts = read_json(dir.path().join("verdicts.json"));
        assert_eq!(verdicts[0]["passed"], false);
    }

    #[test]
    fn configuration_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let cases: [&[&str]; 5] = [
            &["separation", "--lambda", "16,32,64", "--s", "1"],
            &["ansatz-error", "--lambda", "16,32", "--delta", "0.3", "--s", "0.5"],
            &["commutator", "--lambda", "16,32,64", "--delta", "0.5", "--s", "1", "--N", "4096"],
            &["nonsense"],
            &["soliton-check", "--tol-bogus", "1"],
        ];
        for case in cases {
            assert_eq!(run_in(dir.path(), case), EXIT_CONFIG, "{case:?}");
        }
    }

    #[test]
    fn divergence_exits_three_and_keeps_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_in(dir.path(), &["soliton-check", "--dt", "0.5", "--t-grid", "0,100"]);
        assert_eq!(code, EXIT_DIVERGENCE);
        let manifest = read_json(dir.path().join("manifest.json"));
        assert!(manifest["error"].as_str().unwrap().contains("diverged"));
    }
}
