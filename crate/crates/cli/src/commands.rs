use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use popbias_core::dataset::{
    density, k_core_filter, load_groups, load_groups_with, parse_movielens, parse_yelp,
    read_interactions_csv, sample_users, write_interactions_csv,
};
use popbias_core::report::{
    contiguous_iterations, evaluate_checks, format_scenario_table, read_metrics_csv,
    scenario_table, write_metrics_csv, write_plot_files, Check, CellStatus,
};
use popbias_core::simulator::run_feedback_loop;
use popbias_core::synthetic::{self, SyntheticConfig};
use popbias_core::{Error, GroupAssignment, InteractionLog, RatingScale};

use crate::config::{config_hash, ConfigFile};
use crate::{DatasetArg, IngestArgs, ReportArgs, SimulateArgs, SynthArgs};

pub const DEFAULT_CRITERIA: &str = include_str!("../criteria/dynamic_trends.toml");

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn other(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

/// Input-side errors: unreadable or malformed files are parse failures,
/// aborted iterations are simulation failures, the rest are invariants.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Iteration { .. } => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

/// Errors while writing results.
fn output(e: Error) -> Failure {
    Failure::other(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::other(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub density: f64,
    pub rating_scale: (f64, f64),
    pub content_hash: String,
    pub k_core: usize,
    pub sample_users: usize,
    pub seed: u64,
    pub groups: BTreeMap<String, usize>,
}

impl Summary {
    fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
    }
}

fn movielens_paths(input: &[PathBuf]) -> (PathBuf, PathBuf) {
    match input {
        [dir] => (dir.join("ratings.dat"), dir.join("users.dat")),
        [ratings, users, ..] => (ratings.clone(), users.clone()),
        [] => unreachable!("clap requires --input"),
    }
}

pub fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    if args.k_core == 0 || args.sample_users == 0 {
        return Err(Failure::invariant("--k-core and --sample-users must be positive"));
    }
    let (raw, groups, dataset, dict) = match args.dataset {
        DatasetArg::Movielens => {
            if args.groups.is_some() {
                log::warn!("--groups is ignored for MovieLens; labels come from users.dat");
            }
            let (ratings, users) = movielens_paths(&args.input);
            let (log, groups) = parse_movielens(&ratings, &users)?;
            (log, Some(groups), "movielens", None)
        }
        DatasetArg::Yelp => {
            if args.input.len() != 1 {
                return Err(Failure::parse("yelp takes a single --input file"));
            }
            let (log, dict) = parse_yelp(&args.input[0])?;
            let groups = match &args.groups {
                Some(path) => Some(load_groups_with(path, |raw| Some(dict.user_id(raw.trim())))?),
                None => {
                    log::warn!("no --groups given; group metrics will be unavailable");
                    None
                }
            };
            (log, groups, "yelp", Some(dict))
        }
    };
    log::info!("parsed {} ratings from {} users", raw.len(), raw.n_users());
    let log = sample_users(&k_core_filter(&raw, args.k_core), args.sample_users, args.seed);
    if log.is_empty() {
        return Err(Failure::invariant(format!(
            "nothing left after {}-core filtering",
            args.k_core
        )));
    }
    create_dir(&args.out)?;
    write_interactions_csv(&log, &args.out.join("interactions.csv")).map_err(output)?;
    let mut group_sizes = BTreeMap::new();
    if let Some(groups) = groups {
        let groups = groups.restricted_to(&log);
        if let Err(e) = groups.ensure_covers(&log) {
            log::warn!("{e}; group metrics will fail for this data");
        }
        for (_, label) in groups.iter() {
            *group_sizes.entry(label.to_owned()).or_insert(0) += 1;
        }
        groups.write_csv(&args.out.join("groups.csv")).map_err(output)?;
    }
    if let Some(dict) = dict {
        dict.save(&args.out.join("user_ids.csv"), &args.out.join("item_ids.csv"))
            .map_err(output)?;
    }
    let scale = log.scale();
    let summary = Summary {
        dataset: dataset.into(),
        users: log.n_users(),
        items: log.n_items(),
        ratings: log.len(),
        density: density(&log)?,
        rating_scale: (scale.min, scale.max),
        content_hash: log.content_hash(),
        k_core: args.k_core,
        sample_users: args.sample_users,
        seed: args.seed,
        groups: group_sizes,
    };
    write_file(
        &args.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serialises"),
    )?;
    println!(
        "{} users, {} items, {} ratings, density {:.4}",
        summary.users, summary.items, summary.ratings, summary.density
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    status: &'a str,
    config_hash: &'a str,
    config: &'a popbias_core::simulator::SimulationConfig,
    dataset: &'a str,
    algorithm: String,
    seed: u64,
    data_hash: &'a str,
    started_at: &'a str,
    finished_at: Option<String>,
    outputs: Vec<String>,
    warnings: usize,
    error: Option<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let file = ConfigFile::load(&args.config).map_err(Failure::parse)?;
    let summary = Summary::load(&args.data.join("summary.json"))?;
    let config = file.resolve(&summary.dataset, args.algorithm);
    config.validate()?;
    let groups_path = args.data.join("groups.csv");
    let groups = if config.needs_groups() {
        if !groups_path.exists() {
            return Err(Failure::invariant(format!(
                "config requests group metrics but {} does not exist",
                groups_path.display()
            )));
        }
        load_groups(&groups_path)?
    } else {
        GroupAssignment::new()
    };
    let scale = RatingScale::new(summary.rating_scale.0, summary.rating_scale.1)?;
    let log: InteractionLog = read_interactions_csv(&args.data.join("interactions.csv"), scale)?;
    if log.content_hash() != summary.content_hash {
        return Err(Failure::invariant(
            "interactions.csv does not match the hash recorded at ingest",
        ));
    }
    if config.needs_groups() {
        groups.ensure_covers(&log)?;
    }

    create_dir(&args.out)?;
    let hash = config_hash(&config);
    let started = now();
    let manifest_path = args.out.join("manifest.json");
    let mut manifest = Manifest {
        tool: "popbias",
        version: env!("CARGO_PKG_VERSION"),
        status: "running",
        config_hash: &hash,
        config: &config,
        dataset: &config.dataset,
        algorithm: config.params.algorithm.to_string(),
        seed: config.seed,
        data_hash: &summary.content_hash,
        started_at: &started,
        finished_at: None,
        outputs: Vec::new(),
        warnings: 0,
        error: None,
    };
    let save = |m: &Manifest| {
        write_file(&manifest_path, &serde_json::to_string_pretty(m).expect("manifest serialises"))
    };
    save(&manifest)?;

    log::info!(
        "{} on {} ({} users, {} ratings), {} iterations",
        config.params.algorithm,
        config.dataset,
        log.n_users(),
        log.len(),
        config.iterations
    );
    let series = match run_feedback_loop(&log, &groups, &config) {
        Ok(series) => series,
        Err(e) => {
            manifest.status = "failed";
            manifest.finished_at = Some(now());
            manifest.error = Some(e.to_string());
            save(&manifest)?;
            return Err(match e {
                Error::Iteration { .. } => Failure { code: 4, message: format!("simulation aborted: {e}") },
                other => other.into(),
            });
        }
    };
    let metrics_path = args.out.join("metrics.csv");
    write_metrics_csv(&series, &metrics_path).map_err(output)?;
    let mut outputs = vec![metrics_path];
    outputs.extend(write_plot_files(&series, &args.out).map_err(output)?);
    manifest.status = "complete";
    manifest.finished_at = Some(now());
    manifest.warnings = series.warnings.len();
    manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    save(&manifest)?;
    println!("wrote {} records to {}", series.len(), outputs[0].display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaFile {
    #[serde(default)]
    pub check: Vec<Check>,
}

impl CriteriaFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    if !args.table3 && args.inputs.is_empty() {
        return Err(Failure::parse("nothing to report: pass --in and/or --table3"));
    }
    if args.table3 {
        let rows = scenario_table(0.4)?;
        print!("{}", format_scenario_table(&rows));
        for row in &rows {
            for (c, status) in row.status.iter().enumerate() {
                if *status != CellStatus::Match {
                    let column = ["revised(g)", "revised(h)", "between"][c];
                    println!(
                        "note: scenario {} {column}: published {:.2}, formula {:.4} ({status})",
                        row.scenario, row.published[c], row.computed[c]
                    );
                }
            }
        }
    }
    if args.inputs.is_empty() {
        return Ok(());
    }
    let mut records = Vec::new();
    for path in &args.inputs {
        records.extend(read_metrics_csv(path)?);
    }
    if records.is_empty() {
        println!("no data");
        return Err(Failure { code: 5, message: String::new() });
    }
    let checks = match &args.check {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
            CriteriaFile::parse(&text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?
        }
        None => CriteriaFile::parse(DEFAULT_CRITERIA).expect("built-in criteria parse"),
    };
    let mut failed = 0;
    match contiguous_iterations(&records) {
        Ok(()) => println!("PASS  iterations contiguous from 1"),
        Err(e) => {
            failed += 1;
            println!("FAIL  iterations contiguous from 1: {e}");
        }
    }
    for outcome in evaluate_checks(&records, &checks.check) {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.passed);
        println!("{tag}  {}: {}", outcome.name, outcome.detail);
    }
    if failed > 0 {
        return Err(Failure { code: 5, message: format!("{failed} check(s) failed") });
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let cfg = SyntheticConfig {
        users: args.users,
        items: args.items,
        mean_profile: args.mean_profile,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let (log, groups) = synthetic::generate(&cfg);
    synthetic::write_movielens(&args.out, &log, &groups).map_err(output)?;
    println!("{} users, {} items, {} ratings", log.n_users(), log.n_items(), log.len());
    Ok(())
}
