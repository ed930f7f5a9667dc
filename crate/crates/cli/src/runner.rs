use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::Config;
use crate::error::CliResult;
use crate::output::{atomic_write, csv_field, sha256_hex, to_json, xy_csv};
use crate::scenario::{run_scenario, ScenarioReport};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<ScenarioReport>,
    /// Every written file, relative to the output directory, with its hash.
    pub files: BTreeMap<String, String>,
}

impl RunOutcome {
    pub fn failures(&self) -> Vec<String> {
        self.reports.iter().flat_map(|r| r.failures.iter().map(move |f| format!("{}: {f}", r.name))).collect()
    }

    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// An output file name, relative to the output directory, and its bytes.
pub type RenderedFile = (String, Vec<u8>);

/// Renders every output file in memory. Scenario order follows the config,
/// whatever order they finished in.
pub fn render(config: &Config, parallel: bool) -> CliResult<(Vec<ScenarioReport>, Vec<RenderedFile>)> {
    let reports: Vec<ScenarioReport> = if parallel {
        config.scenarios.par_iter().map(run_scenario).collect::<CliResult<_>>()?
    } else {
        config.scenarios.iter().map(run_scenario).collect::<CliResult<_>>()?
    };
    let mut files = Vec::new();
    let mut summary = String::from("scenario,passed,runs,worst_margin,failures,report_sha256\n");
    for r in &reports {
        let body = to_json(r)?;
        let hash = sha256_hex(body.as_bytes());
        let worst = r.worst_margin().map(|m| format!("{m:.16e}")).unwrap_or_default();
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&r.name),
            r.passed,
            r.runs.len(),
            worst,
            csv_field(&r.failures.join("; ")),
            hash
        ));
        files.push((format!("{}.json", r.name), body.into_bytes()));
        for (verifier, series) in r.margin_series() {
            files.push((format!("{}_{verifier}_margin.csv", r.name), xy_csv("h", "margin", &series).into_bytes()));
        }
        for (points, series) in r.level_set_series() {
            files.push((format!("{}_level_set_{points}.csv", r.name), xy_csv("t", "measure", &series).into_bytes()));
        }
    }
    files.push(("summary.csv".to_string(), summary.into_bytes()));
    Ok((reports, files))
}

pub fn run(config: &Config, out_dir: &Path, parallel: bool) -> CliResult<RunOutcome> {
    let (reports, files) = render(config, parallel)?;
    let mut hashes = BTreeMap::new();
    for (name, bytes) in &files {
        atomic_write(&out_dir.join(name), bytes)?;
        hashes.insert(name.clone(), sha256_hex(bytes));
    }
    Ok(RunOutcome { reports, files: hashes })
}

/// Output directory: the command line wins, then the config, then `abplab-out`.
pub fn output_dir(cli: Option<&Path>, config: &Config) -> PathBuf {
    cli.map(Path::to_path_buf).or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("abplab-out"))
}
