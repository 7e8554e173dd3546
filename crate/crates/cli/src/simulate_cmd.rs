use std::path::Path;
use std::time::Instant;

use doseopt_core::run_study_with;

use crate::args::SimulateArgs;
use crate::common::run_options;
use crate::config::{self, ScenarioSpec};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, RunManifest};
use crate::rows;

pub fn run(args: &SimulateArgs, workers: Option<usize>) -> CliResult<String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut file = config::parse(&text)?;
    if let Some(r) = args.replications {
        if r == 0 {
            return Err(CliError::usage("--replications must be at least 1"));
        }
        file.replications = r;
    }
    if let Some(s) = args.seed {
        file.seed = s;
    }
    for s in &mut file.scenarios {
        s.config.replications = file.replications;
        s.config.seed = file.seed;
    }
    let out = args.out.clone().unwrap_or_else(|| args.config.with_extension("csv"));
    let hashed = format!("{text}\n# replications = {}\n# seed = {}\n", file.replications, file.seed);
    let mut manifest = RunManifest::new(&hashed, file.seed);
    manifest.outputs.push(out.display().to_string());

    let header = rows::header(file.layout);
    let mut records: Vec<Vec<String>> = Vec::new();
    let opts = run_options(workers);
    let mut failure = None;
    for (i, ScenarioSpec { id, config }) in file.scenarios.iter().enumerate() {
        if failure.is_some() {
            manifest.push(id, "skipped");
            continue;
        }
        let start = Instant::now();
        match run_study_with(config, &opts) {
            Ok(summary) => {
                let mut rec = vec![id.clone()];
                rec.extend(rows::row(file.layout, config, &summary));
                records.push(rec);
                manifest.push(id, "ok");
                eprintln!("[{}/{}] {id} ({:.1?})", i + 1, file.scenarios.len(), start.elapsed());
            }
            Err(e) => {
                manifest.push(id, format!("failed: {e}"));
                failure = Some(CliError::from(e));
            }
        }
    }
    write_csv(&out, std::iter::once("id").chain(header.iter().copied()), &records)?;
    manifest.write(&manifest_path(&out))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(format!("wrote {} scenario row(s) to {}\n", records.len(), out.display()))
}

pub fn write_csv<'a>(path: &Path, header: impl IntoIterator<Item = &'a str>, records: &[Vec<String>]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(&dir.display().to_string(), e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path.display().to_string(), e))?;
    Ok(())
}
