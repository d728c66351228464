//! `report`: groups run archives by system and method and aggregates test MSE.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hdtwin::orchestrator::{aggregate, read_run_manifest, RunManifest};

use crate::{metrics_line, ConfigContext, Failure};

/// How far below each argument archives are looked for.
const MAX_DEPTH: usize = 3;

fn collect(dir: &Path, depth: usize, out: &mut Vec<(PathBuf, RunManifest)>) -> Result<(), Failure> {
    if dir.join("run.manifest").is_file() {
        let m = read_run_manifest(dir).config_err()?;
        out.push((dir.to_path_buf(), m));
        return Ok(());
    }
    if depth == MAX_DEPTH {
        return Ok(());
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .config_err()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        collect(&d, depth + 1, out)?;
    }
    Ok(())
}

pub fn report(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(Failure::Config(anyhow!("{} is not a directory", d.display())));
        }
        collect(d, 0, &mut runs)?;
    }
    if runs.is_empty() {
        return Err(Failure::Config(anyhow!("no run.manifest found under the given directories")));
    }

    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for (_, m) in &runs {
        groups
            .entry((m.system.clone(), m.method.to_string(), m.test.metric.to_string()))
            .or_default()
            .push(m.test.t_mse);
    }

    let mut csv = String::from("system,method,metric,n,t_mse_mean,t_mse_ci95\n");
    let mut lines = Vec::new();
    for ((system, method, metric), values) in &groups {
        let a = aggregate(values).expect("groups are non-empty");
        let hw = a.half_width.map_or_else(String::new, |h| format!("{h:?}"));
        let _ = writeln!(csv, "{system},{method},{metric},{},{:?},{hw}", a.n, a.mean);
        lines.push(metrics_line(&[
            ("system", system.clone()),
            ("method", method.clone()),
            ("metric", metric.clone()),
            ("n", a.n.to_string()),
            ("t_mse_mean", format!("{:?}", a.mean)),
            ("t_mse_ci95", if hw.is_empty() { "nan".into() } else { hw }),
        ]));
    }

    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .run_err()?;
            }
            fs::write(p, &csv).with_context(|| format!("writing {}", p.display())).run_err()?;
        }
        None => print!("{csv}"),
    }
    for l in lines {
        println!("{l}");
    }
    Ok(())
}
