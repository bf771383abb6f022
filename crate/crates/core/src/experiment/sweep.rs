//! Parameter sweeps over (gamma_beta, Gamma_alpha, scenario).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::noise::Scenario;

use super::csv::write_metrics;
use super::scenario::{run_scenario, MetricSeries, ParameterEcho};
use super::spec::ScenarioSpec;

pub const MANIFEST_NAME: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str =
    "file,scenario,gamma_beta,Gamma_alpha,Gamma_beta,gamma_alpha,dt,t_max,s1_stride,initial_state,metrics,status,rows,message";

/// Axis values of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub gamma_beta: Vec<f64>,
    pub big_gamma_alpha: Vec<f64>,
    pub scenarios: Vec<Scenario>,
}

impl Axes {
    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("gamma_beta", self.gamma_beta.is_empty()),
            ("Gamma_alpha", self.big_gamma_alpha.is_empty()),
            ("scenario", self.scenarios.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("sweep axis '{name}' is empty")));
            }
        }
        Ok(())
    }
}

/// One deduplicated combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub spec: ScenarioSpec,
    pub file_name: String,
}

/// `<metric>_<scenario>_gb<gamma_beta>_Ga<Gamma_alpha>.csv`
pub fn file_name(spec: &ScenarioSpec) -> String {
    let echo = ParameterEcho::for_spec(spec);
    format!(
        "{}_{}_gb{}_Ga{}.csv",
        spec.metrics.tag(),
        spec.scenario().label(),
        sig(echo.gamma_beta),
        sig(echo.big_gamma_alpha)
    )
}

/// Expands the axes into jobs. Scenario R ignores Gamma_alpha and runs once per
/// gamma_beta with Gamma_alpha = 0.
pub fn plan(base: &ScenarioSpec, axes: &Axes) -> Result<Vec<SweepJob>> {
    axes.validate()?;
    let mut seen = BTreeSet::new();
    let mut jobs = Vec::new();
    for &gb in &axes.gamma_beta {
        for &sc in &axes.scenarios {
            for &ga in &axes.big_gamma_alpha {
                let mut spec = base.with_scenario(sc);
                spec.noise.relaxation.inverse_memory = gb;
                spec.noise.dephasing.coupling = if sc == Scenario::R { 0.0 } else { ga };
                let name = file_name(&spec);
                if seen.insert(name.clone()) {
                    jobs.push(SweepJob { spec, file_name: name });
                }
            }
        }
    }
    Ok(jobs)
}

/// Outcome of one job.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub file_name: String,
    pub spec: ScenarioSpec,
    pub series: MetricSeries,
    pub error: Option<Error>,
}

impl ManifestEntry {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub output_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| !e.succeeded()).count()
    }

    pub fn find(&self, scenario: Scenario, gamma_beta: f64, big_gamma_alpha: f64) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| {
            let p = e.series.params;
            e.spec.scenario() == scenario
                && p.gamma_beta == gamma_beta
                && (scenario == Scenario::R || p.big_gamma_alpha == big_gamma_alpha)
        })
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
    } else {
        s.to_string()
    }
}

fn manifest_row(e: &ManifestEntry) -> String {
    let ParameterEcho { gamma_beta, big_gamma_alpha, big_gamma_beta, gamma_alpha } = ParameterEcho::for_spec(&e.spec);
    let g = &e.spec.grid;
    [
        quote(&e.file_name),
        e.spec.scenario().label().to_string(),
        sig(gamma_beta),
        sig(big_gamma_alpha),
        sig(big_gamma_beta),
        sig(gamma_alpha),
        sig(g.dt),
        sig(g.t_max),
        g.s1_stride.to_string(),
        quote(&e.spec.initial_state.to_string()),
        e.spec.metrics.tag().to_string(),
        if e.succeeded() { "ok" } else { "failed" }.to_string(),
        e.series.len().to_string(),
        quote(&e.error.as_ref().map(|x| x.to_string()).unwrap_or_default()),
    ]
    .join(",")
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{MANIFEST_HEADER}")?;
    for e in entries {
        writeln!(w, "{}", manifest_row(e))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every combination with at most `jobs` concurrent workers, writes one
/// CSV per combination (partial on failure) and the manifest.
pub fn run_sweep(base: &ScenarioSpec, axes: &Axes, output_dir: &Path, jobs: usize) -> Result<SweepReport> {
    let planned = plan(base, axes)?;
    std::fs::create_dir_all(output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        planned
            .into_par_iter()
            .map(|job| {
                log::info!("sweep: running {}", job.file_name);
                let (series, mut error) = match run_scenario(&job.spec) {
                    Ok(s) => (s, None),
                    Err(f) => (f.partial, Some(f.error)),
                };
                if let Err(e) = write_metrics(&series, &output_dir.join(&job.file_name)) {
                    error.get_or_insert(e);
                }
                if let Some(e) = &error {
                    log::warn!("sweep: {} failed: {e}", job.file_name);
                }
                ManifestEntry { file_name: job.file_name, spec: job.spec, series, error }
            })
            .collect()
    });
    write_manifest(&entries, &output_dir.join(MANIFEST_NAME))?;
    Ok(SweepReport { output_dir: output_dir.to_path_buf(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::GridSpec;

    fn axes() -> Axes {
        Axes { gamma_beta: vec![0.1], big_gamma_alpha: vec![1.0, 2.0, 4.0], scenarios: Scenario::ALL.to_vec() }
    }

    #[test]
    fn relaxation_runs_are_deduplicated() {
        let jobs = plan(&ScenarioSpec::default(), &axes()).unwrap();
        let names: Vec<&str> = jobs.iter().map(|j| j.file_name.as_str()).collect();
        assert_eq!(names.len(), 7);
        assert!(names.contains(&"capacity-fidelity_R_gb0.1_Ga0.csv"));
        assert!(names.contains(&"capacity-fidelity_C_gb0.1_Ga4.csv"));
        assert_eq!(names.iter().filter(|n| n.contains("_R_")).count(), 1);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let mut a = axes();
        a.big_gamma_alpha.clear();
        assert!(matches!(plan(&ScenarioSpec::default(), &a), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_quotes_messages() {
        assert_eq!(quote("a,b"), "\"a,b\"");
        assert_eq!(quote("say \"x\""), "\"say \"\"x\"\"\"");
        assert_eq!(quote("plain"), "plain");
    }

    #[test]
    fn writes_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let base = ScenarioSpec { grid: GridSpec { dt: 0.05, t_max: 0.5, s1_stride: 1 }, ..Default::default() };
        let report = run_sweep(&base, &axes(), dir.path(), 2).unwrap();
        assert_eq!(report.entries.len(), 7);
        assert_eq!(report.failures(), 0);
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(manifest.lines().count(), 8);
        for e in &report.entries {
            assert_eq!(manifest.matches(&e.file_name).count(), 1);
            assert!(dir.path().join(&e.file_name).exists());
        }
    }
}
