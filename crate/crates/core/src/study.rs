//! Experiment configuration, the five study types, and report output.
//!
//! A run produces a [`Report`]: the echoed configuration, one [`Point`] per
//! plotted quantity, and a list of named [`Check`]s. [`write_outputs`] writes
//! it as `report.json` and `points.csv`. Reports contain no timestamps or
//! host details, so identical configurations produce byte-identical files.
//!
//! `points.csv` columns, in order:
//!
//! | column      | meaning                                                    |
//! |-------------|------------------------------------------------------------|
//! | `study`     | study name (`correlate`, `decohere-scan`, …)               |
//! | `label`     | quantity on this row (`C`, `median_offdiag`, …)            |
//! | `x`         | abscissa: angle in radians, or `M` for scans; may be empty |
//! | `estimate`  | measured value                                             |
//! | `std_error` | standard error of `estimate`; empty if not defined        |
//! | `theory`    | reference value; empty if none                             |
//! | `pass`      | `true`/`false` for rows with a check; empty otherwise      |

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{
    build_branches, dense_ket_len, loglog_slope, reduced_density_dense_oracle,
    reduced_density_structured, scaling_point,
};
use crate::correlate::{
    chsh, correlation, nosignal_audit, nosignal_trials, ChshSettings, TrialRecord, TrialSampler,
    SIGMA_THRESHOLD,
};
use crate::detector::{DetectorArray, DistKind, Station};
use crate::error::{Error, Result};
use crate::qstate::{ALGEBRAIC_TOL, DENSE_CAP};
use crate::rng::derive_seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Allowed deviation of the fitted off-diagonal slope from −4.
pub const SLOPE_TOLERANCE: f64 = 0.3;

/// Allowed relative deviation of the mean `|f|²` from `Σp²/M`.
pub const FACTOR_RELATIVE_TOLERANCE: f64 = 0.1;

/// The quoted tolerance for structured vs dense agreement.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Correlate,
    DecohereScan,
    Chsh,
    Nosignal,
    OracleCheck,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Correlate => "correlate",
            StudyKind::DecohereScan => "decohere-scan",
            StudyKind::Chsh => "chsh",
            StudyKind::Nosignal => "nosignal",
            StudyKind::OracleCheck => "oracle-check",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    pub seed: u64,
    /// Internal dimension: one value for all detectors, or four values in
    /// the order LV, LH, RV, RH. For `decohere-scan`, the list of `M` to scan.
    pub m: Vec<usize>,
    pub dist: DistKind,
    /// Relative analyzer angles (`correlate`, `oracle-check`) or remote
    /// angles (`nosignal`).
    pub theta_grid: Vec<f64>,
    /// Trials per setting.
    pub n_trials: usize,
    /// Independent detector arrays (`decohere-scan`, `oracle-check`).
    pub seeds: usize,
    /// Fixed local angle for `nosignal`.
    pub local_theta: f64,
    pub chsh_settings: ChshSettings,
}

impl ExperimentConfig {
    /// Defaults matching the documented command-line behaviour.
    pub fn defaults(study: StudyKind) -> Self {
        let linspace = |stop: f64, count: usize| linspace(0.0, stop, count);
        let (m, theta_grid, seeds) = match study {
            StudyKind::Correlate => (vec![8], linspace(PI / 2.0, 9), 1),
            StudyKind::DecohereScan => (vec![2, 4, 8, 16, 32], vec![0.0], 1000),
            StudyKind::Chsh => (vec![8], Vec::new(), 1),
            StudyKind::Nosignal => (vec![8], linspace(PI / 2.0, 5), 1),
            StudyKind::OracleCheck => (vec![2], vec![0.0, PI / 8.0, PI / 4.0], 20),
        };
        Self {
            study,
            seed: 0,
            m,
            dist: DistKind::Uniform,
            theta_grid,
            n_trials: 100_000,
            seeds,
            local_theta: 0.0,
            chsh_settings: ChshSettings::canonical(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("M values must be at least 1".into());
        }
        if self.study != StudyKind::DecohereScan && !matches!(self.m.len(), 1 | 4) {
            return bad(format!("expected 1 or 4 M values, got {}", self.m.len()));
        }
        if let DistKind::Gibbs { beta } = self.dist {
            if beta.is_nan() || beta < 0.0 {
                return bad(format!("gibbs beta must be nonnegative, got {beta}"));
            }
        }
        let s = self.chsh_settings;
        let angles =
            self.theta_grid
                .iter()
                .chain([&self.local_theta, &s.a, &s.a_prime, &s.b, &s.b_prime]);
        if angles.into_iter().any(|t| !t.is_finite()) {
            return bad("angles must be finite".into());
        }
        match self.study {
            StudyKind::Correlate | StudyKind::OracleCheck if self.theta_grid.is_empty() => {
                bad("theta grid is empty".into())
            }
            StudyKind::Nosignal if self.theta_grid.len() < 2 => {
                bad("nosignal needs at least two remote angles".into())
            }
            StudyKind::Chsh if self.n_trials < crate::correlate::MIN_CHSH_TRIALS => bad(format!(
                "chsh needs at least {} trials per pair",
                crate::correlate::MIN_CHSH_TRIALS
            )),
            _ => Ok(()),
        }
    }

    /// Per-detector internal dimensions for single-array studies.
    pub fn dims(&self) -> [usize; 4] {
        match self.m.as_slice() {
            [m] => [*m; 4],
            [a, b, c, d] => [*a, *b, *c, *d],
            _ => [self.m[0]; 4],
        }
    }
}

/// One row of `points.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub study: String,
    pub label: String,
    pub x: Option<f64>,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub theory: Option<f64>,
    pub pass: Option<bool>,
}

/// A named pass/fail criterion evaluated by a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub study: StudyKind,
    pub config: ExperimentConfig,
    pub points: Vec<Point>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

struct Builder {
    study: StudyKind,
    points: Vec<Point>,
    checks: Vec<Check>,
}

impl Builder {
    fn new(study: StudyKind) -> Self {
        Self {
            study,
            points: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn point(
        &mut self,
        label: &str,
        x: Option<f64>,
        estimate: f64,
        std_error: Option<f64>,
        theory: Option<f64>,
        pass: Option<bool>,
    ) {
        self.points.push(Point {
            study: self.study.name().to_string(),
            label: label.to_string(),
            x,
            estimate,
            std_error,
            theory,
            pass,
        });
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn finish(self, config: &ExperimentConfig) -> Report {
        let pass = self.checks.iter().all(|c| c.pass);
        Report {
            schema_version: SCHEMA_VERSION,
            study: self.study,
            config: config.clone(),
            points: self.points,
            checks: self.checks,
            pass,
        }
    }
}

/// Runs the configured study.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let mut b = Builder::new(config.study);
    match config.study {
        StudyKind::Correlate => run_correlate(config, &mut b)?,
        StudyKind::DecohereScan => run_decohere_scan(config, &mut b)?,
        StudyKind::Chsh => run_chsh(config, &mut b)?,
        StudyKind::Nosignal => run_nosignal(config, &mut b)?,
        StudyKind::OracleCheck => run_oracle_check(config, &mut b)?,
    }
    Ok(b.finish(config))
}

fn run_correlate(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let detectors = DetectorArray::haar(config.seed, config.dims(), config.dist)?;
    let trial_seed = derive_seed(config.seed, 0xC0);
    let mut inconsistent = 0usize;
    for (k, &theta) in config.theta_grid.iter().enumerate() {
        let sampler = TrialSampler::new(0.0, theta, &detectors)?;
        let trials = sampler.run(config.n_trials, derive_seed(trial_seed, k as u64));
        inconsistent += trials.iter().filter(|t| !t.is_consistent()).count();
        let est = correlation(&trials)?;
        let ok = est.within(SIGMA_THRESHOLD);
        b.point(
            "C",
            Some(theta),
            est.mean_product,
            Some(est.std_error),
            Some(est.theory),
            Some(ok),
        );
        b.check(
            format!("correlation[theta={theta}]"),
            ok,
            format!(
                "estimate {:.6} ± {:.6}, theory {:.6}",
                est.mean_product, est.std_error, est.theory
            ),
        );
    }
    b.check(
        "branch_bookkeeping",
        inconsistent == 0,
        format!("{inconsistent} trials with readings not recomputable from their branch"),
    );
    Ok(())
}

fn run_decohere_scan(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let mut medians = Vec::new();
    for (k, &m) in config.m.iter().enumerate() {
        let p = scaling_point(
            m,
            config.seeds,
            config.dist,
            derive_seed(config.seed, k as u64),
        )?;
        medians.push((m as f64, p.median_offdiag));
        b.point(
            "median_offdiag",
            Some(m as f64),
            p.median_offdiag,
            None,
            None,
            None,
        );
        let rel = (p.mean_factor_sqr - p.expected_factor_sqr).abs() / p.expected_factor_sqr;
        let ok = rel < FACTOR_RELATIVE_TOLERANCE;
        b.point(
            "mean_factor_sqr",
            Some(m as f64),
            p.mean_factor_sqr,
            Some(p.factor_sqr_std_error),
            Some(p.expected_factor_sqr),
            Some(ok),
        );
        b.check(
            format!("factor_scaling[M={m}]"),
            ok,
            format!(
                "mean |f|^2 {:.6e} vs {:.6e}, relative error {:.3} < {}",
                p.mean_factor_sqr, p.expected_factor_sqr, rel, FACTOR_RELATIVE_TOLERANCE
            ),
        );
    }
    let positive = medians.iter().all(|&(_, y)| y > 0.0);
    if medians.len() >= 2 && positive {
        let slope = loglog_slope(&medians);
        let ok = (slope + 4.0).abs() <= SLOPE_TOLERANCE;
        b.point("loglog_slope", None, slope, None, Some(-4.0), Some(ok));
        b.check(
            "offdiag_slope",
            ok,
            format!("fitted slope {slope:.4}, expected -4 ± {SLOPE_TOLERANCE}"),
        );
    }
    Ok(())
}

fn run_chsh(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let detectors = DetectorArray::haar(config.seed, config.dims(), config.dist)?;
    let est = chsh(
        config.chsh_settings,
        config.n_trials,
        &detectors,
        derive_seed(config.seed, 0xC5),
    )?;
    for (label, (c, (x, y))) in ["C(a,b)", "C(a,b')", "C(a',b)", "C(a',b')"]
        .into_iter()
        .zip(est.correlations.iter().zip(config.chsh_settings.pairs()))
    {
        b.point(
            label,
            Some(y - x),
            c.mean_product,
            Some(c.std_error),
            Some(c.theory),
            Some(c.within(SIGMA_THRESHOLD)),
        );
    }
    let ok = if est.std_error == 0.0 {
        (est.s - est.theory).abs() <= ALGEBRAIC_TOL
    } else {
        (est.s - est.theory).abs() < SIGMA_THRESHOLD * est.std_error
    };
    b.point(
        "S",
        None,
        est.s,
        Some(est.std_error),
        Some(est.theory),
        Some(ok),
    );
    b.check(
        "chsh_matches_theory",
        ok,
        format!(
            "S = {:.5} ± {:.5}, theory {:.5}",
            est.s, est.std_error, est.theory
        ),
    );
    let expected_flag = est.theory.abs() > 2.0;
    b.check(
        "classical_bound_flag",
        est.exceeds_classical_bound == expected_flag,
        format!(
            "|S| = {:.5} {} 2",
            est.s.abs(),
            if est.exceeds_classical_bound {
                ">"
            } else {
                "<="
            }
        ),
    );
    Ok(())
}

fn run_nosignal(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let detectors = DetectorArray::haar(config.seed, config.dims(), config.dist)?;
    for (tag, station, label) in [
        (0u64, Station::L, "alice_marginal"),
        (1, Station::R, "bob_marginal"),
    ] {
        let trials: Vec<TrialRecord> = nosignal_trials(
            station,
            config.local_theta,
            &config.theta_grid,
            config.n_trials,
            &detectors,
            derive_seed(config.seed, 0x50 + tag),
        )?;
        let report = nosignal_audit(&trials, station)?;
        for g in &report.groups {
            b.point(
                label,
                Some(g.remote_theta),
                g.plus_frequency,
                Some(g.std_error),
                Some(0.5),
                Some(g.z_score.abs() < SIGMA_THRESHOLD),
            );
        }
        b.check(
            format!("nosignal[{label}]"),
            report.pass,
            format!(
                "max group deviation {:.2}σ, max pairwise {:.2}σ, threshold {}σ",
                report.max_group_z, report.max_pairwise_z, report.threshold
            ),
        );
    }
    Ok(())
}

fn run_oracle_check(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let dims = config.dims();
    let len = dense_ket_len(dims);
    if len > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            entries: len,
            cap: DENSE_CAP,
        });
    }
    let mut invalid = 0usize;
    for &theta in &config.theta_grid {
        let branches = build_branches(theta);
        let mut worst = 0.0f64;
        for s in 0..config.seeds as u64 {
            let det = DetectorArray::haar(derive_seed(config.seed, s), dims, config.dist)?;
            let structured = reduced_density_structured(&branches, &det);
            let dense = reduced_density_dense_oracle(&branches, &det)?;
            worst = worst.max(structured.max_deviation(&dense)?);
            invalid += [&structured, &dense]
                .iter()
                .filter(|r| r.validate().is_err())
                .count();
        }
        let ok = worst <= ORACLE_TOLERANCE;
        b.point(
            "max_deviation",
            Some(theta),
            worst,
            None,
            Some(0.0),
            Some(ok),
        );
        b.check(
            format!("oracle_equivalence[theta={theta}]"),
            ok,
            format!("max entrywise deviation {worst:.1e} ≤ 1e-12"),
        );
    }
    b.check(
        "reduced_matrix_sanity",
        invalid == 0,
        format!("{invalid} reduced matrices failed Hermitian/trace/PSD validation"),
    );
    Ok(())
}

/// Serializes the report as pretty JSON with a trailing newline.
pub fn report_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn points_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &report.points {
        w.serialize(p)
            .map_err(|e| Error::Config(format!("writing csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("writing csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `report.json` and `points.csv` into `dir`, creating it if needed.
pub fn write_outputs(report: &Report, dir: &Path) -> std::io::Result<()> {
    let to_io = |e: Error| std::io::Error::other(e.to_string());
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report_json(report).map_err(to_io)?)?;
    fs::write(dir.join("points.csv"), points_csv(report).map_err(to_io)?)?;
    Ok(())
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Parses an angle in radians: plain numbers (`0.3`), or multiples of π such
/// as `pi`, `-pi/4`, `3pi/8`, `3*pi/8`, `0.5pi`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let err = || Error::Config(format!("cannot parse angle '{text}'"));
    let s = text.trim().to_ascii_lowercase();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (s.as_str(), None),
    };
    let numerator = if let Some(coef) = num.strip_suffix("pi").or_else(|| num.strip_suffix('π')) {
        let coef = coef.trim().trim_end_matches('*').trim();
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => f64::from_str(other).map_err(|_| err())?,
        };
        c * PI
    } else {
        f64::from_str(num).map_err(|_| err())?
    };
    let value = match den {
        None => numerator,
        Some(d) => {
            let d = f64::from_str(d).map_err(|_| err())?;
            if d == 0.0 {
                return Err(err());
            }
            numerator / d
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(err())
    }
}

/// Parses `start:stop:count` into an inclusive grid, or a comma list of angles.
pub fn parse_theta_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, count] => {
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad grid count in '{text}'")))?;
            if count == 0 {
                return Err(Error::Config("grid count must be at least 1".into()));
            }
            Ok(linspace(parse_angle(start)?, parse_angle(stop)?, count))
        }
        [_] => text.split(',').map(parse_angle).collect(),
        _ => Err(Error::Config(format!(
            "theta grid must be start:stop:count or a comma list, got '{text}'"
        ))),
    }
}

/// Parses `uniform` or `gibbs:<beta>` (`inf` allowed).
pub fn parse_dist(text: &str) -> Result<DistKind> {
    let t = text.trim().to_ascii_lowercase();
    if t == "uniform" {
        return Ok(DistKind::Uniform);
    }
    if let Some(beta) = t.strip_prefix("gibbs:") {
        let beta: f64 = beta
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad gibbs beta in '{text}'")))?;
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Config(format!(
                "gibbs beta must be nonnegative, got {beta}"
            )));
        }
        return Ok(DistKind::Gibbs { beta });
    }
    Err(Error::Config(format!(
        "distribution must be 'uniform' or 'gibbs:<beta>', got '{text}'"
    )))
}

/// Parses a comma-separated list of positive integers.
pub fn parse_m_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&m| m >= 1)
                .ok_or_else(|| Error::Config(format!("bad M value '{s}'")))
        })
        .collect()
}
