use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bellsim::correlate::ChshSettings;
use bellsim::study::{
    parse_angle, parse_dist, parse_m_list, parse_theta_grid, run, write_outputs, ExperimentConfig,
    StudyKind,
};
use bellsim::Error;

/// Bell-pair measurement simulator with decohering detectors.
#[derive(Parser)]
#[command(name = "bellsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate C(θ) on a grid of relative analyzer angles.
    Correlate(StudyArgs),
    /// Median off-diagonal magnitude and mean |f|² across detector sizes.
    DecohereScan(StudyArgs),
    /// CHSH combination S at four settings.
    Chsh(StudyArgs),
    /// Marginal statistics of each station across remote settings.
    Nosignal(StudyArgs),
    /// Structured vs dense reduced density matrices.
    OracleCheck(StudyArgs),
    /// Run a study described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for report.json and points.csv.
    #[arg(long, default_value = "bellsim-out")]
    out: PathBuf,
    /// Worker threads (default: number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Internal dimension: one value, four values (LV,LH,RV,RH), or the scan list.
    #[arg(long = "M", value_name = "M")]
    m: Option<String>,
    /// uniform | gibbs:<beta>
    #[arg(long)]
    dist: Option<String>,
    /// start:stop:count, or a comma list of angles.
    #[arg(long)]
    theta_grid: Option<String>,
    /// Single angle; shorthand for a one-point grid.
    #[arg(long, conflicts_with = "theta_grid")]
    theta: Option<String>,
    /// Local analyzer angle for nosignal.
    #[arg(long)]
    local_theta: Option<String>,
    /// Trials per setting.
    #[arg(long)]
    n: Option<usize>,
    /// Detector seeds for decohere-scan and oracle-check.
    #[arg(long)]
    seeds: Option<usize>,
    /// CHSH settings a,a',b,b'.
    #[arg(long)]
    settings: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

impl StudyArgs {
    fn into_config(self, study: StudyKind) -> Result<(ExperimentConfig, CommonArgs), Error> {
        let mut c = ExperimentConfig::defaults(study);
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(m) = &self.m {
            c.m = parse_m_list(m)?;
        }
        if let Some(d) = &self.dist {
            c.dist = parse_dist(d)?;
        }
        if let Some(g) = self.theta_grid.as_deref().or(self.theta.as_deref()) {
            c.theta_grid = parse_theta_grid(g)?;
        }
        if let Some(t) = &self.local_theta {
            c.local_theta = parse_angle(t)?;
        }
        if let Some(n) = self.n {
            c.n_trials = n;
        }
        if let Some(s) = self.seeds {
            c.seeds = s;
        }
        if let Some(s) = &self.settings {
            let v = s
                .split(',')
                .map(parse_angle)
                .collect::<Result<Vec<_>, _>>()?;
            let [a, a_prime, b, b_prime] = v[..] else {
                return Err(Error::Config(format!(
                    "--settings needs four angles, got {}",
                    v.len()
                )));
            };
            c.chsh_settings = ChshSettings {
                a,
                a_prime,
                b,
                b_prime,
            };
        }
        Ok((c, self.common))
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("parsing {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let parsed = match cli.command {
        Command::Correlate(a) => a.into_config(StudyKind::Correlate),
        Command::DecohereScan(a) => a.into_config(StudyKind::DecohereScan),
        Command::Chsh(a) => a.into_config(StudyKind::Chsh),
        Command::Nosignal(a) => a.into_config(StudyKind::Nosignal),
        Command::OracleCheck(a) => a.into_config(StudyKind::OracleCheck),
        Command::Run { config, common } => load_config(&config).map(|c| (c, common)),
    };
    let (config, common) = match parsed {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(w) = common.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: configuring worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for check in &report.checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!("{}: {}, {verdict}", check.name, check.detail);
    }
    if let Err(e) = write_outputs(&report, &common.out) {
        eprintln!("error: writing outputs to {}: {e}", common.out.display());
        return ExitCode::from(2);
    }
    println!("wrote {}", common.out.display());
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
