//! Running a configured study from code and writing its report files.

use bellsim::study::{parse_theta_grid, run, write_outputs, ExperimentConfig, StudyKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ExperimentConfig::defaults(StudyKind::Correlate);
    config.seed = 7;
    config.theta_grid = parse_theta_grid("0:pi/2:5")?;
    config.n_trials = 20_000;

    let report = run(&config)?;
    for check in &report.checks {
        println!(
            "{}: {} [{}]",
            check.name,
            check.detail,
            if check.pass { "PASS" } else { "FAIL" }
        );
    }
    let dir = std::env::temp_dir().join("bellsim-example");
    write_outputs(&report, &dir)?;
    println!("report written to {}", dir.display());
    Ok(())
}
