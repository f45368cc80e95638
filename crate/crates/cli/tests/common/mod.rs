//! Shared fixture helpers for the CLI tests: tiny case/population/distance
//! files plus a run config, written into a temp directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_epiforecast")
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .env_remove("EPIFORECAST_WORKDIR")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// m/d/yy date headers starting 1/22/20, enough for ~70 columns.
pub fn date_header(offset: usize) -> String {
    let (mut month, mut day, mut remaining) = (1u32, 22u32, offset as u32);
    let days_in = |m: u32| match m {
        1 => 31,
        2 => 29, // 2020 is a leap year
        3 => 31,
        4 => 30,
        _ => 31,
    };
    while remaining > 0 {
        day += 1;
        if day > days_in(month) {
            day = 1;
            month += 1;
        }
        remaining -= 1;
    }
    format!("{month}/{day}/20")
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn workdir_file(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }
}

/// Cumulative case rows with mild epidemic growth plus weekly wiggle so the
/// observed daily series is never constant.
pub fn case_rows(n_days: usize, scale: f64, phase: usize) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(n_days);
    let mut total = 0.0;
    for t in 0..n_days {
        let wave = 1.0 + 0.5 * (((t + phase) % 7) as f64 / 6.0);
        let growth = 1.0 + (t as f64 / n_days as f64) * 2.0;
        total += (scale * wave * growth).round();
        cumulative.push(total);
    }
    cumulative
}

/// Writes a complete fixture: `regions` as (name, population, daily scale),
/// pairwise distances spread arbitrarily, one sub-region row per region.
pub fn write_fixture(regions: &[(&str, f64, f64)], n_days: usize, extra_config: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();

    let mut header = String::from("County,State");
    for t in 0..n_days {
        header.push(',');
        header.push_str(&date_header(t));
    }
    let mut cases = header + "\n";
    for (i, (name, _, scale)) in regions.iter().enumerate() {
        let row = case_rows(n_days, *scale, i);
        cases.push_str(&format!("{name} County,{name}"));
        for v in row {
            cases.push_str(&format!(",{v}"));
        }
        cases.push('\n');
    }
    std::fs::write(base.join("cases.csv"), cases).unwrap();

    let mut pops = String::from("region,population\n");
    for (name, population, _) in regions {
        pops.push_str(&format!("{name},{population}\n"));
    }
    std::fs::write(base.join("populations.csv"), pops).unwrap();

    let n = regions.len();
    let mut dist = String::from("region");
    for (name, _, _) in regions {
        dist.push(',');
        dist.push_str(name);
    }
    dist.push('\n');
    for i in 0..n {
        dist.push_str(regions[i].0);
        for j in 0..n {
            let d = if i == j {
                0.0
            } else {
                20.0 + 13.0 * (i + j) as f64
            };
            dist.push_str(&format!(",{d}"));
        }
        dist.push('\n');
    }
    std::fs::write(base.join("distances.csv"), dist).unwrap();

    let config = format!(
        r#"[paths]
cases = "cases.csv"
populations = "populations.csv"
distances = "distances.csv"
workdir = "out"

[ingest]
region_column = "State"
subregion_column = "County"
exclusions = []
gamma0 = 0.1
smoothing = false

[mobility]
alpha = 1.0e-5
d = 1.6
flight_coefficient = 0.0

{extra_config}
"#
    );
    let config_path = base.join("config.toml");
    std::fs::write(&config_path, config).unwrap();
    Fixture {
        dir,
        config: config_path,
    }
}

pub const SMALL_TRAIN: &str = r#"[train]
window = 8
horizon = 2
hidden = 4
st_layers = 2
kernel_width = 2
epochs = 4
learning_rate = 0.01
seed = 42
"#;
