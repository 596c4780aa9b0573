use histcircle::conjugacy::{ConjugacyGrid, Pullback};
use histcircle::{BaseDynamics, NoisePoint, RandomMapFamily};
use histcircle_cli::cache::DiskCache;
use histcircle_cli::{run, Command, ExperimentConfig, RunOptions};
use std::path::Path;
use std::process::Command as Process;

fn small_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.output.dir = out.to_owned();
    c.grid.level = 8;
    c.grid.residual_samples = 512;
    c.schedule.blocks = 2;
    c.target.q_omega = 16;
    c.target.level = 10;
    c.density.points = 4000;
    c.witness.shifts = 3;
    c
}

fn opts() -> RunOptions {
    RunOptions {
        workers: 1,
        ..RunOptions::default()
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_histcircle"))
}

#[test]
fn validate_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(Command::Validate, small_config(dir.path()), &opts());
    assert_eq!(m.exit_code, 0, "{:?}", m.error);
    assert!(m.outcomes.iter().all(|o| o.passed));
    assert!(dir.path().join("validate_manifest.json").exists());
    assert!(read(&dir.path().join("validation.json")).contains("uniform_expansion"));
}

#[test]
fn validate_large_epsilon_fails_c0_closeness() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.family.epsilon = 0.5;
    let m = run(Command::Validate, c, &opts());
    assert_eq!(m.exit_code, 1);
    assert!(!m.outcome("c0_near").unwrap().passed);
}

#[test]
fn validate_large_a_fails_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[family]\na = 0.3\n").unwrap();
    let status = binary()
        .args(["validate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("expansion") && l.contains("FAIL")));
}

#[test]
fn missing_config_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = binary()
        .args(["validate", "--config"])
        .arg(dir.path().join("absent.toml"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let m = run(Command::Validate, small_config(&blocker.join("sub")), &opts());
    assert_eq!(m.exit_code, 3);
    assert!(m.error.unwrap().contains("sub"));
}

#[test]
fn conjugacy_identity_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.family.a = 0.0;
    c.family.epsilon = 0.0;
    let m = run(Command::Conjugacy, c, &opts());
    assert_eq!(m.exit_code, 0, "{:?}", m.error);
    let (grid, _) = ConjugacyGrid::from_csv(&read(&dir.path().join("conjugacy_n8.csv"))).unwrap();
    assert_eq!(grid.points.len(), 257);
    for (j, a) in grid.points.iter().enumerate() {
        assert!((a - j as f64 / 256.0).abs() < 1e-12);
    }
}

#[test]
fn schedule_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(dir.path());
    c.schedule.budget = 1000;
    let m = run(Command::Historic, c, &opts());
    assert_eq!(m.exit_code, 2);
    assert!(m.error.unwrap().contains("1 blocks feasible"));
}

#[test]
fn historic_is_deterministic_across_workers_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let first = run(Command::Historic, c.clone(), &opts());
    assert_eq!(first.exit_code, 0, "{:?}", first.error);
    let csv = read(&dir.path().join("oscillation.csv"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    assert_eq!(csv.lines().count(), 3);

    let cached = run(Command::Historic, c.clone(), &opts());
    assert!(cached.stages.iter().any(|s| s.name == "oscillation" && s.cached));
    assert_eq!(read(&dir.path().join("oscillation.csv")), csv);

    let parallel = RunOptions {
        workers: 3,
        no_cache: true,
        ..RunOptions::default()
    };
    let fresh = run(Command::Historic, c, &parallel);
    assert!(fresh.stages.iter().all(|s| !s.cached));
    assert_eq!(read(&dir.path().join("oscillation.csv")), csv);
    assert_eq!(fresh.certificates, first.certificates);
}

#[test]
fn seed_override_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let a = run(Command::Partition, c.clone(), &opts());
    let b = run(
        Command::Partition,
        c,
        &RunOptions {
            seed: Some(9),
            ..opts()
        },
    );
    assert_ne!(a.config_hash, b.config_hash);
    assert_eq!(b.config.seeds.x_star, 9);
    assert!(a.passed() && b.passed());
}

#[test]
fn cache_agrees_with_fresh_on_random_probes() {
    let dir = tempfile::tempdir().unwrap();
    let pb = Pullback::new(RandomMapFamily::new(Default::default()).unwrap(), BaseDynamics::golden());
    let writer = DiskCache::new(dir.path(), "probe", true);
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    for i in 0..100 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let omega = NoisePoint(state);
        let level = 2 + (i % 6) as u32;
        let key = format!("grid-{}-{level}", omega.bits());
        let fresh = pb.conjugacy_grid(omega, level).unwrap();
        writer.store(&key, &fresh).unwrap();
        let reader = DiskCache::new(dir.path(), "probe", true);
        let loaded: ConjugacyGrid = reader.load(&key).unwrap();
        assert_eq!(loaded.omega, fresh.omega);
        assert!(loaded.points.iter().zip(&fresh.points).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn remaining_commands_emit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    for (cmd, files) in [
        (Command::Partition, vec!["partition.csv", "gap.json"]),
        (Command::Code, vec!["cylinders.csv", "code.json"]),
        (Command::Density, vec!["past_orbit.csv", "histogram.csv", "shadowing.csv"]),
        (Command::Witness, vec!["witness.csv"]),
    ] {
        let m = run(cmd, c.clone(), &opts());
        assert_eq!(m.exit_code, 0, "{}: {:?} {:?}", m.command, m.error, m.outcomes);
        for f in files {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
    let partition = read(&dir.path().join("partition.csv"));
    assert!(partition.starts_with("word,left,length\n"));
    assert_eq!(partition.lines().count(), 3);
    let witness = read(&dir.path().join("witness.csv"));
    assert_eq!(witness.lines().count(), 4);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&root.join("default.toml")).unwrap();
    let mut expected = ExperimentConfig::default();
    expected.output.dir = "out".into();
    assert_eq!(default, expected);
    let four = ExperimentConfig::load(&root.join("four_blocks.toml")).unwrap();
    assert_eq!(four.schedule.blocks, 4);
}
