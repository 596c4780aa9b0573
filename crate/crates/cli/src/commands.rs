use crate::cache::DiskCache;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{Outcome, RunManifest, StageTiming};
use histcircle::conjugacy::{residual_between, InverseBranchSolver, Pullback};
use histcircle::historic::*;
use histcircle::symbolic::{cylinder, cylinders_csv, decode_point, encode_point, equivariance_check, gap_interval, partition};
use histcircle::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Conjugacy,
    Partition,
    Code,
    Historic,
    Density,
    Witness,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Conjugacy => "conjugacy",
            Command::Partition => "partition",
            Command::Code => "code",
            Command::Historic => "historic",
            Command::Density => "density",
            Command::Witness => "witness",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// 0 uses every available core.
    pub workers: usize,
    pub no_cache: bool,
}

/// Mutable state of one command run.
pub struct Session {
    pub config: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub cache: DiskCache,
    stages: Vec<StageTiming>,
    outcomes: Vec<Outcome>,
    certificates: serde_json::Map<String, Value>,
    outputs: Vec<String>,
}

impl Session {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&Self) -> Result<(T, bool), CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let (value, cached) = f(self)?;
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            cached,
        });
        Ok(value)
    }

    fn fresh<T>(&mut self, name: &str, f: impl FnOnce(&Self) -> Result<T, CliError>) -> Result<T, CliError> {
        self.stage(name, |s| f(s).map(|v| (v, false)))
    }

    fn cached<T>(&mut self, name: &str, key: &str, f: impl FnOnce(&Self) -> Result<T, CliError>) -> Result<T, CliError>
    where
        T: Serialize + serde::de::DeserializeOwned,
    {
        self.stage(name, |s| s.cache.get_or_compute(key, || f(s)))
    }

    fn outcome(&mut self, name: &str, passed: bool, detail: String) {
        self.outcomes.push(Outcome {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn certify<T: Serialize>(&mut self, name: &str, value: &T) {
        self.certificates
            .insert(name.to_string(), serde_json::to_value(value).expect("certificate serializes"));
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("output serializes");
        self.write(name, &(text + "\n"))
    }

    fn pullback(&self) -> Result<Pullback, CliError> {
        let c = &self.config;
        let family = RandomMapFamily::with_grid(c.family_params(), c.validation_grid())?;
        let solver = InverseBranchSolver {
            tolerance: c.solver.tolerance,
            max_bisections: c.solver.max_bisections,
            newton_steps: c.solver.newton_steps,
        };
        Ok(Pullback::new(family, c.base_dynamics())
            .with_solver(solver)
            .with_max_grid_cells(c.grid.max_cells))
    }

    fn omega(&self) -> NoisePoint {
        self.config.base_dynamics().omega0
    }

    fn s_second(&self) -> SymbolStream {
        SymbolStream::random_digits(self.config.family.k, self.config.seeds.x_star)
    }

    fn observable(&self) -> Result<BumpObservable, CliError> {
        Ok(BumpObservable::from_gap(self.config.family.delta0, self.config.family.k)?)
    }
}

/// Applies the command-line overrides to a loaded configuration.
pub fn effective_config(mut config: ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    if let Some(out) = &opts.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        config.seeds.x_star = seed;
        config.seeds.sampling = seed;
    }
    config
}

/// Runs one command and writes its manifest to `<out>/<command>_manifest.json`.
pub fn run(command: Command, config: ExperimentConfig, opts: &RunOptions) -> RunManifest {
    let start = Instant::now();
    let config = effective_config(config, opts);
    let hash = config.hash();
    let out = config.output.dir.clone();
    let mut session = Session {
        cache: DiskCache::new(&out.join("cache"), &hash, !opts.no_cache),
        config,
        hash,
        out,
        stages: Vec::new(),
        outcomes: Vec::new(),
        certificates: serde_json::Map::new(),
        outputs: Vec::new(),
    };
    let result = std::fs::create_dir_all(&session.out)
        .map_err(|e| CliError::io(&session.out, e))
        .and_then(|_| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| CliError::Validation(format!("worker pool: {e}")))
        })
        .and_then(|pool| pool.install(|| dispatch(command, &mut session)));
    let failed: Vec<String> = session
        .outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name.clone())
        .collect();
    let (error, exit_code) = match result {
        Err(e) => (Some(e.to_string()), e.exit_code()),
        Ok(()) if !failed.is_empty() => (Some(format!("failed checks: {}", failed.join(", "))), 1),
        Ok(()) => (None, 0),
    };
    let mut manifest = RunManifest {
        command: command.name().to_string(),
        config_hash: session.hash.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: session.config.clone(),
        workers: opts.workers,
        cache_enabled: !opts.no_cache,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        stages: session.stages,
        outcomes: session.outcomes,
        certificates: session.certificates,
        outputs: session.outputs,
        error,
        exit_code,
    };
    let path = session.out.join(format!("{}_manifest.json", command.name()));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = std::fs::write(&path, text) {
        let e = CliError::io(&path, e);
        manifest.error = Some(e.to_string());
        manifest.exit_code = e.exit_code();
    }
    manifest
}

fn dispatch(command: Command, s: &mut Session) -> Result<(), CliError> {
    match command {
        Command::Validate => cmd_validate(s),
        Command::Conjugacy => cmd_conjugacy(s),
        Command::Partition => cmd_partition(s),
        Command::Code => cmd_code(s),
        Command::Historic => cmd_historic(s),
        Command::Density => cmd_density(s),
        Command::Witness => cmd_witness(s),
    }
}

fn cmd_validate(s: &mut Session) -> Result<(), CliError> {
    let report = s.fresh("validate", |s| {
        Ok(validate_hypotheses(&s.config.family_params(), s.config.validation_grid()))
    })?;
    for c in &report.checks {
        s.outcome(&c.name, c.passed, format!("{}: {} vs {}", c.statement, c.lhs, c.rhs));
    }
    s.certify("lambda", &report.lambda);
    s.write_json("validation.json", &report)?;
    if !report.passed() {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(CliError::Validation(names.join(", ")));
    }
    Ok(())
}

fn grid_key(omega: NoisePoint, level: u32) -> String {
    format!("grid-{:016x}-n{level}", omega.bits())
}

fn cmd_conjugacy(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let omega = s.omega();
    let next = pb.base().theta(omega);
    let level = s.config.grid.level;
    let grid = s.cached("grid", &grid_key(omega, level), |_| Ok(pb.conjugacy_grid(omega, level)?))?;
    let grid_next = s.cached("grid_next", &grid_key(next, level), |_| Ok(pb.conjugacy_grid(next, level)?))?;
    let samples = s.config.grid.residual_samples;
    let residual = s.fresh("residual", |_| Ok(residual_between(pb.family(), &grid, &grid_next, samples)))?;
    let bound = pb.residual_bound(level);
    s.outcome("residual", residual <= bound, format!("{residual:e} <= {bound:e}"));
    s.outcome("monotone", grid.is_strictly_increasing(), format!("max gap {:e}", grid.max_gap()));
    s.certify(
        "conjugacy",
        &json!({ "level": level, "residual": residual, "residual_bound": bound, "max_gap": grid.max_gap() }),
    );
    s.write(&format!("conjugacy_n{level}.csv"), &grid.to_csv(pb.family().fingerprint()))
}

fn cmd_partition(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let omega = s.omega();
    let view = s.fresh("partition", |_| Ok(partition(&pb, omega)?))?;
    let (j, j_prime) = gap_interval(pb.family().delta0(), pb.k())?;
    let total = view.lifts[pb.k() as usize] - view.lifts[0];
    s.outcome("cover", (total - 1.0).abs() < 1e-12, format!("total length {total}"));
    let disjoint = view.interval(0).is_disjoint_closure(&j_prime);
    s.outcome("gap_disjoint", disjoint, "J' avoids the closure of I_0".into());
    let arc = |c: &CircleInterval| json!({ "left": c.left().map(|p| p.value()), "length": c.length() });
    s.write_json("gap.json", &json!({ "J": arc(&j), "J_prime": arc(&j_prime) }))?;
    s.write("partition.csv", &view.to_csv())
}

fn cmd_code(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let omega = s.omega();
    let k = pb.k();
    let c = s.config.code.clone();
    let words: Vec<SymbolWord> = (0..c.words as u64)
        .map(|i| SymbolStream::random_digits(k, s.config.seeds.sampling.wrapping_add(i)).prefix(c.word_length))
        .collect();
    let csv = s.fresh("cylinders", |_| Ok(cylinders_csv(&pb, omega, &words)?))?;
    let bound = pb.lambda().powi(-(c.word_length as i32)) + 1e-8;
    let longest = words
        .iter()
        .map(|w| cylinder(&pb, omega, w).map(|i| i.length()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    s.outcome("cylinder_decay", longest <= bound, format!("{longest:e} <= {bound:e}"));

    let stream = s.s_second();
    let depth = s.config.decode.depth;
    let err = s.fresh("equivariance", |_| Ok(equivariance_check(&pb, omega, &stream, depth, c.equivariance_steps)?))?;
    let limit = 3.0 * pb.lambda().powi(-(depth as i32)) + 1e-9;
    s.outcome("equivariance", err <= limit, format!("{err:e} <= {limit:e}"));
    let (x, width) = decode_point(&pb, omega, &stream, depth)?;
    let reencoded = match encode_point(&pb, omega, x, c.word_length) {
        Ok(w) => Some(w.to_string()),
        Err(Error::BoundaryAmbiguity { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(w) = &reencoded {
        let expected = stream.prefix(c.word_length).to_string();
        s.outcome("encode_decode", *w == expected, format!("{w} vs {expected}"));
    }
    s.write_json(
        "code.json",
        &json!({
            "decoded_point": x.value(),
            "cylinder_width": width,
            "prefix": stream.prefix(c.word_length).to_string(),
            "reencoded": reencoded,
            "equivariance_error": err,
        }),
    )?;
    s.write("cylinders.csv", &csv)
}

fn schedule(s: &mut Session, pb: &Pullback, obs: &BumpObservable) -> Result<BlockSchedule, CliError> {
    let c = s.config.schedule.clone();
    let sched = s.fresh("schedule", |_| Ok(build_schedule(obs, pb.lambda(), &c.rho, c.blocks, c.budget)?))?;
    s.certify("schedule", &sched);
    Ok(sched)
}

fn i_star(s: &mut Session, pb: &Pullback, obs: &BumpObservable) -> Result<TargetIntegral, CliError> {
    let t = s.config.target.clone();
    let key = format!("target-q{}-n{}", t.q_omega, t.level);
    let i_star = s.cached("target", &key, |_| Ok(target_integral(pb, obs, t.q_omega, t.level)?))?;
    s.certify("target", &i_star);
    Ok(i_star)
}

fn cmd_historic(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let obs = s.observable()?;
    let sched = schedule(s, &pb, &obs)?;
    let target = i_star(s, &pb, &obs)?;
    s.outcome(
        "target_positive",
        target.value > target.bound(),
        format!("I* = {} +/- {:e}", target.value, target.bound()),
    );
    let omega = s.omega();
    let depth = s.config.decode.depth;
    let tol = s.config.schedule.tolerance;
    let s2 = s.s_second();
    let key = format!("oscillation-{:016x}-d{depth}", omega.bits());
    let report = s.cached("oscillation", &key, |_| {
        Ok(oscillation_report(&pb, omega, &sched, &SymbolStream::zeros(), &s2, &obs, target.value, depth, tol)?)
    })?;
    s.outcome("oscillation_bounds", report.all_pass(), format!("{} checkpoints", report.rows.len()));
    if report.rows.len() >= 2 {
        s.outcome("gap", report.gap() > 0.0, format!("even - odd = {}", report.gap()));
    }
    s.certify("oscillation", &report.rows);
    let mut series = String::from("checkpoint,value\n");
    for (c, v) in report.series.checkpoints.iter().zip(&report.series.values) {
        let _ = writeln!(series, "{c},{v}");
    }
    s.write("birkhoff.csv", &series)?;
    s.write("oscillation.csv", &report.to_csv())
}

fn bar_s(s: &Session, sched: &BlockSchedule) -> SymbolStream {
    build_bar_s(sched, &SymbolStream::zeros(), &s.s_second())
}

fn cmd_density(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let obs = s.observable()?;
    let sched = schedule(s, &pb, &obs)?;
    let stream = bar_s(s, &sched);
    let omega = s.omega();
    let depth = s.config.decode.depth;
    let d = s.config.density.clone();
    let key = format!("past-{:016x}-l{}-d{depth}", omega.bits(), d.points);
    let points = s.cached("past_orbit", &key, |_| Ok(past_orbit_points(&pb, omega, &stream, d.points, depth)?))?;
    let coverage = coverage_length(&points, d.bins);
    s.outcome(
        "dense",
        coverage.is_some(),
        match coverage {
            Some(l) => format!("all {} bins hit after {l} points", d.bins),
            None => format!("some of {} bins empty after {} points", d.bins, points.len()),
        },
    );
    s.certify("coverage_length", &coverage);

    let mut csv = String::from("ell,x\n");
    for (l, p) in points.iter().enumerate() {
        let _ = writeln!(csv, "{l},{}", p.value());
    }
    s.write("past_orbit.csv", &csv)?;
    let mut hist = String::from("bin,count\n");
    for (b, n) in histogram(&points, d.bins).iter().enumerate() {
        let _ = writeln!(hist, "{b},{n}");
    }
    s.write("histogram.csv", &hist)?;

    if d.shadow_block >= 2 && d.shadow_block <= sched.blocks() {
        let s2 = s.s_second();
        let rows = s.fresh("shadowing", |_| {
            Ok(shadowing_check(&pb, omega, &sched, &stream, &s2, d.shadow_block, d.shadow_extra_depth)?)
        })?;
        let ok = rows.iter().all(|r| r.distance <= r.bound + 1e-12);
        s.outcome("shadowing", ok, format!("{} points of block {}", rows.len(), d.shadow_block));
        let mut csv = String::from("ell,distance,bound\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{}", r.ell, r.distance, r.bound);
        }
        s.write("shadowing.csv", &csv)?;
    }
    Ok(())
}

fn opt(v: Option<u64>) -> String {
    v.map_or(String::new(), |n| n.to_string())
}

fn cmd_witness(s: &mut Session) -> Result<(), CliError> {
    let pb = s.pullback()?;
    let obs = s.observable()?;
    let sched = schedule(s, &pb, &obs)?;
    let target = i_star(s, &pb, &obs)?;
    let stream = bar_s(s, &sched);
    let omega = s.omega();
    let depth = s.config.decode.depth;
    let w = s.config.witness.clone();
    let n_max = w.n_max.unwrap_or(sched.n[sched.blocks().min(2)]);
    let shifts: Vec<u64> = (0..w.shifts).collect();
    let (alpha, beta) = (target.value / 3.0, 2.0 * target.value / 3.0);
    let key = format!("witness-{:016x}-d{depth}-{}-{}-{n_max}", omega.bits(), w.shifts, w.n_min);
    let report = s.cached("witness", &key, |_| {
        Ok(residual_witness(&pb, omega, &stream, &shifts, &obs, alpha, beta, w.n_min, n_max, depth)?)
    })?;
    let detail = if report.all_found() {
        format!("{} witnesses up to n = {n_max}", report.rows.len())
    } else {
        report.failures().join("; ")
    };
    s.outcome("witnesses", report.all_found(), detail);
    let mut csv = String::from("shift,point,first_below,last_below,first_above,last_above,min_average,max_average\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.shift,
            r.point.value(),
            opt(r.first_below),
            opt(r.last_below),
            opt(r.first_above),
            opt(r.last_above),
            r.min_average,
            r.max_average
        );
    }
    s.write("witness.csv", &csv)
}

/// Loads `path` if given, otherwise the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
}
