//! Experiment pipelines: a plain dynamics run or an anchoring loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use forel_core::diagnostics::Recorder;
use forel_core::{
    build_kuhn_poker, build_leduc_poker, build_matrix_game, fit_decay_rate, iterate_anchors_with, parse_game_text,
    recurrence_stat, run, AnchorSchedule, AnchorStep, DiagnosticsRecord64, DynamicsState, EtaSchedule, GameFile,
    GameTree64, Policy64, RunOptions, SolverOptions, TransformSpec, TransformVariant, XiWeighting,
};

use crate::config::{AnchorPlan, ConfigError, GameSelector, RunConfig};

/// Rate fits stop at the first Ξ sample at or below this level.
pub const FIT_FLOOR: f64 = 1e-13;

/// Minimum probability of a seeded random initial policy.
const RANDOM_INIT_MIN_PROB: f64 = 1e-3;

#[derive(Debug)]
pub enum Failure {
    Usage(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "usage error: {e}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

fn builtin_matrix(name: &str) -> Option<Vec<Vec<f64>>> {
    match name {
        "biased_mp" => Some(vec![vec![1.0, -1.0], vec![-1.0, 10.0]]),
        "matching_pennies" => Some(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]),
        "rps" => Some(vec![vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0]]),
        _ => None,
    }
}

/// Builds the selected game. A `matrix:` name that is not an existing file
/// may name a built-in matrix (`biased_mp`, `matching_pennies`, `rps`).
pub fn load_game(selector: &GameSelector) -> Result<GameTree64, ConfigError> {
    let bad = |m: String| ConfigError::new("game", m);
    match selector {
        GameSelector::Kuhn => Ok(build_kuhn_poker()),
        GameSelector::Leduc => Ok(build_leduc_poker()),
        GameSelector::Matrix(path) | GameSelector::Polymatrix(path) => {
            let want_matrix = matches!(selector, GameSelector::Matrix(_));
            if want_matrix && !Path::new(path).exists() {
                if let Some(m) = builtin_matrix(path) {
                    return build_matrix_game(&m).map_err(|e| bad(e.to_string()));
                }
            }
            let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {path}: {e}")))?;
            let file = parse_game_text::<f64>(&text).map_err(|e| bad(format!("{path}: {e}")))?;
            match (&file, want_matrix) {
                (GameFile::Matrix(_), true) | (GameFile::Polymatrix(_), false) => {}
                (GameFile::Matrix(_), false) => return Err(bad(format!("{path} holds a matrix game, use matrix:"))),
                (GameFile::Polymatrix(_), true) => {
                    return Err(bad(format!("{path} holds a polymatrix game, use polymatrix:")))
                }
            }
            file.build().map_err(|e| bad(format!("{path}: {e}")))
        }
    }
}

fn load_policy(game: &GameTree64, path: &Path, key: &str) -> Result<Policy64, ConfigError> {
    let bad = |m: String| ConfigError::new(key, format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let policy = Policy64::from_text(game, &text).map_err(|e| bad(e.to_string()))?;
    policy.check_complete(game).map_err(|e| bad(e.to_string()))?;
    policy.check_simplex().map_err(|e| bad(e.to_string()))?;
    Ok(policy)
}

/// CSV output: a block of `#` documentation lines, then records. Summary
/// and abort rows are records whose first field starts with `#`.
struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvOut {
    fn create(path: &Path, kind: &str, cfg: &RunConfig, columns: &[(&str, &str)]) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# forel {kind}")?;
        for (k, v) in &cfg.raw {
            writeln!(buf, "# config {k}={v}")?;
        }
        for (name, doc) in columns {
            writeln!(buf, "# column {name}: {doc}")?;
        }
        writeln!(buf, "# rows starting with #summary hold run-level results; #aborted marks a run that stopped early")?;
        let mut out = Self {
            inner: csv::WriterBuilder::new().flexible(true).from_writer(buf),
            path: path.to_path_buf(),
        };
        out.record(columns.iter().map(|c| c.0))?;
        Ok(out)
    }

    fn record<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> anyhow::Result<()> {
        self.inner
            .flush()
            .with_context(|| format!("cannot write {}", self.path.display()))
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Sibling path for a policy snapshot: `run.csv` becomes `run.<tag>.policy`.
pub fn snapshot_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.policy"))
}

fn write_snapshot(game: &GameTree64, out: &Path, tag: &str, policy: &Policy64) -> anyhow::Result<()> {
    let path = snapshot_path(out, tag);
    std::fs::write(&path, policy.to_text(game)).with_context(|| format!("cannot write {}", path.display()))
}

const TRAJECTORY_COLUMNS: &[(&str, &str)] = &[
    ("step", "integration steps taken"),
    ("time", "integrated time"),
    ("nashconv", "sum over players of best-response gain under the base reward"),
    ("value_p1", "expected base return of player 1"),
    ("J", "Lyapunov function of the scores against the reference (empty without reference)"),
    ("xi_ref", "reach-weighted KL from the reference to the current policy (empty without reference)"),
    ("policy_dist_to_start", "L1 distance from the current policy to the initial one"),
    ("eta", "transform strength in effect"),
];

const ANCHOR_COLUMNS: &[(&str, &str)] = &[
    ("k", "anchor period index, from 1"),
    ("nashconv_base", "NashConv of the policy ending the period, under the base reward"),
    ("xi_to_ref", "reach-weighted KL from the reference to that policy (empty without reference)"),
    ("xi_step", "reach-weighted KL from that policy to the previous anchor"),
    ("sum_m", "sum over players of the monotonicity term (empty without reference)"),
    ("sum_delta", "sum over players of the base value gap (empty without reference)"),
    ("sum_kappa", "sum over players of the transformed value gap (empty without reference)"),
    ("identity_residual", "absolute gap between the two sides of the anchor-step identity (empty without reference)"),
];

/// Runs one configured experiment and writes its artifacts.
pub fn run_experiment(cfg: &RunConfig) -> Result<(), Failure> {
    let game = load_game(&cfg.game)?;
    if cfg.transform == TransformVariant::ZeroSum && game.num_players() != 2 {
        return Err(ConfigError::new("transform", "zerosum needs a two-player game").into());
    }
    let reference = cfg
        .reference
        .as_deref()
        .map(|p| load_policy(&game, p, "reference"))
        .transpose()?;
    match cfg.anchoring {
        Some(plan) => run_anchoring(cfg, &game, plan, reference.as_ref()),
        None => run_plain(cfg, &game, reference),
    }
}

fn run_plain(cfg: &RunConfig, game: &GameTree64, reference: Option<Policy64>) -> Result<(), Failure> {
    let mut spec = match cfg.transform {
        TransformVariant::None => TransformSpec::none(game),
        variant => {
            let anchor = match &cfg.anchor {
                Some(p) => load_policy(game, p, "anchor")?,
                None => Policy64::uniform(game),
            };
            TransformSpec::new(game, variant, cfg.eta, anchor, cfg.denominator)
                .map_err(|e| ConfigError::new("anchor", e.to_string()))?
        }
    };
    let mut state = match cfg.seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = Policy64::random_interior(game, &mut rng, RANDOM_INIT_MIN_PROB);
            DynamicsState::from_policy(game, cfg.mode, cfg.regularizer, &init).map_err(anyhow::Error::from)?
        }
        None => DynamicsState::new(game, cfg.mode, cfg.regularizer),
    };
    let mut opts = RunOptions::new(cfg.dt, cfg.steps).integrator(cfg.integrator).stride(cfg.stride);
    if let Some((target, half_life)) = cfg.eta_decay {
        opts = opts.eta_schedule(EtaSchedule::Decay {
            eta_max: cfg.eta,
            eta_target: target,
            half_life,
        });
    }

    let mut out = CsvOut::create(&cfg.out, "trajectory", cfg, TRAJECTORY_COLUMNS)?;

    let weighting = XiWeighting::from(cfg.denominator);
    let mut rec = Recorder::new(game).with_weighting(weighting);
    if let Some(r) = reference.clone() {
        rec = rec.with_reference(r).map_err(|e| ConfigError::new("reference", e.to_string()))?;
    }
    let width = cfg.steps.to_string().len();
    let mut snapshots = Vec::new();
    let result = run(game, &mut spec, &mut state, &opts, |s, sp| {
        rec.observe(s, sp)?;
        if cfg.snapshot_every.is_some_and(|every| s.steps() % every == 0) {
            snapshots.push((s.steps(), s.policy().clone()));
        }
        Ok(())
    });

    for r in &rec.records {
        out.record(trajectory_row(r))?;
    }
    for (n, policy) in &snapshots {
        write_snapshot(game, &cfg.out, &format!("step{n:0width$}"), policy)?;
    }
    let failure = match result {
        Ok(outcome) => outcome.aborted.map(|e| (outcome.steps, anyhow::Error::from(e))),
        Err(e) => Some((rec.records.last().map_or(0, |r| r.step), anyhow::Error::from(e))),
    };
    plain_summary(&mut out, cfg, &rec.records)?;
    if let Some((step, e)) = failure {
        out.record(["#aborted".to_string(), "step".into(), step.to_string(), "error".into(), e.to_string()])?;
        out.finish()?;
        return Err(Failure::Runtime(e.context(format!("run stopped after step {step}"))));
    }
    out.finish()?;
    Ok(())
}

fn trajectory_row(r: &DiagnosticsRecord64) -> Vec<String> {
    vec![
        r.step.to_string(),
        num(r.time),
        num(r.nashconv),
        num(r.values[0]),
        opt(r.lyapunov),
        opt(r.xi_ref),
        num(r.dist_to_start),
        num(r.eta),
    ]
}

fn plain_summary(out: &mut CsvOut, cfg: &RunConfig, records: &[DiagnosticsRecord64]) -> anyhow::Result<()> {
    let Some(last) = records.last() else {
        return Ok(());
    };
    out.record(["#summary", "final", "step", &last.step.to_string(), "nashconv", &num(last.nashconv)])?;
    if let Some(best) = records.iter().min_by(|a, b| a.nashconv.total_cmp(&b.nashconv)) {
        out.record(["#summary", "nashconv_min", &num(best.nashconv), "time", &num(best.time)])?;
    }
    let t0 = cfg.dt * cfg.steps as f64 / 4.0 + cfg.dt / 2.0;
    match recurrence_stat(records, t0) {
        Some(r) => out.record([
            "#summary",
            "recurrence",
            "after",
            &num(t0),
            "min_distance",
            &num(r.min_distance),
            "time",
            &num(r.time),
        ])?,
        None => out.record(["#summary", "recurrence", "unavailable", "no samples after the first quarter"])?,
    }
    if records.iter().any(|r| r.xi_ref.is_some()) {
        let (times, xis): (Vec<f64>, Vec<f64>) = records
            .iter()
            .map(|r| (r.time, r.xi_ref.unwrap_or(f64::NAN)))
            .take_while(|&(_, x)| x > FIT_FLOOR)
            .unzip();
        match fit_decay_rate(&times, &xis, None) {
            Ok(f) => out.record([
                "#summary".to_string(),
                "rate_fit".into(),
                "slope".into(),
                num(f.slope),
                "intercept".into(),
                num(f.intercept),
                "t_start".into(),
                num(f.t_start),
                "t_end".into(),
                num(f.t_end),
                "residual".into(),
                num(f.residual),
                "samples".into(),
                f.samples.to_string(),
            ])?,
            Err(e) => out.record(["#summary".to_string(), "rate_fit".into(), "unavailable".into(), e.to_string()])?,
        }
    }
    Ok(())
}

fn run_anchoring(
    cfg: &RunConfig,
    game: &GameTree64,
    plan: AnchorPlan,
    reference: Option<&Policy64>,
) -> Result<(), Failure> {
    let schedule = AnchorSchedule::new(plan.every, plan.anchors, plan.interpolation)
        .map_err(|e| ConfigError::new("anchors", e.to_string()))?;
    let mut opts = SolverOptions::new(cfg.dt);
    opts.integrator = cfg.integrator;
    opts.regularizer = cfg.regularizer;
    opts.denominator = cfg.denominator;
    opts.early_exit = plan.early_exit;

    let mut out = CsvOut::create(&cfg.out, "anchoring", cfg, ANCHOR_COLUMNS)?;

    let mut done: Vec<AnchorStep<f64>> = Vec::new();
    let result = iterate_anchors_with(game, cfg.eta, &schedule, &opts, reference, |s| {
        done.push(s.clone());
        Ok(())
    });

    let width = plan.anchors.to_string().len();
    for s in &done {
        out.record(anchor_row(s))?;
        if cfg.snapshot_every.is_some_and(|every| s.k % every == 0) {
            write_snapshot(game, &cfg.out, &format!("anchor{:0width$}", s.k), &s.policy)?;
        }
    }
    anchor_summary(&mut out, &done)?;
    if let Err(e) = result {
        let k = done.last().map_or(0, |s| s.k);
        out.record(["#aborted".to_string(), "k".into(), k.to_string(), "error".into(), e.to_string()])?;
        out.finish()?;
        return Err(Failure::Runtime(anyhow!(e).context(format!("anchoring stopped after anchor {k}"))));
    }
    out.finish()?;
    Ok(())
}

fn anchor_row(s: &AnchorStep<f64>) -> Vec<String> {
    let d = s.decomposition.as_ref();
    let sum = |f: fn(&forel_core::AnchorDecomposition<f64>) -> &Vec<f64>| d.map(|d| f(d).iter().sum::<f64>());
    vec![
        s.k.to_string(),
        num(s.nashconv),
        opt(s.xi_to_ref),
        num(s.xi_step),
        opt(sum(|d| &d.m)),
        opt(sum(|d| &d.delta)),
        opt(sum(|d| &d.kappa)),
        opt(d.map(|d| d.residual)),
    ]
}

fn anchor_summary(out: &mut CsvOut, done: &[AnchorStep<f64>]) -> anyhow::Result<()> {
    let Some(last) = done.last() else {
        return Ok(());
    };
    out.record(["#summary", "final", "k", &last.k.to_string(), "nashconv", &num(last.nashconv)])?;
    if let Some(best) = done.iter().min_by(|a, b| a.nashconv.total_cmp(&b.nashconv)) {
        out.record(["#summary", "nashconv_min", &num(best.nashconv), "k", &best.k.to_string()])?;
    }
    let xis: Vec<f64> = done.iter().filter_map(|s| s.xi_to_ref).collect();
    if xis.len() == done.len() && !xis.is_empty() {
        let rise = xis.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let rise = if xis.len() < 2 { 0.0 } else { rise };
        out.record(["#summary", "xi_to_ref_max_increase", &num(rise)])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_paths_sit_beside_the_csv() {
        assert_eq!(
            snapshot_path(Path::new("out/run.csv"), "step010"),
            PathBuf::from("out/run.step010.policy")
        );
    }

    #[test]
    fn builtin_matrices_load() {
        let g = load_game(&GameSelector::Matrix("biased_mp".into())).unwrap();
        assert_eq!(g.num_players(), 2);
        assert_eq!(load_game(&GameSelector::Polymatrix("biased_mp".into())).unwrap_err().key, "game");
        assert_eq!(load_game(&GameSelector::Matrix("no_such_game".into())).unwrap_err().key, "game");
    }
}
