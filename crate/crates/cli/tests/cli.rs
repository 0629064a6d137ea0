use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forel_core::{
    build_kuhn_poker, build_matrix_game, iterate_anchors, kuhn_equilibrium, AnchorSchedule, Interpolation, Policy64,
    SolverOptions,
};
use tempfile::TempDir;

const NASH_MP: f64 = 11.0 / 13.0;

fn forel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forel"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn forel")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    summary: Vec<Vec<String>>,
    aborted: Option<Vec<String>>,
    comments: Vec<String>,
}

impl Csv {
    fn read(path: &Path) -> Csv {
        let text = fs::read_to_string(path).unwrap();
        let (comments, body): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with("# "));
        let comments = comments.into_iter().map(str::to_string).collect();
        let body = body.join("\n");
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_reader(body.as_bytes())
            .into_records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect::<Vec<String>>());
        let header = reader.next().unwrap();
        let mut out = Csv {
            header,
            rows: Vec::new(),
            summary: Vec::new(),
            aborted: None,
            comments,
        };
        for r in reader {
            match r[0].as_str() {
                "#summary" => out.summary.push(r),
                "#aborted" => out.aborted = Some(r),
                _ => out.rows.push(r),
            }
        }
        out
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let i = self.header.iter().position(|h| h == name).unwrap();
        self.rows.iter().map(|r| r[i].parse().unwrap()).collect()
    }

    fn summary(&self, key: &str) -> &[String] {
        self.summary.iter().find(|r| r[1] == key).unwrap()
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn mp_nash_file(dir: &Path) -> PathBuf {
    let p = format!("{} {}", NASH_MP, 1.0 - NASH_MP);
    write(dir, "nash.policy", &format!("0 0 {p}\n1 0 {p}\n"))
}

#[test]
fn documented_config_runs_and_documents_every_column() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "a.cfg", "eta=0.5\ngame=kuhn\ntransform=zerosum\nsteps=1000\ndt=0.01\nout=a.csv\n");
    let o = forel(dir.path(), &["run", "a.cfg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = Csv::read(&dir.path().join("a.csv"));
    assert_eq!(
        csv.header,
        ["step", "time", "nashconv", "value_p1", "J", "xi_ref", "policy_dist_to_start", "eta"]
    );
    for col in &csv.header {
        assert!(
            csv.comments.iter().any(|c| c.starts_with(&format!("# column {col}:"))),
            "undocumented column {col}"
        );
    }
    // Observed at step 0, every 100 steps, and the last step.
    assert_eq!(csv.column("step").len(), 11);
    assert!(csv.column("eta").iter().all(|&e| e == 0.5));
    assert!(csv.aborted.is_none());
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = "game=kuhn\ntransform=monotone\neta=0.3\nsteps=2000\ndt=0.02\nstride=50\nseed=7\nout=t.csv\n";
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        write(dir.path(), "c.cfg", cfg);
        let o = forel(dir.path(), &["run", "c.cfg"]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(dir.path().join("t.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn negative_eta_is_a_usage_error_naming_the_key() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.cfg", "game=kuhn\nsteps=10\ndt=0.01\nout=a.csv\neta=-1\n");
    let o = forel(dir.path(), &["run", "c.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("eta"), "{}", stderr(&o));
    assert!(!dir.path().join("a.csv").exists());
}

#[test]
fn unknown_and_missing_keys_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "u.cfg", "game=kuhn\nsteps=10\ndt=0.01\nout=a.csv\ncolour=red\n");
    let o = forel(dir.path(), &["run", "u.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));

    let o = forel(dir.path(), &["run", "--game", "kuhn", "--steps", "10", "--dt", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("out"));
}

#[test]
fn flags_override_file_values() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.cfg", "game=kuhn\ntransform=zerosum\nsteps=10\ndt=0.01\nout=a.csv\neta=0.5\n");
    let o = forel(dir.path(), &["run", "c.cfg", "--eta", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = Csv::read(&dir.path().join("a.csv"));
    assert!(csv.comments.iter().any(|c| c == "# config eta=2"));
    assert!(csv.column("eta").iter().all(|&e| e == 2.0));
}

#[test]
fn biased_pennies_cycles_without_transform() {
    let dir = TempDir::new().unwrap();
    mp_nash_file(dir.path());
    let o = forel(
        dir.path(),
        &[
            "run", "--game", "matrix:biased_mp", "--dt", "0.01", "--steps", "100000", "--integrator", "rk4",
            "--reference", "nash.policy", "--out", "mp.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = Csv::read(&dir.path().join("mp.csv"));
    let nashconv = csv.column("nashconv");
    assert!(nashconv.iter().all(|&v| v > 0.05));
    let times = csv.column("time");
    let dist = csv.column("policy_dist_to_start");
    let back = times
        .iter()
        .zip(&dist)
        .filter(|(&t, _)| t > 250.005)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    assert!(back < 0.05, "{back}");
    let rec = csv.summary("recurrence");
    assert_eq!(rec[5].parse::<f64>().unwrap(), back);
    let j = csv.column("J");
    assert!(j.iter().all(|v| (v - j[0]).abs() < 0.01));
}

fn read_policy(game: &forel_core::GameTree64, path: &Path) -> Policy64 {
    Policy64::from_text(game, &fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eta_sweep_moves_the_fixed_point_away_from_nash() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "s.cfg",
        "game=matrix:biased_mp\ntransform=zerosum\ndt=0.01\nsteps=4000\nsnapshot_every=4000\nout=fp.csv\n",
    );
    let o = forel(dir.path(), &["sweep", "s.cfg", "--param", "eta", "--values", "0.5,1,10", "--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let game = build_matrix_game(&[vec![1.0, -1.0], vec![-1.0, 10.0]]).unwrap();
    let nash = Policy64::from_blocks(vec![vec![NASH_MP, 1.0 - NASH_MP]; 2]);
    let mut dists = Vec::new();
    for eta in ["0.5", "1", "10"] {
        let csv = Csv::read(&dir.path().join(format!("fp_eta{eta}.csv")));
        assert!(csv.comments.iter().any(|c| c == &format!("# config eta={eta}")));
        let pi = read_policy(&game, &dir.path().join(format!("fp_eta{eta}.step4000.policy")));
        dists.push(pi.l1_distance(&nash));
    }
    assert!(dists[0] < dists[1] && dists[1] < dists[2], "{dists:?}");

    // A swept file is the same as a single run of its config.
    let single = TempDir::new().unwrap();
    write(
        single.path(),
        "s.cfg",
        "game=matrix:biased_mp\ntransform=zerosum\ndt=0.01\nsteps=4000\nsnapshot_every=4000\neta=1\nout=fp_eta1.csv\n",
    );
    assert!(forel(single.path(), &["run", "s.cfg"]).status.success());
    let a = fs::read_to_string(single.path().join("fp_eta1.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("fp_eta1.csv")).unwrap();
    let body = |s: &str| s.lines().filter(|l| !l.starts_with("# config")).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
}

#[test]
fn anchoring_matches_the_library_and_reports_the_identity() {
    let dir = TempDir::new().unwrap();
    let game = build_kuhn_poker::<f64>();
    let star = kuhn_equilibrium(&game, 1.0 / 3.0).unwrap();
    write(dir.path(), "star.policy", &star.to_text(&game));
    let o = forel(
        dir.path(),
        &[
            "run", "--game", "kuhn", "--transform", "monotone", "--eta", "0.5", "--dt", "0.02", "--anchor_every",
            "500", "--anchors", "4", "--reference", "star.policy", "--snapshot_every", "2", "--out", "k.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = Csv::read(&dir.path().join("k.csv"));
    assert_eq!(
        csv.header,
        ["k", "nashconv_base", "xi_to_ref", "xi_step", "sum_m", "sum_delta", "sum_kappa", "identity_residual"]
    );

    let sched = AnchorSchedule::new(500, 4, Interpolation::Hard).unwrap();
    let lib = iterate_anchors(&game, 0.5, &sched, &SolverOptions::new(0.02), Some(&star)).unwrap();
    let nashconv = csv.column("nashconv_base");
    let xi = csv.column("xi_to_ref");
    for (i, s) in lib.anchors.iter().enumerate() {
        assert_eq!(nashconv[i], s.nashconv);
        assert_eq!(xi[i], s.xi_to_ref.unwrap());
    }
    assert!(csv.column("identity_residual").iter().all(|&r| r < 1e-8));
    let last = csv.summary("final");
    assert_eq!(last[3], "4");

    for k in [2, 4] {
        let snap = read_policy(&game, &dir.path().join(format!("k.anchor{k}.policy")));
        assert!(snap.max_abs_diff(&lib.anchors[k - 1].policy) < 1e-15);
    }
    assert!(!dir.path().join("k.anchor1.policy").exists());
}

#[test]
fn numeric_failure_exits_nonzero_with_a_flagged_partial_csv() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "huge.txt", "matrix 2 2\n1e308 1e308\n-1e308 -1e308\n");
    let o = forel(
        dir.path(),
        &["run", "--game", "matrix:huge.txt", "--dt", "10", "--steps", "50", "--stride", "1", "--out", "h.csv"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let csv = Csv::read(&dir.path().join("h.csv"));
    assert_eq!(csv.column("step"), vec![0.0]);
    let flag = csv.aborted.expect("abort flag");
    assert_eq!(flag[1], "step");
    assert_eq!(flag[2], "0");
    assert!(flag[4].contains("non-finite"), "{flag:?}");
}

#[test]
fn validate_game_reports_sizes_and_problems() {
    let dir = TempDir::new().unwrap();
    let o = forel(dir.path(), &["validate-game", "kuhn"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("infostates player 1: 6"), "{text}");
    assert!(text.contains("ok"));

    write(
        dir.path(),
        "three.txt",
        "polymatrix 3\n2 2 2\n1 0\n0 1\n0 1\n1 0\n-1 0\n0 -1\n1 0\n0 1\n0 -1\n-1 0\n-1 0\n0 -1\n",
    );
    let o = forel(dir.path(), &["validate-game", "polymatrix:three.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("players: 3"));

    write(dir.path(), "bad.txt", "matrix 2 2\n1 2\n3\n");
    let o = forel(dir.path(), &["validate-game", "matrix:bad.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn zerosum_on_three_players_names_transform() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "three.txt",
        "polymatrix 3\n2 2 2\n1 0\n0 1\n0 1\n1 0\n-1 0\n0 -1\n1 0\n0 1\n0 -1\n-1 0\n-1 0\n0 -1\n",
    );
    let o = forel(
        dir.path(),
        &[
            "run", "--game", "polymatrix:three.txt", "--transform", "zerosum", "--dt", "0.1", "--steps", "5", "--out",
            "p.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("transform"));
}
