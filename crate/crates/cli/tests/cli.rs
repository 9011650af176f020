//! The `hrt` binary driven through its command line.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrt_cli::bench::read_csv;
use hrt_core::io::parse_instance;
use hrt_core::preprocess::reduce;
use hrt_core::{build_model, export_lp};
use tempfile::TempDir;

const FIGURE1: &str = include_str!("../../../data/figure1.txt");

fn figure1_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/figure1.txt")
}

fn hrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_figure1_then_check_it() {
    let dir = TempDir::new().unwrap();
    let fig = figure1_path();
    let fig = fig.to_str().unwrap();
    let out = hrt(&["solve", fig]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let matching = stdout(&out);
    assert_eq!(matching.lines().filter(|l| !l.ends_with(" -")).count(), 6);
    assert!(stderr(&out).contains("status Optimal size 6"));

    let m = write(&dir, "m.txt", &matching);
    let check = hrt(&["check", fig, &m]);
    assert_eq!(check.status.code(), Some(0));
    assert!(stdout(&check).contains("verdict: stable"));
    assert!(stdout(&check).contains("size: 6"));
}

#[test]
fn solve_writes_stats_lp_and_output_files() {
    let dir = TempDir::new().unwrap();
    let fig = figure1_path();
    let stats = dir.path().join("run.csv");
    let lp = dir.path().join("model.lp");
    let matching = dir.path().join("m.txt");
    let out = hrt(&[
        "solve",
        fig.to_str().unwrap(),
        "--seed",
        "3",
        "--stats",
        stats.to_str().unwrap(),
        "--emit-lp",
        lp.to_str().unwrap(),
        "-o",
        matching.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).is_empty());

    let records = read_csv(std::fs::File::open(&stats).unwrap()).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!((r.n1, r.n2, r.size, r.seed), (6, 3, 6, 3));
    assert_eq!(r.status, "Optimal");
    assert!(r.warm_size <= r.size);

    let (inst, _) = parse_instance(FIGURE1).unwrap();
    let red = reduce(&inst).unwrap().instance;
    let expected = export_lp(&build_model(&red, &red.ranks()));
    assert_eq!(std::fs::read_to_string(&lp).unwrap(), expected);
    assert_eq!(std::fs::read_to_string(&matching).unwrap().lines().count(), 6);
}

#[test]
fn check_reports_blocking_pairs_and_violations() {
    let dir = TempDir::new().unwrap();
    let fig = figure1_path();
    let fig = fig.to_str().unwrap();

    let m1 = write(&dir, "m1.txt", "r1 h1\nr2 h1\nr3 h3\nr4 h2\nr5 h3\nr6 h2\n");
    assert_eq!(hrt(&["check", fig, &m1]).status.code(), Some(0));

    let single = write(&dir, "single.txt", "r1 h2\n");
    let out = hrt(&["check", fig, &single]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("(r1, h1)"));
    assert!(stdout(&out).contains("verdict: NOT stable"));

    let overfull = write(&dir, "over.txt", "r1 h1\nr2 h1\nr3 h1\n");
    let out = hrt(&["check", fig, &overfull]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("h1 has 3 assignees but capacity 2"));

    let unacceptable = write(&dir, "bad.txt", "r2 h3\n");
    let out = hrt(&["check", fig, &unacceptable]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("not acceptable"));

    let garbage = write(&dir, "garbage.txt", "r1 h1 h2\n");
    assert_eq!(hrt(&["check", fig, &garbage]).status.code(), Some(1));
}

#[test]
fn oracle_and_reduce_on_figure1() {
    let fig = figure1_path();
    let fig = fig.to_str().unwrap();
    let out = hrt(&["oracle", fig]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("stable matchings: 2"));
    assert!(text.contains("maximum size: 6"));

    let out = hrt(&["oracle", fig, "--max-residents", "3"]);
    assert_eq!(out.status.code(), Some(1));

    let out = hrt(&["reduce", fig]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for pair in ["r1 h2", "r3 h1", "r6 h1"] {
        assert!(text.contains(&format!("# deleted {pair}\n")), "{text}");
    }
    let (reduced, warnings) = parse_instance(&text).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(reduced.num_pairs(), 7);
}

#[test]
fn generate_is_deterministic_and_validated() {
    let a = hrt(&["generate", "--n1", "300", "--td", "0.85", "--seed", "7"]);
    let b = hrt(&["generate", "--n1", "300", "--td", "0.85", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let (inst, _) = parse_instance(&stdout(&a)).unwrap();
    assert_eq!((inst.n_residents(), inst.n_hospitals()), (300, 21));
    assert_eq!(inst.total_capacity(), 300);

    let custom = hrt(&[
        "generate", "--n1", "20", "--n2", "4", "--posts", "10", "--list-len", "3",
        "--td-residents", "0.5",
    ]);
    assert_eq!(custom.status.code(), Some(0));
    let (inst, _) = parse_instance(&stdout(&custom)).unwrap();
    assert_eq!(inst.total_capacity(), 10);

    let bad = hrt(&["generate", "--n1", "20", "--n2", "3"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("exceeds"));
}

#[test]
fn usage_and_input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let fig = figure1_path();
    assert_eq!(hrt(&[]).status.code(), Some(1));
    assert_eq!(hrt(&["solve"]).status.code(), Some(1));
    assert_eq!(hrt(&["--help"]).status.code(), Some(0));
    let out = hrt(&["solve", fig.to_str().unwrap(), "--time-limit", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(hrt(&["solve", "/nonexistent/file"]).status.code(), Some(1));
    let broken = write(&dir, "broken.txt", "2 1\nr1: h1\n");
    let out = hrt(&["solve", &broken]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line"));
}

#[test]
fn time_limit_returns_the_warm_start_or_better() {
    let dir = TempDir::new().unwrap();
    let gen = hrt(&["generate", "--n1", "300", "--td", "0.85", "--seed", "9"]);
    let inst = write(&dir, "hard.txt", &stdout(&gen));
    let stats = dir.path().join("run.csv");
    let out = hrt(&[
        "solve", &inst, "--seed", "9", "--time-limit", "0.000001", "--stats",
        stats.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = &read_csv(std::fs::File::open(&stats).unwrap()).unwrap()[0];
    assert_eq!(r.status, "FeasibleTimeout");
    assert!(r.size >= r.warm_size && r.warm_size > 0);

    let m = write(&dir, "m.txt", &stdout(&out));
    assert_eq!(hrt(&["check", &inst, &m]).status.code(), Some(0));
}

#[test]
fn resident_ties_skip_reduction_with_notice() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "ties.txt",
        "2 1\nr1: (h1)\nr2: h1\nh1: 1: (r1 r2)\n",
    );
    let tied = write(&dir, "tied.txt", "3 2\nr1: (h1 h2)\nr2: h1\nr3: h2\nh1: 1: r1 r2\nh2: 1: r3 r1\n");
    for path in [inst, tied] {
        let out = hrt(&["solve", &path]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let m = write(&dir, "m.txt", &stdout(&out));
        assert_eq!(hrt(&["check", &path, &m]).status.code(), Some(0));
        if path.ends_with("tied.txt") {
            assert!(stderr(&out).contains("reduction skipped"));
            assert_eq!(hrt(&["reduce", &path]).status.code(), Some(1));
        }
    }
}

fn without_times(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(6);
            cols.join(",")
        })
        .collect()
}

#[test]
fn bench_commands_write_sorted_deterministic_csv() {
    let args = [
        "bench-tie-density", "--n1", "30,40", "--td-start", "0", "--td-end", "1",
        "--td-step", "0.5", "--reps", "2", "--cutoff", "30", "--seed", "4",
    ];
    let a = hrt(&args);
    let b = hrt(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
    assert_eq!(
        text.lines().next().unwrap(),
        "instance_id,n1,n2,td,seed,status,time_s,size,warm_size,nodes"
    );
    assert_eq!(without_times(&text), without_times(&stdout(&b)));
    let records = read_csv(text.as_bytes()).unwrap();
    assert!(records.windows(2).all(|w| w[0].instance_id < w[1].instance_id));
    assert!(records.iter().all(|r| r.warm_size <= r.size && r.size <= r.n1));
    assert!(stderr(&a).contains("solved%"));

    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("size.csv");
    let out = hrt(&[
        "bench-size", "--n1-start", "20", "--n1-step", "20", "--n1-max", "60", "--reps", "2",
        "--cutoff", "30", "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let records = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let sizes: Vec<_> = records.iter().map(|r| r.n1).collect();
    assert_eq!(sizes, vec![20, 20, 40, 40, 60, 60]);
    assert!(records.iter().all(|r| r.td == 0.85));

    let bad = hrt(&["bench-size", "--n1-step", "0"]);
    assert_eq!(bad.status.code(), Some(1));
    let bad = hrt(&["bench-tie-density", "--td-end", "1.5"]);
    assert_eq!(bad.status.code(), Some(1));
}
