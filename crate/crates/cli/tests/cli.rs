use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
speakers = 3
sentences = 9
folds = 3
iterations = 3
align_at = 2
confusable = 1:b:p:0, 2:t:d:0, 3:k:g:0
out = run
";

fn lipmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipmap"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = lipmap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tiny(dir: &Path) -> String {
    let conf = dir.join("tiny.conf");
    fs::write(&conf, TINY).unwrap();
    conf.display().to_string()
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn pipeline_fills_the_grid_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let conf = tiny(dir.path());
    ok(&["--config", &conf, "pipeline"]);
    let run = dir.path().join("run");

    let summary = data_rows(&fs::read_to_string(run.join("summary.csv")).unwrap());
    assert_eq!(summary.len(), 21);
    let mut per_protocol: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &summary {
        *per_protocol.entry(row[0].as_str()).or_default() += 1;
    }
    let expected = BTreeMap::from([("SSD", 3), ("MS", 3), ("SI", 3), ("DSD", 6), ("DSDD", 6)]);
    assert_eq!(per_protocol, expected);
    assert!(data_rows(&fs::read_to_string(run.join("failures.csv")).unwrap()).is_empty());
    for name in [
        "weights.csv",
        "differences.csv",
        "plot_MS.csv",
        "plot_SI.csv",
        "plot_DSD.csv",
        "plot_DSDD.csv",
    ] {
        assert!(run.join("report").join(name).is_file(), "{name}");
    }

    let first = snapshot(&run);
    for (path, bytes) in &first {
        if path.starts_with("corpus/features") || path.ends_with("manifest.txt") {
            continue;
        }
        let text = String::from_utf8_lossy(bytes);
        let mut head = text.lines().take(3);
        assert!(
            head.next().is_some_and(|l| l.starts_with("# lipmap ")),
            "{}",
            path.display()
        );
        assert!(
            head.next().is_some_and(|l| l.starts_with("# config ")),
            "{}",
            path.display()
        );
        assert_eq!(head.next(), Some("# seed 2024"), "{}", path.display());
    }
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    let commands: Vec<&str> = manifest
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(commands, ["synth", "folds", "grid", "report"]);
    assert!(manifest
        .lines()
        .all(|l| l.contains("overrides ") && l.contains("sentences=9")));

    ok(&["--config", &conf, "pipeline"]);
    let second = snapshot(&run);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (path, bytes) in &first {
        assert!(
            second[path] == *bytes,
            "{} changed on rerun",
            path.display()
        );
    }
}

#[test]
fn staged_commands_agree_with_grid() {
    let dir = TempDir::new().unwrap();
    let conf = tiny(dir.path());
    ok(&["--config", &conf, "synth"]);
    ok(&["--config", &conf, "folds"]);
    ok(&["--config", &conf, "grid"]);
    let run = dir.path().join("run");
    let grid_summary = fs::read(run.join("summary.csv")).unwrap();
    let grid_results = fs::read(run.join("results.csv")).unwrap();
    fs::remove_file(run.join("summary.csv")).unwrap();
    fs::remove_file(run.join("results.csv")).unwrap();
    fs::remove_dir_all(run.join("maps")).unwrap();

    for cmd in [
        "train-phonemes",
        "confuse",
        "derive-maps",
        "train-visemes",
        "decode",
    ] {
        ok(&["--config", &conf, cmd]);
    }
    assert!(fs::read(run.join("summary.csv")).unwrap() == grid_summary);
    assert!(fs::read(run.join("results.csv")).unwrap() == grid_results);
    assert!(run.join("hyps/SSD_M_1(1,1).hyp").is_file());
}

#[test]
fn missing_inputs_exit_2_with_the_path() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty");
    let out_s = out.display().to_string();
    for cmd in ["folds", "train-phonemes", "grid", "report"] {
        let r = lipmap(&["--out", &out_s, cmd]);
        assert_eq!(r.status.code(), Some(2), "{cmd}");
        let err = String::from_utf8_lossy(&r.stderr);
        assert!(err.contains(&out_s), "{cmd}: {err}");
    }
    let r = lipmap(&[
        "--config",
        &dir.path().join("nope.conf").display().to_string(),
        "synth",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope.conf"));

    // Upstream artifacts missing mid-pipeline.
    let conf = tiny(dir.path());
    ok(&["--config", &conf, "synth"]);
    ok(&["--config", &conf, "folds"]);
    let r = lipmap(&["--config", &conf, "confuse"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("s1_f0.hmm"));
}

#[test]
fn config_errors_exit_1_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let out_s = dir.path().display().to_string();
    let cases: [(&str, &[&str]); 4] = [
        ("beam", &["--beam", "-1"]),
        ("lm_scale", &["--lm-scale", "-0.5"]),
        ("threshold", &["--threshold", "0"]),
        ("folds", &["--folds", "1"]),
    ];
    for (field, flags) in cases {
        let mut args = vec!["--out", &out_s];
        args.extend_from_slice(flags);
        args.push("synth");
        let r = lipmap(&args);
        assert_eq!(r.status.code(), Some(1), "{field}");
        assert!(
            String::from_utf8_lossy(&r.stderr).contains(&format!("`{field}`")),
            "{field}"
        );
    }
    for (text, field) in [
        ("colour = blue\n", "colour"),
        ("max_mix = 9\n", "max_mix"),
        ("sentences = many\n", "sentences"),
    ] {
        let conf = dir.path().join("bad.conf");
        fs::write(&conf, text).unwrap();
        let r = lipmap(&["--config", &conf.display().to_string(), "synth"]);
        assert_eq!(r.status.code(), Some(1), "{field}");
        assert!(
            String::from_utf8_lossy(&r.stderr).contains(&format!("`{field}`")),
            "{field}"
        );
    }
    assert_eq!(lipmap(&["--no-such-flag", "synth"]).status.code(), Some(1));

    // A fold count that disagrees with the stored split.
    let conf = tiny(dir.path());
    ok(&["--config", &conf, "synth"]);
    ok(&["--config", &conf, "folds"]);
    let r = lipmap(&["--config", &conf, "--folds", "4", "train-phonemes"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("`folds`"));
}

#[test]
fn corrupt_inputs_exit_3() {
    let dir = TempDir::new().unwrap();
    let conf = tiny(dir.path());
    ok(&["--config", &conf, "synth"]);
    ok(&["--config", &conf, "folds"]);
    let folds = dir.path().join("run/folds.txt");
    fs::write(&folds, "not a fold file\n").unwrap();
    assert_eq!(lipmap(&["--config", &conf, "grid"]).status.code(), Some(3));

    let summary = dir.path().join("partial.csv");
    fs::write(
        &summary,
        "protocol,map,train,test,mean_cw,se\nDSD,M_2,1,1,0.5,0.1\n",
    )
    .unwrap();
    let r = lipmap(&[
        "--config",
        &conf,
        "report",
        "--summary",
        &summary.display().to_string(),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

// Rows are test speakers, columns the speaker whose map was used.
const SIGNS: [[i8; 12]; 12] = [
    [0, -1, -2, -2, 1, -1, -1, -1, 1, 1, -1, 1],
    [2, 0, 1, 1, 2, 2, 1, 1, 2, 2, 1, 2],
    [-2, -2, 0, -2, 1, -1, -1, -2, -2, -2, -2, 1],
    [-2, -1, -1, 0, 1, 1, -2, -2, 1, -1, -2, 1],
    [-2, -1, 2, -2, 0, 1, -1, 2, 1, 2, -1, 2],
    [-1, -1, -1, 1, 2, 0, 2, -1, -1, 1, 1, 2],
    [1, -1, -1, 1, 1, 1, 0, 1, -1, -1, 1, 1],
    [-1, -1, 1, -1, -1, -2, -2, 0, 1, 2, 1, 1],
    [-2, -2, -1, -2, -1, -1, -1, -2, 0, -1, -2, 1],
    [-2, -2, -1, -1, -1, -2, -2, -2, -2, 0, -2, -2],
    [-1, 1, -1, 1, 1, -1, 1, -1, -1, 2, 0, 2],
    [-1, -2, -2, -1, -1, -2, -2, -2, -2, -1, -2, 0],
];

#[test]
fn report_replays_a_weighting_fixture() {
    let dir = TempDir::new().unwrap();
    let (base, se) = (0.5, 0.02);
    let mut csv = String::from("protocol,map,train,test,mean_cw,se\n");
    for q in 1..=12usize {
        csv += &format!("SSD,M_{q},{q},{q},{base},{se}\n");
        for n in (1..=12usize).filter(|&n| n != q) {
            let s = SIGNS[q - 1][n - 1];
            let step = if s.abs() == 1 { 0.5 * se } else { 3.0 * se };
            csv += &format!(
                "DSD,M_{n},{q},{q},{},0\n",
                base + step * f64::from(s.signum())
            );
        }
    }
    let summary = dir.path().join("fixture.csv");
    fs::write(&summary, csv).unwrap();
    let out = dir.path().join("out");
    ok(&[
        "--out",
        &out.display().to_string(),
        "report",
        "--summary",
        &summary.display().to_string(),
    ]);

    let weights = fs::read_to_string(out.join("report/weights.csv")).unwrap();
    let rows = data_rows(&weights);
    assert_eq!(rows.len(), 13);
    let parse = |r: &Vec<String>| {
        r[1..]
            .iter()
            .map(|v| v.parse::<i32>().unwrap())
            .collect::<Vec<_>>()
    };
    for (q, row) in rows[..12].iter().enumerate() {
        assert_eq!(row[0], (q + 1).to_string());
        let expected: Vec<i32> = SIGNS[q].iter().map(|&v| i32::from(v)).collect();
        assert_eq!(parse(row), expected);
    }
    assert_eq!(rows[12][0], "total");
    let column_sums: Vec<i32> = (0..12)
        .map(|n| SIGNS.iter().map(|r| i32::from(r[n])).sum())
        .collect();
    assert_eq!(parse(&rows[12]), column_sums);
    assert!(!out.join("report/differences.csv").exists());
}
