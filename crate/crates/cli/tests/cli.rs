use std::path::Path;
use std::process::{Command, Output};

use diffmel_core::io::{parse_schedule, TensorFile};
use diffmel_core::NoiseSchedule;

fn diffmel(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffmel"))
        .args(args)
        .env("DIFFMEL_OUT_DIR", out_dir)
        .output()
        .expect("run diffmel")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn default_schedule_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffmel(&["schedule"], dir.path());
    ok(&out);
    let text = std::fs::read_to_string(dir.path().join("schedule.txt")).unwrap();
    let loaded = parse_schedule(&text).unwrap();
    let reference = NoiseSchedule::default();
    assert_eq!(loaded.num_steps(), 400);
    for t in 0..=400 {
        assert_eq!(
            loaded.alpha_bar(t).to_bits(),
            reference.alpha_bar(t).to_bits()
        );
    }
    for t in 1..=400 {
        assert_eq!(loaded.beta(t).to_bits(), reference.beta(t).to_bits());
    }
}

#[test]
fn single_step_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t1.txt");
    ok(&diffmel(
        &["schedule", "--steps", "1", "-o", path.to_str().unwrap()],
        dir.path(),
    ));
    let s = parse_schedule(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(s.num_steps(), 1);
    assert_eq!(s.beta(1), 1e-4);
}

#[test]
fn invalid_schedule_flags_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffmel(
        &["schedule", "--beta-start", "0.5", "--beta-end", "0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let out = diffmel(&["schedule", "--steps", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

fn sample_bytes(dir: &Path, extra: &[&str]) -> Vec<u8> {
    let mut args = vec!["sample", "--frames", "12"];
    if !extra.contains(&"--channels") {
        args.extend(["--channels", "2"]);
    }
    args.extend_from_slice(extra);
    ok(&diffmel(&args, dir));
    std::fs::read(dir.join("sample_000.tensor")).unwrap()
}

#[test]
fn accepted_decimation_factors_and_tensor_format() {
    let dir = tempfile::tempdir().unwrap();
    for gamma in ["1", "7", "21", "57"] {
        let bytes = sample_bytes(dir.path(), &["--gamma", gamma, "--seed", "5"]);
        let t = TensorFile::from_bytes(&bytes).unwrap();
        assert_eq!((t.channels, t.frames), (2, 12));
        assert!(bytes.starts_with(b"DIFFMEL1 2 12 f32\n"));
    }
}

#[test]
fn zero_temperature_ignores_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample_bytes(
        &dir.path().join("a"),
        &["--eta", "0", "--seed", "1", "--gamma", "21"],
    );
    let b = sample_bytes(
        &dir.path().join("b"),
        &["--eta", "0", "--seed", "2", "--gamma", "21"],
    );
    assert_eq!(a, b);
    let c = sample_bytes(&dir.path().join("c"), &["--seed", "2", "--gamma", "21"]);
    assert_ne!(a, c);
}

#[test]
fn invalid_sampling_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        diffmel(&["sample", "--gamma", "0"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        diffmel(&["sample", "--gamma", "401"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        diffmel(&["sample", "--eta", "-1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    // toy without a parameter file
    assert_eq!(
        diffmel(&["sample", "--predictor", "toy"], dir.path())
            .status
            .code(),
        Some(1)
    );
    let missing = dir.path().join("nope.tensor");
    let out = diffmel(
        &[
            "sample",
            "--predictor",
            "toy",
            "--params",
            missing.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn too_hot_temperature_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffmel(&["sample", "--gamma", "57", "--eta", "10"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn manifest_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    let original = sample_bytes(
        &first,
        &[
            "--gamma", "7", "--eta", "0.6", "--seed", "17", "--chains", "2",
        ],
    );
    let manifest = std::fs::read_to_string(first.join("manifest.txt")).unwrap();
    assert!(manifest.contains("gamma = 7"));
    assert!(manifest.contains("seed = 17"));
    assert!(manifest.contains("wall_clock.sample"));

    let m = first.join("manifest.txt");
    ok(&diffmel(
        &["sample", "--from-manifest", m.to_str().unwrap()],
        &again,
    ));
    for k in 0..2 {
        let name = format!("sample_{k:03}.tensor");
        assert_eq!(
            std::fs::read(first.join(&name)).unwrap(),
            std::fs::read(again.join(&name)).unwrap()
        );
    }
    assert_eq!(
        std::fs::read(again.join("sample_000.tensor")).unwrap(),
        original
    );
}

#[test]
fn custom_schedule_file_is_recorded_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("custom.txt");
    std::fs::write(&sched, "3 0.1 0.3 custom\n0.1\n0.2\n0.3\n").unwrap();
    let out_a = dir.path().join("a");
    sample_bytes(
        &out_a,
        &["--schedule", sched.to_str().unwrap(), "--seed", "3"],
    );
    let manifest = std::fs::read_to_string(out_a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("schedule_kind = custom"));
    assert!(manifest.contains("num_steps = 3"));
    let out_b = dir.path().join("b");
    let m = out_a.join("manifest.txt");
    ok(&diffmel(
        &["sample", "--from-manifest", m.to_str().unwrap()],
        &out_b,
    ));
    assert_eq!(
        std::fs::read(out_a.join("sample_000.tensor")).unwrap(),
        std::fs::read(out_b.join("sample_000.tensor")).unwrap()
    );
}

#[test]
fn toy_train_sample_and_grad_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffmel(
        &[
            "train-toy",
            "--steps",
            "50",
            "--items",
            "32",
            "--frames",
            "8",
        ],
        dir.path(),
    );
    ok(&out);
    let params = dir.path().join("toy_params.tensor");
    let shapes = std::fs::read_to_string(dir.path().join("toy_params.txt")).unwrap();
    assert!(shapes.contains("layer.0 = 64 x 19"));
    assert!(shapes.contains("layer.3 = 1 x 64"));
    let curve = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 51);

    let p = params.to_str().unwrap();
    let a = sample_bytes(
        &dir.path().join("s1"),
        &[
            "--predictor",
            "toy",
            "--params",
            p,
            "--label",
            "1",
            "--channels",
            "1",
            "--gamma",
            "21",
        ],
    );
    let b = sample_bytes(
        &dir.path().join("s2"),
        &[
            "--predictor",
            "toy",
            "--params",
            p,
            "--label",
            "1",
            "--channels",
            "1",
            "--gamma",
            "21",
        ],
    );
    assert_eq!(a, b);

    // channel mismatch with the trained network
    let out = diffmel(
        &[
            "sample",
            "--predictor",
            "toy",
            "--params",
            p,
            "--channels",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    let out = diffmel(&["grad-check", "--params", p], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max_rel_error="));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffmel(
        &[
            "bench",
            "--channels",
            "2",
            "--frames",
            "8",
            "--gammas",
            "1,21,57",
        ],
        dir.path(),
    );
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma,M,predictor_calls,mean_s,std_s,speedup");
    assert!(lines[1].starts_with("1,400,400,"));
    assert!(lines[2].starts_with("21,20,20,"));
    assert!(lines[3].starts_with("57,8,8,"));
    let out = diffmel(&["bench", "--repeats", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_reports_table_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = diffmel(&["verify", "--only", "1,2", "--seed", "5"], dir.path());
    let b = diffmel(&["verify", "--only", "1,2", "--seed", "6"], dir.path());
    ok(&a);
    ok(&b);
    let a = String::from_utf8_lossy(&a.stdout).to_string();
    let b = String::from_utf8_lossy(&b.stdout).to_string();
    assert!(a.starts_with("# seed=5\ncriterion\tname\tstatus"));
    assert!(b.starts_with("# seed=6\n"));
    let strip = |s: &str| -> Vec<String> {
        s.lines()
            .skip(1)
            .map(|l| {
                l.split('\t')
                    .enumerate()
                    .filter(|(i, _)| *i != 3)
                    .map(|(_, f)| f)
                    .collect::<Vec<_>>()
                    .join("\t")
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn verify_rejects_corrupted_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "400 0.0001 0.02 linear\n0.0001\nnot-a-number\n").unwrap();
    let out = diffmel(
        &[
            "verify",
            "--only",
            "1",
            "--schedule",
            path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_ne!(out.status.code(), Some(0));
    let out = diffmel(&["verify", "--only", "11"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failing_criterion_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    // a single-step schedule cannot exercise consecutive-step equivalence
    let path = dir.path().join("t1.txt");
    ok(&diffmel(
        &["schedule", "--steps", "1", "-o", path.to_str().unwrap()],
        dir.path(),
    ));
    let out = diffmel(
        &[
            "verify",
            "--only",
            "1",
            "--schedule",
            path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\tFAIL\t"));
}
