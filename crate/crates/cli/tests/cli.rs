use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vasamp_core::mdp::rollout;
use vasamp_core::suite;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vasamp"));
    c.env_remove("VASAMP_LOG");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn tiny() -> PathBuf {
    configs().join("tiny_ab.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_in(config: &Path, out: &Path, args: &[&str]) -> Output {
    let mut full = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    full.extend_from_slice(args);
    run(&full)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Records of a JSONL artifact, header line skipped.
fn jsonl(path: &Path) -> Vec<serde_json::Value> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert!(header["config_checksum"].is_string());
    lines.map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn tokens(rec: &serde_json::Value) -> Vec<u64> {
    rec["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_u64().unwrap())
        .collect()
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases: &[(&str, &[&str])] = &[
        ("help.txt", &["--help"]),
        ("help_train_value.txt", &["train-value", "--help"]),
        ("help_decode.txt", &["decode", "--help"]),
        ("help_frontier.txt", &["frontier", "--help"]),
        ("help_ablate.txt", &["ablate", "--help"]),
        ("help_bench_cost.txt", &["bench-cost", "--help"]),
        ("help_oracle_check.txt", &["oracle-check", "--help"]),
        ("help_compose.txt", &["compose", "--help"]),
    ];
    for (file, args) in cases {
        let o = run(args);
        assert_ok(&o);
        let path = golden.join(file);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::write(&path, stdout(&o)).unwrap();
            continue;
        }
        let want =
            fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {file}"));
        assert_eq!(
            stdout(&o),
            want,
            "{file} drifted; rerun with UPDATE_GOLDEN=1 if intended"
        );
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["train-value"])), 2, "needs --config");
    assert_eq!(
        code(&run(&[
            "--config",
            "/definitely/missing.toml",
            "train-value"
        ])),
        2
    );
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn train_value_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&run_in(&tiny(), &a, &["train-value"]));
    assert_ok(&run_in(&tiny(), &b, &["train-value", "--jobs", "3"]));
    for f in ["checkpoint.json", "dataset.jsonl", "training_log.csv"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    assert_eq!(jsonl(&a.join("dataset.jsonl")).len(), 5000);
    let log = fs::read_to_string(a.join("training_log.csv")).unwrap();
    assert!(log.starts_with("# config_checksum: "));
    assert_eq!(
        log.lines().count(),
        2 + 6,
        "header, columns and one row per epoch"
    );

    let c = dir.path().join("c");
    assert_ok(&run_in(&tiny(), &c, &["--seed", "5", "train-value"]));
    assert_ne!(
        fs::read(a.join("dataset.jsonl")).unwrap(),
        fs::read(c.join("dataset.jsonl")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let no_reward = write_config(
        dir.path(),
        "no_reward.toml",
        r#"config_version = 1
name = "x"
[mdp]
vocab = ["a", "b", "<eos>"]
eos = "<eos>"
max_new_tokens = 2
policy = { kind = "uniform" }
"#,
    );
    let o = run_in(&no_reward, dir.path(), &["train-value"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mdp.reward"), "{}", stderr(&o));

    let base = fs::read_to_string(tiny()).unwrap();
    let zero_epochs = write_config(
        dir.path(),
        "e0.toml",
        &base.replace("epochs = 6", "epochs = 0"),
    );
    let o = run_in(&zero_epochs, dir.path(), &["train-value"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epochs"), "{}", stderr(&o));

    let unknown = write_config(dir.path(), "u.toml", &format!("{base}\n[extra]\nx = 1\n"));
    assert_eq!(code(&run_in(&unknown, dir.path(), &["oracle-check"])), 2);

    let version = write_config(
        dir.path(),
        "v.toml",
        &base.replace("config_version = 1", "config_version = 2"),
    );
    let o = run_in(&version, dir.path(), &["oracle-check"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config_version"));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.toml",
        r#"config_version = 1
name = "d"
[mdp]
instance = "verbose_neglen"
[estimator]
kind = "linear"
[td]
learning_rate = 1000.0
"#,
    );
    let o = run_in(&cfg, dir.path(), &["train-value"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("checkpoint.json").exists());
}

#[test]
fn decode_without_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(&tiny(), dir.path(), &["decode"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("checkpoint.json"));
    let o = run_in(&tiny(), dir.path(), &["frontier", "--source", "learned"]);
    assert_eq!(code(&o), 4);
    fs::write(dir.path().join("bogus.json"), "{}").unwrap();
    let o = run_in(
        &tiny(),
        dir.path(),
        &[
            "decode",
            "--checkpoint",
            dir.path().join("bogus.json").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn decode_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_ok(&run_in(&tiny(), out, &["train-value"]));

    // beta = 0 reproduces base rollouts under the recorded seeds
    assert_ok(&run_in(
        &tiny(),
        out,
        &["decode", "--beta", "0", "--n", "40"],
    ));
    let inst = suite::tiny_ab();
    let (pi, r) = inst.build().unwrap();
    let cfg = inst.episode();
    let records = jsonl(&out.join("decode.jsonl"));
    assert_eq!(records.len(), 40);
    for rec in &records {
        let seed = rec["seed"].as_u64().unwrap();
        let base = rollout(&pi, &r, &[], &cfg, seed, 1.0).unwrap();
        let want: Vec<u64> = base.tokens.iter().map(|t| t.0 as u64).collect();
        assert_eq!(tokens(rec), want);
    }

    // k = |V| top-k and full decoding emit the same streams
    let full = out.join("full");
    let topk = out.join("topk");
    let ckpt = out.join("checkpoint.json");
    let ckpt = ckpt.to_str().unwrap();
    assert_ok(&run_in(
        &tiny(),
        &full,
        &[
            "decode",
            "--checkpoint",
            ckpt,
            "--mode",
            "full",
            "--n",
            "30",
        ],
    ));
    assert_ok(&run_in(
        &tiny(),
        &topk,
        &[
            "decode",
            "--checkpoint",
            ckpt,
            "--mode",
            "topk",
            "--k",
            "3",
            "--n",
            "30",
        ],
    ));
    let a: Vec<_> = jsonl(&full.join("decode.jsonl"))
        .iter()
        .map(tokens)
        .collect();
    let b: Vec<_> = jsonl(&topk.join("decode.jsonl"))
        .iter()
        .map(tokens)
        .collect();
    assert_eq!(a, b);

    // blackbox choices stay inside the provider's top-k
    let bb = out.join("bb");
    let o = run_in(
        &tiny(),
        &bb,
        &[
            "decode",
            "--checkpoint",
            ckpt,
            "--mode",
            "blackbox_rerank",
            "--k",
            "2",
            "--n",
            "10",
        ],
    );
    assert_ok(&o);
    for row in jsonl(&bb.join("steps.jsonl")) {
        let step = &row["step"];
        let cands = step["candidates"].as_array().unwrap();
        assert!(cands.len() <= 2);
        assert!(cands.contains(&step["token"]));
    }

    let o = run_in(
        &tiny(),
        &bb,
        &[
            "decode",
            "--checkpoint",
            ckpt,
            "--mode",
            "blackbox_rerank",
            "--k",
            "6",
        ],
    );
    assert_eq!(code(&o), 2, "k above the provider cap is a config error");
}

#[test]
fn bench_cost_prints_ratio() {
    let o = run(&[
        "bench-cost",
        "--m",
        "10",
        "--n",
        "1",
        "--k",
        "20",
        "--big-n",
        "128",
    ]);
    assert_ok(&o);
    assert!(
        stdout(&o).contains("bon/vas ratio: 46.93"),
        "{}",
        stdout(&o)
    );
    let o = run(&["bench-cost", "--n", "1"]);
    assert_eq!(code(&o), 2);

    let dir = tempfile::tempdir().unwrap();
    let o = run_in(&tiny(), dir.path(), &["bench-cost"]);
    assert_ok(&o);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cost.json")).unwrap()).unwrap();
    assert!(report["config_checksum"].is_string());
    assert_eq!(report["matched_bon_n"], 2);
}

#[test]
fn oracle_check_passes_on_bundled_configs() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let o = run_in(&path, dir.path(), &["oracle-check"]);
        assert_ok(&o);
        assert!(stdout(&o).contains("all oracle identities hold"));
    }
}

#[test]
fn frontier_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&run_in(&tiny(), &a, &["frontier"]));
    assert_ok(&run_in(&tiny(), &b, &["frontier", "--jobs", "4"]));
    let x = fs::read_to_string(a.join("frontier.csv")).unwrap();
    assert_eq!(x, fs::read_to_string(b.join("frontier.csv")).unwrap());
    let mut lines = x.lines();
    assert!(lines.next().unwrap().starts_with("# config_checksum: "));
    assert_eq!(
        lines.next().unwrap(),
        "method,beta,kl,reward,estimation,n_samples,se_reward,se_kl,seed"
    );
    for m in ["base", "tilted_oracle", "vas_exact", "bon"] {
        assert!(x.contains(&format!("\n{m},")), "missing {m} rows");
    }

    let c = dir.path().join("c");
    assert_ok(&run_in(
        &tiny(),
        &c,
        &[
            "frontier",
            "--estimation",
            "mc",
            "--n-samples",
            "200",
            "--jobs",
            "2",
        ],
    ));
    let mc = fs::read_to_string(c.join("frontier.csv")).unwrap();
    assert!(mc.contains(",monte_carlo,200,"), "{mc}");
}

#[test]
fn ablate_fallback_reports_two_arms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(&tiny(), dir.path(), &["ablate", "--factor", "fallback"]);
    assert_ok(&o);
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("ablation_fallback.json")).unwrap(),
    )
    .unwrap();
    let arms: Vec<&str> = report["arms"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["name"].as_str().unwrap())
        .collect();
    assert_eq!(arms, ["mean_value", "base_only"]);
    let d = report["dominance"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&d));
    assert!(stdout(&o).contains("weakly dominates base_only"));
}

#[test]
fn composed_checkpoints_match_combined_reward_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let body = |reward: &str| {
        format!(
            "config_version = 1\nname = \"c\"\n[mdp]\ninstance = \"tiny_ab\"\nreward = {reward}\n[collect]\nn_trajectories = 3000\n[grid]\nbetas = [0.0, 1.0, 4.0]\n"
        )
    };
    let parts = [
        ("ab", r#"{ kind = "pattern", pattern = [0, 1] }"#),
        ("len", r#"{ kind = "neg_length", scale = 1.0 }"#),
        (
            "both",
            r#"{ kind = "linear", weights = [1.0, 0.5], specs = [{ kind = "pattern", pattern = [0, 1] }, { kind = "neg_length", scale = 1.0 }] }"#,
        ),
    ];
    for (name, reward) in parts {
        let cfg = write_config(d, &format!("{name}.toml"), &body(reward));
        assert_ok(&run_in(&cfg, &d.join(name), &["train-value"]));
    }
    let both = d.join("both.toml");
    let ab = d.join("ab/checkpoint.json");
    let len = d.join("len/checkpoint.json");
    let o = run_in(
        &both,
        &d.join("composed"),
        &[
            "compose",
            "--checkpoint",
            ab.to_str().unwrap(),
            "--checkpoint",
            len.to_str().unwrap(),
            "--weights",
            "1,0.5",
        ],
    );
    assert_ok(&o);
    assert_ok(&run_in(
        &both,
        &d.join("both"),
        &["frontier", "--source", "learned"],
    ));

    let composed = fs::read_to_string(d.join("composed/compose_frontier.csv")).unwrap();
    let learned = fs::read_to_string(d.join("both/frontier.csv")).unwrap();
    let rows = |csv: &str| -> Vec<(f64, f64)> {
        csv.lines()
            .filter(|l| l.starts_with("vas_learned,"))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[2].parse().unwrap(), f[3].parse().unwrap())
            })
            .collect()
    };
    let (a, b) = (rows(&composed), rows(&learned));
    assert_eq!(a.len(), 3);
    for ((ka, ra), (kb, rb)) in a.iter().zip(&b) {
        assert!(
            (ka - kb).abs() < 1e-9 && (ra - rb).abs() < 1e-9,
            "{a:?} vs {b:?}"
        );
    }

    let o = run_in(
        &both,
        d,
        &[
            "compose",
            "--checkpoint",
            ab.to_str().unwrap(),
            "--weights",
            "1,0.5",
        ],
    );
    assert_eq!(code(&o), 2);
}
