use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crof_cli::commands::{load_dataset, weights_csv};
use crof_cli::{run, Cli, Invocation};
use crof_core::embedding_store::{load_embeddings, load_labels, save_embeddings, EmbeddingMatrix};
use crof_core::trainer::TrainConfig;

fn crof(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crof"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("crof")
        .chain(args.iter().copied())
        .map(String::from)
        .collect()
}

fn gen(dir: &Path, name: &str) {
    run(argv(&[
        "gen-synth", "--classes", "6", "--dims", "8", "--shots", "4", "--test-per-class", "5",
        "--sigma", "0.3", "--seed", "7", "--out",
    ])
    .into_iter()
    .chain([dir.join(name).display().to_string()]))
    .unwrap();
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.txt")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn gen_synth_writes_four_files_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "a");
    gen(tmp.path(), "b");
    let a = file_bytes(&tmp.path().join("a"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["classes.txt", "images.emb", "labels.txt", "prototypes.emb"]);
    assert!(tmp.path().join("a/manifest.txt").exists());
    assert_eq!(a, file_bytes(&tmp.path().join("b")));
    let ds = load_dataset(&tmp.path().join("a"), None).unwrap();
    assert_eq!((ds.n_classes(), ds.shots(), ds.images().rows()), (6, 4, 54));
}

#[test]
fn missing_out_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = crof(&["gen-synth", "--classes", "3"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn inject_noise_corrupts_the_requested_count() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    let d = tmp.path().display();
    run(argv(&["inject-noise", "--data", &format!("{d}/ds"), "--delta", "0.5", "--seed", "3",
        "--out", &format!("{d}/noisy")]))
    .unwrap();
    let ds = load_dataset(&tmp.path().join("ds"), None).unwrap();
    let noisy = load_labels(tmp.path().join("noisy/noisy_labels.txt")).unwrap();
    let mut per_class = vec![0; 6];
    for i in ds.train_range() {
        if noisy[i] != ds.clean_labels()[i] {
            per_class[ds.clean_labels()[i]] += 1;
        }
    }
    assert_eq!(per_class, vec![2; 6]);
    assert_eq!(&noisy[ds.test_range()], &ds.clean_labels()[ds.test_range()]);
}

fn train_args(d: &str, out: &str, extra: &[&str]) -> Vec<String> {
    let mut v = argv(&["train", "--data", &format!("{d}/ds"), "--no-tpg", "--epochs", "3",
        "--delta", "0.25", "--seed", "5", "--out", &format!("{d}/{out}")]);
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

#[test]
fn train_writes_metrics_params_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    let d = tmp.path().display().to_string();
    run(train_args(&d, "r", &[])).unwrap();
    let r = tmp.path().join("r");
    for f in ["manifest.txt", "metrics.csv", "w1.emb", "w2.emb", "adapter.txt"] {
        assert!(r.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(r.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("epoch,split,accuracy,loss\n"));
    assert_eq!(csv.lines().count(), 1 + 4);
    let manifest = fs::read_to_string(r.join("manifest.txt")).unwrap();
    for line in ["command = train", "epochs = 3", "delta = 0.25", "seed = 5", "tpg = false"] {
        assert!(manifest.contains(line), "{line}");
    }
}

#[test]
fn rerunning_from_a_manifest_reproduces_the_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    let d = tmp.path().display().to_string();
    run(train_args(&d, "first", &["--no-wt", "--lr", "0.01"])).unwrap();
    run(argv(&["train", "--config", &format!("{d}/first/manifest.txt"), "--out",
        &format!("{d}/again")]))
    .unwrap();
    assert_eq!(
        fs::read(tmp.path().join("first/metrics.csv")).unwrap(),
        fs::read(tmp.path().join("again/metrics.csv")).unwrap()
    );
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    let d = tmp.path().display().to_string();
    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, "# test\nepochs = 2\nalpha = 0.5\ngamma = 0.7\n").unwrap();
    let c = cfg.display().to_string();
    run(train_args(&d, "r", &["--config", &c, "--alpha", "0.6"])).unwrap();
    let manifest = fs::read_to_string(tmp.path().join("r/manifest.txt")).unwrap();
    // --epochs 3 on the command line beats the file's 2
    assert!(manifest.contains("epochs = 3\n"));
    assert!(manifest.contains("alpha = 0.6\n"));
    assert!(manifest.contains("gamma = 0.7\n"));
    assert!(manifest.contains("beta = 0.8\n"));
}

#[test]
fn bad_config_lines_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    fs::write(tmp.path().join("c.txt"), "epochs: 2\n").unwrap();
    let out = crof(&["train", "--data", "ds", "--no-tpg", "--config", "c.txt", "--out", "r"],
        tmp.path());
    assert_eq!(out.status.code(), Some(8));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("c.txt:1"));
}

#[test]
fn errors_map_to_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "ds");
    fs::write(tmp.path().join("bad.emb"), b"XXXXXXXX\0\0\0\0\0\0\0\0\0").unwrap();
    let a = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
    let b = EmbeddingMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
    save_embeddings(&a, tmp.path().join("a.emb")).unwrap();
    save_embeddings(&b, tmp.path().join("b.emb")).unwrap();

    let cases: &[(&[&str], i32)] = &[
        (&["train", "--data", "missing", "--no-tpg", "--out", "r"], 3),
        (&["fuse", "--sup", "bad.emb", "--cafo", "a.emb", "--out", "f.emb"], 4),
        (&["train", "--data", "ds", "--no-tpg", "--alpha", "2", "--out", "r"], 8),
        (&["weights", "--logits", "0.1,0.2", "--label", "5"], 9),
        (&["fuse", "--sup", "a.emb", "--cafo", "b.emb", "--out", "f.emb"], 10),
        (&["train", "--data", "ds", "--no-tpg", "--weighting", "soft", "--out", "r"], 12),
        (&["train", "--data", "ds", "--no-tpg", "--bogus"], 2),
    ];
    for (args, code) in cases {
        let out = crof(args, tmp.path());
        assert_eq!(out.status.code(), Some(*code), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn help_defaults_match_the_library_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let help = String::from_utf8(crof(&["train", "--help"], tmp.path()).stdout).unwrap();
    let cfg = TrainConfig::default();
    for (flag, value) in [
        ("--alpha", cfg.alpha.to_string()),
        ("--beta", cfg.beta.to_string()),
        ("--gamma", cfg.gamma.to_string()),
        ("--topk", cfg.top_k.to_string()),
        ("--tau", cfg.tau.to_string()),
        ("--lambda", cfg.lambda.to_string()),
        ("--lr", cfg.lr.to_string()),
        ("--weight-decay", cfg.weight_decay.to_string()),
        ("--hidden-ratio", cfg.hidden_ratio.to_string()),
        ("--epochs", cfg.epochs.to_string()),
        ("--batch-size", cfg.batch_size.to_string()),
        ("--seed", cfg.seed.to_string()),
    ] {
        // the flag's entry runs until the next line that starts a flag
        let mut lines = help.lines().skip_while(|l| !l.trim_start().starts_with(flag));
        let first = lines.next().unwrap_or_else(|| panic!("{flag} missing"));
        let entry: String = std::iter::once(first)
            .chain(lines.take_while(|l| !l.trim_start().starts_with('-')))
            .collect();
        assert!(entry.contains(&format!("[default: {value}]")), "{flag}: {entry}");
    }
    for flag in ["--no-tpg", "--no-ft", "--no-wt", "--config", "--out"] {
        assert!(help.contains(flag), "{flag}");
    }
    for sub in ["gen-synth", "inject-noise", "fuse", "prompt-request", "sweep", "weights"] {
        let out = crof(&[sub, "--help"], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{sub}");
    }
}

#[test]
fn fuse_writes_unit_rows_and_similarity() {
    let tmp = tempfile::tempdir().unwrap();
    let sup = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]], true).unwrap();
    let cafo = EmbeddingMatrix::from_rows(&[vec![0.0, 1.0], vec![0.6, 0.8]], true).unwrap();
    save_embeddings(&sup, tmp.path().join("sup.emb")).unwrap();
    save_embeddings(&cafo, tmp.path().join("cafo.emb")).unwrap();
    let out = crof(&["fuse", "--sup", "sup.emb", "--cafo", "cafo.emb", "--out", "fused.emb",
        "--similarity", "sim.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let fused = load_embeddings(tmp.path().join("fused.emb")).unwrap();
    assert!(fused.is_normalized());
    assert!((fused.row(0)[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.starts_with("set,mean_offdiagonal\ncafo,"));
    assert_eq!(fs::read_to_string(tmp.path().join("sim.csv")).unwrap().lines().count(), 2);
}

#[test]
fn prompt_request_prints_the_template() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("names.txt"), "rose\ntulip\n").unwrap();
    let out = crof(&["prompt-request", "--target", "flower", "--classes", "names.txt"],
        tmp.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("I have 2 categories of flower"));
    assert!(text.contains("My category list is: [rose, tulip]"));
}

#[test]
fn weights_lists_candidates_in_rank_order() {
    let inv = Invocation::parse_from(argv(&["weights", "--logits=-1,2,0.5,3", "--label", "1"]))
        .unwrap();
    let Cli { command: crof_cli::Command::Weights(args) } = &inv.cli else {
        unreachable!()
    };
    let csv = weights_csv(args).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rank,class,logit,r,scenario,w,w_star");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,3,3,2,2,"));
    assert!(lines[2].starts_with("2,1,2,2,2,0.8,"));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().display().to_string();
    run(argv(&["sweep", "--classes", "4", "--dims", "8", "--synth-shots", "3",
        "--test-per-class", "4", "--epochs", "2", "--deltas", "0,0.5", "--toggles", "none,ft+wt",
        "--seeds", "1,2", "--out", &format!("{d}/s")]))
    .unwrap();
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta,toggles,seed,final_acc,best_acc");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1].starts_with("0,none,1,"));
    assert!(lines[8].starts_with("0.5,ft+wt,2,"));
}
