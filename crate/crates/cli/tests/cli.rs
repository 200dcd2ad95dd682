use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kpgan::checkpoint::Checkpoint;
use kpgan::config::RunConfig;
use kpgan::corpus::{Vocabulary, EOS};
use kpgan::generator::GeneratorParams;
use kpgan::rng::seeded;
use tempfile::TempDir;

const TOY_CONFIG: &str = "\
[model]
embed_dim = 8
hidden_dim = 8

[train]
learning_rate = 0.1
batch_size = 4
pretrain_epochs = 2
gan_rounds = 1
max_decode_len = 10
seed = 3
";

fn kpgan(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kpgan"));
    cmd.args(args).env_remove("KPGAN_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(args: &[&str]) -> Output {
    kpgan(args, &[])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(o), stderr(o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn record(title: &str, abs: &str, kw: &str) -> String {
    serde_json::json!({ "title": title, "abstract": abs, "keyword": kw }).to_string()
}

const TOPICS: [(&str, &str, &str); 10] = [
    ("Graph search", "we study graph search over sparse networks", "graph search;sparse networks"),
    ("Quadtree indexing", "a quadtree index for spatial data", "quadtree;spatial data"),
    ("Neural parsing", "neural parsing of long sentences", "neural parsing;sentences"),
    ("Cache design", "cache design for multicore chips", "cache design;multicore"),
    ("Topic models", "topic models for short text streams", "topic models;text streams"),
    ("Hash joins", "parallel hash joins in main memory", "hash joins;main memory"),
    ("Route planning", "route planning with traffic data", "route planning;traffic"),
    ("Image denoising", "sparse coding for image denoising", "image denoising;sparse coding"),
    ("Query rewriting", "query rewriting for web search", "query rewriting;web search"),
    ("Mesh repair", "robust mesh repair for scanned models", "mesh repair;scanned models"),
];

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: TempDir::new().unwrap(),
        };
        let lines: Vec<String> = TOPICS.iter().map(|(t, a, k)| record(t, a, k)).collect();
        ws.write("raw.jsonl", &(lines.join("\n") + "\n"));
        ws.write("config.ini", TOY_CONFIG);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }

    fn preprocess(&self, out: &str) -> Output {
        run(&["preprocess", s(&self.path("raw.jsonl")), "--out", s(&self.path(out))])
    }

    fn pretrain(&self, out: &str) -> Output {
        run(&[
            "pretrain",
            "--config",
            s(&self.path("config.ini")),
            "--data",
            s(&self.path("data")),
            "--out",
            s(&self.path(out)),
        ])
    }

    fn generate(&self, ckpt: &str, out: &str, extra: &[&str], envs: &[(&str, &str)]) -> Output {
        let (ckpt, input, out) = (self.path(ckpt), self.path("raw.jsonl"), self.path(out));
        let mut args = vec!["generate", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&out)];
        args.extend_from_slice(extra);
        kpgan(&args, envs)
    }

    /// Preprocessed data plus a pretrained generator checkpoint `g.ckpt`.
    fn pretrained() -> Self {
        let ws = Self::new();
        assert_ok(&ws.preprocess("data"));
        assert_ok(&ws.pretrain("g.ckpt"));
        ws
    }
}

#[test]
fn preprocess_counts_a_three_line_file() {
    let ws = Workspace::new();
    let lines: Vec<String> = TOPICS[..3].iter().map(|(t, a, k)| record(t, a, k)).collect();
    ws.write("raw.jsonl", &(lines.join("\n") + "\n"));
    let o = ws.preprocess("data");
    assert_ok(&o);
    assert!(stdout(&o).contains("samples kept: 3"), "{}", stdout(&o));
    assert!(stdout(&o).contains("samples dropped: 0"));
}

#[test]
fn preprocess_is_deterministic() {
    let ws = Workspace::new();
    assert_ok(&ws.preprocess("a"));
    assert_ok(&ws.preprocess("b"));
    for f in ["vocab.txt", "corpus.jsonl"] {
        assert_eq!(ws.read(&format!("a/{f}")), ws.read(&format!("b/{f}")), "{f}");
    }
}

#[test]
fn malformed_line_exits_2_and_names_it() {
    let ws = Workspace::new();
    let text = format!("{}\n{{\"title\": \"broken\"\n{}\n", record("A", "b", "c"), record("D", "e", "f"));
    ws.write("raw.jsonl", &text);
    let o = ws.preprocess("data");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bad_config_exits_2() {
    let ws = Workspace::new();
    ws.write("config.ini", "[train]\nlearning_rate = fast\n");
    assert_ok(&ws.preprocess("data"));
    assert_eq!(ws.pretrain("g.ckpt").status.code(), Some(2));
    ws.write("config.ini", "[train]\nwarmup = 3\n");
    assert_eq!(ws.pretrain("g.ckpt").status.code(), Some(2));
}

#[test]
fn invalid_thread_count_exits_2() {
    let o = kpgan(&["gradcheck"], &[("KPGAN_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pretrain_writes_a_loadable_checkpoint_and_log() {
    let ws = Workspace::pretrained();
    let ckpt = Checkpoint::load(ws.path("g.ckpt")).unwrap();
    assert!(ckpt.has_generator());
    assert!(!ckpt.has_discriminator());
    let config = RunConfig::parse(&ckpt.config).unwrap();
    assert_eq!(config.embed_dim, 8);
    assert_eq!(config.train.seed, 3);
    let log = String::from_utf8(ws.read("g.ckpt.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.lines().all(|l| l.contains("\"accuracy\"")));
}

#[test]
fn pretrain_without_preprocessed_data_exits_3() {
    let ws = Workspace::new();
    assert_eq!(ws.pretrain("g.ckpt").status.code(), Some(3));
}

#[test]
fn gan_without_pretrained_generator_exits_3() {
    let ws = Workspace::new();
    assert_ok(&ws.preprocess("data"));
    let data = ws.path("data");
    let missing = ws.path("missing.ckpt");
    let out = ws.path("gan.ckpt");
    let o = run(&["train-gan", "--data", s(&data), "--init", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let vocab = Vocabulary::specials_only();
    Checkpoint::new(RunConfig::default().to_text(), vocab, None, None)
        .save(ws.path("empty.ckpt"))
        .unwrap();
    let empty = ws.path("empty.ckpt");
    let o = run(&["train-gan", "--data", s(&data), "--init", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn disc_then_gan_stages_chain() {
    let ws = Workspace::pretrained();
    let data = ws.path("data");
    let (g, d, gan) = (ws.path("g.ckpt"), ws.path("d.ckpt"), ws.path("gan.ckpt"));
    assert_ok(&run(&["train-disc", "--data", s(&data), "--init", s(&g), "--out", s(&d)]));
    assert!(Checkpoint::load(&d).unwrap().has_discriminator());
    assert_ok(&run(&["train-gan", "--data", s(&data), "--init", s(&d), "--out", s(&gan)]));
    let ckpt = Checkpoint::load(&gan).unwrap();
    assert!(ckpt.has_generator() && ckpt.has_discriminator());
    let log = String::from_utf8(ws.read("gan.ckpt.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.contains("\"mean_reward\""));
}

#[test]
fn generate_is_deterministic_and_aligned() {
    let ws = Workspace::pretrained();
    assert_ok(&ws.generate("g.ckpt", "a.txt", &[], &[]));
    assert_ok(&ws.generate("g.ckpt", "b.txt", &[], &[]));
    assert_eq!(ws.read("a.txt"), ws.read("b.txt"));
    assert_eq!(String::from_utf8(ws.read("a.txt")).unwrap().lines().count(), TOPICS.len());

    let sample = ["--mode", "sample", "--seed", "9"];
    assert_ok(&ws.generate("g.ckpt", "s1.txt", &sample, &[("KPGAN_THREADS", "1")]));
    assert_ok(&ws.generate("g.ckpt", "s2.txt", &sample, &[("KPGAN_THREADS", "4")]));
    assert_eq!(ws.read("s1.txt"), ws.read("s2.txt"));
    let text = String::from_utf8(ws.read("s1.txt")).unwrap();
    assert_eq!(text.lines().count(), TOPICS.len());
    assert!(!text.contains('<'), "special tokens leaked: {text}");
}

#[test]
fn empty_decode_keeps_its_line() {
    let ws = Workspace::new();
    assert_ok(&ws.preprocess("data"));
    let tokens = String::from_utf8(ws.read("data/vocab.txt")).unwrap();
    let vocab = Vocabulary::from_tokens(tokens.lines().map(str::to_string).collect()).unwrap();
    let mut config = RunConfig::default();
    config.embed_dim = 4;
    config.hidden_dim = 4;
    let mut gen = GeneratorParams::new(config.dims(vocab.len()), &mut seeded(1));
    // Every decode stops at once: the generation softmax puts all its mass
    // on EOS and the gate leaves no room for copying.
    gen.params_mut().get_mut("out.b").unwrap().data_mut()[EOS] = 1e3;
    gen.params_mut().get_mut("gate.b").unwrap().data_mut()[0] = 1e3;
    Checkpoint::new(config.to_text(), vocab, Some(&gen), None)
        .save(ws.path("eos.ckpt"))
        .unwrap();
    assert_ok(&ws.generate("eos.ckpt", "p.txt", &[], &[]));
    assert_eq!(ws.read("p.txt"), "\n".repeat(TOPICS.len()).into_bytes());
}

#[test]
fn version_mismatch_exits_4() {
    let ws = Workspace::pretrained();
    let mut bytes = ws.read("g.ckpt");
    bytes[6..10].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(ws.path("v2.ckpt"), bytes).unwrap();
    let o = ws.generate("v2.ckpt", "p.txt", &[], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!ws.path("p.txt").exists());
}

#[test]
fn evaluation_matches_golden_json() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&[
        "evaluate",
        "--pred",
        s(&fixture("eval_pred.txt")),
        "--gold",
        s(&fixture("eval_gold.jsonl")),
        "--out",
        s(&out),
    ]);
    assert_ok(&o);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("eval_report.json")).unwrap());
    assert!(stdout(&o).contains("F1@5"));
}

fn report(pred: &Path, gold: &Path, extra: &[&str]) -> serde_json::Value {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let mut args = vec!["evaluate", "--pred", s(pred), "--gold", s(gold), "--out", s(&out)];
    args.extend_from_slice(extra);
    assert_ok(&run(&args));
    serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap()
}

#[test]
fn perfect_predictions_score_one() {
    let ws = Workspace::new();
    let preds: Vec<&str> = TOPICS.iter().map(|t| t.2).collect();
    let pred = ws.write("perfect.txt", &(preds.join("\n") + "\n"));
    let r = report(&pred, &ws.path("raw.jsonl"), &[]);
    // Every gold phrase in the toy corpus occurs in its document.
    assert_eq!(r["extractive"]["f1_at_m"], 1.0);
    assert_eq!(r["alpha_ndcg"], 1.0);
    assert_eq!(r["abstractive"]["evaluated"], 0);
    let k2 = report(&pred, &ws.path("raw.jsonl"), &["--k", "2"]);
    assert_eq!(k2["extractive"]["f1_at_k"], 1.0);
}

#[test]
fn alpha_flag_changes_only_alpha_ndcg() {
    let (pred, gold) = (fixture("eval_pred.txt"), fixture("eval_gold.jsonl"));
    let base = report(&pred, &gold, &[]);
    let other = report(&pred, &gold, &["--alpha", "0.25"]);
    assert_ne!(base["alpha_ndcg"], other["alpha_ndcg"]);
    for key in ["extractive", "abstractive", "documents", "k", "alpha_ndcg_evaluated"] {
        assert_eq!(base[key], other[key], "{key}");
    }
}

#[test]
fn misaligned_files_exit_5() {
    let ws = Workspace::new();
    let pred = ws.write("short.txt", "graph search\n");
    let gold = ws.path("raw.jsonl");
    let o = run(&["evaluate", "--pred", s(&pred), "--gold", s(&gold)]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn gradcheck_passes_and_lists_every_check() {
    let o = run(&["gradcheck"]);
    assert_ok(&o);
    let out = stdout(&o);
    let rows = out.lines().filter(|l| l.ends_with(" ok")).count();
    assert!(rows >= 8, "{out}");
    for name in ["generator_nll", "discriminator_bce", "rl_surrogate"] {
        assert!(out.contains(name));
    }
}

#[test]
fn corrupted_gradient_exits_1_naming_the_op() {
    let o = run(&["gradcheck", "--corrupt", "tanh"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tanh"), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("tanh") && l.ends_with("FAIL")));
}
