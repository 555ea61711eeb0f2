use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chartparse::config::Config;
use tempfile::TempDir;

const TINY: [&str; 14] = [
    "--set", "word_dim=8", "--set", "tag_dim=4", "--set", "char_embed_dim=3", "--set", "char_dim=4", "--set", "lstm_dim=8", "--set", "label_hidden=8", "--set", "span_hidden=8",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chartparse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn chartparse")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &TempDir) -> PathBuf {
    let file = path(dir, "train.txt");
    let out = run(&["generate", "--sentences", "6", "--seed", "3", "--output", s(&file)]);
    assert_eq!(code(&out), 0);
    file
}

fn train(dir: &TempDir, data: &Path, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let model = path(dir, name);
    let mut args = vec!["train", "--train", s(data), "--dev", s(data), "--model-out", s(&model), "--epochs", "2", "--seed", "7"];
    args.extend_from_slice(&TINY);
    args.extend_from_slice(extra);
    (run(&args), model)
}

#[test]
fn train_parse_eval_round() {
    let dir = TempDir::new().unwrap();
    let data = corpus(&dir);
    let (out, model) = train(&dir, &data, "m.bin", &["--decoder", "inorder", "--history", "chain", "--explore"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());

    // The log starts with the resolved config, which reparses to itself.
    let log = fs::read_to_string(format!("{}.log", model.display())).unwrap();
    let (config_text, rest) = log.split_once("\n\n").unwrap();
    let config = Config::parse(config_text).unwrap();
    assert_eq!(config.to_string().trim_end(), config_text);
    assert!(config.explore);
    assert_eq!(config.epochs, 2);
    assert_eq!(rest.lines().filter(|l| !l.starts_with('#')).count(), 3);

    // Any decoder can run on the shared scorer.
    for decoder in ["inorder", "topdown", "cky"] {
        let pred = path(&dir, &format!("pred.{decoder}"));
        let out = run(&["parse", "--model", s(&model), "--input", s(&data), "--output", s(&pred), "--decoder", decoder]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("sents/sec"));
        assert_eq!(fs::read_to_string(&pred).unwrap().lines().count(), 6);
        let out = run(&["eval", "--gold", s(&data), "--pred", s(&pred)]);
        assert_eq!(code(&out), 0);
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("LR="));
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = corpus(&dir);
    let (a, ma) = train(&dir, &data, "a.bin", &["--history", "stack"]);
    let (b, mb) = train(&dir, &data, "b.bin", &["--history", "stack"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    assert_eq!(fs::read(&ma).unwrap(), fs::read(&mb).unwrap());
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(format!("{}.log", p.display()))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("model_out") && !l.starts_with("log ="))
            .map(|l| match l.rsplit_once('\t') {
                // Drop the wall-clock column.
                Some((head, _)) => head.to_string(),
                None => l.to_string(),
            })
            .collect()
    };
    assert_eq!(strip(&ma), strip(&mb));
    let (c, mc) = train(&dir, &data, "c.bin", &["--history", "stack", "--set", "seed=8"]);
    assert_eq!(code(&c), 0);
    assert_ne!(fs::read(&ma).unwrap(), fs::read(&mc).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let data = corpus(&dir);
    let (out, model) = train(&dir, &data, "x.bin", &["--decoder", "cky", "--history", "chain"]);
    assert_eq!(code(&out), 2);
    assert!(!model.exists());
    assert_eq!(code(&run(&["train", "--model-out", s(&path(&dir, "y.bin"))])), 2);
    assert_eq!(code(&run(&["train", "--train", s(&data)])), 2);
    assert_eq!(code(&run(&["train", "--train", s(&data), "--model-out", "z.bin", "--set", "bogus=1"])), 2);
    assert_eq!(code(&run(&["oracle-check", "--max-len", "5", "--trees", "0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["parse", "--model", "m.bin"])), 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.txt");
    fs::write(&bad, "(S (NP (DT the) (NN dog))\n(S (NP (PRP it)))\n").unwrap();
    let out = run(&["train", "--train", s(&bad), "--model-out", s(&path(&dir, "m.bin"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"), "{}", String::from_utf8_lossy(&out.stderr));

    let missing = path(&dir, "nope.txt");
    assert_eq!(code(&run(&["train", "--train", s(&missing), "--model-out", s(&path(&dir, "m.bin"))])), 1);

    let corrupt = path(&dir, "corrupt.bin");
    fs::write(&corrupt, b"NOTAMODEL\0\0\0\0\0\0\0\0").unwrap();
    let input = path(&dir, "in.txt");
    fs::write(&input, "the/DT dog/NN\n").unwrap();
    let out = run(&["parse", "--model", s(&corrupt), "--input", s(&input), "--output", s(&path(&dir, "o.txt"))]);
    assert_eq!(code(&out), 1);

    let g = path(&dir, "g.txt");
    let p = path(&dir, "p.txt");
    fs::write(&g, "(S (A (T a)) (B (T b)))\n(S (T x) (T y))\n").unwrap();
    fs::write(&p, "(S (A (T a)) (B (T b)))\n").unwrap();
    assert_eq!(code(&run(&["eval", "--gold", s(&g), "--pred", s(&p)])), 1);
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let data = corpus(&dir);
    let (out, model) = train(&dir, &data, "m.bin", &[]);
    assert_eq!(code(&out), 0);
    let input = path(&dir, "empty.txt");
    let output = path(&dir, "out.txt");
    fs::write(&input, "").unwrap();
    let out = run(&["parse", "--model", s(&model), "--input", s(&input), "--output", s(&output)]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(&output).unwrap(), "");

    // Tagged tokens are accepted as input too.
    fs::write(&input, "the/DT dog/NN saw/VBD it/PRP ./.\n").unwrap();
    let out = run(&["parse", "--model", s(&model), "--input", s(&input), "--output", s(&output), "--threads", "1"]);
    assert_eq!(code(&out), 0);
    let tree = chartparse::treebank::parse_sexpr(fs::read_to_string(&output).unwrap().trim()).unwrap();
    assert_eq!(tree.words(), ["the", "dog", "saw", "it", "."]);
}

#[test]
fn eval_hand_example() {
    let dir = TempDir::new().unwrap();
    let g = path(&dir, "g.txt");
    let p = path(&dir, "p.txt");
    fs::write(&g, "(S (A (C (T a)) (T b)) (B (T c) (D (T d))))\n").unwrap();
    fs::write(&p, "(S (A (T a) (E (T b))) (B (T c) (T d)))\n").unwrap();
    let out = run(&["eval", "--gold", s(&g), "--pred", s(&p)]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "LR=60.00 LP=75.00 F1=66.67 matched=3 gold=5 pred=4");
}

#[test]
fn oracle_check_runs() {
    let out = run(&["oracle-check", "--max-len", "1", "--trees", "3"]);
    assert_eq!(code(&out), 0);
    let out = run(&["oracle-check", "--max-len", "6", "--trees", "60", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violations: 0"));
}
