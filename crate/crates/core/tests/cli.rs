mod common;

use std::path::Path;

use common::*;
use polos::cli::{run_with, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use polos::eval::{write_protocol, PascalCategory, ProtocolEntry, Winner};
use polos::judgments::JudgmentRecord;
use polos::{write_bundle, EmbeddingSample};
use serde_json::Value;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn polos(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("polos").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_HEAD: &str = "d_h = 8\nmlp1_hidden = 16\nmlp2_hidden = 4\nmax_epochs = 4\nbatch_size = 8\nlearning_rate = 1e-3\n";

fn fixture(dir: &Path) -> (String, String, String) {
    let train = dir.join("train.peb");
    let valid = dir.join("valid.peb");
    let cfg = dir.join("head.cfg");
    write_bundle(&learnable(40, 4, 6, 1), &train).unwrap();
    write_bundle(&learnable(20, 4, 6, 2), &valid).unwrap();
    std::fs::write(&cfg, TINY_HEAD).unwrap();
    (p(&train).into(), p(&valid).into(), p(&cfg).into())
}

#[test]
fn help_and_usage_errors() {
    let r = polos(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("eval-pascal"));
    assert_eq!(polos(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(polos(&["train"]).code, EXIT_USAGE);
    assert_eq!(
        polos(&[
            "eval-foil",
            "--data",
            "a",
            "--manifest",
            "b",
            "--checkpoint",
            "c",
            "--refs",
            "3"
        ])
        .code,
        EXIT_USAGE
    );
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let r = polos(&["validate", p(&dir.path().join("none.peb"))]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("none.peb"));

    let bad = dir.path().join("bad.peb");
    std::fs::write(&bad, b"PEB1 but not really").unwrap();
    assert_eq!(polos(&["validate", p(&bad)]).code, EXIT_DATA);

    let (train, valid, _) = fixture(dir.path());
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "d_h = 8\nwidth = 3\n").unwrap();
    let ck = dir.path().join("m.phc");
    let r = polos(&[
        "train",
        "--data",
        &train,
        "--val",
        &valid,
        "--config",
        p(&cfg),
        "--checkpoint",
        p(&ck),
    ]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("line 2"), "{}", r.err);
    assert!(!ck.exists());
}

#[test]
fn synth_then_validate_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.peb");
    let r = polos(&[
        "synth",
        "--out",
        p(&out),
        "--count",
        "7",
        "--d-clip",
        "3",
        "--d-rb",
        "5",
        "--seed",
        "4",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let r = polos(&["validate", p(&out), "--json"]);
    assert_eq!(r.code, EXIT_OK);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["sample_count"], 7);
    assert_eq!(v["findings"].as_array().unwrap().len(), 0);
}

#[test]
fn train_score_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let (train, valid, cfg) = fixture(dir.path());
    let ck = dir.path().join("m.phc");
    let r = polos(&[
        "train",
        "--data",
        &train,
        "--val",
        &valid,
        "--config",
        &cfg,
        "--checkpoint",
        p(&ck),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert!(v["epochs"].as_u64().unwrap() >= 1);
    let log = std::fs::read_to_string(dir.path().join("m.phc.log.jsonl")).unwrap();
    assert_eq!(log.lines().count() as u64, v["epochs"].as_u64().unwrap());
    assert!(!log.contains("wall_time"));

    let r = polos(&["score", "--data", &valid, "--checkpoint", p(&ck), "--json"]);
    assert_eq!(r.code, EXIT_OK);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    let scores = v["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 20);
    assert!(scores
        .iter()
        .all(|s| (0.0..=1.0).contains(&s["y_hat"].as_f64().unwrap())));

    for stat in ["tau_b", "tau_c"] {
        let r = polos(&[
            "eval-corr",
            "--data",
            &valid,
            "--checkpoint",
            p(&ck),
            "--statistic",
            stat,
            "--json",
        ]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        let v: Value = serde_json::from_str(&r.out).unwrap();
        assert_eq!(v["statistic"], stat);
        assert_eq!(v["sample_count"], 20);
        assert!(v["value"].as_f64().unwrap().abs() <= 1.0);
    }
}

#[test]
fn checkpoint_dims_must_match_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let (train, valid, cfg) = fixture(dir.path());
    let ck = dir.path().join("m.phc");
    assert_eq!(
        polos(&[
            "train",
            "--data",
            &train,
            "--val",
            &valid,
            "--config",
            &cfg,
            "--checkpoint",
            p(&ck)
        ])
        .code,
        EXIT_OK
    );
    let other = dir.path().join("other.peb");
    write_bundle(&samples(5, 5, 6, (1, 2), 3), &other).unwrap();
    let r = polos(&["score", "--data", p(&other), "--checkpoint", p(&ck)]);
    assert_eq!(r.code, EXIT_DATA);
}

fn paired(
    id: &str,
    img: &[f32],
    refs: &(Vec<Vec<f32>>, Vec<Vec<f32>>),
    noise: f32,
    r: &mut rand_chacha::ChaCha8Rng,
) -> EmbeddingSample {
    use rand::Rng;
    let mut near = |base: &[f32]| -> Vec<f32> {
        base.iter()
            .map(|b| (1.0 - noise) * b + noise * r.gen_range(-1.0f32..1.0))
            .collect()
    };
    EmbeddingSample {
        sample_id: id.into(),
        cand_clip: near(&refs.0[0]),
        cand_rb: near(&refs.1[0]),
        refs_clip: refs.0.clone(),
        refs_rb: refs.1.clone(),
        img: img.to_vec(),
        score: None,
    }
}

#[test]
fn pascal_and_foil_from_protocol_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (train, valid, cfg) = fixture(dir.path());
    let ck = dir.path().join("m.phc");
    assert_eq!(
        polos(&[
            "train",
            "--data",
            &train,
            "--val",
            &valid,
            "--config",
            &cfg,
            "--checkpoint",
            p(&ck)
        ])
        .code,
        EXIT_OK
    );

    let mut r = rng(3);
    let mut bundle = Vec::new();
    let mut protocol = Vec::new();
    for i in 0..8 {
        let img = vector(&mut r, 4);
        let n = if i % 2 == 0 { 4 } else { 6 };
        let refs = (
            (0..n).map(|_| vector(&mut r, 4)).collect(),
            (0..n).map(|_| vector(&mut r, 6)).collect(),
        );
        bundle.push(paired(&format!("a{i}"), &img, &refs, 0.1, &mut r));
        bundle.push(paired(&format!("b{i}"), &img, &refs, 0.9, &mut r));
        protocol.push(ProtocolEntry::Pascal {
            pair_id: format!("p{i}"),
            a: format!("a{i}"),
            b: format!("b{i}"),
            category: PascalCategory::ALL[i % 4],
            winner: Winner::A,
        });
        if n == 4 {
            protocol.push(ProtocolEntry::Foil {
                pair_id: format!("f{i}"),
                true_id: format!("a{i}"),
                foil: format!("b{i}"),
            });
        }
    }
    let data = dir.path().join("pairs.peb");
    let manifest = dir.path().join("pairs.jsonl");
    write_bundle(&bundle, &data).unwrap();
    write_protocol(&protocol, &manifest).unwrap();

    let r = polos(&[
        "eval-pascal",
        "--data",
        p(&data),
        "--manifest",
        p(&manifest),
        "--checkpoint",
        p(&ck),
        "--draws",
        "3",
        "--repeats",
        "2",
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["statistic"], "pascal_accuracy");
    for cat in ["HC", "HI", "HM", "MM", "mean"] {
        assert!(v["breakdown"][cat].is_number(), "{cat}");
    }

    let r = polos(&[
        "eval-foil",
        "--data",
        p(&data),
        "--manifest",
        p(&manifest),
        "--checkpoint",
        p(&ck),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["sample_count"], 4);
    assert!(v["breakdown"]["4-ref"].is_number());

    // drawing more references than the pool holds is a data error
    let r = polos(&[
        "eval-pascal",
        "--data",
        p(&data),
        "--manifest",
        p(&manifest),
        "--checkpoint",
        p(&ck),
        "--draws",
        "5",
    ]);
    assert_eq!(r.code, EXIT_DATA);
}

#[test]
fn judgments_command_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("j.jsonl");
    let mut lines = String::new();
    for e in 0..4 {
        for s in 0..25 {
            let rec = JudgmentRecord {
                sample_id: format!("s{s:02}"),
                evaluator_id: format!("e{e}"),
                rating: if e == 3 { 2 } else { 1 + (s % 5) as i64 },
                response_time: Some(4.0),
            };
            lines.push_str(&serde_json::to_string(&rec).unwrap());
            lines.push('\n');
        }
    }
    std::fs::write(&input, lines).unwrap();
    let out = dir.path().join("out");
    let r = polos(&[
        "judgments",
        "--input",
        p(&input),
        "--out-dir",
        p(&out),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.err.contains("excluded evaluator e3"));
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["scored_samples"], 25);
    assert_eq!(v["excluded_evaluators"].as_array().unwrap().len(), 1);
    let sizes = &v["split_sizes"];
    assert_eq!(
        sizes["train"].as_u64().unwrap()
            + sizes["valid"].as_u64().unwrap()
            + sizes["test"].as_u64().unwrap(),
        25
    );
    for f in [
        "scores.jsonl",
        "splits.jsonl",
        "histogram.json",
        "excluded.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        polos(&[
            "judgments",
            "--input",
            p(&input),
            "--out-dir",
            p(&out),
            "--ratios",
            "0.5,0.5"
        ])
        .code,
        EXIT_USAGE
    );
}

#[test]
fn ablate_reports_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (train, valid, cfg) = fixture(dir.path());
    let out = dir.path().join("grid.json");
    let r = polos(&[
        "ablate",
        "--grid",
        "use_clip_text,use_roberta",
        "--data",
        &train,
        "--val",
        &valid,
        "--config",
        &cfg,
        "--out",
        p(&out),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    assert_eq!(cells.iter().filter(|c| c["error"].is_string()).count(), 1);
    assert!(cells[3]["cell"]
        .as_str()
        .unwrap()
        .contains("use_roberta=false"));
    assert!(out.exists());
    assert_eq!(
        polos(&["ablate", "--grid", "d_h", "--data", &train, "--val", &valid]).code,
        EXIT_USAGE
    );
}
