use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn full_cycle_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let out = dir.path().join("unified.jsonl");
    let pred = dir.path().join("pred.jsonl");
    let report = dir.path().join("report");

    assert_eq!(
        code(&forge(&["fixture", "--seed", "3", "--images", "4", "--out", s(&fx)])),
        0
    );
    let o = forge(&["convert", "--config", s(&fx.join("convert.toml")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("unified.jsonl.report.json").is_file());

    let o = forge(&["validate", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).ends_with(" 0 invalid\n"));

    let ids = stdout(&forge(&["stats", s(&out), "--ids"]));
    let ids: Vec<&str> = ids.lines().collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let st: serde_json::Value = serde_json::from_slice(&forge(&["stats", s(&out)]).stdout).unwrap();
    assert_eq!(st["samples"].as_u64().unwrap(), ids.len() as u64);

    let o = forge(&[
        "eval",
        "--gt",
        s(&out),
        "--pred",
        s(&pred),
        "--oracle",
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report.join("report.json").is_file() && report.join("report.md").is_file());
    assert_eq!(
        code(&forge(&[
            "eval",
            "--gt",
            s(&out),
            "--pred",
            s(&pred),
            "--ap-mode",
            "voc"
        ])),
        0
    );

    // prediction for an id the ground truth lacks
    let mut bad = std::fs::read_to_string(&pred).unwrap();
    bad.push_str("{\"id\":\"zzz/none/0/det_hbb/0\",\"task\":\"det_hbb\",\"output_text\":\"\"}\n");
    let bad_pred = dir.path().join("bad_pred.jsonl");
    std::fs::write(&bad_pred, bad).unwrap();
    let o = forge(&["eval", "--gt", s(&out), "--pred", s(&bad_pred)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("forge: "));

    // config errors
    assert_eq!(
        code(&forge(&[
            "convert",
            "--config",
            s(&dir.path().join("nope.toml")),
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(code(&forge(&["fixture", "--images", "0", "--out", s(&fx)])), 2);
    assert_eq!(
        code(&forge(&[
            "eval",
            "--gt",
            s(&out),
            "--pred",
            s(&pred),
            "--ap-mode",
            "coco"
        ])),
        2
    );
    assert_eq!(code(&forge(&["frobnicate"])), 2);
    assert_eq!(code(&forge(&["--version"])), 0);

    // data errors
    assert_eq!(code(&forge(&["validate", s(&dir.path().join("missing.jsonl"))])), 1);
    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(code(&forge(&["validate", s(&garbage)])), 1);
    assert_eq!(code(&forge(&["stats", s(&garbage)])), 1);
}

#[test]
fn invalid_sample_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let out = dir.path().join("u.jsonl");
    assert_eq!(code(&forge(&["fixture", "--images", "2", "--out", s(&fx)])), 0);
    assert_eq!(
        code(&forge(&[
            "convert",
            "--config",
            s(&fx.join("convert.toml")),
            "--out",
            s(&out)
        ])),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let line = text
        .lines()
        .find(|l| l.contains("\"det_hbb\"") && l.contains("<box>"))
        .unwrap();
    let broken = line.replacen("<box>", "<box><loc_9999>", 1);
    std::fs::write(&out, text.replacen(line, &broken, 1)).unwrap();
    let o = forge(&["validate", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).ends_with(" 1 invalid\n"), "{}", stdout(&o));
}
