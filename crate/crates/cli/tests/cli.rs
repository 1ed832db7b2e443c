use popv_core::counting::{parse_constraint, print_constraint, Constraint};
use popv_core::format::{parse_protocol, parse_run, print_protocol, print_run};
use popv_core::multiset::multisets_of_size;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel).to_string_lossy().into_owned()
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn popv(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_popv")).args(args).output().unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

/// Parses `key=value` lines and `key<<EOF` blocks into ordered pairs.
fn text_fields(s: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut lines = s.lines();
    while let Some(l) = lines.next() {
        if let Some(k) = l.strip_suffix("<<EOF") {
            let mut body = String::new();
            for b in lines.by_ref() {
                if b == "EOF" {
                    break;
                }
                body.push_str(b);
                body.push('\n');
            }
            out.push((k.to_string(), body));
        } else {
            let (k, v) = l.split_once('=').unwrap_or_else(|| panic!("not a field line: {l}"));
            out.push((k.to_string(), v.to_string()));
        }
    }
    out
}

fn field(s: &str, key: &str) -> String {
    text_fields(s).into_iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no {key} in {s}")).1
}

/// The text and JSON forms of one command carry the same fields in the same order.
fn assert_mirrors(args: &[&str]) -> (Out, Value) {
    let text = popv(args);
    let mut jargs = vec!["--json"];
    jargs.extend_from_slice(args);
    let json = popv(&jargs);
    assert_eq!(text.code, json.code, "{args:?}");
    let v: Value = serde_json::from_str(&json.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}\n{}", json.stdout));
    let obj = v.as_object().unwrap();
    let tf = text_fields(&text.stdout);
    assert_eq!(tf.len(), obj.len(), "{args:?}");
    for ((tk, tv), (jk, jv)) in tf.iter().zip(obj) {
        assert_eq!(tk, jk, "{args:?}");
        let expect = match jv {
            Value::String(s) if s.contains('\n') && !s.ends_with('\n') => format!("{s}\n"),
            Value::String(s) => s.clone(),
            Value::Null => "none".into(),
            other => other.to_string(),
        };
        assert_eq!(tv, &expect, "{args:?} field {tk}");
    }
    (text, v)
}

#[test]
fn validate_exit_codes() {
    let ok = popv(&["validate", &data("io_example.pp")]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    assert_eq!(field(&ok.stdout, "valid"), "true");
    let bad = popv(&["validate", &data("do_sender_change.pp")]);
    assert_eq!(bad.code, 1);
    assert!(bad.stdout.contains("sender state changes"), "{}", bad.stdout);
    let unknown = popv(&["validate", &data("unknown_state.pp")]);
    assert_eq!(unknown.code, 2);
    assert!(unknown.stderr.contains("line 4"), "{}", unknown.stderr);
    assert_eq!(popv(&["validate", "/no/such/file.pp"]).code, 2);
    assert_eq!(popv(&["no-such-command"]).code, 2);
}

#[test]
fn validate_as_other_model() {
    let r = popv(&["validate", &data("io_example.pp"), "--as", "MFDO"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
}

#[test]
fn prestar_two_state() {
    let (t, _) = assert_mirrors(&["prestar", &data("two_state.pp"), "--constraint", "{q0 in [0,0]}"]);
    assert_eq!(t.code, 0);
    assert_eq!(field(&t.stdout, "norm_bounds_hold"), "true");
    let p = parse_protocol(&std::fs::read_to_string(data("two_state.pp")).unwrap()).unwrap();
    let got = parse_constraint(&p, &field(&t.stdout, "constraint")).unwrap();
    let want = parse_constraint(&p, "cube: q0 in [0,0]\ncube: q1 in [1,inf]\n").unwrap();
    for size in 0..=8 {
        for m in multisets_of_size(2, size) {
            assert_eq!(got.contains(&m), want.contains(&m), "{:?}", m.counts());
        }
    }
}

#[test]
fn empty_constraint_closes_to_empty() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("empty.cst");
    std::fs::write(&f, "").unwrap();
    for cmd in ["prestar", "poststar"] {
        let t = popv(&[cmd, &data("io_example.pp"), "--constraint", f.to_str().unwrap()]);
        assert_eq!(t.code, 0, "{}", t.stderr);
        assert_eq!(field(&t.stdout, "cubes_out"), "0");
    }
}

#[test]
fn emitted_files_reparse_equal() {
    let dir = tempfile::tempdir().unwrap();
    let io = data("io_example.pp");
    let p = parse_protocol(&std::fs::read_to_string(&io).unwrap()).unwrap();

    let cst: PathBuf = dir.path().join("post.cst");
    let r = popv(&["poststar", &io, "--constraint", "{q1 in [2,inf]}", "-o", cst.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&cst).unwrap();
    let c: Constraint = parse_constraint(&p, &text).unwrap();
    assert_eq!(print_constraint(&p, &c), text);

    let run = dir.path().join("pruned.run");
    let r = popv(&["prune", &io, "--run", &data("io_long.run"), "--cover", "{q3:2}", "-o", run.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&run).unwrap();
    assert_eq!(print_run(&p, &parse_run(&p, &text).unwrap()), text);

    let gen = dir.path().join("tm.pp");
    let r = popv(&["gen", "tm", &data("tm/write_accept.tm"), "-o", gen.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&gen).unwrap();
    assert_eq!(print_protocol(&parse_protocol(&text).unwrap()), text);
    assert_eq!(popv(&["validate", gen.to_str().unwrap()]).code, 0);

    let cat = dir.path().join("cat.pp");
    assert_eq!(popv(&["catalog", "more_than_half", "-o", cat.to_str().unwrap()]).code, 0);
    let text = std::fs::read_to_string(&cat).unwrap();
    assert_eq!(print_protocol(&parse_protocol(&text).unwrap()), text);
}

#[test]
fn check_verdicts_and_exit_codes() {
    let two = data("two_state.pp");
    let (t, _) = assert_mirrors(&["check", &two, "--pred", "{s1 in [1,inf]}"]);
    assert_eq!(t.code, 0);
    assert_eq!(field(&t.stdout, "status"), "correct");
    let (t, j) = assert_mirrors(&["check", &two, "--pred", "{s1 in [2,inf]}", "--mode", "witness"]);
    assert_eq!(t.code, 1);
    assert_eq!(j["witness_input"], "{s0:1, s1:1}");
    let t = popv(&["check", &two, "--pred", "{s1 in [2,inf]}", "--mode", "kernel", "--max-size", "4"]);
    assert_eq!(t.code, 1);
}

#[test]
fn check_instance_generated_tm() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("tm.pp");
    let r = popv(&["gen", "tm", &data("tm/write_accept.tm"), "-o", gen.to_str().unwrap()]);
    assert_eq!(r.code, 0);
    let config = field(&r.stdout, "initial_config");
    let ok = popv(&["check-instance", gen.to_str().unwrap(), "--config", &config, "--expect", "1"]);
    assert_eq!(ok.code, 0, "{}{}", ok.stdout, ok.stderr);
    let no = popv(&["check-instance", gen.to_str().unwrap(), "--config", &config, "--expect", "0"]);
    assert_eq!(no.code, 1);
}

#[test]
fn true_qbf_circuit_is_incorrect_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("circ.pp");
    let wit = dir.path().join("witness.run");
    let r = popv(&["gen", "circuit", &data("circuit/exists_forall_or.circ"), "-o", gen.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(field(&r.stdout, "qbf_holds"), "true");
    let c = popv(&[
        "check",
        gen.to_str().unwrap(),
        "--pred",
        "false",
        "--mode",
        "kernel",
        "--max-size",
        "3",
        "--witness-out",
        wit.to_str().unwrap(),
    ]);
    assert_eq!(c.code, 1, "{}{}", c.stdout, c.stderr);
    let p = parse_protocol(&std::fs::read_to_string(&gen).unwrap()).unwrap();
    let run = parse_run(&p, &std::fs::read_to_string(&wit).unwrap()).unwrap();
    p.apply_run(&run).unwrap();
}

#[test]
fn prune_and_shorten_report_bounds() {
    let (t, _) = assert_mirrors(&["prune", &data("io_example.pp"), "--run", &data("io_long.run"), "--cover", "{q3:2}"]);
    assert_eq!(t.code, 0);
    assert_eq!(field(&t.stdout, "old_size"), "5");
    assert_eq!(field(&t.stdout, "bound"), "29");
    assert_eq!(field(&t.stdout, "within_bound"), "true");
    let (t, _) = assert_mirrors(&["shorten", &data("mfdo_ab.pp"), "--run", &data("mfdo_ab.run")]);
    assert_eq!(t.code, 0);
    assert_eq!(field(&t.stdout, "new_length"), "3");
}

#[test]
fn gen_vass_both_variants_validate() {
    let dir = tempfile::tempdir().unwrap();
    for det in [false, true] {
        let f = dir.path().join(format!("v{det}.pp"));
        let mut args = vec!["gen", "vass"];
        let src = data("vass/simple_yes.vass");
        args.push(&src);
        if det {
            args.push("--determinize");
        }
        args.extend(["-o", f.to_str().unwrap()]);
        let r = popv(&args);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert_eq!(popv(&["validate", f.to_str().unwrap()]).code, 0);
    }
}

#[test]
fn mc_is_reproducible() {
    let args = ["mc", &data("io_example.pp"), "--config", "{q1:4, q3:1}", "--p", "0.5", "--runs", "100", "--seed", "7", "--steps", "2000"];
    let (a, _) = assert_mirrors(&args);
    let b = popv(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    let other = popv(&["mc", &data("io_example.pp"), "--config", "{q1:4, q3:1}", "--runs", "100", "--seed", "8", "--steps", "2000"]);
    assert_eq!(other.code, 0);
}

#[test]
fn mc_csv_series() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.csv");
    let r = popv(&["mc", &data("more_than_half.pp"), "--config", "{q2:1, sp:1}", "--steps", "100", "--csv", f.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = std::fs::read_to_string(&f).unwrap();
    assert_eq!(csv.lines().count(), 102, "header plus one row per configuration");
}

#[test]
fn reach_and_step() {
    let io = data("io_example.pp");
    let (t, _) = assert_mirrors(&["reach", &io, "--from", "{q1:4, q3:1}", "--to", "{q3:5}"]);
    assert_eq!(t.code, 0);
    assert_eq!(field(&t.stdout, "reachable"), "true");
    assert_eq!(popv(&["reach", &io, "--from", "{q1:2}", "--to", "{q3:2}"]).code, 1);
    let (t, _) = assert_mirrors(&["step", &io, "--config", "{q1:4, q3:1}", "--trans", "t3", "--times", "2"]);
    assert_eq!(t.code, 0);
    assert_eq!(popv(&["step", &io, "--config", "{q1:2}", "--trans", "t2"]).code, 1);
}

#[test]
fn catalog_lists_and_prints() {
    let list = popv(&["catalog"]);
    assert_eq!(list.code, 0);
    assert!(list.stdout.contains("more_than_half"));
    assert_eq!(popv(&["catalog", "no_such_protocol"]).code, 2);
}
