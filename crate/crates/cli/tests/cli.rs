use std::path::{Path, PathBuf};
use std::process::Command;

use locc_cli::{run, EXIT_INVALID, EXIT_OK, EXIT_VIOLATED};
use locc_core::certify::{certify, CertifyOptions};
use locc_core::constructions::{appendix_a_sep, domino_fixture};
use locc_core::Tolerances;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("locc-cert").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn prime_phase_family_is_violated() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "appendix_a_2x2.json");
    assert_eq!(
        cli(&["gen", "appendix-a", "--dims", "2,2", "--out", s(&f)]).code,
        EXIT_OK
    );
    let r = cli(&["check", "--sep", s(&f)]);
    assert_eq!(r.code, EXIT_VIOLATED, "{}", r.err);
    assert!(r.out.contains("Σe = 10 > 8"), "{}", r.out);
    assert!(r
        .out
        .contains("certificate: not implementable by finite-round LOCC"));
}

#[test]
fn domino_fixture_is_satisfied() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "domino.json");
    assert_eq!(cli(&["gen", "domino", "--out", s(&f)]).code, EXIT_OK);
    let r = cli(&["check", "--sep", s(&f)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("14 ≤ 16"), "{}", r.out);
    assert!(r
        .out
        .contains("SATISFIED (necessary condition; not sufficient)"));
    assert!(!r.out.contains("saturated"));

    let r = cli(&["check", "--sep", s(&f), "--refined-bipartite"]);
    assert_eq!(r.code, EXIT_VIOLATED);
    assert!(r.out.contains("stated without proof in this paper"));
    assert!(r.out.contains("14 > 13"));
}

#[test]
fn saturated_protocol_round_trip() {
    let dir = TempDir::new().unwrap();
    let tree = path(&dir, "d.json");
    let sep = path(&dir, "d_sep.json");
    let args = [
        "gen",
        "appendix-d",
        "--parties",
        "3",
        "--dims",
        "2,2,2",
        "--seed",
        "5",
        "--omit",
        "1",
        "--out",
        s(&tree),
    ];
    assert_eq!(cli(&args).code, EXIT_OK);
    let r = cli(&["verify-tree", "--tree", s(&tree)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("canonical: yes"));
    assert_eq!(
        cli(&["extract", "--tree", s(&tree), "--out", s(&sep)]).code,
        EXIT_OK
    );
    let r = cli(&["check", "--sep", s(&sep)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("12 ≤ 12"), "{}", r.out);
    assert!(r.out.contains("saturated"));
    let r = cli(&["prune", "--tree", s(&tree)]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.is_empty());
    assert!(
        r.err.contains("7 leaves, 13 nodes, 12 of 12 extreme rays"),
        "{}",
        r.err
    );
}

#[test]
fn json_verdict_matches_in_memory() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "a.json");
    let v = path(&dir, "v.json");
    cli(&["gen", "appendix-a", "--dims", "2,3", "--out", s(&f)]);
    let r = cli(&["check", "--sep", s(&f), "--format", "json", "--out", s(&v)]);
    assert_eq!(r.code, EXIT_VIOLATED);
    let printed: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&v).unwrap()).unwrap();
    assert_eq!(printed, written);
    assert_eq!(printed["schema"], "locc-cert/1");
    let direct = certify(
        &appendix_a_sep(&[2, 3]).unwrap(),
        &CertifyOptions::default(),
    )
    .unwrap();
    assert_eq!(printed["sum_e"], direct.sum_e);
    assert_eq!(printed["n"], direct.n);
    assert_eq!(printed["e"]["0"], direct.e[&0]);
    assert_eq!(printed["e"]["1"], direct.e[&1]);
    assert_eq!(printed["margin"], direct.margin);
}

#[test]
fn exit_codes_across_fixtures() {
    let dir = TempDir::new().unwrap();
    let cases: [(&[&str], i32); 5] = [
        (&["gen", "appendix-a", "--dims", "2,2"], EXIT_VIOLATED),
        (&["gen", "appendix-a", "--dims", "2,2,2"], EXIT_VIOLATED),
        (
            &["gen", "appendix-a", "--dims", "2,2", "--prime", "7"],
            EXIT_VIOLATED,
        ),
        (&["gen", "domino"], EXIT_OK),
        (&["gen", "appendix-a", "--dims", "3,3"], EXIT_VIOLATED),
    ];
    for (i, (gen, expected)) in cases.iter().enumerate() {
        let f = path(&dir, &format!("{i}.json"));
        let mut args = gen.to_vec();
        args.extend(["--out", s(&f)]);
        assert_eq!(cli(&args).code, EXIT_OK);
        assert_eq!(cli(&["check", "--sep", s(&f)]).code, *expected, "{gen:?}");
    }
}

#[test]
fn incomplete_tree_is_invalid() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "bad.json");
    let k = r#"{"dim":2,"re":[[1,0],[0,0]],"im":[[0,0],[0,0]]}"#;
    let leaf = format!(r#"{{"party":null,"kraus":{k},"children":[]}}"#);
    std::fs::write(
        &f,
        format!(r#"{{"dims":[2,2],"root":{{"party":0,"kraus":null,"children":[{leaf},{leaf}]}}}}"#),
    )
    .unwrap();
    let r = cli(&["verify-tree", "--tree", s(&f)]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.out.contains(r#""kind":"incomplete""#), "{}", r.out);
}

#[test]
fn canonicalize_splits_a_three_outcome_measurement() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "three.json");
    let c = path(&dir, "canon.json");
    let proj = |i: usize| {
        let mut re = [[0.0; 3]; 3];
        re[i][i] = 1.0;
        format!(
            r#"{{"party":null,"kraus":{{"dim":3,"re":{re:?},"im":[[0,0,0],[0,0,0],[0,0,0]]}},"children":[]}}"#
        )
    };
    let tree = format!(
        r#"{{"dims":[3,2],"root":{{"party":0,"kraus":null,"children":[{},{},{}]}}}}"#,
        proj(0),
        proj(1),
        proj(2)
    );
    std::fs::write(&f, tree).unwrap();
    assert!(cli(&["verify-tree", "--tree", s(&f)])
        .out
        .contains("canonical: no"));
    assert_eq!(
        cli(&["canonicalize", "--tree", s(&f), "--out", s(&c)]).code,
        EXIT_OK
    );
    let r = cli(&["verify-tree", "--tree", s(&c)]);
    assert!(
        r.out.contains("full binary: yes; canonical: yes"),
        "{}",
        r.out
    );
}

#[test]
fn malformed_input_reports_location() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "broken.json");
    std::fs::write(&f, r#"{"dims":[2,2],"outcomes":[{"weight":1,"locals":[{"dim":2,"re":[[1,0]],"im":[[0,0],[0,0]]}]}]}"#).unwrap();
    let r = cli(&["check", "--sep", s(&f)]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("outcomes[0]"), "{}", r.err);

    std::fs::write(&f, "{ not json").unwrap();
    let r = cli(&["check", "--sep", s(&f)]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("line 1"), "{}", r.err);

    assert_eq!(
        cli(&["check", "--sep", s(&path(&dir, "missing.json"))]).code,
        EXIT_INVALID
    );
    assert_eq!(cli(&["check"]).code, EXIT_INVALID);
    assert_eq!(cli(&["--tol", "-1", "gen", "domino"]).code, EXIT_INVALID);
}

#[test]
fn open_operation_is_refused() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "partial.json");
    let sep = domino_fixture();
    let tol = Tolerances::default();
    let partial =
        locc_core::SeparableOperation::new(vec![3, 3], sep.outcomes()[..8].to_vec(), &tol).unwrap();
    std::fs::write(&f, locc_core::json::sep_to_string(&partial)).unwrap();
    let r = cli(&["check", "--sep", s(&f)]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("closure"), "{}", r.err);
}

#[test]
fn refined_check_outside_its_domain_is_refused() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "p3.json");
    cli(&["gen", "appendix-a", "--dims", "2,2,2", "--out", s(&f)]);
    assert_eq!(
        cli(&["check", "--sep", s(&f), "--refined-bipartite"]).code,
        EXIT_INVALID
    );
}

#[test]
fn tolerance_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let f = path(&dir, "domino.json");
    cli(&["gen", "domino", "--out", s(&f)]);
    let bin = env!("CARGO_BIN_EXE_locc-cert");
    let ok = Command::new(bin)
        .args(["check", "--sep", s(&f)])
        .env("LOCC_CERT_TOL", "1e-7")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let bad = Command::new(bin)
        .args(["check", "--sep", s(&f)])
        .env("LOCC_CERT_TOL", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_INVALID));
}
