use std::path::Path;
use std::process::{Command, Output};

use isoweier::io::{load_surface, read_surface};
use isoweier::{relative_deviation, AmbientVector};

fn isoweier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isoweier"))
        .args(args)
        .env_remove("ISOWEIER_TOL")
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate(dir: &Path, case: &str, out: &str) {
    let o = isoweier(&[
        "generate",
        "--case",
        case,
        "--size",
        "32x32",
        "--seed",
        "7",
        "--magnitude",
        "0.5",
        "--out",
        &path(dir, out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn generate_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    for case in ["r21", "r31", "r22"] {
        let out = format!("{case}.json");
        generate(dir.path(), case, &out);
        let o = isoweier(&["verify", "--in", &path(dir.path(), &out)]);
        assert_eq!(o.status.code(), Some(0), "{case}: {}", stderr(&o));
        let table = stdout(&o);
        assert!(table.contains("isotropy") && table.contains("pass"));
    }
}

#[test]
fn reconstruct_then_regenerate_matches() {
    let dir = tempfile::tempdir().unwrap();
    for case in ["r21", "r31", "r22"] {
        let (s, r, again) = (
            path(dir.path(), &format!("{case}.json")),
            path(dir.path(), &format!("{case}-result.json")),
            path(dir.path(), &format!("{case}-again.json")),
        );
        generate(dir.path(), case, &format!("{case}.json"));
        let o = isoweier(&["reconstruct", "--in", &s, "--out", &r]);
        assert!(o.status.success(), "{case}: {}", stderr(&o));
        let o = isoweier(&["generate", "--from", &r, "--out", &again]);
        assert!(o.status.success(), "{case}: {}", stderr(&o));
        let d =
            relative_deviation(&load_surface(&s).unwrap(), &load_surface(&again).unwrap()).unwrap();
        assert!(d <= 1e-9, "{case}: deviation {d:e}");
    }
}

#[test]
fn hand_edited_point_fails_verify_at_touched_edges() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "r21", "s.json");
    let text = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
    let mut s = read_surface(&text).unwrap();
    let moved = *s.at(3, 5) + AmbientVector::from_array3([0.25, 0.0, 0.0]);
    s.set_point(3, 5, moved).unwrap();
    let bad = path(dir.path(), "bad.json");
    isoweier::io::save_surface(&bad, &s).unwrap();

    let o = isoweier(&["verify", "--in", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[E_ISOTROPY]"), "{err}");
    for edge in ["F(2, 5)", "F(3, 5)", "G(3, 4)", "G(3, 5)"] {
        assert!(err.contains(edge), "{edge} missing from {err}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "r31", "a.json");
    generate(dir.path(), "r31", "b.json");
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    for obj in ["a.obj", "b.obj"] {
        let o = isoweier(&[
            "export",
            "--in",
            &path(dir.path(), "a.json"),
            "--project",
            "drop:4",
            "--out",
            &path(dir.path(), obj),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read("a.obj"), read("b.obj"));
    let obj = String::from_utf8(read("a.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 33 * 33);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 32 * 32);
}

#[test]
fn four_dimensional_export_needs_a_projection() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "r22", "s.json");
    let o = isoweier(&[
        "export",
        "--in",
        &path(dir.path(), "s.json"),
        "--out",
        &path(dir.path(), "s.obj"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("drop:4"));
    let rank_deficient = "linear:1,0,0,0,1,0,0,0,2,0,0,0";
    let o = isoweier(&[
        "export",
        "--in",
        &path(dir.path(), "s.json"),
        "--project",
        rank_deficient,
        "--out",
        &path(dir.path(), "s.obj"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[E_PROJECTION]"));
}

#[test]
fn converge_prints_table_and_csv() {
    let o = isoweier(&["converge", "--case", "r21", "--p", "0.5", "--levels", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);

    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "c.csv");
    let o = isoweier(&[
        "converge", "--case", "r22", "--p", "0.4", "--q", "0.25", "--domain", "0,1,0,1",
        "--levels", "3", "--csv", &csv,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("h,max_error,order,step_error"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn potential_sampled_surface_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let s = path(dir.path(), "p.json");
    let o = isoweier(&[
        "generate",
        "--case",
        "r31",
        "--size",
        "16x16",
        "--potential",
        "const:0.3@0.6",
        "--mesh",
        "0.0625",
        "--out",
        &s,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(isoweier(&["verify", "--in", &s]).status.code(), Some(0));
}

#[test]
fn usage_and_input_errors_carry_codes() {
    let o = isoweier(&["generate", "--size", "4x4", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));

    let o = isoweier(&["verify", "--in", "/nonexistent/surface.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[E_IO]: /nonexistent/surface.json"));

    let dir = tempfile::tempdir().unwrap();
    let junk = path(dir.path(), "junk.json");
    std::fs::write(&junk, "{\"format\":\"isoweier-surface\"").unwrap();
    let o = isoweier(&["verify", "--in", &junk]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[E_JSON]"));

    generate(dir.path(), "r21", "s.json");
    let o = Command::new(env!("CARGO_BIN_EXE_isoweier"))
        .args(["verify", "--in", &path(dir.path(), "s.json")])
        .env("ISOWEIER_TOL", "null=abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[E_USAGE]"));
}

#[test]
fn reconstruct_failure_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "r22", "s.json");
    let mut s = load_surface(dir.path().join("s.json")).unwrap();
    let moved = *s.at(4, 4) + AmbientVector::from_array4([0.5, 0.0, 0.0, 0.0]);
    s.set_point(4, 4, moved).unwrap();
    let bad = path(dir.path(), "bad.json");
    isoweier::io::save_surface(&bad, &s).unwrap();
    let o = isoweier(&[
        "reconstruct",
        "--in",
        &bad,
        "--out",
        &path(dir.path(), "r.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("recover-spinors") && err.contains("(3, 4)"),
        "{err}"
    );
    assert!(!dir.path().join("r.json").exists());
}
