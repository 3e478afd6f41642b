use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/cmokg.h")).unwrap();
    for name in ["cmokg_version", "cmokg_last_error_message", "cmokg_problem_generate", "cmokg_posterior_cmokg", "cmokg_expected_max_affine", "CMOKG_STATUS_OK"] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(&src, "#include \"cmokg.h\"\nint main(void) { CmokgProblem *p = 0; return cmokg_problem_generate(1, 0, &p) == CMOKG_STATUS_OK ? 0 : 1; }\n").unwrap();
    let Ok(status) = Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&include).arg(&src).status() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}
