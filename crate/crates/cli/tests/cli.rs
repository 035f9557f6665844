use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn nlk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlk")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn help_lists_the_stages() {
    let o = nlk(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for stage in ["generate", "learn", "predict", "report", "sweep"] {
        assert!(text.contains(stage), "{text}");
    }
}

#[test]
fn stages_run_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = tiny();
    let config = config.to_str().unwrap();

    let o = nlk(&["learn", "-c", config, "--out", out]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));

    for stage in ["generate", "learn", "predict"] {
        let o = nlk(&[stage, "--config", config, "--out", out, "--model", "classical,fractal"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = nlk(&["predict", "-c", config, "--out", out]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonlocal"));

    let mse = std::fs::read_to_string(dir.path().join("mse.csv")).unwrap();
    assert!(mse.starts_with("# nlk"));
    assert!(mse.contains("\nclassical,") && mse.contains("\nfractal,") && !mse.contains("\nnonlocal,"));
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = tiny();
    let config = config.to_str().unwrap();
    assert_eq!(code(&nlk(&["generate", "-c", config, "--out", out, "--tt", "60"])), 2);
    assert_eq!(code(&nlk(&["generate", "-c", config, "--out", out, "--model", "spline"])), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&nlk(&["generate", "-c", missing.to_str().unwrap()])), 2);
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "schema = 3\n").unwrap();
    assert_eq!(code(&nlk(&["report", "-c", broken.to_str().unwrap()])), 2);
}
