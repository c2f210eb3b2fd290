use std::process::Command;

fn cbpnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cbpnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn unknown_key_exits_with_argument_code() {
    let out = cbpnet(&["gen-data", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn zero_count_is_rejected() {
    let out = cbpnet(&["gen-data", "count=0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("absent.ckpt");
    let out = cbpnet(&["infer", &format!("model={}", model.display()), "theta=1,1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gen_data_echoes_config_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    let out = cbpnet(&["gen-data", "count=3", "seed=5", &format!("out={}", path.display())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("config: command=gen-data"), "{stdout}");
    assert!(path.exists());
}
