#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn lyapscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Every file in a run directory except the manifest, which carries timing.
pub fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect()
}

/// Small configs covering every experiment.
pub const EXPERIMENTS: [(&str, &str); 6] = [
    (
        "exponents",
        r#"
rng_seed = 7
[map]
kind = "perturbed-torus"
params = [2, 1, 1, 1, 0.05, 0.05]
[grid]
n = [200, 800]
samples = 4
"#,
    ),
    (
        "entropy",
        r#"
rng_seed = 11
[map]
kind = "torus-linear"
params = [2, 1, 1, 1]
[grid]
n = [2, 4, 6]
eps = [0.05, 0.1]
gamma = 0.9
samples = 300
"#,
    ),
    (
        "neutral",
        r#"
rng_seed = 5
[map]
kind = "henon-like"
params = [1.4, 0.3]
[grid]
n = [1500]
alpha = [0.1, "1/4"]
min_len = [1, 10]
"#,
    ),
    (
        "shift-example1",
        r#"
[grid]
variant = ["p", "q"]
k = [10, 40]
alpha = ["1/5", "1/20"]
min_len = [5]
"#,
    ),
    (
        "curve-growth",
        r#"
rng_seed = 1
[map]
kind = "torus-linear"
params = [2, 1, 1, 1]
[grid]
n = [4, 6, 8]
eps = [0.1]
"#,
    ),
    (
        "sweep-identity-check",
        r#"
rng_seed = 3
[family]
limit = { kind = "perturbed-torus", params = [2, 1, 1, 1, 0.05, 0.05] }
bump = [0.2, 0.2]
k = [1, 2, 4, 8, 16, 32]
[grid]
n = [4, 6]
eps = [0.05]
gamma = 0.9
samples = 200
alpha = [0.2]
min_len = [5]
"#,
    ),
];
