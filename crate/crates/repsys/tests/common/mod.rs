//! Shared helpers for the integration test targets: a seeded synthetic
//! rating-log generator, process-spawning utilities for the `repsys`
//! binary, and byte-level directory comparison.

#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

/// One rating event: (consumer, product, rating, timestamp).
pub type Record = (u32, u32, u8, i64);

/// Generate a deterministic synthetic rating log. Products carry a latent
/// quality and consumers a personal noise level, so reliability features
/// have real signal and aggregation methods produce distinct scores.
/// Every product is guaranteed at least one rating and every consumer at
/// least four, so 10-fold cross-validation and ranking comparisons are
/// well-posed. All (consumer, product) pairs are unique.
pub fn synthetic_records(consumers: u32, products: u32, seed: u64) -> Vec<Record> {
    assert!(consumers >= 10 && products >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quality: Vec<f64> = (0..products).map(|_| rng.random_range(1.2..=4.8)).collect();
    let mut records = Vec::new();
    let mut timestamp = 880_000_000_i64;
    for consumer in 1..=consumers {
        let noise = rng.random_range(0.1..=1.6_f64);
        let floor = (products / 3).max(4).min(products);
        let count = rng.random_range(floor..=products) as usize;
        let mut ids: Vec<u32> = (1..=products).collect();
        ids.shuffle(&mut rng);
        ids.truncate(count);
        // Deal one forced product per consumer so the whole catalogue is
        // covered even at small sizes.
        let forced = (consumer - 1) % products + 1;
        if !ids.contains(&forced) {
            ids.push(forced);
        }
        ids.sort_unstable();
        for product in ids {
            let q = quality[(product - 1) as usize];
            let value = q + rng.random_range(-noise..=noise);
            let rating = value.round().clamp(1.0, 5.0) as u8;
            timestamp += 7;
            records.push((consumer, product, rating, timestamp));
        }
    }
    records
}

/// Serialize records in the tab-separated `consumer \t product \t rating
/// \t timestamp` layout and write them to `path`.
pub fn write_tab_file(path: &Path, records: &[Record]) {
    let mut text = String::new();
    for (c, p, r, t) in records {
        text.push_str(&format!("{c}\t{p}\t{r}\t{t}\n"));
    }
    std::fs::write(path, text).unwrap();
}

/// Distinct (consumers, products, ratings) in a record list.
pub fn distinct_counts(records: &[Record]) -> (usize, usize, usize) {
    let consumers: BTreeSet<u32> = records.iter().map(|r| r.0).collect();
    let products: BTreeSet<u32> = records.iter().map(|r| r.1).collect();
    (consumers.len(), products.len(), records.len())
}

/// Command handle for the compiled `repsys` binary.
pub fn repsys() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repsys"))
}

/// Run the command, asserting success, and return (stdout, stderr).
pub fn run_ok(cmd: &mut Command) -> (String, String) {
    let output = cmd.output().expect("failed to spawn repsys");
    let (stdout, stderr) = decode(&output);
    assert!(
        output.status.success(),
        "expected success, got {:?}\nstdout:\n{stdout}\nstderr:\n{stderr}",
        output.status.code()
    );
    (stdout, stderr)
}

/// Run the command, asserting it exits with `code`, and return stderr.
pub fn run_expect_code(cmd: &mut Command, code: i32) -> String {
    let output = cmd.output().expect("failed to spawn repsys");
    let (stdout, stderr) = decode(&output);
    assert_eq!(
        output.status.code(),
        Some(code),
        "expected exit code {code}\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );
    stderr
}

fn decode(output: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

/// Sorted file names directly inside `dir`.
pub fn dir_file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

/// Assert two output directories contain the same file names with
/// byte-identical contents.
pub fn assert_dirs_identical(a: &Path, b: &Path) {
    let names_a = dir_file_names(a);
    let names_b = dir_file_names(b);
    assert_eq!(names_a, names_b, "file sets differ between runs");
    for name in &names_a {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        assert!(
            bytes_a == bytes_b,
            "{name} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
}

/// Extract the value from a `mae <name> <value>` stdout line.
pub fn parse_mae(stdout: &str, name: &str) -> Option<f64> {
    for line in stdout.lines() {
        let mut parts = line.split_whitespace();
        if parts.next() == Some("mae") && parts.next() == Some(name) {
            return parts.next().map(|v| v.parse().unwrap());
        }
    }
    None
}
