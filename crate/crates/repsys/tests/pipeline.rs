//! End-to-end tests of the `repsys` binary: wire formats, exit codes,
//! output files, configuration precedence, and cross-run determinism.

mod common;

use common::*;
use std::io::Write as _;
use tempfile::TempDir;

#[test]
fn ingest_reports_counts_and_writes_canonical_csv() {
    let dir = TempDir::new().unwrap();
    let records = synthetic_records(30, 12, 11);
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &records);
    let out = dir.path().join("out");

    let (stdout, _) = run_ok(repsys().args([
        "ingest",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--out",
        out.to_str().unwrap(),
    ]));

    let (consumers, products, ratings) = distinct_counts(&records);
    assert_eq!(stdout, format!("{consumers} {products} {ratings}\n"));

    let csv = std::fs::read_to_string(out.join("ratings.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("consumer_id,product_id,rating,timestamp"));
    assert_eq!(lines.count(), ratings);
}

#[test]
fn canonical_csv_reingests_to_identical_counts() {
    let dir = TempDir::new().unwrap();
    let records = synthetic_records(25, 10, 5);
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &records);
    let first = dir.path().join("first");
    let second = dir.path().join("second");

    let (stdout_tab, _) = run_ok(repsys().args([
        "ingest",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--out",
        first.to_str().unwrap(),
    ]));
    let canonical = first.join("ratings.csv");
    let (stdout_csv, _) = run_ok(repsys().args([
        "ingest",
        "--dataset",
        canonical.to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        second.to_str().unwrap(),
    ]));

    assert_eq!(stdout_tab, stdout_csv);
    let bytes_first = std::fs::read(first.join("ratings.csv")).unwrap();
    let bytes_second = std::fs::read(second.join("ratings.csv")).unwrap();
    assert_eq!(bytes_first, bytes_second);
}

#[test]
fn double_colon_format_parses() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.dat");
    std::fs::write(&data, "1::10::5::978300760\n1::11::3::978300761\n2::10::4::978300762\n")
        .unwrap();
    let out = dir.path().join("out");

    let (stdout, _) = run_ok(repsys().args([
        "ingest",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-1m",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(stdout, "2 2 3\n");
}

#[test]
fn missing_dataset_exits_2_with_message() {
    let dir = TempDir::new().unwrap();
    let stderr = run_expect_code(
        repsys().args([
            "ingest",
            "--dataset",
            "/no/such/file.data",
            "--format",
            "ml-100k",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("file not found"), "stderr: {stderr}");
}

#[test]
fn malformed_line_exits_2_and_names_the_line() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    std::fs::write(&data, "1\t1\t5\t100\n2\t1\t4\t101\n7\t3\tfive\t102\n").unwrap();
    let stderr = run_expect_code(
        repsys().args([
            "ingest",
            "--dataset",
            data.to_str().unwrap(),
            "--format",
            "ml-100k",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn out_of_range_rating_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    std::fs::write(&data, "1\t1\t9\t100\n").unwrap();
    let stderr = run_expect_code(
        repsys().args([
            "ingest",
            "--dataset",
            data.to_str().unwrap(),
            "--format",
            "ml-100k",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_1() {
    run_expect_code(repsys().args(["run", "--bogus-flag"]), 1);
}

#[test]
fn help_exits_0() {
    run_ok(repsys().arg("--help"));
}

#[test]
fn invalid_lambda_exits_1() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(12, 6, 2));
    run_expect_code(
        repsys().args([
            "profile",
            "--dataset",
            data.to_str().unwrap(),
            "--format",
            "ml-100k",
            "--lambda",
            "1.5",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        1,
    );
}

#[test]
fn more_folds_than_consumers_exits_1() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(12, 6, 3));
    run_expect_code(
        repsys().args([
            "run",
            "--dataset",
            data.to_str().unwrap(),
            "--format",
            "ml-100k",
            "--algo",
            "lr",
            "--baseline",
            "none",
            "--k-folds",
            "50",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]),
        1,
    );
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("run.conf");
    std::fs::write(&file, "seed = 4\nwibble = 9\n").unwrap();
    let stderr = run_expect_code(
        repsys().args(["run", "--config", file.to_str().unwrap()]),
        1,
    );
    assert!(stderr.contains("wibble"), "stderr: {stderr}");
}

#[test]
fn config_file_supplies_values_and_flags_override_them() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(20, 10, 4));
    let conf = dir.path().join("run.conf");
    let mut f = std::fs::File::create(&conf).unwrap();
    writeln!(f, "# comment lines and blanks are ignored").unwrap();
    writeln!(f).unwrap();
    writeln!(f, "seed = 7").unwrap();
    writeln!(f, "lambda = 0.9  # trailing comment").unwrap();
    writeln!(f, "algo = none").unwrap();
    writeln!(f, "baseline = average").unwrap();
    drop(f);
    let out = dir.path().join("out");

    run_ok(repsys().args([
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]));

    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 9, "flag must override the config file");
    assert_eq!(echo["lambda"], 0.9, "config file must override the default");
    assert_eq!(echo["k_folds"], 10, "untouched keys keep their defaults");
    assert_eq!(echo["algorithms"].as_array().unwrap().len(), 0);
    assert_eq!(echo["baselines"][0], "average");
}

#[test]
fn profile_reports_count_and_writes_header() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    let records = synthetic_records(18, 9, 6);
    write_tab_file(&data, &records);
    let out = dir.path().join("out");

    let (stdout, _) = run_ok(repsys().args([
        "profile",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--out",
        out.to_str().unwrap(),
    ]));
    let (consumers, _, _) = distinct_counts(&records);
    assert_eq!(stdout, format!("profiles {consumers}\n"));

    let csv = std::fs::read_to_string(out.join("profiles.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("consumer_id,pos,nut,ngv,exp,fluc,rel"));
    assert_eq!(lines.count(), consumers);
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(40, 15, 8));
    let args = |out: &std::path::Path, threads: &str| {
        vec![
            "run".to_string(),
            "--dataset".into(),
            data.to_str().unwrap().into(),
            "--format".into(),
            "ml-100k".into(),
            "--algo".into(),
            "lr,rt,knn".into(),
            "--baseline".into(),
            "average,median".into(),
            "--seed".into(),
            "3".into(),
            "--threads".into(),
            threads.into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    let (stdout_a, _) = run_ok(repsys().args(args(&out_a, "1")));
    let (stdout_b, _) = run_ok(repsys().args(args(&out_b, "1")));
    let (stdout_c, _) = run_ok(repsys().args(args(&out_c, "7")));
    assert_eq!(stdout_a, stdout_b, "reruns must print identical reports");
    assert_eq!(stdout_a, stdout_c, "worker count must not change output");
    assert_dirs_identical(&out_a, &out_b);
    assert_dirs_identical(&out_a, &out_c);
}

#[test]
fn baseline_only_run_scores_equal_product_means() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    let records = synthetic_records(20, 8, 9);
    write_tab_file(&data, &records);
    let out = dir.path().join("out");

    let (stdout, _) = run_ok(repsys().args([
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--algo",
        "none",
        "--baseline",
        "average",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(stdout.contains("mae average "), "stdout: {stdout}");
    assert!(stdout.contains("ranking average"), "stdout: {stdout}");
    assert!(!out.join("weights_lr.csv").exists());

    let mut sums: std::collections::BTreeMap<u32, (f64, u32)> = Default::default();
    for (_, p, r, _) in &records {
        let entry = sums.entry(*p).or_insert((0.0, 0));
        entry.0 += f64::from(*r);
        entry.1 += 1;
    }
    let csv = std::fs::read_to_string(out.join("scores_average.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], "average");
        let product: u32 = fields[0].parse().unwrap();
        let score: f64 = fields[1].parse().unwrap();
        let n: u32 = fields[2].parse().unwrap();
        let (sum, count) = sums[&product];
        assert_eq!(n, count);
        assert!(
            (score - sum / f64::from(count)).abs() < 1e-6,
            "product {product}: {score} vs {}",
            sum / f64::from(count)
        );
        rows += 1;
    }
    assert_eq!(rows, sums.len(), "one score row per rated product");
}

#[test]
fn evaluate_reuses_previously_written_score_tables() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(30, 14, 10));
    let run_out = dir.path().join("run");
    let (run_stdout, _) = run_ok(repsys().args([
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--algo",
        "rt",
        "--baseline",
        "average,median",
        "--seed",
        "5",
        "--out",
        run_out.to_str().unwrap(),
    ]));

    let eval_out = dir.path().join("eval");
    let (eval_stdout, _) = run_ok(repsys().args([
        "evaluate",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--scores",
        run_out.join("scores_rt.csv").to_str().unwrap(),
        "--scores",
        run_out.join("scores_average.csv").to_str().unwrap(),
        "--scores",
        run_out.join("scores_median.csv").to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]));

    // The recomputed MAE values must agree with the original run's.
    for name in ["RT", "average", "median"] {
        let from_run = parse_mae(&run_stdout, name).unwrap();
        let from_eval = parse_mae(&eval_stdout, name).unwrap();
        assert_eq!(from_run, from_eval, "{name} MAE changed on re-evaluation");
    }
    assert!(eval_stdout.contains("ranking "), "stdout: {eval_stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report["models"].as_array().unwrap().len(), 3);

    // Curves use the first table as reference: RT against the two others.
    // Thresholds whose subset ties completely carry no row, so each curve
    // has between 0 and 11 points.
    let kendall = std::fs::read_to_string(eval_out.join("kendall.csv")).unwrap();
    assert_eq!(
        kendall.lines().next(),
        Some("reference,other,threshold_pct,set_size,tau")
    );
    let mut versus_average = 0;
    let mut versus_median = 0;
    for line in kendall.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], "RT");
        match fields[1] {
            "average" => versus_average += 1,
            "median" => versus_median += 1,
            other => panic!("unexpected curve target {other}"),
        }
        let tau: f64 = fields[4].parse().unwrap();
        assert!((-1.0..=1.0).contains(&tau));
    }
    assert!((1..=11).contains(&versus_average));
    assert!(versus_median <= 11);
}

#[test]
fn evaluate_score_table_missing_a_product_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("ratings.tab");
    write_tab_file(&data, &synthetic_records(15, 6, 12));
    let run_out = dir.path().join("run");
    run_ok(repsys().args([
        "run",
        "--dataset",
        data.to_str().unwrap(),
        "--format",
        "ml-100k",
        "--algo",
        "none",
        "--baseline",
        "average",
        "--out",
        run_out.to_str().unwrap(),
    ]));

    let full = std::fs::read_to_string(run_out.join("scores_average.csv")).unwrap();
    let mut lines: Vec<&str> = full.lines().collect();
    lines.remove(1); // drop the first product's score
    let truncated = dir.path().join("truncated.csv");
    std::fs::write(&truncated, lines.join("\n") + "\n").unwrap();

    run_expect_code(
        repsys().args([
            "evaluate",
            "--dataset",
            data.to_str().unwrap(),
            "--format",
            "ml-100k",
            "--scores",
            truncated.to_str().unwrap(),
            "--out",
            dir.path().join("eval").to_str().unwrap(),
        ]),
        2,
    );
}
