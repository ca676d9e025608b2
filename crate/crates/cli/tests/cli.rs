use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn aqp(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqp")).env("AQP_STORE", store).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: usize, row: impl Fn(usize) -> String) -> String {
    let mut s = format!("{header}\n");
    for i in 0..rows {
        writeln!(s, "{}", row(i)).unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, s).unwrap();
    path.to_str().unwrap().to_string()
}

/// 200k rows in blocks of 10, three groups interleaved within every block.
fn grouped_store() -> TempDir {
    let dir = TempDir::new().unwrap();
    let csv = write_csv(dir.path(), "f.csv", "g,x", 200_000, |i| format!("{},{}", i % 3, (i * 7919) % 100 + 1));
    ok(aqp(&dir.path().join("st"), &["ingest", &csv, "--table", "fact", "--schema", "g:int,x:int", "--block-size", "10"]));
    dir
}

const SAMPLING: [&str; 6] = ["--set", "large_table_threshold=100000", "--set", "theta_p=0.01", "--set", "rate_cap=0.5"];

fn with_sampling<'a>(args: &[&'a str]) -> Vec<&'a str> {
    SAMPLING.iter().copied().chain(args.iter().copied()).collect()
}

#[test]
fn ingest_counts_blocks_and_rejects_duplicates() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("st");
    let csv = write_csv(dir.path(), "t.csv", "id,name,price,day", 250, |i| format!("{i},n{i},{}.5,2024-01-{:02}", i % 7, i % 28 + 1));
    let args = ["ingest", &csv, "--table", "t", "--schema", "id:int,name:str,price:float,day:date"];
    assert_eq!(ok(aqp(&store, &args)), "ok, 3 blocks, 250 rows\n");

    let again = aqp(&store, &args);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("already exists"), "{}", stderr(&again));

    let mut replace = args.to_vec();
    replace.extend(["--replace", "--block-size", "50"]);
    assert_eq!(ok(aqp(&store, &replace)), "ok, 5 blocks, 250 rows\n");
    assert!(ok(aqp(&store, &["tables"])).starts_with("t\t250 rows\t5 blocks"));
}

#[test]
fn bad_schema_and_bad_rows_fail() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("st");
    let csv = write_csv(dir.path(), "t.csv", "a,b", 3, |i| format!("{i},x"));
    for schema in ["a:int,b:blob", "a:int", "a:int,b:int", "a,b:int"] {
        let o = aqp(&store, &["ingest", &csv, "--table", "t", "--schema", schema]);
        assert_eq!(o.status.code(), Some(1), "{schema}");
        assert!(stderr(&o).starts_with("error: "), "{schema}: {}", stderr(&o));
    }
    let o = aqp(&store, &["query", "SELECT SUM(a) FROM missing"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exact_query_has_no_footer() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("st");
    let csv = write_csv(dir.path(), "t.csv", "g,x", 10, |i| format!("{},{}", ["a", "b"][i % 2], i));
    ok(aqp(&store, &["ingest", &csv, "--table", "t", "--schema", "g:str,x:int", "--block-size", "3"]));
    let out = ok(aqp(&store, &["query", "SELECT g, SUM(x) AS s, AVG(x) AS m FROM t GROUP BY g"]));
    assert_eq!(out, "g   s  m\n-  --  -\na  20  4\nb  25  5\n(2 rows)\n");

    let json = ok(aqp(&store, &["query", "SELECT g, SUM(x) AS s FROM t GROUP BY g", "--format", "jsonl"]));
    assert_eq!(json, "{\"g\":\"a\",\"s\":20}\n{\"g\":\"b\",\"s\":25}\n");
}

#[test]
fn guaranteed_query_is_sampled_and_reproducible() {
    let dir = grouped_store();
    let store = dir.path().join("st");
    let sql = "SELECT g, SUM(x) AS s, COUNT(*) AS n FROM fact GROUP BY g ERROR WITHIN 10% PROBABILITY 90%";
    let run = |seed: &str| ok(aqp(&store, &with_sampling(&["query", sql, "--seed", seed])));
    let first = run("11");
    assert_eq!(first, run("11"));
    assert_ne!(first, run("12"));

    let footer = first.lines().last().unwrap();
    assert!(footer.starts_with("guaranteed \u{2264}10% @90%; plan: fact SYSTEM "), "{first}");
    assert!(footer.contains("scale factor") && footer.contains("pilot"), "{footer}");

    // Estimates against the exact answer, which is fixed by construction.
    let exact = ok(aqp(&store, &["query", "SELECT g, SUM(x) AS s, COUNT(*) AS n FROM fact GROUP BY g"]));
    let numbers = |text: &str| -> Vec<Vec<f64>> {
        text.lines().skip(2).take(3).map(|l| l.split_whitespace().map(|w| w.parse().unwrap()).collect()).collect()
    };
    for (a, b) in numbers(&first).iter().zip(numbers(&exact)) {
        assert_eq!(a[0], b[0]);
        for c in 1..3 {
            assert!((a[c] - b[c]).abs() <= 0.1 * b[c], "{first}\n{exact}");
        }
    }
}

#[test]
fn infeasible_target_falls_back_to_exact() {
    let dir = grouped_store();
    let store = dir.path().join("st");
    let exact = ok(aqp(&store, &["query", "SELECT g, SUM(x) FROM fact GROUP BY g"]));
    let out = ok(aqp(&store, &with_sampling(&["query", "SELECT g, SUM(x) FROM fact GROUP BY g ERROR WITHIN 0.01% PROBABILITY 99%"])));
    let (rows, footer) = out.rsplit_once("plan rejected: exact execution").unwrap();
    assert_eq!(rows, exact);
    assert!(footer.contains("no sampling plan within the rate cap"), "{footer}");
}

#[test]
fn explain_shows_pilot_candidates_and_choice() {
    let dir = grouped_store();
    let store = dir.path().join("st");
    let sql = "SELECT SUM(x) FROM fact ERROR WITHIN 5% PROBABILITY 95%";
    let small = ok(aqp(&store, &["explain", sql]));
    assert!(small.contains("large tables: none"), "{small}");
    assert!(small.contains("chosen: exact (no candidates)"), "{small}");

    let big = ok(aqp(&store, &with_sampling(&["explain", sql])));
    assert!(big.contains("pilot: fact (as fact)"), "{big}");
    assert!(big.contains("candidates:\n  fact SYSTEM "), "{big}");
    assert!(big.contains("exact cost: 3.05 MiB"), "{big}");
    assert!(big.lines().any(|l| l.starts_with("chosen: fact SYSTEM ")), "{big}");
    assert!(big.contains("slack"), "{big}");

    let json = ok(aqp(&store, &with_sampling(&["explain", sql, "--format", "jsonl"])));
    let v: serde_json::Value = serde_json::from_str(json.trim()).unwrap();
    assert_eq!(v["plan"]["guarantee"], serde_json::json!([0.05, 0.95]));
}

#[test]
fn explain_join_offers_plans_sampling_both_tables() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("st");
    // Ten join keys, one per block run, so each block of b meets many blocks of a.
    let a = write_csv(dir.path(), "a.csv", "k,x", 20_000, |i| format!("{},{}", (i / 10) % 10, (i * 7919) % 100 + 1));
    let b = write_csv(dir.path(), "b.csv", "k,w", 2_000, |i| format!("{},{}", (i / 10) % 10, (i * 31) % 10 + 1));
    ok(aqp(&store, &["ingest", &a, "--table", "a", "--schema", "k:int,x:int", "--block-size", "10"]));
    ok(aqp(&store, &["ingest", &b, "--table", "b", "--schema", "k:int,w:int", "--block-size", "10"]));
    let sql = "SELECT SUM(a.x * b.w) FROM a JOIN b ON a.k = b.k ERROR WITHIN 50% PROBABILITY 90%";
    let out = ok(aqp(&store, &["--set", "large_table_threshold=1000", "--set", "rate_cap=0.5", "--set", "theta_p=0.05", "explain", sql]));
    assert!(out.contains("large tables: a (20000 rows), b (2000 rows)"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("  a SYSTEM ") && l.contains(", b SYSTEM ")), "{out}");
}

#[test]
fn config_file_and_overrides() {
    let dir = grouped_store();
    let store = dir.path().join("st");
    let cfg = dir.path().join("planner.conf");
    std::fs::write(&cfg, "# wide cap\nlarge_table_threshold = 100000\ntheta_p = 0.01\nrate_cap = 0.5\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let sql = "SELECT SUM(x) FROM fact ERROR WITHIN 10% PROBABILITY 90%";
    let via_file = ok(aqp(&store, &["--config", cfg, "query", sql, "--seed", "4"]));
    assert_eq!(via_file, ok(aqp(&store, &with_sampling(&["query", sql, "--seed", "4"]))));

    // The command-line override wins over the file.
    let capped = ok(aqp(&store, &["--config", cfg, "--set", "rate_cap=0.00001", "query", sql]));
    assert!(capped.contains("plan rejected: exact execution"), "{capped}");

    for bad in [["--set", "rate_cap=2"], ["--set", "nonsense=1"], ["--set", "novalue"]] {
        let o = aqp(&store, &[bad[0], bad[1], "query", sql]);
        assert_eq!(o.status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn verify_runs_experiments() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("st");
    let eq = dir.path().join("eq.conf");
    std::fs::write(&eq, "kind = equivalence\ntheta = 0.4\nseed = 9\n").unwrap();
    let out = ok(aqp(&store, &["verify", eq.to_str().unwrap()]));
    for op in ["selection", "join", "union"] {
        assert!(out.lines().any(|l| l.starts_with(op) && l.ends_with("pass")), "{out}");
    }
    assert!(out.ends_with("result: pass\n"), "{out}");

    let json = ok(aqp(&store, &["verify", eq.to_str().unwrap(), "--format", "jsonl"]));
    assert_eq!(json.lines().count(), 3);
    for line in json.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["equivalent"], true);
    }

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "kind = equivalence\nbogus = 1\n").unwrap();
    let o = aqp(&store, &["verify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn shipped_experiment_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        aqp_core::montecarlo::Experiment::from_text(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 8);
}
