use aqp_core::engine::*;
use aqp_core::sql::parse_query;
use std::io::Write;

fn run(store: &Store, sql: &str, seed: u64) -> ResultTable {
    execute(&parse_query(sql).unwrap(), store, &ExecOptions::seeded(seed)).unwrap()
}

fn ints(r: &ResultTable) -> Vec<Vec<i64>> {
    r.rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match v {
                    Value::Int(x) => *x,
                    other => panic!("{other:?}"),
                })
                .collect()
        })
        .collect()
}

fn csv_file(lines: &[String]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f
}

#[test]
fn ingest_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut lines = vec!["id,name,price,day".to_string()];
    lines.extend((0..250).map(|i| format!("{i},n{},{}.5,1998-01-{:02}", i % 7, i, i % 28 + 1)));
    let f = csv_file(&lines);
    let schema = parse_schema("id:int,name:str,price:float,day:date").unwrap();
    let stats = store.ingest_csv(f.path(), "items", &schema, 100, false).unwrap();
    let name_bytes: u64 = (0..250).map(|_| 4 + 2).sum();
    assert_eq!(stats, TableStats { rows: 250, blocks: 3, bytes: 250 * 8 + name_bytes + 250 * 8 + 250 * 4, block_size: 100 });
    let t = store.get("items").unwrap();
    assert_eq!((t.block_rows(2).len(), t.block_of(199), t.block_of(200)), (50, 1, 2));

    assert!(matches!(store.ingest_csv(f.path(), "items", &schema, 100, false), Err(EngineError::Duplicate(_))));
    store.ingest_csv(f.path(), "items", &schema, 50, true).unwrap();
    assert_eq!(store.table_stats("items").unwrap().blocks, 5);

    // A fresh handle reads the persisted file.
    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(*reopened.get("items").unwrap(), *store.get("items").unwrap());
    assert_eq!(reopened.tables().unwrap(), vec!["items".to_string()]);
    assert!(matches!(reopened.table_stats("nope"), Err(EngineError::UnknownTable(_))));

    let empty = csv_file(&["id,name,price,day".to_string()]);
    let stats = store.ingest_csv(empty.path(), "none", &schema, 100, false).unwrap();
    assert_eq!(stats, TableStats { rows: 0, blocks: 0, bytes: 0, block_size: 100 });
}

#[test]
fn ingest_reports_bad_rows() {
    let store = Store::in_memory();
    let mut lines = vec!["a,b".to_string()];
    lines.extend((1..=20).map(|i| if i == 17 { "17,oops".to_string() } else { format!("{i},{i}.0") }));
    let f = csv_file(&lines);
    let schema = parse_schema("a:int,b:float").unwrap();
    match store.ingest_csv(f.path(), "t", &schema, 10, false) {
        Err(EngineError::Csv { row: 17, message }) => assert!(message.contains("'b'"), "{message}"),
        other => panic!("{other:?}"),
    }
    assert!(!store.contains("t"));
    assert!(parse_schema("a:int,b:blob").is_err());
    assert!(parse_schema("a").is_err());
}

#[test]
fn file_format_round_trip() {
    let t = BlockTable::new(
        "mixed",
        parse_schema("i:int,f:float,s:str,d:date").unwrap(),
        vec![
            Column::Int(vec![1, -2, i64::MAX]),
            Column::Float(vec![0.5, f64::MIN_POSITIVE, -3.25]),
            Column::Str(vec!["".into(), "héllo".into(), "a,b".into()]),
            Column::Date(vec![0, -1, 10_000]),
        ],
        2,
    )
    .unwrap();
    let mut buf = Vec::new();
    format::write_table(&t, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"AQPT");
    assert_eq!(format::read_table("mixed", &buf[..]).unwrap(), t);
    assert!(format::read_table("mixed", &buf[..buf.len() - 1]).is_err());
    buf.push(0);
    assert!(matches!(format::read_table("mixed", &buf[..]), Err(EngineError::Corrupt(_))));
}

fn numbers(store: &Store, name: &str, n: i64, b: u64) {
    let t = BlockTable::from_ints(name, &[("x", (1..=n).collect()), ("g", (1..=n).map(|i| i % 3).collect())], b).unwrap();
    store.put(t, true).unwrap();
}

#[test]
fn basic_queries() {
    let store = Store::in_memory();
    numbers(&store, "t", 3, 2);
    assert_eq!(ints(&run(&store, "SELECT SUM(x) FROM t", 0)), vec![vec![6]]);
    assert_eq!(ints(&run(&store, "SELECT COUNT(*), SUM(x * 2) FROM t WHERE x >= 2", 0)), vec![vec![2, 10]]);
    assert_eq!(ints(&run(&store, "SELECT x FROM t WHERE x IN (1, 3) AND NOT x = 3", 0)), vec![vec![1]]);
    assert_eq!(ints(&run(&store, "SELECT _blockid(t), COUNT(*) FROM t GROUP BY _blockid(t)", 0)), vec![vec![0, 2], vec![1, 1]]);
    let r = run(&store, "SELECT AVG(x), SUM(x) / COUNT(*) FROM t WHERE x BETWEEN 2 AND 3", 0);
    assert_eq!(r.rows, vec![vec![Value::Float(2.5), Value::Float(2.5)]]);
    let r = run(&store, "SELECT SUM(x), COUNT(*), MAX(x) FROM t WHERE x > 10", 0);
    assert_eq!(r.rows, vec![vec![Value::Null, Value::Int(0), Value::Null]]);
    assert_eq!(run(&store, "SELECT g, SUM(x) FROM t WHERE x > 10 GROUP BY g", 0).rows.len(), 0);
    assert_eq!(r.columns, vec!["SUM(x)", "COUNT(*)", "MAX(x)"]);
}

#[test]
fn grouped_query_matches_hand_evaluation() {
    // x = 1..10, g = x mod 3:
    //   g=0: 3+6+9 = 18 (3 rows), g=1: 1+4+7+10 = 22 (4), g=2: 2+5+8 = 15 (3)
    let store = Store::in_memory();
    numbers(&store, "t", 10, 4);
    let r = run(&store, "SELECT g, SUM(x) AS s, COUNT(*) AS n, MIN(x), COUNT(DISTINCT x / x) FROM t GROUP BY g", 0);
    assert_eq!(r.columns[1..3], ["s".to_string(), "n".to_string()]);
    assert_eq!(ints(&r), vec![vec![0, 18, 3, 3, 1], vec![1, 22, 4, 1, 1], vec![2, 15, 3, 2, 1]]);
    let r = run(&store, "SELECT g + 1, SUM(x) FROM t GROUP BY g + 1", 0);
    assert_eq!(ints(&r), vec![vec![1, 18], vec![2, 22], vec![3, 15]]);
}

#[test]
fn joins() {
    let store = Store::in_memory();
    store.put(BlockTable::from_ints("a", &[("k", vec![1, 2]), ("v", vec![10, 20])], 1).unwrap(), true).unwrap();
    store.put(BlockTable::from_ints("b", &[("k", vec![2, 1]), ("w", vec![5, 7])], 1).unwrap(), true).unwrap();
    let r = run(&store, "SELECT a.v, b.w FROM a, b WHERE a.k = b.k", 0);
    assert_eq!(ints(&r), vec![vec![10, 7], vec![20, 5]]);
    let r = run(&store, "SELECT SUM(a.v * b.w) FROM a JOIN b ON a.k = b.k", 0);
    assert_eq!(ints(&r), vec![vec![170]]);
    let r = run(&store, "SELECT COUNT(*) FROM a, b", 0);
    assert_eq!(ints(&r), vec![vec![4]]);
    let r = run(&store, "SELECT COUNT(*) FROM a x, a y WHERE x.k < y.k", 0);
    assert_eq!(ints(&r), vec![vec![1]]);
    let q = parse_query("SELECT SUM(k) FROM a, b").unwrap();
    assert!(matches!(execute(&q, &store, &ExecOptions::default()), Err(EngineError::Ambiguous(_))));
    let q = parse_query("SELECT SUM(z) FROM a").unwrap();
    assert!(matches!(execute(&q, &store, &ExecOptions::default()), Err(EngineError::UnknownColumn(_))));
}

#[test]
fn strings_and_dates() {
    let store = Store::in_memory();
    let t = BlockTable::new(
        "s",
        parse_schema("name:str,d:date,p:float").unwrap(),
        vec![
            Column::Str(vec!["forest green".into(), "red".into(), "green tea".into()]),
            Column::Date(vec![10_500, 10_561, 10_600]),
            Column::Float(vec![1.5, 2.0, 4.0]),
        ],
        2,
    )
    .unwrap();
    store.put(t, false).unwrap();
    let r = run(&store, "SELECT COUNT(*) FROM s WHERE name LIKE '%green%'", 0);
    assert_eq!(ints(&r), vec![vec![2]]);
    let r = run(&store, "SELECT COUNT(*) FROM s WHERE name NOT LIKE 'g_een%'", 0);
    assert_eq!(ints(&r), vec![vec![2]]);
    // 1998-12-01 minus 90 days = 1998-09-02 = day 10471.
    let r = run(&store, "SELECT SUM(p) FROM s WHERE d <= date '1998-12-01' - interval '90 day' + 100", 0);
    assert_eq!(r.rows, vec![vec![Value::Float(3.5)]]);
}

#[test]
fn block_sampling_semantics() {
    let store = Store::in_memory();
    numbers(&store, "t", 250, 100);
    let full = store.table_stats("t").unwrap().bytes;
    let r = run(&store, "SELECT COUNT(*) FROM t TABLESAMPLE SYSTEM (100%)", 1);
    assert_eq!((ints(&r)[0][0], r.scanned_bytes), (250, full));
    let r = run(&store, "SELECT COUNT(*) FROM t TABLESAMPLE SYSTEM (0.0001%)", 1);
    assert_eq!((ints(&r)[0][0], r.scanned_bytes), (0, 0));

    let seeds = 4096;
    let mut hits = [0u32; 3];
    let q = parse_query("SELECT _blockid(t), COUNT(*) FROM t TABLESAMPLE SYSTEM (50%) GROUP BY _blockid(t)").unwrap();
    for seed in 0..seeds {
        let r = execute(&q, &store, &ExecOptions::seeded(seed)).unwrap();
        let mut bytes = 0;
        for row in ints(&r) {
            hits[row[0] as usize] += 1;
            assert_eq!(row[1], if row[0] == 2 { 50 } else { 100 }, "blocks come back whole");
            bytes += store.get("t").unwrap().block_bytes(row[0] as usize);
        }
        assert_eq!(r.scanned_bytes, bytes);
        assert_eq!(r.samples[0].units_drawn as usize, r.rows.len());
    }
    let se = (0.25 / seeds as f64).sqrt();
    for h in hits {
        assert!((h as f64 / seeds as f64 - 0.5).abs() <= 3.0 * se, "{hits:?}");
    }
    assert_eq!(run(&store, &q.to_string(), 9), run(&store, &q.to_string(), 9), "seed determines the sample");
}

#[test]
fn row_sampling_semantics() {
    let store = Store::in_memory();
    numbers(&store, "t", 20, 5);
    let full = store.table_stats("t").unwrap().bytes;
    let r = run(&store, "SELECT COUNT(*) FROM t TABLESAMPLE BERNOULLI (100%)", 3);
    assert_eq!(ints(&r), vec![vec![20]]);
    let seeds = 4096;
    let mut hits = [0u32; 20];
    for seed in 0..seeds {
        let r = run(&store, "SELECT x FROM t TABLESAMPLE BERNOULLI (30%)", seed);
        assert_eq!(r.scanned_bytes, full, "row sampling reads every block");
        for row in ints(&r) {
            hits[row[0] as usize - 1] += 1;
        }
    }
    let se = (0.3 * 0.7 / seeds as f64).sqrt();
    for h in hits {
        assert!((h as f64 / seeds as f64 - 0.3).abs() <= 3.0 * se + 1e-3, "{hits:?}");
    }
    store.put(BlockTable::from_ints("e", &[("x", vec![])], 5).unwrap(), true).unwrap();
    assert_eq!(ints(&run(&store, "SELECT COUNT(*) FROM e TABLESAMPLE BERNOULLI (50%)", 1)), vec![vec![0]]);
}

#[test]
fn scanned_volume_tracks_rate() {
    let store = Store::in_memory();
    numbers(&store, "t", 50_000, 100);
    let full = store.table_stats("t").unwrap().bytes as f64;
    let seeds = 200;
    let fracs: Vec<f64> =
        (0..seeds).map(|s| run(&store, "SELECT COUNT(*) FROM t TABLESAMPLE SYSTEM (20%)", s).scanned_bytes as f64 / full).collect();
    let mean = fracs.iter().sum::<f64>() / seeds as f64;
    let se = (0.2 * 0.8 / 500.0 / seeds as f64).sqrt();
    assert!((mean - 0.2).abs() <= 3.0 * se, "{mean}");
}

#[test]
fn horvitz_thompson_sum_is_unbiased() {
    let store = Store::in_memory();
    let t = BlockTable::from_ints("t", &[("x", vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5])], 2).unwrap();
    store.put(t, true).unwrap();
    let q = parse_query("SELECT SUM(x) FROM t").unwrap();
    let (n, theta) = (6usize, 0.3f64);
    let mut expectation = 0.0;
    for mask in 0u32..(1 << n) {
        let blocks: Vec<usize> = (0..n).filter(|b| mask >> b & 1 == 1).collect();
        let p = theta.powi(blocks.len() as i32) * (1.0 - theta).powi((n - blocks.len()) as i32);
        let opts = ExecOptions { block_selection: [("t".to_string(), blocks)].into(), ..Default::default() };
        let v = execute(&q, &store, &opts).unwrap().rows[0][0].as_f64().unwrap_or(0.0);
        expectation += p * v / theta;
    }
    assert!((expectation - 44.0).abs() < 1e-9, "{expectation}");
}
