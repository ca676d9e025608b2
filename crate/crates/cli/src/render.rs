use aqp_core::engine::{ResultTable, Value};
use aqp_core::planner::{PlanReport, SamplingPlan};
use std::fmt::Write;

fn cell(v: &Value) -> String {
    match v {
        Value::Float(x) if x.is_finite() => {
            let s = format!("{x:.6}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            if s == "-0" { "0".into() } else { s.into() }
        }
        other => other.to_string(),
    }
}

/// Aligned text table; numbers are right-aligned.
pub fn table(r: &ResultTable) -> String {
    let cells: Vec<Vec<String>> = r.rows.iter().map(|row| row.iter().map(cell).collect()).collect();
    let mut width: Vec<usize> = r.columns.iter().map(|c| c.chars().count()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let numeric: Vec<bool> = (0..r.columns.len())
        .map(|i| r.rows.iter().all(|row| matches!(row[i], Value::Int(_) | Value::Float(_) | Value::Null)))
        .collect();
    let line = |out: &mut String, row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| if numeric[i] { format!("{c:>w$}", w = width[i]) } else { format!("{c:<w$}", w = width[i]) })
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
    };
    let mut out = String::new();
    line(&mut out, &r.columns);
    line(&mut out, &width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in &cells {
        line(&mut out, row);
    }
    let n = r.rows.len();
    writeln!(out, "({n} row{})", if n == 1 { "" } else { "s" }).unwrap();
    out
}

pub fn rows_jsonl(r: &ResultTable) -> Vec<String> {
    r.rows
        .iter()
        .map(|row| {
            let obj: serde_json::Map<String, serde_json::Value> =
                r.columns.iter().zip(row).map(|(c, v)| (c.clone(), serde_json::to_value(v).unwrap())).collect();
            serde_json::Value::Object(obj).to_string()
        })
        .collect()
}

fn pct(x: f64) -> String {
    let s = format!("{:.4}", x * 100.0);
    format!("{}%", s.trim_end_matches('0').trim_end_matches('.'))
}

fn plan_text(plan: &SamplingPlan) -> String {
    match plan {
        SamplingPlan::Exact => "exact".into(),
        SamplingPlan::Rates(r) => r
            .iter()
            .map(|(t, rate)| if *rate < 1.0 { format!("{t} SYSTEM {}", pct(*rate)) } else { format!("{t} full") })
            .collect::<Vec<_>>()
            .join(", "),
    }
}

/// One-line summary printed under a query result that carried an error clause.
pub fn footer(r: &PlanReport) -> Option<String> {
    let (e, p) = r.guarantee?;
    Some(match &r.fallback {
        Some(why) => format!("plan rejected: exact execution ({})", why.strip_prefix("plan rejected: ").unwrap_or(why)),
        None if r.chosen.is_exact() => "exact execution".into(),
        None => {
            let mut s = format!("guaranteed \u{2264}{} @{}; plan: {}; scale factor {:.2}", pct(e), pct(p), plan_text(&r.chosen), r.scale_factor);
            if let Some(pilot) = &r.pilot {
                write!(s, "; pilot {} blocks of {}", pilot.blocks_sampled, pilot.table).unwrap();
            }
            s
        }
    })
}

fn bytes(b: f64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut v = b;
    let mut u = 0;
    while v >= 1024.0 && u + 1 < UNITS.len() {
        v /= 1024.0;
        u += 1;
    }
    if u == 0 { format!("{v:.0} {}", UNITS[0]) } else { format!("{v:.2} {}", UNITS[u]) }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.6e}"))
}

pub fn explain(r: &PlanReport) -> String {
    let mut out = String::new();
    match r.guarantee {
        Some((e, p)) => writeln!(out, "guarantee: error within {} with probability {}", pct(e), pct(p)).unwrap(),
        None => writeln!(out, "guarantee: none (no error clause)").unwrap(),
    }
    if r.large_tables.is_empty() {
        writeln!(out, "large tables: none").unwrap();
    } else {
        let names: Vec<String> = r.large_tables.iter().map(|(t, n)| format!("{t} ({n} rows)")).collect();
        writeln!(out, "large tables: {}", names.join(", ")).unwrap();
    }
    if let Some(p) = &r.pilot {
        writeln!(
            out,
            "pilot: {} (as {}) at {}, {} of {} blocks, {} groups, {} scanned",
            p.table,
            p.reference,
            pct(p.theta_p),
            p.blocks_sampled,
            p.blocks_total,
            p.groups,
            bytes(p.scanned_bytes as f64)
        )
        .unwrap();
    }
    if !r.constraints.is_empty() {
        writeln!(out, "constraints:").unwrap();
        for c in &r.constraints {
            let group = if c.group.is_empty() {
                String::new()
            } else {
                format!(" [{}]", c.group.iter().map(cell).collect::<Vec<_>>().join(", "))
            };
            writeln!(
                out,
                "  {}{}: e {} p {:.6} lower bound {} variance bound {} slack {}",
                c.aggregate,
                group,
                pct(c.e),
                c.p,
                opt(c.lower_bound),
                opt(c.variance_bound),
                if c.slack.is_finite() { format!("{:.6e}", c.slack) } else { "-inf".into() }
            )
            .unwrap();
        }
    }
    if r.candidates.is_empty() {
        writeln!(out, "candidates: none").unwrap();
    } else {
        writeln!(out, "candidates:").unwrap();
        for c in &r.candidates {
            writeln!(out, "  {}: cost {}", plan_text(&SamplingPlan::Rates(c.rates.clone())), bytes(c.cost)).unwrap();
        }
    }
    writeln!(out, "exact cost: {}", bytes(r.exact_cost)).unwrap();
    if r.chosen.is_exact() {
        let why = if r.candidates.is_empty() { "no candidates" } else { "no candidate is cheaper" };
        writeln!(out, "chosen: exact ({why})").unwrap();
    } else {
        writeln!(out, "chosen: {}, cost {}, scale factor {:.6}", plan_text(&r.chosen), bytes(r.chosen_cost), r.scale_factor).unwrap();
    }
    if let Some(why) = &r.fallback {
        writeln!(out, "fallback: {why}").unwrap();
    }
    out
}
