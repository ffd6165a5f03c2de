//! Plain-text renderings of stage results. CSV files carry full precision;
//! these tables round for reading.

use std::fmt::Write;

use chrono::NaiveDate;

use crate::balance::{BalanceRow, RowKind};
use crate::impact::ImpactTable;
use crate::matching::{match_multiplicity, OverlapReport};
use crate::series::DailySeries;

use super::{DesignOutput, MatchOutput};

/// `p` to three significant figures; scientific below 1e-4.
pub(crate) fn fmt_p(p: f64) -> String {
    if !p.is_finite() {
        return "NA".into();
    }
    if p == 0.0 {
        return "0".into();
    }
    if p < 1e-4 {
        return format!("{p:.2e}");
    }
    let digits = (2 - p.log10().floor() as i32).max(0) as usize;
    format!("{p:.digits$}")
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.decimals$}"))
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&width).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

pub(crate) fn ingest_summary(series: &DailySeries) -> String {
    let dates = series.dates();
    let mut s = String::new();
    let _ = writeln!(s, "days: {}", series.len());
    let _ = writeln!(s, "from: {}", dates[0]);
    let _ = writeln!(s, "to: {}", dates[dates.len() - 1]);
    let _ = writeln!(s, "strata: {}", series.strata().len());
    for st in series.strata() {
        let _ = writeln!(s, "  {}", st.column_name());
    }
    let _ = writeln!(
        s,
        "influenza days: {}",
        series.influenza().iter().filter(|&&b| b).count()
    );
    let _ = writeln!(
        s,
        "holidays: {}",
        series.holiday().iter().filter(|&&b| b).count()
    );
    s
}

pub(crate) fn fit_summary(d: &DesignOutput) -> String {
    let t = &d.treatment;
    let f = &d.fit;
    let mut s = String::new();
    let _ = writeln!(s, "days: {}", t.len());
    let _ = writeln!(
        s,
        "treated: {} ({:.1}%), threshold {} on lag 0-{} mean",
        t.n_treated(),
        100.0 * t.n_treated() as f64 / t.len() as f64,
        t.threshold,
        t.lag_window - 1
    );
    let _ = writeln!(s, "controls: {}", t.n_controls());
    let _ = writeln!(
        s,
        "converged: {} after {} iterations",
        f.converged, f.n_iter
    );
    let _ = writeln!(s, "deviance: {:.4}", f.deviance);
    if !d.dropped_columns.is_empty() {
        let _ = writeln!(
            s,
            "dropped constant columns: {}",
            d.dropped_columns.join(", ")
        );
    }
    if let Some(w) = &f.warning {
        let _ = writeln!(s, "warning: {w}");
    }
    s.push('\n');
    let header = ["term", "estimate", "std.error", "z"].map(String::from);
    let rows: Vec<Vec<String>> = f
        .columns
        .iter()
        .zip(f.beta.iter().zip(&f.std_errors))
        .map(|(c, (b, se))| {
            vec![
                c.clone(),
                format!("{b:.4}"),
                format!("{se:.4}"),
                format!("{:.2}", b / se),
            ]
        })
        .collect();
    s + &table(&header, &rows)
}

pub(crate) fn overlap_text(m: &MatchOutput, dates: &[NaiveDate]) -> String {
    let o: &OverlapReport = &m.overlap;
    let mut s = String::new();
    let _ = writeln!(s, "scale: {:?}", m.scale);
    let _ = writeln!(
        s,
        "treated score range: [{:.6}, {:.6}]",
        o.treated_range.0, o.treated_range.1
    );
    let _ = writeln!(
        s,
        "control score range: [{:.6}, {:.6}]",
        o.control_range.0, o.control_range.1
    );
    let _ = writeln!(
        s,
        "treated outside control range: {}",
        o.n_outside_control_support
    );
    let _ = writeln!(s, "caliper: {}", o.caliper);
    let _ = writeln!(s, "treated beyond caliper: {}", o.n_flagged());
    for t in o.flagged() {
        let _ = writeln!(s, "  {}  distance {:.6}", dates[t.day], t.distance);
    }
    let mult = match_multiplicity(&m.map);
    let _ = writeln!(s, "\ntimes used  control days");
    for (k, n) in &mult {
        let _ = writeln!(s, "{k:>10}  {n:>12}");
    }
    s
}

pub(crate) fn balance_text(rows: &[BalanceRow]) -> String {
    let header = [
        "covariate",
        "treated",
        "control",
        "matched",
        "p pre",
        "p post",
        "delta pre",
        "delta post",
        "% bias",
    ]
    .map(String::from);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let dec = if r.kind == RowKind::Binary { 3 } else { 2 };
            let mean = |v: Option<f64>| match (r.kind, v) {
                (RowKind::Binary, Some(x)) => format!("{:.1}%", 100.0 * x),
                (_, v) => fmt_opt(v, dec),
            };
            vec![
                r.name.clone(),
                mean(r.treated),
                mean(r.control),
                mean(r.matched),
                fmt_p(r.p_pre),
                fmt_p(r.p_post),
                fmt_opt(r.delta_pre, 3),
                fmt_opt(r.delta_post, 3),
                fmt_opt(r.pct_bias, 1),
            ]
        })
        .collect();
    let mut s = table(&header, &body);
    for r in rows {
        for n in &r.notes {
            let _ = writeln!(s, "note ({}): {n}", r.name);
        }
    }
    s
}

fn title_case(label: &str) -> String {
    let mut c = label.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

/// Causes down, ages across, each cell `AD (low, high)`.
pub(crate) fn impact_text(t: &ImpactTable, title: &str) -> String {
    let pct = (t.level * 100.0).round();
    let mut header = vec![String::new()];
    let ages: Vec<Option<&str>> = t
        .ages
        .iter()
        .map(|a| Some(a.as_str()))
        .chain([None])
        .collect();
    let causes: Vec<Option<&str>> = t
        .causes
        .iter()
        .map(|c| Some(c.as_str()))
        .chain([None])
        .collect();
    for a in &ages {
        let name = a.map_or("All ages".to_string(), |a| format!("Age {a}"));
        header.push(format!("{name} AD"));
        header.push(format!("{pct}% CI"));
    }
    let rows: Vec<Vec<String>> = causes
        .iter()
        .map(|c| {
            let mut row = vec![c.map_or("All causes".to_string(), title_case)];
            for a in &ages {
                let e = t.get(*c, *a).expect("every cell is estimated");
                row.push(e.ad.to_string());
                row.push(format!(
                    "{}, {}",
                    e.ci_low.round() as i64,
                    e.ci_high.round() as i64
                ));
            }
            row
        })
        .collect();
    let mut s = format!("{title}\n\n");
    s += &table(&header, &rows);
    let _ = writeln!(s, "\ntreated days used: {}", t.n_treated_used);
    for w in &t.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}
