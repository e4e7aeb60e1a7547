use serde_json::{json, Map, Value};

use crate::commands::{Cell, Table};
use crate::spec::{Format, RunSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, so every value parses back to the same double.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn render(spec: &RunSpec, table: &Table) -> String {
    match spec.format {
        Format::Csv => render_csv(spec, table),
        Format::Json => render_json(spec, table),
    }
}

pub fn render_csv(spec: &RunSpec, table: &Table) -> String {
    let mut out = format!("# robust-phase {VERSION}\n# spec: {}\n", spec.to_json());
    for n in &table.notes {
        out.push_str(&format!("# {n}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = table.columns.iter().map(String::as_str).chain(["flags"]);
    w.write_record(header).expect("in-memory write");
    for row in &table.rows {
        let mut rec: Vec<String> = row
            .cells
            .iter()
            .map(|c| match c {
                Cell::Num(x) => num(*x),
                Cell::Int(i) => i.to_string(),
                Cell::Text(s) => s.clone(),
            })
            .collect();
        rec.push(row.flags.join("; "));
        w.write_record(&rec).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
    out
}

/// Rows become objects keyed by column name; NaN becomes `null`.
pub fn render_json(spec: &RunSpec, table: &Table) -> String {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|row| {
            let mut obj = Map::new();
            for (name, c) in table.columns.iter().zip(&row.cells) {
                let v = match c {
                    Cell::Num(x) => json!(x),
                    Cell::Int(i) => json!(i),
                    Cell::Text(s) => json!(s),
                };
                obj.insert(name.clone(), v);
            }
            obj.insert("flags".into(), json!(row.flags));
            Value::Object(obj)
        })
        .collect();
    let doc = json!({
        "version": VERSION,
        "spec": spec,
        "notes": table.notes,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json output");
    s.push('\n');
    s
}
