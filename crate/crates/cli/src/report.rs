//! Tabular and JSON reports. Every report embeds the toolkit version and the
//! run configuration so a file alone is enough to reproduce it.

use permix::linalg::format_sig17;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_sig17(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // JSON has no infinities; keep them readable as strings
            Cell::Num(x) if !x.is_finite() => Value::String(format_sig17(*x)),
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self::with_columns(columns.iter().map(|c| c.to_string()).collect())
    }

    pub fn with_columns(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub enum Body {
    Table(Table),
    Json(Value),
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub config: Value,
    pub body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match (&self.body, format) {
            (Body::Table(t), Format::Csv) => self.render_csv(t),
            (Body::Table(t), Format::Json) => {
                let rows: Vec<Value> = t
                    .rows
                    .iter()
                    .map(|r| {
                        let mut obj = Map::new();
                        for (c, v) in t.columns.iter().zip(r) {
                            obj.insert(c.clone(), v.json());
                        }
                        Value::Object(obj)
                    })
                    .collect();
                self.render_json(json!({ "columns": t.columns, "rows": rows }))
            }
            (Body::Json(v), _) => self.render_json(v.clone()),
        }
    }

    fn render_csv(&self, t: &Table) -> String {
        let mut out = String::new();
        out.push_str(&format!("# permix {VERSION}\n"));
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!("# config: {}\n", self.config));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&t.columns).expect("in-memory csv write");
        for r in &t.rows {
            w.write_record(r.iter().map(Cell::csv)).expect("in-memory csv write");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8"));
        out
    }

    fn render_json(&self, body: Value) -> String {
        let doc = json!({
            "version": VERSION,
            "command": self.command,
            "config": self.config,
            "result": body,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![0.1.into(), Cell::Empty, f64::INFINITY.into()]);
        t.push(vec!["x, y".into(), 1usize.into(), true.into()]);
        let r = Report {
            command: "demo",
            config: json!({"seed": 1}),
            body: Body::Table(t),
        };
        let s = r.render(Format::Csv);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# permix "));
        assert_eq!(lines[2], "# config: {\"seed\":1}");
        assert_eq!(lines[3], "a,b,c");
        assert_eq!(lines[4], "1.0000000000000001e-1,,inf");
        assert_eq!(lines[5], "\"x, y\",1,true");
        assert!(s.ends_with('\n') && !s.contains('\r'));
        let j: Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(j["result"]["rows"][0]["c"], "inf");
        assert_eq!(j["result"]["rows"][0]["b"], Value::Null);
    }
}
