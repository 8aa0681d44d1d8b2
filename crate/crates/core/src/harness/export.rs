//! CSV, JSON and gnuplot artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph_process::GraphEnsemble;

/// A numeric table written as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Graph ensemble in the shared `path_id,t,edge,h` layout.
pub fn graph_ensemble_csv(ens: &GraphEnsemble) -> String {
    let mut out = String::from("path_id,t,edge,h\n");
    let paths = ens.states.first().map_or(0, Vec::len);
    for p in 0..paths {
        for (i, t) in ens.times.iter().enumerate() {
            let s = ens.states[i][p];
            let _ = writeln!(out, "{p},{t},{},{:.17e}", s.k, s.h);
        }
    }
    out
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to `dir/name` through a temporary file, so readers
/// never observe a partial artifact.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Plots the coefficient tables and, when present, the KS curves.
pub fn gnuplot_script(coefficients_csv: &str, ks_csv: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 1000,700");
    let _ = writeln!(s, "set output 'coefficients.png'");
    let _ = writeln!(s, "set multiplot layout 2,1");
    let _ = writeln!(s, "set xlabel 'h'");
    let _ = writeln!(s, "plot '{coefficients_csv}' using 2:($1==0?$4:1/0) with lines title 'A edge 0', \\");
    let _ = writeln!(s, "     '' using 2:($1==1?$4:1/0) with lines title 'A edge 1', \\");
    let _ = writeln!(s, "     '' using 2:($1==2?$4:1/0) with lines title 'A edge 2'");
    let _ = writeln!(s, "plot '{coefficients_csv}' using 2:3 with points pt 7 ps 0.3 title 'Q'");
    let _ = writeln!(s, "unset multiplot");
    if let Some(ks) = ks_csv {
        let _ = writeln!(s, "set output 'ks.png'");
        let _ = writeln!(s, "set logscale x");
        let _ = writeln!(s, "set xlabel 'eps'");
        let _ = writeln!(s, "set ylabel 'KS'");
        let _ = writeln!(s, "plot '{ks}' using 1:3 with linespoints title 'KS'");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reeb::GraphPoint;

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0, 0.5]);
        assert_eq!(t.to_csv().lines().next(), Some("a,b"));
        assert_eq!(t.to_csv().lines().count(), 2);
    }

    #[test]
    fn graph_csv_layout() {
        let p = GraphPoint { k: 1, h: 0.1 };
        let ens = GraphEnsemble { times: vec![0.5, 1.0], states: vec![vec![p, p], vec![p, p]], reached_top: 0, seed: 1 };
        let csv = graph_ensemble_csv(&ens);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(2).unwrap().starts_with("0,1,1,"));
    }
}
