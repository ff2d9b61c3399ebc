//! Summary tables over finished run directories.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use crate::record::{Summary, SUMMARY_FILE};
use crate::{HarnessError, Result};

/// One loaded run directory.
#[derive(Clone, Debug)]
pub struct Record {
    pub name: String,
    pub dir: PathBuf,
    pub summary: Summary,
}

impl Record {
    pub fn load(dir: &Path) -> Result<Self> {
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Record { name, dir: dir.to_path_buf(), summary: Summary::read(dir)? })
    }

    fn kind(&self) -> &str {
        self.summary.get("kind").unwrap_or("unknown")
    }

    fn complete(&self) -> std::result::Result<(), String> {
        match self.summary.get("status") {
            Some("completed") => Ok(()),
            Some(other) => Err(format!("status {other}")),
            None => Err("no status".into()),
        }
    }
}

/// Loads every record under `paths`: a run directory, or a directory whose
/// children are run directories. Sweep parents are expanded into their
/// children.
pub fn collect(paths: &[PathBuf]) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(SUMMARY_FILE).is_file() {
            let r = Record::load(p)?;
            let sweep = r.kind() == "sweep";
            out.push(r);
            if sweep {
                out.extend(children(p)?);
            }
        } else if p.is_dir() {
            out.extend(collect(&subdirs(p)?)?);
        } else {
            return Err(HarnessError::Report(format!("{} is not a run directory", p.display())));
        }
    }
    Ok(out)
}

fn subdirs(p: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(p)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|d| d.join(SUMMARY_FILE).is_file())
        .collect();
    v.sort();
    Ok(v)
}

fn children(p: &Path) -> Result<Vec<Record>> {
    subdirs(p)?.iter().map(|d| Record::load(d)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `(run, reason)` for records that could not fill a row.
    pub incomplete: Vec<(String, String)>,
}

impl Table {
    fn new(title: &str, header: &[&str]) -> Self {
        Table { title: title.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: vec![], incomplete: vec![] }
    }

    /// Adds a row from summary keys, or flags the record when any is missing.
    /// Keys starting with `?` are optional and shown as `-` when absent.
    fn add(&mut self, r: &Record, label: Vec<String>, keys: &[String]) {
        if let Err(why) = r.complete() {
            self.flag(r, why);
            return;
        }
        let mut row = label;
        for k in keys {
            let (k, optional) = k.strip_prefix('?').map_or((k.as_str(), false), |k| (k, true));
            match r.summary.get(k) {
                Some(v) => row.push(format_value(v)),
                None if optional => row.push("-".into()),
                None => {
                    self.flag(r, format!("missing {k}"));
                    return;
                }
            }
        }
        self.rows.push(row);
    }

    fn flag(&mut self, r: &Record, why: impl Into<String>) {
        let why = why.into();
        if !self.incomplete.iter().any(|(n, w)| *n == r.name && *w == why) {
            self.incomplete.push((r.name.clone(), why));
        }
    }

    pub fn to_text(&self) -> String {
        let mut width: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut s = format!("## {}\n", self.title);
        writeln!(s, "{}", line(&self.header)).unwrap();
        for row in &self.rows {
            writeln!(s, "{}", line(row)).unwrap();
        }
        if self.rows.is_empty() {
            s.push_str("(no rows)\n");
        }
        for (name, why) in &self.incomplete {
            writeln!(s, "INCOMPLETE {name}: {why}").unwrap();
        }
        s
    }
}

/// Shortens floats to 4 significant digits; passes anything else through.
fn format_value(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains(['e', '.']) || v.contains("NaN") || v.contains("inf") => format!("{x:.4e}"),
        _ => v.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
}

impl Report {
    pub fn to_text(&self) -> String {
        self.tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n")
    }

    pub fn table(&self, title: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.title == title)
    }
}

pub const RATE_TABLE: &str = "rate fits";
pub const MOD_TABLE: &str = "Mod and Scal";
pub const CONSERVATION_TABLE: &str = "conservation drifts";
pub const OVERLAP_TABLE: &str = "overlap decay";
pub const PAIR_TABLE: &str = "pair contraction";
pub const CAUCHY_TABLE: &str = "Cauchy distances";

fn bubble_count(r: &Record) -> usize {
    (1..).take_while(|j| r.summary.get(&format!("omega_est_{j}")).is_some()).count()
}

fn keys(k: &[&str]) -> Vec<String> {
    k.iter().map(|s| s.to_string()).collect()
}

pub fn report(records: &[Record]) -> Result<Report> {
    if records.is_empty() {
        return Err(HarnessError::Report("empty record set".into()));
    }
    let mut rate = Table::new(RATE_TABLE, &["run", "bubble", "omega_est", "T_est", "residual", "r2"]);
    let mut modt = Table::new(MOD_TABLE, &["run", "mod_max", "mod_bound_ratio_max", "scal_max", "scal/lambda^2_max"]);
    let mut cons = Table::new(CONSERVATION_TABLE, &["run", "mass_drift", "energy_drift"]);
    let mut over = Table::new(OVERLAP_TABLE, &["run", "log_slope", "r2", "samples"]);
    let mut pair = Table::new(PAIR_TABLE, &["run", "constant", "slack", "D_max"]);
    let mut cauchy = Table::new(CAUCHY_TABLE, &["run", "t_n", "l2_to_latest", "max_l2", "decreasing"]);

    for r in records {
        match r.kind() {
            "construct" => {
                let k = bubble_count(r);
                if k == 0 {
                    let why = r.complete().err().unwrap_or_else(|| "missing omega_est_1".into());
                    rate.flag(r, why);
                }
                for j in 1..=k {
                    let ks = [format!("omega_est_{j}"), "blowup_time_est".into(), format!("rate_residual_{j}"), format!("rate_r2_{j}")];
                    rate.add(r, vec![r.name.clone(), j.to_string()], &ks);
                }
                // Deterministic runs carry no Mod bound.
                modt.add(r, vec![r.name.clone()], &keys(&["mod_max", "?mod_bound_ratio_max", "scal_max", "scal_ratio_max"]));
                cons.add(r, vec![r.name.clone()], &keys(&["mass_drift", "energy_drift"]));
                if r.summary.get("overlap_samples").is_some() {
                    over.add(r, vec![r.name.clone()], &keys(&["overlap_log_slope", "overlap_r2", "overlap_samples"]));
                }
            }
            "pair" => pair.add(r, vec![r.name.clone()], &keys(&["contraction_constant", "contraction_slack", "D_max"])),
            "cauchy" => {
                if let Err(why) = r.complete() {
                    cauchy.flag(r, why);
                    continue;
                }
                let n = (0..).take_while(|m| r.summary.get(&format!("t_n_{m}")).is_some()).count();
                if n == 0 {
                    cauchy.flag(r, "missing t_n_0");
                    continue;
                }
                for m in 0..n {
                    let t = r.summary.get(&format!("t_n_{m}")).map_or("-".into(), format_value);
                    let d = if m + 1 == n {
                        "0".to_string()
                    } else {
                        match r.summary.get(&format!("to_latest_{m}")) {
                            Some(v) => format_value(v),
                            None => {
                                cauchy.flag(r, format!("missing to_latest_{m}"));
                                "-".into()
                            }
                        }
                    };
                    let (max_l2, dec) = if m == 0 {
                        (
                            r.summary.get("cauchy_max_l2").map_or("-".into(), format_value),
                            r.summary.get("cauchy_decreasing").unwrap_or("-").to_string(),
                        )
                    } else {
                        (String::new(), String::new())
                    };
                    let name = if m == 0 { r.name.clone() } else { String::new() };
                    cauchy.rows.push(vec![name, t, d, max_l2, dec]);
                }
            }
            _ => {}
        }
    }
    let tables = vec![rate, modt, cons, over, pair, cauchy]
        .into_iter()
        .filter(|t| !t.rows.is_empty() || !t.incomplete.is_empty())
        .collect();
    Ok(Report { tables })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, entries: &[(&str, &str)]) -> Record {
        let mut s = Summary::default();
        for (k, v) in entries {
            s.set(*k, *v);
        }
        Record { name: name.into(), dir: PathBuf::from(name), summary: s }
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(report(&[]), Err(HarnessError::Report(_))));
    }

    #[test]
    fn construct_rows_and_incomplete_flags() {
        let done = record(
            "a",
            &[
                ("kind", "construct"),
                ("status", "completed"),
                ("omega_est_1", "1.0001e0"),
                ("blowup_time_est", "1e0"),
                ("rate_residual_1", "1e-6"),
                ("rate_r2_1", "1e0"),
                ("mod_max", "1e-3"),
                ("scal_max", "1e-9"),
                ("scal_ratio_max", "1e-8"),
                ("mass_drift", "1e-13"),
                ("energy_drift", "1e-9"),
            ],
        );
        let diverged = record("b", &[("kind", "construct"), ("status", "diverged")]);
        let rep = report(&[done, diverged]).unwrap();
        let rate = rep.table(RATE_TABLE).unwrap();
        assert_eq!(rate.rows.len(), 1);
        assert_eq!(rate.rows[0][..3], ["a".to_string(), "1".into(), "1.0001e0".into()]);
        assert_eq!(rate.incomplete, vec![("b".to_string(), "status diverged".to_string())]);
        let cons = rep.table(CONSERVATION_TABLE).unwrap();
        assert_eq!(cons.rows[0][1], "1.0000e-13");
        assert!(rep.to_text().contains("INCOMPLETE b: status diverged"));
        assert!(rep.table(PAIR_TABLE).is_none());
    }

    #[test]
    fn cauchy_table_lists_every_member() {
        let r = record(
            "c",
            &[
                ("kind", "cauchy"),
                ("status", "completed"),
                ("t_n_0", "5e-1"),
                ("t_n_1", "6e-1"),
                ("t_n_2", "7e-1"),
                ("to_latest_0", "3e-7"),
                ("to_latest_1", "1e-7"),
                ("cauchy_max_l2", "3e-7"),
                ("cauchy_decreasing", "true"),
            ],
        );
        let rep = report(&[r]).unwrap();
        let t = rep.table(CAUCHY_TABLE).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0][4], "true");
        assert_eq!(t.rows[2][2], "0");
        assert!(t.incomplete.is_empty());
    }
}
