use std::fmt::Write as _;

use super::{ProbeError, Result};
use crate::meaning::Agreement;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub agreement: Agreement,
    pub count: usize,
}

/// Mean agreement per theory (or operator) with instance counts.
///
/// Text layout, one record per line:
///
/// ```text
/// report <title>
/// sample_seed <u64>
/// sample_size <k>
/// meta <key> <value>
/// row <label> objects <x> worlds <x> tables <x> count <n>
/// note <free text>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub title: String,
    pub sample_seed: u64,
    pub sample_size: usize,
    pub rows: Vec<ReportRow>,
    pub meta: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl AgreementReport {
    pub fn new(title: impl Into<String>, sample_seed: u64, sample_size: usize) -> Self {
        Self {
            title: title.into(),
            sample_seed,
            sample_size,
            rows: Vec::new(),
            meta: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "report {}", self.title).unwrap();
        writeln!(out, "sample_seed {}", self.sample_seed).unwrap();
        writeln!(out, "sample_size {}", self.sample_size).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for r in &self.rows {
            writeln!(
                out,
                "row {} objects {:.6} worlds {:.6} tables {:.6} count {}",
                r.label, r.agreement.objects, r.agreement.worlds, r.agreement.tables, r.count
            )
            .unwrap();
        }
        for n in &self.notes {
            writeln!(out, "note {n}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |message: String| ProbeError::Format {
            what: "report",
            message,
        };
        let mut report = AgreementReport::new("", 0, 0);
        for line in text.lines() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "report" => report.title = rest.to_string(),
                "sample_seed" => report.sample_seed = rest.parse().map_err(|_| bad(line.into()))?,
                "sample_size" => report.sample_size = rest.parse().map_err(|_| bad(line.into()))?,
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    report.meta.push((k.to_string(), v.to_string()));
                }
                "note" => report.notes.push(rest.to_string()),
                "row" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let ok = f.len() == 9 && f[1] == "objects" && f[3] == "worlds" && f[5] == "tables" && f[7] == "count";
                    if !ok {
                        return Err(bad(line.into()));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line.into()));
                    report.rows.push(ReportRow {
                        label: f[0].to_string(),
                        agreement: Agreement {
                            objects: num(f[2])?,
                            worlds: num(f[4])?,
                            tables: num(f[6])?,
                        },
                        count: f[8].parse().map_err(|_| bad(line.into()))?,
                    });
                }
                "" => {}
                _ => return Err(bad(line.into())),
            }
        }
        Ok(report)
    }
}
