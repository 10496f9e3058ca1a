//! Ledger, manifest and snapshot files of a run directory.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, FitResult};
use crate::functionals::{FunctionalRecord, LEDGER_COLUMNS};
use crate::solver::{AbortMarker, SimulationResult, VelocitySource};

use super::RunConfig;

/// Build identification recorded in manifests.
pub const GIT_DESCRIBE: &str = env!("MSFLOW_GIT_DESCRIBE");

/// Flag line preceding rows produced after a contamination breach.
const FLAG_PREFIX: &str = "# flagged: contamination from t = ";
const ABORT_PREFIX: &str = "# abort: ";

/// A ledger as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub records: Vec<FunctionalRecord>,
    /// Index of the first flagged row, if any.
    pub flagged_from: Option<usize>,
    pub abort: Option<AbortMarker>,
}

impl Ledger {
    pub fn from_result(result: &SimulationResult) -> Self {
        let flagged_from = result
            .contamination_from
            .map(|tc| result.records.partition_point(|r| r.t < tc));
        Ledger {
            records: result.records.clone(),
            flagged_from,
            abort: result.abort.clone(),
        }
    }

    /// Rows that precede any contamination flag.
    pub fn clean(&self) -> &[FunctionalRecord] {
        &self.records[..self.flagged_from.unwrap_or(self.records.len())]
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, quantity: &str) -> Result<Vec<f64>> {
        let pick: fn(&FunctionalRecord) -> f64 = match quantity {
            "t" => |r| r.t,
            "E" => |r| r.energy,
            "D" => |r| r.dissipation,
            "Vmass" => |r| r.vmass,
            "lip" => |r| r.lip,
            "dimless" => |r| r.dimless,
            "signed_mass" => |r| r.signed_mass,
            "h_inf" => |r| r.h_inf,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ledger quantity {quantity:?}; expected one of {}",
                    LEDGER_COLUMNS.join(", ")
                )))
            }
        };
        Ok(self.records.iter().map(pick).collect())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", LEDGER_COLUMNS.join(","))?;
        for (i, r) in self.records.iter().enumerate() {
            if self.flagged_from == Some(i) {
                writeln!(w, "{FLAG_PREFIX}{:e}", r.t)?;
            }
            writeln!(
                w,
                "{:e},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}",
                r.t,
                r.energy,
                r.dissipation,
                r.d_source.as_str(),
                r.vmass,
                r.lip,
                r.dimless,
                r.signed_mass,
                r.h_inf
            )?;
        }
        if let Some(a) = &self.abort {
            writeln!(w, "{ABORT_PREFIX}{} at t = {:e}: {}", a.kind, a.t, a.message.replace('\n', " "))?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty ledger".into()))??;
        if header.trim() != LEDGER_COLUMNS.join(",") {
            return Err(Error::Parse(format!(
                "ledger header {header:?} does not match {}",
                LEDGER_COLUMNS.join(",")
            )));
        }
        let mut ledger = Ledger {
            records: Vec::new(),
            flagged_from: None,
            abort: None,
        };
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with(FLAG_PREFIX) {
                ledger.flagged_from.get_or_insert(ledger.records.len());
                continue;
            }
            if let Some(rest) = line.strip_prefix(ABORT_PREFIX) {
                ledger.abort = Some(parse_abort(rest)?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != LEDGER_COLUMNS.len() {
                return Err(Error::Parse(format!(
                    "ledger line {}: expected {} fields, found {}",
                    lineno + 2,
                    LEDGER_COLUMNS.len(),
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i].trim().parse().map_err(|_| {
                    Error::Parse(format!("ledger line {}: bad {} value {:?}", lineno + 2, LEDGER_COLUMNS[i], fields[i]))
                })
            };
            let d_source = match fields[3].trim() {
                "flat_dtn" => VelocitySource::FlatDtn,
                "elliptic" => VelocitySource::Elliptic,
                other => return Err(Error::Parse(format!("ledger line {}: unknown D_source {other:?}", lineno + 2))),
            };
            ledger.records.push(FunctionalRecord {
                t: num(0)?,
                energy: num(1)?,
                dissipation: num(2)?,
                d_source,
                vmass: num(4)?,
                lip: num(5)?,
                dimless: num(6)?,
                signed_mass: num(7)?,
                h_inf: num(8)?,
            });
        }
        Ok(ledger)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ledger::read(fs::File::open(path)?)
    }
}

fn parse_abort(rest: &str) -> Result<AbortMarker> {
    let bad = || Error::Parse(format!("malformed abort marker {rest:?}"));
    let (kind, rest) = rest.split_once(" at t = ").ok_or_else(bad)?;
    let (t, message) = rest.split_once(": ").ok_or_else(bad)?;
    Ok(AbortMarker {
        t: t.parse().map_err(|_| bad())?,
        kind: kind.to_string(),
        message: message.to_string(),
    })
}

/// Power-law fit of a ledger column. Windows reaching flagged rows are refused.
pub fn fit_decay(ledger: &Ledger, quantity: &str, window: (f64, f64)) -> Result<FitResult> {
    if let Some(i) = ledger.flagged_from {
        let tc = ledger.records[i].t;
        if window.1 >= tc {
            return Err(Error::Fit(format!(
                "{quantity}: window [{}, {}] reaches rows flagged by boundary contamination from t = {tc}",
                window.0, window.1
            )));
        }
    }
    let ys = ledger.column(quantity)?;
    fit_power_law(quantity, &ledger.times(), &ys, window)
}

/// Resolved configuration followed by a `[manifest]` table with build and outcome data.
pub fn manifest_text(config: &RunConfig, result: Option<&SimulationResult>) -> Result<String> {
    let mut cfg = config.clone();
    cfg.manifest = None;
    let mut text = toml::to_string(&cfg).map_err(|e| Error::Parse(e.to_string()))?;
    let mut table = toml::Table::new();
    table.insert("git_describe".into(), GIT_DESCRIBE.into());
    table.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    table.insert("root_seed".into(), toml::Value::Integer(config.seed as i64));
    if let Some(res) = result {
        table.insert("scheme".into(), config.scheme().as_str().into());
        table.insert("accepted_steps".into(), (res.accepted_steps as i64).into());
        table.insert("rejected_steps".into(), (res.rejected_steps as i64).into());
        table.insert("completed".into(), res.completed().into());
        if let Some(tc) = res.contamination_from {
            table.insert("contamination_from".into(), tc.into());
        }
        if let Some(a) = &res.abort {
            let mut ab = toml::Table::new();
            ab.insert("t".into(), a.t.into());
            ab.insert("kind".into(), a.kind.clone().into());
            ab.insert("message".into(), a.message.clone().into());
            table.insert("abort".into(), ab.into());
        }
    }
    let mut wrapper = toml::Table::new();
    wrapper.insert("manifest".into(), table.into());
    text.push('\n');
    text.push_str(&toml::to_string(&wrapper).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(text)
}

/// Writes one snapshot: a commented header and the raw samples in row-major order.
pub fn write_snapshot<W: Write>(mut w: W, t: f64, config: &RunConfig, values: &[f64]) -> Result<()> {
    writeln!(w, "# t = {t:e}")?;
    writeln!(w, "# grid: L = {}, n = {}", config.length, config.n)?;
    writeln!(w, "# d = {}", config.dim)?;
    writeln!(w, "# scheme = {}", config.scheme().as_str())?;
    writeln!(w, "h")?;
    for v in values {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

/// Reads a snapshot back as `(t, samples)`.
pub fn read_snapshot<R: Read>(r: R) -> Result<(f64, Vec<f64>)> {
    let mut t = None;
    let mut values = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let line = line.trim();
        if let Some(v) = line.strip_prefix("# t = ") {
            t = Some(v.parse().map_err(|_| Error::Parse(format!("bad snapshot time {v:?}")))?);
        } else if line.starts_with('#') || line == "h" || line.is_empty() {
            continue;
        } else {
            values.push(line.parse().map_err(|_| Error::Parse(format!("bad snapshot value {line:?}")))?);
        }
    }
    Ok((t.ok_or_else(|| Error::Parse("snapshot lacks a time header".into()))?, values))
}

/// Persists manifest, ledger and snapshots into `dir`.
pub fn write_run_dir(dir: &Path, result: &SimulationResult) -> Result<()> {
    fs::create_dir_all(dir.join("snapshots"))?;
    fs::write(dir.join("manifest.toml"), manifest_text(&result.config, Some(result))?)?;
    Ledger::from_result(result).write(fs::File::create(dir.join("series.csv"))?)?;
    for (i, (t, values)) in result.snapshots.iter().enumerate() {
        let file = fs::File::create(dir.join("snapshots").join(format!("snap_{i:03}.csv")))?;
        write_snapshot(std::io::BufWriter::new(file), *t, &result.config, values)?;
    }
    Ok(())
}
