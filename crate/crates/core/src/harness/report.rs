//! CSV, JSON-lines and summary output for experiment runs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::ExperimentResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: u8,
    pub seed: u64,
    pub version: String,
    pub config: ExperimentConfig,
    pub files: Vec<FileEntry>,
}

fn columns<T: Serialize>(row: &T) -> Vec<String> {
    match serde_json::to_value(row) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<FileEntry> {
    let path = dir.join(name);
    let mut writer = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(&path)?;
    if rows.is_empty() {
        writer.write_record(header)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        name: name.into(),
        rows: rows.len(),
        columns: header.iter().map(|s| s.to_string()).collect(),
    })
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<FileEntry> {
    let path = dir.join(name);
    let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        name: name.into(),
        rows: rows.len(),
        columns: rows.first().map(columns).unwrap_or_default(),
    })
}

fn money(x: f64) -> String {
    format!("{x:.2}")
}

pub fn summary_text(result: &ExperimentResult) -> String {
    let c = &result.config;
    let mut s = String::new();
    let _ = writeln!(s, "# Experiment {}\n", c.experiment);
    let _ = writeln!(s, "- seed: {}", c.seed);
    let _ = writeln!(s, "- population: {}", c.population);
    let _ = writeln!(
        s,
        "- provider: utility {}, reservation {}, deadline {}, increment {}",
        c.provider.utility, c.provider.reservation_price, c.provider.deadline, c.provider.theta
    );
    match c.consumer.reservation_price {
        Some(rp) => {
            let _ = writeln!(s, "- consumer: reservation {rp}, deadline {}", c.consumer.deadline);
        }
        None => {
            let _ = writeln!(s, "- consumer: reservation = premium, deadline {}", c.consumer.deadline);
        }
    }
    let _ = writeln!(s, "\n| provider | stars | price | completed | consumer benefit | provider benefit |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for r in &result.summary {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.provider,
            r.stars.map_or("-".into(), |x| x.to_string()),
            r.agreed_price.map_or("-".into(), |x| x.to_string()),
            r.completed,
            money(r.consumer_benefit),
            money(r.provider_benefit)
        );
    }
    if let Some(r) = result.summary.first().filter(|r| r.community_gain.is_some()) {
        let _ = writeln!(
            s,
            "\nCommunity gain {}, surplus {}.",
            money(r.community_gain.unwrap_or_default()),
            money(r.surplus.unwrap_or_default())
        );
    }
    if !result.drift.is_empty() {
        let _ = writeln!(s, "\n| provider | drift | premium | completed | provider benefit |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for r in &result.drift {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.provider,
                r.drift,
                money(r.premium),
                r.completed,
                money(r.provider_benefit)
            );
        }
    }
    s
}

/// Writes every output of `result` into `dir` and returns the manifest.
pub fn emit_reports(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        write_csv(
            dir,
            "offer_curve.csv",
            &result.offer_curve,
            &["provider", "drift", "round", "provider_offer", "is_final", "consumer_count"],
        )?,
        write_csv(
            dir,
            "provider_summary.csv",
            &result.summary,
            &[
                "provider",
                "stars",
                "sessions",
                "agreed_price",
                "completed",
                "consumer_benefit",
                "provider_benefit",
                "community_gain",
                "surplus",
            ],
        )?,
        write_csv(
            dir,
            "transactions.csv",
            &result.transactions,
            &["provider", "drift", "consumer_id", "psi", "expected_payoff", "paid", "provider_margin"],
        )?,
    ];
    if !result.settlement.is_empty() {
        files.push(write_csv(
            dir,
            "settlement.csv",
            &result.settlement,
            &["provider", "consumer_id", "g", "share", "total"],
        )?);
    }
    if !result.drift.is_empty() {
        files.push(write_csv(
            dir,
            "drift_sweep.csv",
            &result.drift,
            &[
                "provider",
                "stars",
                "drift",
                "premium",
                "agreed_price",
                "completed",
                "consumer_benefit",
                "provider_benefit",
            ],
        )?);
    }
    files.push(write_jsonl(dir, "messages.jsonl", &result.messages)?);

    let summary = summary_text(result);
    let path = dir.join("summary.md");
    fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    files.push(FileEntry {
        name: "summary.md".into(),
        rows: summary.lines().count(),
        columns: Vec::new(),
    });

    let manifest = Manifest {
        experiment: result.config.experiment,
        seed: result.config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        config: result.config.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
