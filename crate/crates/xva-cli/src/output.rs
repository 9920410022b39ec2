//! Result emission: CSV with a header row, and a JSON mirror of every
//! output. Numbers are written with Rust's shortest-roundtrip formatting,
//! which preserves full double precision, so cross-solver comparisons are
//! never truncation limited.

use serde::Serialize;
use std::io::Write;
use std::path::Path;
use xva_core::agreement::AgreementResult;
use xva_core::hedge::ReplicationStats;
use xva_core::instruments::DefaultingParty;
use xva_core::mc_pricer::{DeterministicComponents, ValuationBreakdown};

#[derive(Debug, Serialize)]
pub struct PriceRow {
    pub v: f64,
    pub v_c: f64,
    pub fva: f64,
    pub cva: f64,
    pub dva: f64,
    pub se_v: f64,
    pub se_v_c: f64,
    pub se_fva: f64,
    pub se_cva: f64,
    pub se_dva: f64,
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
}

impl PriceRow {
    pub fn from_breakdown(b: &ValuationBreakdown, solver: &str) -> Self {
        Self {
            v: b.v,
            v_c: b.v_c,
            fva: b.fva,
            cva: b.cva,
            dva: b.dva,
            se_v: b.se_v,
            se_v_c: b.se_v_c,
            se_fva: b.se_fva,
            se_cva: b.se_cva,
            se_dva: b.se_dva,
            solver: solver.into(),
            iterations: b.iterations,
            converged: b.converged,
        }
    }

    /// Row for an exact solver: the total comes from the solver itself and
    /// the decomposition from the analytic deterministic profile.
    pub fn exact(v: f64, parts: &DeterministicComponents, solver: &str) -> Self {
        Self {
            v,
            v_c: parts.v_c,
            fva: parts.fva,
            cva: parts.cva,
            dva: parts.dva,
            se_v: 0.0,
            se_v_c: 0.0,
            se_fva: 0.0,
            se_cva: 0.0,
            se_dva: 0.0,
            solver: solver.into(),
            iterations: parts.iterations,
            converged: true,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents.as_bytes())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn write_price(out: &Path, (csv, json): (bool, bool), row: &PriceRow) -> std::io::Result<()> {
    if csv {
        let text = format!(
            "v,v_c,fva,cva,dva,se_v,se_v_c,se_fva,se_cva,se_dva,solver,iterations,converged\n\
             {},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.v,
            row.v_c,
            row.fva,
            row.cva,
            row.dva,
            row.se_v,
            row.se_v_c,
            row.se_fva,
            row.se_cva,
            row.se_dva,
            row.solver,
            row.iterations,
            row.converged
        );
        write_file(&out.join("price.csv"), &text)?;
    }
    if json {
        write_json(&out.join("price.json"), row)?;
    }
    Ok(())
}

fn party_label(party: Option<DefaultingParty>) -> &'static str {
    match party {
        Some(DefaultingParty::Investor) => "investor",
        Some(DefaultingParty::Hedger) => "hedger",
        None => "",
    }
}

#[derive(Debug, Serialize)]
struct HedgeSummary<'a> {
    n_paths: usize,
    mean_error: f64,
    std_error: f64,
    n_defaults: usize,
    max_jump_residual: f64,
    max_funding_residual: f64,
    mean_drift_realized: f64,
    mean_drift_theoretical: f64,
    se_drift_difference: f64,
    regression: &'a xva_core::hedge::StepRegression,
}

pub fn write_hedge_sim(
    out: &Path,
    (csv, json): (bool, bool),
    stats: &ReplicationStats,
) -> std::io::Result<()> {
    if csv {
        let mut text =
            String::from("path,terminal_error,default_party,default_time,jump_residual\n");
        for o in &stats.outcomes {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                o.path,
                o.terminal_error,
                party_label(o.default_party),
                o.default_time.map_or(String::new(), |t| t.to_string()),
                o.jump_residual.map_or(String::new(), |r| r.to_string()),
            ));
        }
        text.push_str(&format!("mean,{},,,\n", stats.mean_error));
        text.push_str(&format!("std,{},,,\n", stats.std_error));
        text.push_str(&format!("n_defaults,{},,,\n", stats.n_defaults));
        text.push_str(&format!(
            "max_jump_residual,{},,,\n",
            stats.max_jump_residual
        ));
        text.push_str(&format!(
            "max_funding_residual,{},,,\n",
            stats.max_funding_residual
        ));
        write_file(&out.join("hedge_sim.csv"), &text)?;
    }
    if json {
        let summary = HedgeSummary {
            n_paths: stats.outcomes.len(),
            mean_error: stats.mean_error,
            std_error: stats.std_error,
            n_defaults: stats.n_defaults,
            max_jump_residual: stats.max_jump_residual,
            max_funding_residual: stats.max_funding_residual,
            mean_drift_realized: stats.mean_drift_realized,
            mean_drift_theoretical: stats.mean_drift_theoretical,
            se_drift_difference: stats.se_drift_difference,
            regression: &stats.regression,
        };
        write_json(&out.join("hedge_sim.json"), &summary)?;
    }
    Ok(())
}

pub fn write_agree(
    out: &Path,
    (csv, json): (bool, bool),
    result: &AgreementResult,
) -> std::io::Result<()> {
    if csv {
        let text = format!(
            "v1,v2_ask,closes,margin\n{},{},{},{}\n",
            result.v1, result.v2_ask, result.closes, result.margin
        );
        write_file(&out.join("agree.csv"), &text)?;
    }
    if json {
        write_json(&out.join("agree.json"), result)?;
    }
    Ok(())
}

pub fn write_sweep(
    out: &Path,
    (csv, json): (bool, bool),
    points: &[(f64, f64)],
) -> std::io::Result<()> {
    if csv {
        let mut text = String::from("gamma,value\n");
        for (gamma, value) in points {
            text.push_str(&format!("{gamma},{value}\n"));
        }
        write_file(&out.join("sweep.csv"), &text)?;
    }
    if json {
        #[derive(Serialize)]
        struct Point {
            gamma: f64,
            value: f64,
        }
        let rows: Vec<Point> = points
            .iter()
            .map(|&(gamma, value)| Point { gamma, value })
            .collect();
        write_json(&out.join("sweep.json"), &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

pub fn write_check(
    out: &Path,
    (csv, json): (bool, bool),
    rows: &[CheckRow],
) -> std::io::Result<()> {
    if csv {
        let mut text = String::from("check,status,detail\n");
        for row in rows {
            let status = if row.passed { "pass" } else { "fail" };
            text.push_str(&format!(
                "{},{},\"{}\"\n",
                row.check,
                status,
                row.detail.replace('"', "'")
            ));
        }
        write_file(&out.join("check.csv"), &text)?;
    }
    if json {
        write_json(&out.join("check.json"), &rows)?;
    }
    Ok(())
}
