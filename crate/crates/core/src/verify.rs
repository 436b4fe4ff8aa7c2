//! Re-checks a run directory from its stored reports and tables, without solving.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::report::{validate_report, Check, FailureManifest, Manifest, Report, CONFIG_COPY, FAILURES, MANIFEST};

/// Outcome of one recomputed invariant.
#[derive(Clone, Debug)]
pub struct Verified {
    pub experiment: String,
    pub check: Check,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOutcome {
    pub results: Vec<Verified>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.check.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verified> {
        self.results.iter().filter(|r| !r.check.passed)
    }

    fn push(&mut self, experiment: &str, check: Check) {
        self.results.push(Verified { experiment: experiment.into(), check });
    }
}

/// A numeric CSV table addressed by column name.
struct Table {
    columns: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let columns = rd.headers()?.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            // non-numeric cells (labels) read as NaN
            rows.push(rec?.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { columns, rows })
    }

    fn col(&self, name: &str) -> Result<Vec<f64>> {
        let &i = self.columns.get(name).ok_or_else(|| Error::Parse(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn num(v: &Value, path: &[&str]) -> Result<f64> {
    let mut cur = v;
    for k in path {
        cur = &cur[*k];
    }
    cur.as_f64().ok_or_else(|| Error::Parse(format!("report field `{}` is not a number", path.join("."))))
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Validates every report in `dir` against the schema and the stored config,
/// then recomputes the invariants that the tables determine.
pub fn verify(dir: &Path) -> Result<VerifyOutcome> {
    let mut out = VerifyOutcome::default();
    let manifest: Manifest = serde_json::from_value(read_json(&dir.join(MANIFEST))?)?;
    let failures: FailureManifest = serde_json::from_value(read_json(&dir.join(FAILURES))?)?;
    let cfg_text = fs::read_to_string(dir.join(CONFIG_COPY))?;
    let cfg = RunConfig::from_json(&cfg_text)?;
    let hash = cfg.hash();
    out.push("run", Check::new("config-hash", hash == manifest.config_sha256, format!("stored config hashes to {hash}")));
    out.push(
        "run",
        Check::new(
            "manifest-consistent",
            manifest.passed == failures.failures.is_empty() && failures.config_sha256 == hash,
            format!("{} recorded failures", failures.failures.len()),
        ),
    );

    let nodes = Table::read(&dir.join("nodes.csv"))?;
    let mass = nodes.col("mass")?;
    let free: Vec<bool> = nodes.col("boundary")?.iter().map(|b| *b == 0.0).collect();

    let mut reports = HashMap::new();
    for name in &manifest.reports {
        let doc = read_json(&dir.join(name))?;
        let schema_ok = validate_report(&doc);
        out.push(name, Check::new("schema-valid", schema_ok.is_ok(), schema_ok.err().map_or(String::new(), |e| e.to_string())));
        let report: Report = serde_json::from_value(doc)?;
        let e = report.experiment.clone();
        out.push(&e, Check::new("config-hash", report.config_sha256 == hash, "report hash matches config"));
        let status_ok = report.passed() == report.checks.iter().all(|c| c.passed);
        out.push(&e, Check::new("status-consistent", status_ok, format!("status `{}`", report.status)));
        let missing: Vec<&String> = report.files.iter().filter(|f| !dir.join(f).is_file()).collect();
        out.push(&e, Check::new("files-present", missing.is_empty(), format!("missing {missing:?}")));
        reports.insert(e, report);
    }

    let check_of = |e: &str, n: &str| reports.get(e).and_then(|r| r.checks.iter().find(|c| c.name == n)).map(|c| c.passed);

    let phi = if reports.contains_key("eigen") {
        let t = Table::read(&dir.join("eigen.csv"))?;
        let phi = t.col("phi_1")?;
        let min = phi.iter().zip(&free).filter(|(_, f)| **f).map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
        let norm: f64 = phi.iter().zip(&free).zip(&mass).filter(|((_, f), _)| **f).map(|((p, _), m)| p * p * m).sum();
        out.push("eigen", Check::at_least("principal-positive", min, f64::MIN_POSITIVE));
        out.push("eigen", Check::at_most("principal-normalized", (norm - 1.0).abs(), 1e-9));
        Some(phi)
    } else {
        None
    };

    if let Some(r) = reports.get("heat") {
        let t = Table::read(&dir.join("heat.csv"))?;
        let (src, times, masses) = (t.col("source")?, t.col("t")?, t.col("mass")?);
        let alpha = num(&r.data, &["garding_alpha"])?;
        let worst = times.iter().zip(&masses).map(|(t, m)| m / (alpha * t).exp() - 1.0).fold(f64::NEG_INFINITY, f64::max);
        out.push("heat", Check::at_most("mass-bound", worst, 1e-9));
        if check_of("heat", "mass-nonincreasing").is_some() {
            let incr = (1..masses.len()).filter(|&k| src[k] == src[k - 1]).map(|k| masses[k] - masses[k - 1]).fold(f64::NEG_INFINITY, f64::max);
            out.push("heat", Check::at_most("mass-nonincreasing", incr, 1e-12));
        }
    }

    if reports.contains_key("green") {
        let t = Table::read(&dir.join("green.csv"))?;
        let mut min = f64::INFINITY;
        for (name, _) in t.columns.iter().filter(|(n, _)| n.starts_with("g_")) {
            let g = t.col(name)?;
            min = g.iter().zip(&free).filter(|(_, f)| **f).map(|(v, _)| *v).fold(min, f64::min);
        }
        out.push("green", Check::at_least("green-positive", min, f64::MIN_POSITIVE));
    }

    if let Some(r) = reports.get("envelope") {
        let t = Table::read(&dir.join("envelope_ratios.csv"))?;
        let (p, up, low) = (t.col("p")?, t.col("env_upper")?, t.col("env_lower")?);
        let a1 = p.iter().zip(&up).map(|(p, e)| p / e).fold(f64::NEG_INFINITY, f64::max);
        let a2 = p.iter().zip(&low).map(|(p, e)| p / e).fold(f64::INFINITY, f64::min);
        let (s1, s2) = (num(&r.data, &["fit", "a1_emp"])?, num(&r.data, &["fit", "a2_emp"])?);
        out.push("envelope", Check::at_most("a1-reproduced", rel(a1, s1), 1e-12));
        out.push("envelope", Check::at_most("a2-reproduced", rel(a2, s2), 1e-12));
        out.push("envelope", Check::finite_positive("a2-positive", a2));
        out.push("envelope", Check::at_most("a2-below-a1", a2, a1));
    }

    if let Some(r) = reports.get("convergence") {
        let t = Table::read(&dir.join("w.csv"))?;
        let (idx, w) = (t.col("node")?, t.col("w")?);
        let a3 = num(&r.data, &["ultracontractivity", "a3_emp"])?;
        let big_a3 = num(&r.data, &["ultracontractivity", "A3_emp"])?;
        let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        out.push("convergence", Check::at_least("w-above-a3", lo, a3 * (1.0 - 1e-9)));
        out.push("convergence", Check::at_most("w-below-big-a3", hi, big_a3 * (1.0 + 1e-9)));
        if let Some(phi) = &phi {
            let norm: f64 = idx.iter().zip(&w).map(|(&i, w)| w * phi[i as usize] * phi[i as usize] * mass[i as usize]).sum();
            out.push("convergence", Check::at_most("w-normalized", (norm - 1.0).abs(), 1e-6));
        }
    }

    if reports.contains_key("harnack") {
        let t = Table::read(&dir.join("harnack.csv"))?;
        let h = t.col("H")?;
        out.push("harnack", Check::new("phi-at-least-one", h.iter().all(|h| h.is_finite() && *h >= 1.0), "H ≥ 1 and finite"));
    }

    if reports.contains_key("bhp") {
        let t = Table::read(&dir.join("bhp.csv"))?;
        let a = t.col("A1")?;
        out.push("bhp", Check::new("bhp-finite", a.iter().all(|a| a.is_finite() && *a >= 1.0), "A1 finite and ≥ 1"));
    }

    if reports.contains_key("doob") {
        let t = Table::read(&dir.join("doob_volumes.csv"))?;
        let (cx, cy, v) = (t.col("cx")?, t.col("cy")?, t.col("volume")?);
        let monotone = (1..v.len()).all(|k| cx[k] != cx[k - 1] || cy[k] != cy[k - 1] || v[k] >= v[k - 1]);
        out.push("doob", Check::new("weighted-volume-monotone", monotone, "volumes nondecreasing in r per centre"));
    }

    // a recomputed check must agree with the stored verdict of the same name
    let agree: Vec<String> = out
        .results
        .iter()
        .filter_map(|v| check_of(&v.experiment, &v.check.name).filter(|&stored| stored != v.check.passed).map(|_| format!("{}/{}", v.experiment, v.check.name)))
        .collect();
    out.push("run", Check::new("verdicts-agree", agree.is_empty(), format!("disagreeing checks {agree:?}")));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = verify(&dir.path().join("absent")).unwrap_err();
        assert_eq!(err.kind(), "IoError");
    }

    #[test]
    fn relative_difference() {
        assert_eq!(rel(2.0, 2.0), 0.0);
        assert!((rel(1.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
