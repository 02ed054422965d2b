use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{ControllerType, RunReport};
use crate::action::csv_field;
use crate::error::{Error, Result};

/// Per-profile means over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub profile: String,
    pub controller: ControllerType,
    pub runs: usize,
    pub average_replicas: f64,
    pub cpu: f64,
    pub mem: f64,
    pub slo1_violations: f64,
    pub slo2_violations: f64,
}

/// Percentage reductions of one controller profile relative to one autoscaler
/// profile; `None` where the autoscaler's figure is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub msra: String,
    pub hpa: String,
    pub replicas: Option<f64>,
    pub cpu: Option<f64>,
    pub mem: Option<f64>,
    pub slo1_violations: Option<f64>,
    pub slo2_violations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub profiles: Vec<ProfileSummary>,
    pub comparisons: Vec<Comparison>,
}

impl Summary {
    pub fn profile(&self, name: &str) -> Option<&ProfileSummary> {
        self.profiles.iter().find(|p| p.profile == name)
    }

    pub fn comparison(&self, msra: &str, hpa: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.msra == msra && c.hpa == hpa)
    }
}

/// `(baseline - value) / baseline * 100`.
pub fn reduction(baseline: f64, value: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (baseline - value) / baseline * 100.0)
}

// Summing sorted values keeps the mean independent of repetition order.
fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn summarize(reports: &[RunReport]) -> Summary {
    let mut order: Vec<(&str, ControllerType)> = Vec::new();
    for r in reports {
        if !order.iter().any(|(n, _)| *n == r.profile) {
            order.push((&r.profile, r.controller));
        }
    }
    let profiles: Vec<ProfileSummary> = order
        .into_iter()
        .map(|(name, controller)| {
            let runs: Vec<&RunReport> = reports.iter().filter(|r| r.profile == name).collect();
            let m = |f: fn(&RunReport) -> f64| mean(runs.iter().map(|r| f(r)).collect());
            ProfileSummary {
                profile: name.to_string(),
                controller,
                runs: runs.len(),
                average_replicas: m(|r| r.average_replicas),
                cpu: m(|r| r.cpu),
                mem: m(|r| r.mem),
                slo1_violations: m(|r| r.slo1_violations as f64),
                slo2_violations: m(|r| r.slo2_violations as f64),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for m in profiles.iter().filter(|p| p.controller == ControllerType::MsRa) {
        for h in profiles.iter().filter(|p| p.controller == ControllerType::Hpa) {
            comparisons.push(Comparison {
                msra: m.profile.clone(),
                hpa: h.profile.clone(),
                replicas: reduction(h.average_replicas, m.average_replicas),
                cpu: reduction(h.cpu, m.cpu),
                mem: reduction(h.mem, m.mem),
                slo1_violations: reduction(h.slo1_violations, m.slo1_violations),
                slo2_violations: reduction(h.slo2_violations, m.slo2_violations),
            });
        }
    }
    Summary { profiles, comparisons }
}

const SUMMARY_HEADER: &str = "profile,controller,runs,average_replicas,cpu,mem,slo1_violations,slo2_violations";

pub fn write_summary_csv<W: Write>(summary: &Summary, mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for p in &summary.profiles {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&p.profile),
            p.controller.as_str(),
            p.runs,
            p.average_replicas,
            p.cpu,
            p.mem,
            p.slo1_violations,
            p.slo2_violations
        )?;
    }
    Ok(())
}

/// Parses what [`write_summary_csv`] wrote.
pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<ProfileSummary>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next().transpose()? {
        Some(h) if h == SUMMARY_HEADER => {}
        other => return Err(Error::input(format!("unexpected summary header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::input(format!("malformed summary row `{line}`")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::input(format!("`{s}`: {e}")));
        let controller = match f[1] {
            "ms_ra" => ControllerType::MsRa,
            "hpa" => ControllerType::Hpa,
            other => return Err(Error::input(format!("unknown controller `{other}`"))),
        };
        rows.push(ProfileSummary {
            profile: f[0].to_string(),
            controller,
            runs: f[2].parse().map_err(|e| Error::input(format!("`{}`: {e}", f[2])))?,
            average_replicas: num(f[3])?,
            cpu: num(f[4])?,
            mem: num(f[5])?,
            slo1_violations: num(f[6])?,
            slo2_violations: num(f[7])?,
        });
    }
    Ok(rows)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{v:.1}%"))
}

/// Plain-text results table followed by pairwise reductions.
pub fn render_table(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>6} {:>10} {:>12} {:>12} {:>8} {:>8}",
        "profile", "runs", "replicas", "cpu (mcpu)", "mem (MB)", "slo1", "slo2"
    );
    for p in &summary.profiles {
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>10.2} {:>12.1} {:>12.1} {:>8.2} {:>8.2}",
            p.profile, p.runs, p.average_replicas, p.cpu, p.mem, p.slo1_violations, p.slo2_violations
        );
    }
    if !summary.comparisons.is_empty() {
        let _ = writeln!(s, "\nreduction vs autoscaler (replicas / cpu / mem / slo1 / slo2)");
        for c in &summary.comparisons {
            let _ = writeln!(
                s,
                "{:<10} vs {:<8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                c.msra,
                c.hpa,
                pct(c.replicas),
                pct(c.cpu),
                pct(c.mem),
                pct(c.slo1_violations),
                pct(c.slo2_violations)
            );
        }
    }
    s
}

fn write_series<W: Write>(report: &RunReport, mut out: W) -> Result<()> {
    writeln!(
        out,
        "time,service,ready_replicas,replicas,desired_replicas,cpu_per_replica,total_cpu,total_mem,utilization"
    )?;
    for r in &report.series {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.time,
            csv_field(&r.service),
            r.ready_replicas,
            r.replicas,
            r.desired_replicas,
            r.cpu_per_replica,
            r.total_cpu,
            r.total_mem,
            r.utilization.map(|u| u.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

fn write_runs<W: Write>(reports: &[RunReport], mut out: W) -> Result<()> {
    writeln!(out, "profile,repetition,seed,average_replicas,cpu,mem,slo1_violations,slo2_violations,requests,failed")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.profile),
            r.repetition,
            r.seed,
            r.average_replicas,
            r.cpu,
            r.mem,
            r.slo1_violations,
            r.slo2_violations,
            r.requests,
            r.failed
        )?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes `summary.csv`, `summary.txt`, `runs.csv` and, per run,
/// `runs/<profile>-<rep>/{metrics,decisions}.csv` (plus `telemetry.csv` when
/// raw samples were kept).
pub fn export(reports: &[RunReport], dir: &Path) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let summary = summarize(reports);
    let mut f = create(&dir.join("summary.csv"))?;
    write_summary_csv(&summary, &mut f)?;
    f.flush()?;
    fs::write(dir.join("summary.txt"), render_table(&summary))?;
    let mut f = create(&dir.join("runs.csv"))?;
    write_runs(reports, &mut f)?;
    f.flush()?;
    for r in reports {
        let run_dir = dir.join("runs").join(format!("{}-{}", r.profile, r.repetition));
        fs::create_dir_all(&run_dir)?;
        let mut f = create(&run_dir.join("metrics.csv"))?;
        write_series(r, &mut f)?;
        f.flush()?;
        let mut f = create(&run_dir.join("decisions.csv"))?;
        r.decisions.write_csv(&mut f)?;
        f.flush()?;
        if let Some(store) = &r.telemetry {
            let mut f = create(&run_dir.join("telemetry.csv"))?;
            store.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    Ok(summary)
}
