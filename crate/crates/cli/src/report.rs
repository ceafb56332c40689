use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use pcsplit::correction::CorrectionPlan;
use pcsplit::driver::{IterationRecord, RunSummary};
use pcsplit::matrix::Vector;
use pcsplit::Scheme;
use serde_json::json;

pub const TRACE_HEADER: [&str; 7] = [
    "k",
    "primal_res",
    "dual_res",
    "pred_norm",
    "dist_sq_H",
    "progress_sq_G",
    "slack",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "scheme",
    "status",
    "iterations",
    "primal_res",
    "dual_res",
    "compl_res",
    "total_progress",
    "reason",
];

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Per-iteration CSV, flushed after every row.
pub struct TraceWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(TRACE_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &IterationRecord) -> csv::Result<()> {
        let (dist, slack) = match &r.contraction {
            Some(c) => (num(c.dist_sq_h), num(c.slack)),
            None => (String::new(), String::new()),
        };
        self.inner.write_record([
            r.k.to_string(),
            num(r.kkt.primal),
            num(r.kkt.dual),
            num(r.pred_norm),
            dist,
            num(r.progress_sq_g),
            slack,
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

pub struct SummaryRow {
    pub scheme: Scheme,
    pub status: &'static str,
    iterations: Option<usize>,
    residuals: Option<[f64; 4]>,
    reason: String,
}

impl SummaryRow {
    pub fn from_summary(s: &RunSummary) -> Self {
        Self {
            scheme: s.scheme,
            status: s.status.as_str(),
            iterations: Some(s.iterations),
            residuals: Some([s.kkt.primal, s.kkt.dual, s.kkt.compl, s.total_progress]),
            reason: String::new(),
        }
    }

    pub fn rejected(scheme: Scheme, reason: String) -> Self {
        Self {
            scheme,
            status: "rejected",
            iterations: None,
            residuals: None,
            reason,
        }
    }

    fn record(&self) -> Vec<String> {
        let mut rec = vec![
            self.scheme.name().to_string(),
            self.status.to_string(),
            self.iterations.map(|k| k.to_string()).unwrap_or_default(),
        ];
        match self.residuals {
            Some(r) => rec.extend(r.iter().map(|&x| num(x))),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        rec.push(self.reason.clone());
        rec
    }
}

pub fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[SummaryRow]) -> Result<()> {
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    Ok(())
}

pub fn print_rows(rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    write_rows(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

fn rows_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn solution_json(s: &RunSummary) -> String {
    let recovered = s
        .solution
        .recovered_blocks
        .as_ref()
        .map(|bs| bs.iter().map(rows_of).collect::<Vec<_>>());
    let doc = json!({
        "scheme": s.scheme.name(),
        "status": s.status.as_str(),
        "iterations": s.iterations,
        "blocks": s.solution.blocks.iter().map(rows_of).collect::<Vec<_>>(),
        "lambda": rows_of(&s.solution.lambda),
        "residuals": {
            "primal": s.kkt.primal,
            "dual": s.kkt.dual,
            "compl": s.kkt.compl,
        },
        "recovered_blocks": recovered,
        "total_progress": s.total_progress,
        "contraction_violations": s.violations,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("solution serializes");
    text.push('\n');
    text
}

pub fn print_plan(label: &str, plan: &CorrectionPlan) {
    let dim = |m: &pcsplit::matrix::DenseMatrix| format!("{}x{}", m.nrows(), m.ncols());
    let c = &plan.certificate;
    println!(
        "{label}: Q {}, D {}, G {}, M {}, H {}",
        dim(&plan.q),
        dim(&plan.d),
        dim(&plan.g),
        dim(&plan.m),
        dim(&plan.h)
    );
    println!("  hm_residual {:e}, g_residual {:e}", c.hm_residual, c.g_residual);
    println!(
        "  min_eig H {:e}, G {:e}, Qᵀ+Q {:e}",
        c.h_cert.min_eig, c.g_cert.min_eig, c.qtq_cert.min_eig
    );
    match c.failure() {
        None => println!("  ok"),
        Some(reason) => println!("  failed: {reason}"),
    }
}
