use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

pub const LOG_HEADER: &str = "step,epoch,loss,s_x,s_q,grad_norm";

/// What one training step reports. `s_x`, `s_q` are absent for the fixed loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    pub s_x: Option<f64>,
    pub s_q: Option<f64>,
    pub grad_norm: f64,
}

/// Append-only CSV of step metrics. Config echo lines (`# key = value`)
/// precede the header; rows are flushed as they are written so a crashed
/// run keeps its partial log.
pub struct StepLog {
    out: BufWriter<fs::File>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl StepLog {
    pub fn create(path: &Path, echo: &[(String, String)]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (k, v) in echo {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "{LOG_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, step: u64, epoch: u64, m: &StepMetrics) -> Result<()> {
        writeln!(
            self.out,
            "{step},{epoch},{:e},{},{},{:e}",
            m.loss,
            opt(m.s_x),
            opt(m.s_q),
            m.grad_norm
        )?;
        self.out.flush()?;
        Ok(())
    }
}
