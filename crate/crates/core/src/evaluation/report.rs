use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bench::RuntimeTable;
use super::metrics::{CovarianceReport, ErrorTable};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tau: usize,
    pub count: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean: f64,
    /// Root mean squared error; not part of the signed-mean statistics.
    pub rms: f64,
    pub delta_f: f64,
    pub delta_lambda: f64,
    pub det_meas: f64,
}

/// Per-horizon summary of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub trajectories: usize,
    pub rows: Vec<MetricsRow>,
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl MetricsReport {
    pub fn new(table: &ErrorTable, cov: &CovarianceReport) -> Self {
        let rows = table
            .horizons
            .iter()
            .map(|h| {
                let c = cov.row(h.tau);
                MetricsRow {
                    tau: h.tau,
                    count: h.count(),
                    mean_x: h.mean_x,
                    mean_y: h.mean_y,
                    mean: h.mean,
                    rms: h.rms,
                    delta_f: c.map_or(f64::NAN, |c| c.delta_f),
                    delta_lambda: c.map_or(f64::NAN, |c| c.delta_lambda),
                    det_meas: c.map_or(f64::NAN, |c| c.det_meas),
                }
            })
            .collect();
        Self {
            method: table.method.clone(),
            trajectories: table.lengths.len(),
            rows,
        }
    }

    pub fn row(&self, tau: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.tau == tau)
    }

    pub fn to_text(&self, with_rms: bool) -> String {
        let mut s = format!("method {} ({} trajectories)\n", self.method, self.trajectories);
        let _ = write!(
            s,
            "{:>5} {:>7} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "tau", "n", "E_x", "E_y", "E", "Delta_F", "Delta_Lambda"
        );
        if with_rms {
            s.push_str("        rms*");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{:>5} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.4e}",
                r.tau, r.count, r.mean_x, r.mean_y, r.mean, r.delta_f, r.delta_lambda
            );
            if with_rms {
                let _ = write!(s, " {:>11.4}", r.rms);
            }
            s.push('\n');
        }
        if with_rms {
            s.push_str("* rms: root mean squared distance, not a signed mean\n");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Columns `method,tau,count,E_x,E_y,E,rms,delta_F,delta_Lambda,det_meas`.
    pub fn to_csv(reports: &[MetricsReport]) -> Result<String, EvalError> {
        csv_string(
            &["method", "tau", "count", "E_x", "E_y", "E", "rms", "delta_F", "delta_Lambda", "det_meas"],
            reports.iter().flat_map(|rep| {
                rep.rows.iter().map(|r| {
                    vec![
                        rep.method.clone(),
                        r.tau.to_string(),
                        r.count.to_string(),
                        r.mean_x.to_string(),
                        r.mean_y.to_string(),
                        r.mean.to_string(),
                        r.rms.to_string(),
                        r.delta_f.to_string(),
                        r.delta_lambda.to_string(),
                        r.det_meas.to_string(),
                    ]
                })
            }),
        )
    }
}

/// Every signed error: `method,tau,trajectory,t,E_x,E_y`.
pub fn error_scatter_csv(tables: &[ErrorTable]) -> Result<String, EvalError> {
    csv_string(
        &["method", "tau", "trajectory", "t", "E_x", "E_y"],
        tables.iter().flat_map(|tab| {
            tab.horizons.iter().flat_map(move |h| {
                h.index.iter().zip(h.ex.iter().zip(&h.ey)).map(move |(&(i, t), (x, y))| {
                    vec![
                        tab.method.clone(),
                        h.tau.to_string(),
                        i.to_string(),
                        t.to_string(),
                        x.to_string(),
                        y.to_string(),
                    ]
                })
            })
        }),
    )
}

impl RuntimeTable {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>6} {:>5} {:>6} {:>12} {:>12}\n",
            "method", "tau", "iters", "mean [ms]", "median [ms]"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>5} {:>6} {:>12.4} {:>12.4}",
                r.method,
                r.tau,
                r.iterations,
                r.mean_s * 1e3,
                r.median_s * 1e3
            );
        }
        let mut taus: Vec<usize> = self.rows.iter().map(|r| r.tau).collect();
        taus.dedup();
        for tau in taus {
            if let Some(ratio) = self.ratio(tau) {
                let _ = writeln!(s, "rl/lqr at tau={tau}: {ratio:.1}");
            }
        }
        s
    }

    /// Columns `method,tau,iterations,mean_s,median_s`.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        csv_string(
            &["method", "tau", "iterations", "mean_s", "median_s"],
            self.rows.iter().map(|r| {
                vec![
                    r.method.clone(),
                    r.tau.to_string(),
                    r.iterations.to_string(),
                    r.mean_s.to_string(),
                    r.median_s.to_string(),
                ]
            }),
        )
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        #[derive(Deserialize)]
        struct Row {
            method: String,
            tau: usize,
            iterations: usize,
            mean_s: f64,
            median_s: f64,
        }
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr
            .deserialize::<Row>()
            .map(|r| {
                let r = r?;
                Ok(super::bench::Timing {
                    method: r.method,
                    tau: r.tau,
                    iterations: r.iterations,
                    mean_s: r.mean_s,
                    median_s: r.median_s,
                    checksum: f64::NAN,
                })
            })
            .collect::<Result<_, csv::Error>>()?;
        Ok(Self { rows })
    }
}
