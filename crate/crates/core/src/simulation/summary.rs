//! Monte Carlo summaries and their CSV / text renderings.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Two-sided 95% normal quantile used for coverage.
pub const Z_975: f64 = 1.959964;

/// Summary of one estimator for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub coefficient: String,
    pub truth: f64,
    pub bias: Option<f64>,
    pub mse: Option<f64>,
    /// Standard deviation of the estimates, divisor `m - 1`.
    pub emp_sd: Option<f64>,
    /// Mean of the estimated standard errors.
    pub est_sd: Option<f64>,
    pub coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

impl SummaryRow {
    /// Summarizes `(estimate, standard error)` pairs of the successful
    /// replicates.
    pub fn from_draws(
        estimator: &str,
        coefficient: &str,
        truth: f64,
        draws: &[(f64, f64)],
        n_failed: usize,
    ) -> Self {
        let m = draws.len();
        let mf = m as f64;
        let mean = |f: &dyn Fn(&(f64, f64)) -> f64| draws.iter().map(f).sum::<f64>() / mf;
        let (bias, mse, est_sd, coverage) = if m == 0 {
            (None, None, None, None)
        } else {
            (
                Some(mean(&|(b, _)| b - truth)),
                Some(mean(&|(b, _)| (b - truth).powi(2))),
                Some(mean(&|(_, se)| *se)),
                Some(mean(&|(b, se)| {
                    if (b - truth).abs() <= Z_975 * se {
                        1.0
                    } else {
                        0.0
                    }
                })),
            )
        };
        let emp_sd = (m >= 2).then(|| {
            let centre = mean(&|(b, _)| *b);
            let ss: f64 = draws.iter().map(|(b, _)| (b - centre).powi(2)).sum();
            (ss / (mf - 1.0)).sqrt()
        });
        Self {
            estimator: estimator.to_string(),
            coefficient: coefficient.to_string(),
            truth,
            bias,
            mse,
            emp_sd,
            est_sd,
            coverage,
            n_ok: m,
            n_failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub scenario: String,
    pub replicates: usize,
    pub seed: u64,
    /// Average population prevalence used for the weights.
    pub mean_prevalence: f64,
    pub rows: Vec<SummaryRow>,
}

impl SimulationSummary {
    pub fn row(&self, estimator: &str, coefficient: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.coefficient == coefficient)
    }

    /// Rows of one estimator, in coefficient order.
    pub fn estimator_rows<'a>(&'a self, estimator: &'a str) -> impl Iterator<Item = &'a SummaryRow> {
        self.rows.iter().filter(move |r| r.estimator == estimator)
    }

    /// Writes the rows as CSV. Missing statistics are empty fields; numbers
    /// use the shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv_rows<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    /// Human-readable table, one block per coefficient.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}: {} replicates, seed {}, mean prevalence {:.4}",
            self.scenario, self.replicates, self.seed, self.mean_prevalence
        );
        let mut coefficients: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !coefficients.contains(&r.coefficient.as_str()) {
                coefficients.push(&r.coefficient);
            }
        }
        for c in coefficients {
            let truth = self.rows.iter().find(|r| r.coefficient == c).map_or(0.0, |r| r.truth);
            let _ = writeln!(out, "\n{c} (true value {truth})");
            let _ = writeln!(
                out,
                "{:<12}{:>9}{:>9}{:>9}{:>9}{:>10}{:>8}",
                "estimator", "bias", "MSE", "emp sd", "est sd", "coverage", "failed"
            );
            for r in self.rows.iter().filter(|r| r.coefficient == c) {
                let _ = writeln!(
                    out,
                    "{:<12}{:>9}{:>9}{:>9}{:>9}{:>10}{:>8}",
                    r.estimator,
                    fmt(r.bias),
                    fmt(r.mse),
                    fmt(r.emp_sd),
                    fmt(r.est_sd),
                    fmt(r.coverage),
                    r.n_failed
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics_match_hand_computation() {
        let draws = [(1.0, 0.5), (2.0, 0.5), (4.0, 1.0)];
        let r = SummaryRow::from_draws("IPW", "X1", 2.0, &draws, 1);
        // Errors -1, 0, 2: bias 1/3, MSE 5/3.
        assert!((r.bias.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.mse.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        // Centre 7/3, squared deviations 16/9 + 1/9 + 25/9 = 42/9; / 2.
        assert!((r.emp_sd.unwrap() - (21.0f64 / 9.0).sqrt()).abs() < 1e-15);
        assert!((r.est_sd.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // |-1| <= 0.98, |0| <= 0.98, |2| > 1.96.
        assert!((r.coverage.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.n_ok, r.n_failed), (3, 1));
    }

    #[test]
    fn single_replicate_has_no_empirical_sd() {
        let r = SummaryRow::from_draws("IPW", "X1", 0.0, &[(0.1, 0.2)], 0);
        assert_eq!(r.emp_sd, None);
        let s = SimulationSummary {
            scenario: "t".into(),
            replicates: 1,
            seed: 0,
            mean_prevalence: 0.1,
            rows: vec![r],
        };
        let csv = s.to_csv_string().unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains(",,"), "{line}");
    }
}
