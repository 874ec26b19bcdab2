use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Problem, SolveMethod};

/// One named metric sampled at the report times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Error and diagnostic time series of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub problem: Problem,
    pub method: SolveMethod,
    pub modes: usize,
    pub constrained: bool,
    pub alpha: f64,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    pub build_id: String,
    pub times: Vec<f64>,
    pub series: Vec<Series>,
    /// Scalar summaries (terminal, settled and time-averaged errors).
    pub summary: BTreeMap<String, f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    /// Set when the integrator stopped early; the series then end at the last
    /// output time reached.
    pub abort: Option<Abort>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub kind: String,
    pub message: String,
}

impl ErrorReport {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn summary_value(&self, name: &str) -> Option<f64> {
        self.summary.get(name).copied()
    }

    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    /// CSV with a `t` column followed by one column per series, 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for s in &self.series {
            write!(w, ",{}", s.name)?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for s in &self.series {
                write!(w, ",{:.16e}", s.values[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Mean of `values` over `times >= from`, by the trapezoid rule in time.
pub(crate) fn time_average(times: &[f64], values: &[f64], from: f64) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(t, v)| (*t, *v))
        .collect();
    match pts.len() {
        0 => f64::NAN,
        1 => pts[0].1,
        _ => {
            let span = pts[pts.len() - 1].0 - pts[0].0;
            let area: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
            area / span
        }
    }
}

pub(crate) fn max_from(times: &[f64], values: &[f64], from: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .fold(f64::NAN, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ErrorReport {
        ErrorReport {
            problem: Problem::FokkerPlanck,
            method: SolveMethod::Srons,
            modes: 2,
            constrained: true,
            alpha: 0.0,
            seed: 0,
            rtol: 1e-8,
            atol: 1e-10,
            build_id: "test".into(),
            times: vec![0.0, 0.5],
            series: vec![Series {
                name: "mean_error".into(),
                values: vec![0.0, 1.0 / 3.0],
            }],
            summary: BTreeMap::new(),
            accepted_steps: 0,
            rejected_steps: 0,
            rhs_evals: 0,
            abort: None,
            wall_time_seconds: 0.0,
        }
    }

    #[test]
    fn csv_round_trips_values() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,mean_error"));
        lines.next();
        let last: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last, vec![0.5, 1.0 / 3.0]);
    }

    #[test]
    fn time_average_of_linear_ramp() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [0.0, 1.0, 2.0, 3.0];
        assert!((time_average(&t, &v, 0.0) - 1.5).abs() < 1e-15);
        assert!((time_average(&t, &v, 1.0) - 2.0).abs() < 1e-15);
        assert_eq!(max_from(&t, &v, 0.0), 3.0);
    }
}
