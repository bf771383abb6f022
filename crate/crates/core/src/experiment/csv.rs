//! Metric CSV emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::format::sig;

use super::scenario::MetricSeries;

pub const HEADER: &str = "t,chi,avg_fidelity,scenario,gamma_beta,Gamma_alpha,Gamma_beta,gamma_alpha,trace_dev,min_eig";

fn cell(series: &Option<Vec<f64>>, i: usize) -> String {
    series.as_ref().and_then(|v| v.get(i)).map(|x| sig(*x)).unwrap_or_default()
}

pub fn write_metrics_to<W: Write>(series: &MetricSeries, w: &mut W) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    let p = &series.params;
    let echo = format!(
        "{},{},{},{},{}",
        series.scenario.label(),
        sig(p.gamma_beta),
        sig(p.big_gamma_alpha),
        sig(p.big_gamma_beta),
        sig(p.gamma_alpha)
    );
    for i in 0..series.len() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            sig(series.times[i]),
            cell(&series.chi, i),
            cell(&series.avg_fidelity, i),
            echo,
            sig(series.trace_dev[i]),
            sig(series.min_eig[i])
        )?;
    }
    Ok(())
}

pub fn write_metrics(series: &MetricSeries, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_metrics_to(series, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn metrics_csv(series: &MetricSeries) -> String {
    let mut buf = Vec::new();
    write_metrics_to(series, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::scenario::ParameterEcho;
    use crate::noise::Scenario;

    fn series() -> MetricSeries {
        MetricSeries {
            scenario: Scenario::R,
            params: ParameterEcho { gamma_beta: 0.1, big_gamma_alpha: 0.0, big_gamma_beta: 1.0, gamma_alpha: 1.0 },
            times: vec![0.0, 0.01],
            chi: Some(vec![2.0, 1.0 / 3.0]),
            avg_fidelity: None,
            trace_dev: vec![0.0, 2.5e-16],
            min_eig: vec![-1e-17, 0.25],
        }
    }

    #[test]
    fn layout_and_formatting() {
        let text = metrics_csv(&series());
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "0,2,,R,0.1,0,1,1,0,-1e-17");
        assert_eq!(lines[2], "0.01,0.333333333333,,R,0.1,0,1,1,2.5e-16,0.25");
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
    }
}
