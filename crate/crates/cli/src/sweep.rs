//! `bench sweep`: runs a scenario over a range of one parameter.

use anyhow::{bail, Context, Result};
use lnoi_core::timetag::{DET1_CHANNEL, DET2_CHANNEL};
use lnoi_core::{run_scenario, Scenario};
use rayon::prelude::*;
use serde_json::Value;

use crate::config::set_path;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub det1_rate_cps: f64,
    pub det2_rate_cps: f64,
    pub out1_watts: f64,
    pub out2_watts: f64,
}

/// `steps` evenly spaced values from `from` to `to`, both included.
pub fn sweep_values(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    match steps {
        0 => bail!("--steps must be at least 1"),
        1 => Ok(vec![from]),
        n => Ok((0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()),
    }
}

/// Runs one scenario per value of the dot path `param`. Points are independent
/// and run in parallel; the output keeps the sweep order.
pub fn run_sweep(base: &Scenario, param: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let doc = serde_json::to_value(base)?;
    let scenarios = values
        .iter()
        .map(|&v| {
            let mut d = doc.clone();
            set_path(&mut d, param, Value::from(v))?;
            let s: Scenario = serde_json::from_value(d).with_context(|| format!("{param} = {v}"))?;
            s.validate().with_context(|| format!("{param} = {v}"))?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    scenarios
        .par_iter()
        .zip(values)
        .map(|(s, &value)| {
            let out = run_scenario(s).with_context(|| format!("{param} = {value}"))?;
            Ok(SweepRow {
                value,
                det1_rate_cps: out.click_rate(DET1_CHANNEL),
                det2_rate_cps: out.click_rate(DET2_CHANNEL),
                out1_watts: out.monitor.out1_watts,
                out2_watts: out.monitor.out2_watts,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value", "det1_rate_cps", "det2_rate_cps", "out1_watts", "out2_watts"])?;
    for r in rows {
        w.write_record(
            [r.value, r.det1_rate_cps, r.det2_rate_cps, r.out1_watts, r.out2_watts].map(|v| format!("{v:?}")),
        )?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lnoi_core::mc::SimMode;
    use lnoi_core::SourceSpec;

    #[test]
    fn values_include_both_ends() {
        assert_eq!(sweep_values(0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(sweep_values(2.0, 9.0, 1).unwrap(), vec![2.0]);
        assert!(sweep_values(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn voltage_sweep_moves_light_between_detectors() {
        let mut s = Scenario::new(SourceSpec::cw(1e6, 1550.0), 0.1, 3);
        s.operating_phase_rad = Some(std::f64::consts::PI);
        s.mode = SimMode::Binned { bin_width_s: 0.1 };
        let rows = run_sweep(&s, "drive.offset_volts", &[0.0, 16.5]).unwrap();
        assert!(rows[0].det1_rate_cps > 10.0 * rows[0].det2_rate_cps);
        assert!(rows[1].det2_rate_cps > 10.0 * rows[1].det1_rate_cps);
        assert!(run_sweep(&s, "drive.nope", &[1.0]).is_err());
    }
}
