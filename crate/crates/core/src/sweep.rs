//! Seeded Monte Carlo sweeps over one scenario parameter.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{IsacError, Result};
use crate::scenario::{ScenarioConfig, SweepAxis, SweepMode};
use crate::trial::{run_sensing, run_trial, trial_seed, TrialRecord};

pub const CSV_HEADER: [&str; 8] = ["sweep_value", "metric", "mean", "p10", "p50", "p90", "trials", "seed"];

/// One aggregate of one metric at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub metric: String,
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    /// Trials that produced the metric; failed trials are left out.
    pub trials: usize,
    pub seed: u64,
}

/// What to sweep and how hard.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub mode: SweepMode,
    pub trials: usize,
    pub workers: usize,
}

impl SweepPlan {
    /// Axis, values and mode from the config's `[sweep]` table, with per-axis default values.
    pub fn from_config(config: &ScenarioConfig, axis: Option<SweepAxis>, trials: usize, workers: usize) -> Result<Self> {
        let axis = match (axis, &config.sweep.axis) {
            (Some(a), _) => a,
            (None, Some(name)) => SweepAxis::parse(name)?,
            (None, None) => return Err(IsacError::InvalidConfiguration("no sweep axis given".into())),
        };
        let values = if config.sweep.values.is_empty() { default_values(axis) } else { config.sweep.values.clone() };
        Ok(Self { axis, values, mode: config.sweep.mode, trials, workers })
    }
}

pub fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Rho => vec![0.0, 10.0, 20.0, 30.0],
        SweepAxis::Tau1 => vec![20.0, 50.0, 90.0],
        SweepAxis::Users => vec![1.0, 2.0, 3.0],
        SweepAxis::MSemi => vec![64.0, 144.0, 256.0, 400.0],
        SweepAxis::MReflect => vec![256.0, 576.0, 1024.0],
        SweepAxis::Tau1OverT1 => vec![0.1, 0.25, 0.5, 0.75],
        SweepAxis::T1OverT => vec![0.05, 0.1, 0.2, 0.4],
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q / 100.0 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn aggregate(sweep_value: f64, metric: &str, values: &[f64], seed: u64) -> SweepRow {
    let mean = if values.is_empty() { f64::NAN } else { values.iter().sum::<f64>() / values.len() as f64 };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    SweepRow {
        sweep_value,
        metric: metric.to_string(),
        mean,
        p10: percentile(&sorted, 10.0),
        p50: percentile(&sorted, 50.0),
        p90: percentile(&sorted, 90.0),
        trials: values.len(),
        seed,
    }
}

type Extractor = fn(&TrialRecord) -> Option<f64>;

const FULL_METRICS: [(&str, Extractor); 11] = [
    ("rmse_block1", |r| r.block1.as_ref().map(|b| b.rmse.assigned)),
    ("rmse_block2", |r| r.block2.as_ref().map(|b| b.rmse.assigned)),
    ("rate_isac_proposed", |r| r.rates.map(|x| x.proposed.isac)),
    ("rate_isac_random", |r| r.rates.map(|x| x.random.isac)),
    ("rate_isac_genie", |r| r.rates.map(|x| x.genie.isac)),
    ("rate_pc_proposed", |r| r.rates.map(|x| x.proposed.pc)),
    ("rate_pc_random", |r| r.rates.map(|x| x.random.pc)),
    ("rate_pc_genie", |r| r.rates.map(|x| x.genie.pc)),
    ("rate_overall_proposed", |r| r.rates.map(|x| x.proposed.overall)),
    ("rate_overall_random", |r| r.rates.map(|x| x.random.overall)),
    ("rate_overall_genie", |r| r.rates.map(|x| x.genie.overall)),
];

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| IsacError::InvalidConfiguration(format!("worker pool: {e}")))
}

/// Runs every trial of every sweep value. Rows are grouped by sweep value in plan order.
pub fn sweep(config: &ScenarioConfig, plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    let pool = pool(plan.workers)?;
    let seed = config.seed;
    let mut rows = Vec::new();
    if plan.trials == 0 {
        return Ok(rows);
    }
    for &value in &plan.values {
        let scenario = config.with_axis(plan.axis, value)?.build()?;
        let seeds: Vec<u64> = (0..plan.trials as u64).map(|i| trial_seed(seed, i)).collect();
        match plan.mode {
            SweepMode::Sense => {
                let recs = pool.install(|| seeds.par_iter().map(|&s| run_sensing(&scenario, s)).collect::<Vec<_>>());
                let rmse: Vec<f64> = recs.iter().filter_map(|r| r.block1.as_ref().map(|b| b.rmse.assigned)).collect();
                rows.push(aggregate(value, "rmse_block1", &rmse, seed));
            }
            SweepMode::Full => {
                let recs = pool.install(|| seeds.par_iter().map(|&s| run_trial(&scenario, s)).collect::<Vec<_>>());
                for (name, f) in FULL_METRICS {
                    let v: Vec<f64> = recs.iter().filter_map(f).collect();
                    rows.push(aggregate(value, name, &v, seed));
                }
            }
        }
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> IsacError {
    IsacError::Io(e.to_string())
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            r.p10.to_string(),
            r.p50.to_string(),
            r.p90.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a dataset written by [`write_csv`]. A missing column is a plot error naming it.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let mut col = [0usize; 8];
    for (slot, name) in col.iter_mut().zip(CSV_HEADER) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IsacError::Plot(format!("dataset has no `{name}` column")))?;
    }
    let num = |s: &str, name: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| IsacError::Plot(format!("bad `{name}` value `{s}`")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let get = |i: usize| rec.get(col[i]).unwrap_or("");
        rows.push(SweepRow {
            sweep_value: num(get(0), "sweep_value")?,
            metric: get(1).to_string(),
            mean: num(get(2), "mean")?,
            p10: num(get(3), "p10")?,
            p50: num(get(4), "p50")?,
            p90: num(get(5), "p90")?,
            trials: num(get(6), "trials")? as usize,
            seed: get(7).trim().parse().map_err(|_| IsacError::Plot(format!("bad `seed` value `{}`", get(7))))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 10.0), 1.4);
        assert_eq!(percentile(&v, 90.0), 4.6);
        assert_eq!(percentile(&[7.0], 90.0), 7.0);
        assert!(percentile(&[], 50.0).is_nan());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            aggregate(10.0, "rmse_block1", &[0.01, 0.02, 0.03], 9),
            aggregate(20.0, "rmse_block1", &[], 9),
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sweep_value,metric,mean,p10,p50,p90,trials,seed\n"));
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].mean.is_nan() && back[1].trials == 0);
    }

    #[test]
    fn missing_column_named() {
        let err = read_csv("sweep_value,metric,mean,p10,p50,trials,seed\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`p90`"));
    }

    #[test]
    fn zero_trials_header_only() {
        let plan = SweepPlan { axis: SweepAxis::Rho, values: vec![0.0, 10.0], mode: SweepMode::Sense, trials: 0, workers: 1 };
        let rows = sweep(&ScenarioConfig::default(), &plan).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sweep_value,metric,mean,p10,p50,p90,trials,seed\n");
    }

    #[test]
    fn plan_needs_axis() {
        let c = ScenarioConfig::default();
        assert!(SweepPlan::from_config(&c, None, 1, 1).is_err());
        let p = SweepPlan::from_config(&c, Some(SweepAxis::Rho), 1, 1).unwrap();
        assert_eq!(p.values, vec![0.0, 10.0, 20.0, 30.0]);
    }
}
