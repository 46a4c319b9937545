//! Balancing-authority request signals: CSV ingestion with resampling, and
//! a seeded band-limited noise generator.

use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One low-pass band of the synthetic generator: white noise through
/// `order` cascaded first-order filters with the given time constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub time_constant_minutes: f64,
    pub weight: f64,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub bands: Vec<Band>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            bands: vec![
                Band { time_constant_minutes: 60.0, weight: 1.0, order: 2 },
                Band { time_constant_minutes: 6.0, weight: 0.5, order: 2 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    /// CSV with `timestamp, mw` columns. Timestamps are seconds, RFC 3339,
    /// or `YYYY-MM-DD HH:MM:SS`.
    File { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Scaling {
    /// Largest magnitude becomes this fraction of the fleet's `P_agg`.
    PeakFraction(f64),
    /// Multiply the raw series (MW) by this factor to get kW.
    Factor(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub source: SignalSource,
    pub scaling: Scaling,
    #[serde(default = "default_true")]
    pub force_zero_mean: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            source: SignalSource::Synthetic(SyntheticSpec::default()),
            scaling: Scaling::PeakFraction(0.2),
            force_zero_mean: true,
        }
    }
}

/// Reads a `timestamp, mw` CSV into minutes since the first sample and raw
/// values.
pub fn read_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Ingestion(format!("{}: missing column `{name}`", path.display())))
    };
    let (ti, vi) = (col("timestamp")?, col("mw")?);
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t = parse_timestamp(&rec[ti])
            .ok_or_else(|| Error::Ingestion(format!("row {}: bad timestamp `{}`", line + 1, &rec[ti])))?;
        let v: f64 = rec[vi]
            .parse()
            .map_err(|_| Error::Ingestion(format!("row {}: bad value `{}`", line + 1, &rec[vi])))?;
        if !v.is_finite() {
            return Err(Error::Ingestion(format!("row {}: non-finite value", line + 1)));
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(Error::Ingestion(format!("{}: empty series", path.display())));
    }
    let t0 = times[0];
    let minutes: Vec<f64> = times.iter().map(|t| (t - t0) / 60.0).collect();
    if minutes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Ingestion("timestamps must be strictly increasing".into()));
    }
    Ok((minutes, values))
}

/// Seconds since an arbitrary origin.
fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp_millis() as f64 / 1000.0);
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp_millis() as f64 / 1000.0)
}

/// Linear interpolation onto a grid of step `t_s` starting at `minutes[0]`;
/// every grid point up to the last sample is produced.
pub fn resample(minutes: &[f64], values: &[f64], t_s: f64) -> Result<Vec<f64>> {
    if minutes.is_empty() || minutes.len() != values.len() {
        return Err(Error::Ingestion("empty or ragged series".into()));
    }
    if !(t_s > 0.0) {
        return Err(Error::Ingestion(format!("sample time {t_s}")));
    }
    let t0 = minutes[0];
    let span = minutes[minutes.len() - 1] - t0;
    let count = (span / t_s + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    for k in 0..count {
        let t = t0 + k as f64 * t_s;
        while i + 1 < minutes.len() && minutes[i + 1] < t {
            i += 1;
        }
        if i + 1 == minutes.len() {
            out.push(values[i]);
            continue;
        }
        let (ta, tb) = (minutes[i], minutes[i + 1]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(values[i] + w * (values[i + 1] - values[i]));
    }
    Ok(out)
}

/// Zero-mean unit-peak band-limited noise of length `n` at sample time
/// `t_s` minutes.
pub fn synthetic(spec: &SyntheticSpec, n: usize, t_s: f64) -> Result<Vec<f64>> {
    if spec.bands.is_empty() {
        return Err(Error::Ingestion("synthetic signal needs at least one band".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut total = vec![0.0; n];
    for band in &spec.bands {
        if !(band.time_constant_minutes > 0.0) || !band.weight.is_finite() || band.order == 0 {
            return Err(Error::Ingestion(format!("bad band {band:?}")));
        }
        let a = (-t_s / band.time_constant_minutes).exp();
        // warm-up so the filters start in steady state
        let warm = (10.0 * band.time_constant_minutes / t_s).ceil() as usize * band.order;
        let mut state = vec![0.0; band.order];
        let mut series = Vec::with_capacity(n);
        for k in 0..warm + n {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            for s in state.iter_mut() {
                *s = a * *s + (1.0 - a) * v;
                v = *s;
            }
            if k >= warm {
                series.push(v);
            }
        }
        normalize(&mut series, true);
        for (t, v) in total.iter_mut().zip(&series) {
            *t += band.weight * v;
        }
    }
    normalize(&mut total, true);
    Ok(total)
}

/// Removes the mean (optionally) and scales to unit peak magnitude.
fn normalize(v: &mut [f64], zero_mean: bool) {
    if v.is_empty() {
        return;
    }
    if zero_mean {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    }
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        v.iter_mut().for_each(|x| *x /= peak);
    }
}

/// The request in kW, `n` samples at `t_s` minutes, for a fleet of
/// capacity `p_agg` kW.
pub fn ingest(spec: &SignalSpec, n: usize, t_s: f64, p_agg: f64) -> Result<Vec<f64>> {
    let mut raw = match &spec.source {
        SignalSource::File { path } => {
            let (minutes, values) = read_csv(path)?;
            let mut r = resample(&minutes, &values, t_s)?;
            if r.len() < n {
                return Err(Error::Ingestion(format!(
                    "{} covers {} samples of {t_s} min, {n} needed",
                    path.display(),
                    r.len()
                )));
            }
            r.truncate(n);
            r
        }
        SignalSource::Synthetic(s) => synthetic(s, n, t_s)?,
    };
    if spec.force_zero_mean && !raw.is_empty() {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.iter_mut().for_each(|x| *x -= mean);
    }
    match spec.scaling {
        Scaling::PeakFraction(f) => {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Config(format!("peak fraction {f}")));
            }
            let peak = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let g = if peak > 0.0 { f * p_agg / peak } else { 0.0 };
            raw.iter_mut().for_each(|x| *x *= g);
        }
        Scaling::Factor(g) => {
            if !g.is_finite() {
                return Err(Error::Config(format!("scaling factor {g}")));
            }
            raw.iter_mut().for_each(|x| *x *= g);
        }
    }
    Ok(raw)
}
