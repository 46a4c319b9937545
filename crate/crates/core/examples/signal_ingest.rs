//! Ingesting a regulation signal from CSV: irregular timestamps, linear
//! resampling to the 2-minute grid, zero mean and peak scaling. Also shows
//! the synthetic request used by the presets.

use std::io::Write;

use tclcap::scenario::default_signal;
use tclcap::scenario::signal::{ingest, read_csv, resample, Scaling, SignalSource, SignalSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::temp_dir().join("tclcap_regulation.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "timestamp,mw")?;
    // four-second samples over an hour, with a gap every ten minutes
    let mut t = 0u32;
    while t < 3600 {
        let minutes = t as f64 / 60.0;
        let mw = 40.0 * (minutes / 37.0).sin() + 15.0 * (minutes / 3.1).cos() + 5.0;
        writeln!(f, "2024-07-01 12:{:02}:{:02},{mw:.3}", t / 60, t % 60)?;
        t += if t % 600 == 0 { 12 } else { 4 };
    }
    drop(f);

    let (minutes, mw) = read_csv(&path)?;
    println!("read {} samples spanning {:.1} min", minutes.len(), minutes.last().unwrap_or(&0.0));
    let grid = resample(&minutes, &mw, 2.0)?;
    println!("resampled to {} points at 2 min: {:.2?}", grid.len(), &grid[..6]);

    let spec = SignalSpec {
        source: SignalSource::File { path: path.clone() },
        scaling: Scaling::PeakFraction(0.3),
        force_zero_mean: true,
    };
    let p_agg = 5000.0 * 2.24;
    let r = ingest(&spec, 25, 2.0, p_agg)?;
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let peak = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("request: mean {mean:.2e} kW, peak {peak:.1} kW ({:.0}% of P_agg)", 100.0 * peak / p_agg);

    let synth = ingest(&default_signal(7), 720, 2.0, p_agg)?;
    let steps: Vec<f64> = synth.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    println!(
        "synthetic: 720 samples, peak {:.0} kW, mean step {:.0} kW, largest step {:.0} kW",
        synth.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        steps.iter().sum::<f64>() / steps.len() as f64,
        steps.iter().fold(0.0f64, |m, &v| m.max(v))
    );
    Ok(())
}
