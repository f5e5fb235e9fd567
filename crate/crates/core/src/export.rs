//! Plain-text number formatting and CSV helpers shared by the exporters.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::cache::write_lc_trace;
use crate::error::Result;
use crate::sim::{ExperimentResult, SlotMetrics};

/// Significant digits in every emitted number.
pub const SIG_DIGITS: usize = 12;

/// Locale-free decimal text with [`SIG_DIGITS`] significant digits. Values
/// far from unity fall back to exponent notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..15).contains(&mag) {
        let decimals = (SIG_DIGITS as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", SIG_DIGITS - 1, x)
    }
}

/// Buffered file for one of the writers above.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Per-slot CSV: `t, S, sum_power, rate_k.., buffer_k.., backhaul_bits`.
pub fn write_metrics<W: Write>(slots: &[SlotMetrics], users: usize, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "S".into(), "sum_power".into()];
    header.extend((1..=users).map(|k| format!("rate_{k}")));
    header.extend((1..=users).map(|k| format!("buffer_{k}")));
    header.push("backhaul_bits".into());
    wtr.write_record(&header)?;
    for s in slots {
        let mut rec = vec![
            s.slot.to_string(),
            u8::from(s.cache_state).to_string(),
            fmt_num(s.sum_power),
        ];
        rec.extend(s.rates.iter().map(|&r| fmt_num(r)));
        rec.extend(s.buffer_bits.iter().map(|&b| fmt_num(b)));
        rec.push(fmt_num(s.backhaul_bits));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per run: scheme, average power (W and dBW), backhaul rate, interruptions.
pub fn write_summary<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "scheme",
        "cache_bits",
        "avg_power_w",
        "avg_power_db",
        "avg_backhaul_bps",
        "interruptions",
    ])?;
    for r in results {
        wtr.write_record([
            r.scheme.name().to_string(),
            fmt_num(r.config.cache_bits),
            fmt_num(r.avg_power),
            fmt_num(r.avg_power_db),
            fmt_num(r.avg_backhaul_bps),
            r.interruptions.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Summary of a parameter sweep: the swept key's value followed by the
/// per-run summary columns.
pub fn write_sweep_summary<W: Write>(key: &str, points: &[(String, Vec<ExperimentResult>)], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        key,
        "scheme",
        "seed",
        "avg_power_w",
        "avg_power_db",
        "avg_backhaul_bps",
        "interruptions",
    ])?;
    for (value, results) in points {
        for r in results {
            wtr.write_record([
                value.clone(),
                r.scheme.name().to_string(),
                r.seed.to_string(),
                fmt_num(r.avg_power),
                fmt_num(r.avg_power_db),
                fmt_num(r.avg_backhaul_bps),
                r.interruptions.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Config, seed, crate version and a UNIX timestamp, as `key = value` lines.
pub fn write_manifest<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write!(out, "{}", result.config.to_kv())?;
    writeln!(out, "scheme = {}", result.scheme.name())?;
    writeln!(out, "seed = {}", result.seed)?;
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "timestamp = {stamp}")?;
    out.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `lc_trace.csv`, `summary.csv` and `manifest.txt` into `dir`.
pub fn write_run(dir: &Path, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics(&result.slots, result.config.users, create(&dir.join("metrics.csv"))?)?;
    write_lc_trace(
        &result.lc_trace,
        result.config.files,
        create(&dir.join("lc_trace.csv"))?,
    )?;
    write_summary(std::slice::from_ref(result), create(&dir.join("summary.csv"))?)?;
    write_manifest(result, create(&dir.join("manifest.txt"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig_digits(s: &str) -> usize {
        let mantissa = s.split(['e', 'E']).next().unwrap();
        let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
        digits.trim_start_matches('0').len()
    }

    #[test]
    fn keeps_enough_digits_and_round_trips() {
        for &x in &[1.0, -0.5, 14e6, 1.0 / 3.0, 1.234e-7, 6.02e23, 98_000_000.0, 1e-4] {
            let s = fmt_num(x);
            assert!(sig_digits(&s) >= 10, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - x).abs() <= 1e-10 * x.abs(), "{s}");
        }
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(14e6), "14000000.0000");
    }

    #[test]
    fn run_directory_has_all_files() {
        let cfg = crate::SystemConfig {
            users: 2,
            subcarriers: 2,
            ..Default::default()
        };
        let r = crate::sim::run_scheme(
            &cfg,
            crate::sim::Scheme::Coordinated,
            12,
            &crate::sim::SimOptions::from_config(&cfg),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &r).unwrap();
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let mut lines = metrics.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,S,sum_power,rate_1,rate_2,buffer_1,buffer_2,backhaul_bits"
        );
        assert_eq!(lines.count(), 12);
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("seed = 1") && manifest.contains("scheme = coordinated"));
        assert!(manifest.contains("timestamp = "));
        assert_eq!(
            fs::read_to_string(dir.path().join("summary.csv"))
                .unwrap()
                .lines()
                .count(),
            2
        );
        assert!(dir.path().join("lc_trace.csv").exists());
    }
}
