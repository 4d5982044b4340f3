//! Output files: the metrics CSV (one row per run or sweep point), the
//! analytical-predictions CSV, and the plain-text run report. All numeric
//! fields are plain decimal with a '.' separator — never scientific
//! notation, never locale-dependent — and measured quantities carry six
//! significant digits, which sits below the simulation noise floor. Counts
//! and seeds print exactly.

use ponsim_core::sim::{SimConfig, SimMetrics};

/// Format with six significant digits as plain decimal text; trailing
/// fractional zeros are trimmed, so `0.1` stays `0.1`.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    // Round to six significant digits via the exponent form, then lay the
    // digits out around the decimal point by hand.
    let sci = format!("{:.5e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 6, "{sci}");
    let mut out = String::new();
    if x < 0.0 {
        out.push('-');
    }
    if exp >= 5 {
        out.push_str(&digits);
        for _ in 0..(exp - 5) {
            out.push('0');
        }
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        out.push_str(&digits[..split]);
        let frac = digits[split..].trim_end_matches('0');
        if !frac.is_empty() {
            out.push('.');
            out.push_str(frac);
        }
    } else {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(digits.trim_end_matches('0'));
    }
    out
}

/// Metric columns after the optional leading axis column, in CSV order.
pub const METRIC_COLUMNS: &[&str] = &[
    "seed",
    "offered_ds_bps",
    "offered_us_bps",
    "utilization_ds",
    "utilization_us",
    "energy_j",
    "baseline_j",
    "energy_saving",
    "delay_ds_mean_s",
    "delay_ds_p95_s",
    "delay_us_cbr_mean_s",
    "delay_us_vbr_mean_s",
    "delay_us_be_mean_s",
    "tx_sleep_mean_s",
    "occ_ra_ta",
    "occ_ra_tl",
    "occ_ra_ts",
    "occ_rl_ta",
    "occ_rl_tl",
    "occ_rl_ts",
    "occ_rs_ta",
    "occ_rs_tl",
    "occ_rs_ts",
    "pkts_generated",
    "pkts_delivered",
    "pkts_residual",
];

/// The metrics CSV header row; sweeps put the axis value first.
pub fn metrics_header(with_axis: bool) -> String {
    let mut s = String::new();
    if with_axis {
        s.push_str("axis_value,");
    }
    s.push_str(&METRIC_COLUMNS.join(","));
    s
}

/// One metrics CSV data row, aligned with [`metrics_header`].
pub fn metrics_row(axis_value: Option<f64>, seed: u64, m: &SimMetrics) -> String {
    let mut f = Vec::with_capacity(27);
    if let Some(v) = axis_value {
        f.push(fmt_g6(v));
    }
    f.push(seed.to_string());
    f.push(fmt_g6(m.offered_ds_bps));
    f.push(fmt_g6(m.offered_us_bps));
    f.push(fmt_g6(m.utilization_ds));
    f.push(fmt_g6(m.utilization_us));
    f.push(fmt_g6(m.energy_j));
    f.push(fmt_g6(m.baseline_j));
    f.push(fmt_g6(m.energy_saving));
    f.push(fmt_g6(m.delay_ds_mean_s));
    f.push(fmt_g6(m.delay_ds_p95_s));
    f.push(fmt_g6(m.delay_us_class_mean_s[0]));
    f.push(fmt_g6(m.delay_us_class_mean_s[1]));
    f.push(fmt_g6(m.delay_us_class_mean_s[2]));
    f.push(fmt_g6(m.tx_sleep_mean_s));
    for &occ in &m.occupancy {
        f.push(fmt_g6(occ));
    }
    f.push(m.pkts_generated.to_string());
    f.push(m.pkts_delivered.to_string());
    f.push(m.pkts_residual.to_string());
    f.join(",")
}

/// The whole metrics CSV: header plus one row per entry.
pub fn metrics_csv(rows: &[(Option<f64>, u64, SimMetrics)]) -> String {
    let with_axis = rows.iter().any(|(a, _, _)| a.is_some());
    let mut s = metrics_header(with_axis);
    s.push('\n');
    for (axis, seed, m) in rows {
        s.push_str(&metrics_row(*axis, *seed, m));
        s.push('\n');
    }
    s
}

/// Columns of the analytical-predictions CSV after the optional axis column.
pub const ANALYZE_COLUMNS: &[&str] = &[
    "lambda_us_pps",
    "rho_us",
    "wait_cbr_s",
    "wait_vbr_s",
    "wait_be_s",
    "delay_cbr_s",
    "delay_vbr_s",
    "delay_be_s",
    "sleep_cbr_s",
    "sleep_vbr_s",
    "sleep_be_s",
    "tx_sleep_s",
    "tx_sleep_cycles",
    "occ_rx_awake",
    "occ_rx_listen",
    "occ_rx_sleep",
    "occ_tx_awake",
    "occ_tx_listen",
    "occ_tx_sleep",
    "expected_watts",
    "saturated",
];

/// One evaluated prediction, ready for a CSV row.
pub struct AnalyzeRow {
    pub lambda_us_pps: f64,
    pub rho_us: f64,
    /// Per-class queueing waits; None once saturated.
    pub waits_s: [Option<f64>; 3],
    /// Per-class total delays; None once saturated.
    pub delays_s: [Option<f64>; 3],
    /// Per-class sleep allowances; None when the class delay is undefined.
    pub sleeps_s: [Option<f64>; 3],
    pub tx_sleep_s: Option<f64>,
    pub tx_sleep_cycles: u32,
    pub rx_occ: [f64; 3],
    pub tx_occ: [f64; 3],
    pub expected_watts: f64,
    pub saturated: bool,
}

/// The analyze CSV header row.
pub fn analyze_header(with_axis: bool) -> String {
    let mut s = String::new();
    if with_axis {
        s.push_str("axis_value,");
    }
    s.push_str(&ANALYZE_COLUMNS.join(","));
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_g6).unwrap_or_default()
}

/// One analyze CSV data row; saturated predictions leave the undefined
/// cells empty and set the flag.
pub fn analyze_row(axis_value: Option<f64>, r: &AnalyzeRow) -> String {
    let mut f = Vec::with_capacity(22);
    if let Some(v) = axis_value {
        f.push(fmt_g6(v));
    }
    f.push(fmt_g6(r.lambda_us_pps));
    f.push(fmt_g6(r.rho_us));
    for i in 0..3 {
        f.push(opt(r.waits_s[i]));
    }
    for i in 0..3 {
        f.push(opt(r.delays_s[i]));
    }
    for i in 0..3 {
        f.push(opt(r.sleeps_s[i]));
    }
    f.push(opt(r.tx_sleep_s));
    f.push(r.tx_sleep_cycles.to_string());
    for &o in &r.rx_occ {
        f.push(fmt_g6(o));
    }
    for &o in &r.tx_occ {
        f.push(fmt_g6(o));
    }
    f.push(fmt_g6(r.expected_watts));
    f.push(if r.saturated { "1" } else { "0" }.to_string());
    f.join(",")
}

/// The whole analyze CSV.
pub fn analyze_csv(rows: &[(Option<f64>, AnalyzeRow)]) -> String {
    let with_axis = rows.iter().any(|(a, _)| a.is_some());
    let mut s = analyze_header(with_axis);
    s.push('\n');
    for (axis, row) in rows {
        s.push_str(&analyze_row(*axis, row));
        s.push('\n');
    }
    s
}

fn put(s: &mut String, key: &str, value: impl AsRef<str>) {
    s.push_str(&format!("{key:<26}{}\n", value.as_ref()));
}

/// Human-readable summary of one run.
pub fn run_report(cfg: &SimConfig, m: &SimMetrics) -> String {
    let mut s = String::new();
    s.push_str("simulation report\n");
    s.push_str("=================\n");
    put(&mut s, "onus", cfg.n_onus.to_string());
    put(&mut s, "cycle_s", fmt_g6(cfg.cycle_s));
    put(&mut s, "seed", cfg.seed.to_string());
    put(&mut s, "measured_cycles", m.measured_cycles.to_string());
    put(&mut s, "measured_s", fmt_g6(m.measured_s));
    s.push('\n');
    put(&mut s, "offered_ds_bps", fmt_g6(m.offered_ds_bps));
    put(&mut s, "offered_us_bps", fmt_g6(m.offered_us_bps));
    put(&mut s, "utilization_ds", fmt_g6(m.utilization_ds));
    put(&mut s, "utilization_us", fmt_g6(m.utilization_us));
    put(&mut s, "saturated", if m.saturated { "yes" } else { "no" });
    s.push('\n');
    put(&mut s, "energy_j", fmt_g6(m.energy_j));
    put(&mut s, "baseline_j", fmt_g6(m.baseline_j));
    let clamped = if m.saving_clamped { " (clamped)" } else { "" };
    put(&mut s, "energy_saving", format!("{}{clamped}", fmt_g6(m.energy_saving)));
    s.push('\n');
    s.push_str("state occupancy (rows: rx awake/listen/sleep; cols: tx awake/listen/sleep)\n");
    for r in 0..3 {
        let row: Vec<String> =
            (0..3).map(|t| format!("{:>9}", fmt_g6(m.occupancy[r * 3 + t]))).collect();
        s.push_str(&format!("  {}\n", row.join(" ")));
    }
    s.push('\n');
    put(&mut s, "delay_ds_mean_s", fmt_g6(m.delay_ds_mean_s));
    put(&mut s, "delay_ds_p95_s", fmt_g6(m.delay_ds_p95_s));
    for (i, name) in ["cbr", "vbr", "be"].iter().enumerate() {
        put(
            &mut s,
            &format!("delay_us_{name}"),
            format!(
                "mean {}  p95 {}  max {}",
                fmt_g6(m.delay_us_class_mean_s[i]),
                fmt_g6(m.delay_us_class_p95_s[i]),
                fmt_g6(m.delay_us_class_max_s[i])
            ),
        );
    }
    put(
        &mut s,
        "threshold_violations",
        format!(
            "{} / {} / {}",
            m.threshold_violations[0], m.threshold_violations[1], m.threshold_violations[2]
        ),
    );
    s.push('\n');
    put(&mut s, "tx_sleep_mean_s", fmt_g6(m.tx_sleep_mean_s));
    put(&mut s, "tx_sleep_episodes", m.tx_sleep_episodes.to_string());
    put(&mut s, "tx_budget_cycles", m.tx_budget_cycles.to_string());
    s.push('\n');
    put(&mut s, "pkts_generated", m.pkts_generated.to_string());
    put(&mut s, "pkts_delivered", m.pkts_delivered.to_string());
    put(&mut s, "pkts_residual", m.pkts_residual.to_string());
    put(&mut s, "mirror_divergences", m.mirror_divergences.to_string());
    put(&mut s, "ts_divergences", m.ts_divergences.to_string());
    put(&mut s, "conservation_violations", m.conservation_violations.to_string());
    s
}

/// Human-readable summary of a sweep: the base setup plus one line per point.
pub fn sweep_report(
    cfg: &SimConfig,
    axis_label: &str,
    rows: &[(Option<f64>, u64, SimMetrics)],
) -> String {
    let mut s = String::new();
    s.push_str("sweep report\n");
    s.push_str("============\n");
    put(&mut s, "axis", axis_label);
    put(&mut s, "points", rows.len().to_string());
    put(&mut s, "onus", cfg.n_onus.to_string());
    put(&mut s, "base_seed", cfg.seed.to_string());
    s.push('\n');
    s.push_str(&format!(
        "{:>14} {:>6} {:>13} {:>15} {:>15} {:>15}\n",
        axis_label, "seed", "energy_saving", "delay_ds_mean_s", "delay_us_cbr_s", "tx_sleep_mean_s"
    ));
    for (axis, seed, m) in rows {
        s.push_str(&format!(
            "{:>14} {:>6} {:>13} {:>15} {:>15} {:>15}\n",
            fmt_g6(axis.unwrap_or(f64::NAN)),
            seed,
            fmt_g6(m.energy_saving),
            fmt_g6(m.delay_ds_mean_s),
            fmt_g6(m.delay_us_class_mean_s[0]),
            fmt_g6(m.tx_sleep_mean_s)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits_lay_out_as_plain_decimal() {
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(1.0), "1");
        assert_eq!(fmt_g6(2.0), "2");
        assert_eq!(fmt_g6(0.1), "0.1");
        assert_eq!(fmt_g6(15.625e6), "15625000");
        assert_eq!(fmt_g6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_g6(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_g6(123456789.0), "123457000");
        assert_eq!(fmt_g6(-0.0012345678), "-0.00123457");
        assert_eq!(fmt_g6(1e-7), "0.0000001");
        assert_eq!(fmt_g6(9.999999e5), "1000000");
        assert_eq!(fmt_g6(0.0979998), "0.0979998");
        assert_eq!(fmt_g6(3.85), "3.85");
        assert_eq!(fmt_g6(-2.5e9), "-2500000000");
    }

    #[test]
    fn headers_list_the_documented_columns() {
        let h = metrics_header(false);
        assert!(h.starts_with("seed,offered_ds_bps,"));
        assert!(h.ends_with("pkts_generated,pkts_delivered,pkts_residual"));
        assert_eq!(h.split(',').count(), 26);
        assert!(metrics_header(true).starts_with("axis_value,seed,"));
        assert_eq!(analyze_header(true).split(',').count(), 22);
    }

    #[test]
    fn rows_align_with_their_headers() {
        let m = tiny_metrics();
        let row = metrics_row(Some(2e6), 7, &m);
        assert_eq!(row.split(',').count(), metrics_header(true).split(',').count());
        assert!(row.starts_with("2000000,7,"));
        let row = metrics_row(None, 7, &m);
        assert_eq!(row.split(',').count(), metrics_header(false).split(',').count());
    }

    #[test]
    fn saturated_analyze_rows_leave_undefined_cells_empty() {
        let r = AnalyzeRow {
            lambda_us_pps: 100.0,
            rho_us: 1.2,
            waits_s: [Some(1e-6), None, None],
            delays_s: [Some(2e-6), None, None],
            sleeps_s: [None, None, None],
            tx_sleep_s: None,
            tx_sleep_cycles: 0,
            rx_occ: [1.0, 0.0, 0.0],
            tx_occ: [1.0, 0.0, 0.0],
            expected_watts: 3.85,
            saturated: true,
        };
        let row = analyze_row(None, &r);
        assert_eq!(row.split(',').count(), ANALYZE_COLUMNS.len());
        assert!(row.contains(",,"));
        assert!(row.ends_with(",1"));
    }

    fn tiny_metrics() -> SimMetrics {
        let mut cfg = SimConfig::default();
        cfg.n_onus = 2;
        cfg.ds_rate_bps = 1e9;
        cfg.us_rate_bps = 1e9;
        cfg.warmup_cycles = 5;
        cfg.measured_cycles = 20;
        cfg.ds_traffic.load_bps = 0.0;
        cfg.us_traffic.load_bps = 0.0;
        ponsim_core::run_simulation(&cfg).unwrap()
    }
}
