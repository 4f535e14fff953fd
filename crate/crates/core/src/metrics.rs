//! Frequency-response metrics over simulated or measured traces.
//!
//! Conventions: ROCOF is the steepest least-squares slope over any window
//! lying within the first 10 s after the event; value A is the mean over the
//! 16 s before the event and value B the mean over 20–52 s after it, the
//! latter doubling as the settling frequency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Channel, SimulationResult};
use crate::num::Scalar;

pub const ROCOF_WINDOW_S: f64 = 0.5;
pub const ROCOF_SEARCH_S: f64 = 10.0;
pub const VALUE_A_PRE_S: f64 = 16.0;
pub const VALUE_B_START_S: f64 = 20.0;
pub const VALUE_B_END_S: f64 = 52.0;

/// Recommended interconnection frequency response obligations, MW/0.1 Hz.
pub const BAL003_THRESHOLDS: [(&str, f64); 3] = [("EI", 1015.0), ("WECC", 906.0), ("ERCOT", 471.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSource {
    Simulated,
    Measured,
}

/// Uniformly sampled frequency record with a marked event time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace<T> {
    pub t_start: T,
    pub dt: T,
    pub samples: Vec<T>,
    /// Event time, s.
    pub t0: T,
    pub source: TraceSource,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("trace shorter than the {0} s ROCOF window")]
    TooShort(f64),
    #[error("trace does not span [t0-16 s, t0+52 s]")]
    InsufficientSpan,
    #[error("no frequency decline (value A - value B = {0} Hz)")]
    NoDecline(f64),
    #[error("trace parse error: {0}")]
    Parse(String),
}

impl<T: Scalar> FrequencyTrace<T> {
    pub fn new(
        t_start: T,
        dt: T,
        samples: Vec<T>,
        t0: T,
        source: TraceSource,
    ) -> Result<Self, MetricsError> {
        let trace = Self {
            t_start,
            dt,
            samples,
            t0,
            source,
        };
        if trace.samples.len() < 2 {
            return Err(MetricsError::InvalidTrace("need at least 2 samples".into()));
        }
        if !(dt > T::zero()) {
            return Err(MetricsError::InvalidTrace(format!(
                "sample spacing {dt} must be > 0"
            )));
        }
        if trace.samples.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::InvalidTrace("non-finite sample".into()));
        }
        let tol = dt * T::lit(1e-6);
        if t0 + tol < trace.t_start || t0 > trace.t_end() + tol {
            return Err(MetricsError::InvalidTrace(format!(
                "event time {t0} outside [{}, {}]",
                trace.t_start,
                trace.t_end()
            )));
        }
        Ok(trace)
    }

    /// Builds a trace from explicit timestamps, which must be uniformly spaced.
    pub fn from_points(
        times: &[T],
        values: Vec<T>,
        t0: T,
        source: TraceSource,
    ) -> Result<Self, MetricsError> {
        if times.len() != values.len() {
            return Err(MetricsError::InvalidTrace(
                "time and value lengths differ".into(),
            ));
        }
        if times.len() < 2 {
            return Err(MetricsError::InvalidTrace("need at least 2 samples".into()));
        }
        let n = times.len();
        let dt = (times[n - 1] - times[0]) / T::from_count(n - 1);
        let tol = dt.abs() * T::lit(1e-3);
        for (k, &t) in times.iter().enumerate() {
            if (t - (times[0] + T::from_count(k) * dt)).abs() > tol {
                return Err(MetricsError::InvalidTrace(format!(
                    "non-uniform spacing at sample {k}"
                )));
            }
        }
        Self::new(times[0], dt, values, t0, source)
    }

    pub fn from_result(
        result: &SimulationResult<T>,
        channel: Channel,
    ) -> Result<Self, MetricsError> {
        let t_start = result.time.first().copied().unwrap_or_else(T::zero);
        Self::new(
            t_start,
            result.output_dt,
            result.channel(channel),
            result.t_event,
            TraceSource::Simulated,
        )
    }

    pub fn time(&self, k: usize) -> T {
        self.t_start + T::from_count(k) * self.dt
    }

    pub fn t_end(&self) -> T {
        self.time(self.samples.len() - 1)
    }

    fn tol(&self) -> T {
        self.dt * T::lit(1e-6)
    }

    /// Index of the first sample at or after `t`.
    fn index_at_or_after(&self, t: T) -> usize {
        let k = ((t - self.t_start) / self.dt - T::lit(1e-6)).ceil();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX)
        }
    }

    /// Same trace with time and event shifted by `dt_shift`.
    pub fn shifted(&self, dt_shift: T) -> Self {
        Self {
            t_start: self.t_start + dt_shift,
            t0: self.t0 + dt_shift,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nadir<T> {
    pub f_min: T,
    pub t_min: T,
}

/// Minimum sample at or after the event; ties resolve to the earliest.
pub fn nadir<T: Scalar>(trace: &FrequencyTrace<T>) -> Nadir<T> {
    let start = trace
        .index_at_or_after(trace.t0)
        .min(trace.samples.len() - 1);
    let mut best = start;
    for k in start..trace.samples.len() {
        if trace.samples[k] < trace.samples[best] {
            best = k;
        }
    }
    Nadir {
        f_min: trace.samples[best],
        t_min: trace.time(best),
    }
}

fn ls_slope<T: Scalar>(ys: &[T], dt: T) -> T {
    let n = T::from_count(ys.len());
    let xbar = T::from_count(ys.len() - 1) / T::lit(2.0);
    let ybar = ys.iter().fold(T::zero(), |s, &y| s + y) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (j, &y) in ys.iter().enumerate() {
        let dx = T::from_count(j) - xbar;
        sxy = sxy + dx * (y - ybar);
        sxx = sxx + dx * dx;
    }
    sxy / sxx / dt
}

/// Signed steepest windowed slope on the way from the event to the first
/// excursion's extreme, mHz/s. Windows past the excursion are skipped so a rebound
/// (after load shedding, say) is not mistaken for the initial decline.
pub fn rocof<T: Scalar>(trace: &FrequencyTrace<T>, window_s: T) -> Result<T, MetricsError> {
    let w = (window_s / trace.dt).round().to_usize().unwrap_or(0);
    if w < 2 {
        return Err(MetricsError::InvalidTrace(format!(
            "ROCOF window {window_s} s spans fewer than 2 sample intervals"
        )));
    }
    let first = trace.index_at_or_after(trace.t0);
    let limit = trace.t0 + T::lit(ROCOF_SEARCH_S) + trace.tol();
    // The first window sets the direction; the excursion is the extreme
    // sample in that direction.
    let mut peak = first;
    if first + w < trace.samples.len() {
        let down = ls_slope(&trace.samples[first..=first + w], trace.dt) < T::zero();
        let mut k = first;
        while k < trace.samples.len() && trace.time(k) <= limit {
            let (v, p) = (trace.samples[k], trace.samples[peak]);
            if (down && v < p) || (!down && v > p) {
                peak = k;
            }
            k += 1;
        }
    }
    let mut best: Option<T> = None;
    let mut i = first;
    while i + w < trace.samples.len() && trace.time(i + w) <= limit && (i == first || i + w <= peak)
    {
        let s = ls_slope(&trace.samples[i..=i + w], trace.dt);
        if best.is_none_or(|b| s.abs() > b.abs()) {
            best = Some(s);
        }
        i += 1;
    }
    best.map(|s| s * T::lit(1000.0))
        .ok_or(MetricsError::TooShort(window_s.as_f64()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingValues<T> {
    pub value_a: T,
    pub value_b: T,
    pub settling: T,
}

fn window_mean<T: Scalar>(
    trace: &FrequencyTrace<T>,
    from: T,
    to: T,
    include_end: bool,
) -> Option<T> {
    let tol = trace.tol();
    let (mut sum, mut n) = (T::zero(), 0usize);
    for (k, &v) in trace.samples.iter().enumerate() {
        let t = trace.time(k);
        let inside = t + tol >= from
            && if include_end {
                t <= to + tol
            } else {
                t + tol < to
            };
        if inside {
            sum = sum + v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / T::from_count(n))
}

/// Pre-event value A, post-event value B and settling frequency.
pub fn settling_and_values<T: Scalar>(
    trace: &FrequencyTrace<T>,
) -> Result<SettlingValues<T>, MetricsError> {
    let tol = trace.tol();
    let a_from = trace.t0 - T::lit(VALUE_A_PRE_S);
    let b_to = trace.t0 + T::lit(VALUE_B_END_S);
    if trace.t_start > a_from + tol || trace.t_end() + tol < b_to {
        return Err(MetricsError::InsufficientSpan);
    }
    let value_a =
        window_mean(trace, a_from, trace.t0, false).ok_or(MetricsError::InsufficientSpan)?;
    let value_b = window_mean(trace, trace.t0 + T::lit(VALUE_B_START_S), b_to, true)
        .ok_or(MetricsError::InsufficientSpan)?;
    Ok(SettlingValues {
        value_a,
        value_b,
        settling: value_b,
    })
}

/// MW per 0.1 Hz from a disturbance size and the A/B values.
pub fn nerc_response_from_values<T: Scalar>(
    delta_p_mw: T,
    value_a: T,
    value_b: T,
) -> Result<T, MetricsError> {
    let drop = value_a - value_b;
    if !(drop > T::zero()) {
        return Err(MetricsError::NoDecline(drop.as_f64()));
    }
    Ok(delta_p_mw / drop * T::lit(0.1))
}

pub fn nerc_frequency_response<T: Scalar>(
    trace: &FrequencyTrace<T>,
    delta_p_mw: T,
) -> Result<T, MetricsError> {
    let v = settling_and_values(trace)?;
    nerc_response_from_values(delta_p_mw, v.value_a, v.value_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub nadir_hz: T,
    pub t_nadir: T,
    pub rocof_mhz_per_s: T,
    pub settling_hz: T,
    pub value_a_hz: T,
    pub value_b_hz: T,
    pub nerc_response_mw_per_0p1hz: Option<T>,
}

impl<T: Scalar> MetricsReport<T> {
    /// All metrics of `trace`; the NERC figure is filled in when a
    /// disturbance size is given and the frequency actually declined.
    pub fn from_trace(
        trace: &FrequencyTrace<T>,
        delta_p_mw: Option<T>,
    ) -> Result<Self, MetricsError> {
        let n = nadir(trace);
        let r = rocof(trace, T::lit(ROCOF_WINDOW_S))?;
        let v = settling_and_values(trace)?;
        let nerc =
            delta_p_mw.and_then(|dp| nerc_response_from_values(dp, v.value_a, v.value_b).ok());
        Ok(Self {
            nadir_hz: n.f_min,
            t_nadir: n.t_min,
            rocof_mhz_per_s: r,
            settling_hz: v.settling,
            value_a_hz: v.value_a,
            value_b_hz: v.value_b,
            nerc_response_mw_per_0p1hz: nerc,
        })
    }

    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            (
                "Frequency Nadir (Hz)",
                format!("{:.4}", self.nadir_hz.as_f64()),
            ),
            ("Nadir Time (s)", format!("{:.2}", self.t_nadir.as_f64())),
            (
                "ROCOF (mHz/s)",
                format!("{:.1}", self.rocof_mhz_per_s.as_f64()),
            ),
            (
                "Settling Frequency (Hz)",
                format!("{:.4}", self.settling_hz.as_f64()),
            ),
            ("Value A (Hz)", format!("{:.4}", self.value_a_hz.as_f64())),
            ("Value B (Hz)", format!("{:.4}", self.value_b_hz.as_f64())),
        ];
        rows.push((
            "Frequency Response (MW/0.1Hz)",
            self.nerc_response_mw_per_0p1hz
                .map(|v| format!("{:.1}", v.as_f64()))
                .unwrap_or_else(|| "-".into()),
        ));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>12}\n"))
            .collect()
    }
}

/// Absolute simulated-vs-measured error per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mismatch<T> {
    pub nadir_hz: T,
    pub rocof_mhz_per_s: T,
    pub settling_hz: T,
}

pub fn mismatch_report<T: Scalar>(
    simulated: &MetricsReport<T>,
    measured: &MetricsReport<T>,
) -> Mismatch<T> {
    Mismatch {
        nadir_hz: (simulated.nadir_hz - measured.nadir_hz).abs(),
        rocof_mhz_per_s: (simulated.rocof_mhz_per_s - measured.rocof_mhz_per_s).abs(),
        settling_hz: (simulated.settling_hz - measured.settling_hz).abs(),
    }
}

/// Measurement / simulated / error rows for nadir, ROCOF and settling.
pub fn mismatch_table<T: Scalar>(
    label: &str,
    simulated: &MetricsReport<T>,
    measured: &MetricsReport<T>,
) -> String {
    let err = mismatch_report(simulated, measured);
    let rows = [
        (
            "Frequency Nadir (Hz)",
            measured.nadir_hz,
            simulated.nadir_hz,
            err.nadir_hz,
            4,
        ),
        (
            "ROCOF (mHz/s)",
            measured.rocof_mhz_per_s,
            simulated.rocof_mhz_per_s,
            err.rocof_mhz_per_s,
            1,
        ),
        (
            "Settling Frequency (Hz)",
            measured.settling_hz,
            simulated.settling_hz,
            err.settling_hz,
            4,
        ),
    ];
    let w = (label.chars().count() + 2).max(8);
    let mut out = format!(
        "{:<w$}{:<26}{:>13}{:>17}{:>10}\n",
        "", "Metric", "Measurement", "Simulated Value", "Error"
    );
    for (k, (name, m, s, e, p)) in rows.iter().enumerate() {
        let tag = if k == 0 { label } else { "" };
        out.push_str(&format!(
            "{:<w$}{:<26}{:>13.p$}{:>17.p$}{:>10.p$}\n",
            tag,
            name,
            m.as_f64(),
            s.as_f64(),
            e.as_f64(),
            p = *p
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compliance<T> {
    pub pass: bool,
    pub margin: T,
}

/// Compares a response against an obligation (`threshold` > 0).
pub fn compliance_check<T: Scalar>(response_mw_per_0p1hz: T, threshold: T) -> Compliance<T> {
    assert!(
        threshold > T::zero(),
        "compliance threshold must be positive"
    );
    Compliance {
        pass: response_mw_per_0p1hz >= threshold,
        margin: response_mw_per_0p1hz - threshold,
    }
}

/// Reads a delimited trace with a `time_s` column and a frequency column
/// (`frequency_hz` unless `column` names another, e.g. `f_north`).
pub fn read_trace_csv<T: Scalar>(
    text: &str,
    column: Option<&str>,
    t0: T,
) -> Result<FrequencyTrace<T>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| MetricsError::Parse(e.to_string()))?
        .clone();
    let want = column.unwrap_or("frequency_hz");
    let ti = headers
        .iter()
        .position(|h| h == "time_s")
        .ok_or_else(|| MetricsError::Parse("missing `time_s` column".into()))?;
    let fi = headers
        .iter()
        .position(|h| h == want)
        .ok_or_else(|| MetricsError::Parse(format!("missing `{want}` column")))?;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MetricsError::Parse(e.to_string()))?;
        let parse = |i: usize| -> Result<T, MetricsError> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .map(T::lit)
                .ok_or_else(|| MetricsError::Parse(format!("bad number on data row {}", line + 1)))
        };
        times.push(parse(ti)?);
        values.push(parse(fi)?);
    }
    FrequencyTrace::from_points(&times, values, t0, TraceSource::Measured)
}

/// Writes a trace in the two-column form accepted by [`read_trace_csv`].
pub fn write_trace_csv<T: Scalar>(trace: &FrequencyTrace<T>) -> String {
    let mut out = String::from("time_s,frequency_hz\n");
    for (k, v) in trace.samples.iter().enumerate() {
        out.push_str(&format!(
            "{:.6},{:.6}\n",
            trace.time(k).as_f64(),
            v.as_f64()
        ));
    }
    out
}
