//! Output formats: JSON for single solves, versioned CSV for tables.
//!
//! Floats carry 12 significant digits in both formats.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::Value;

use crate::analytic::{bowen_asymptotic, classical_capacity, gordon_asymptotic, heterodyne_capacity, homodyne_capacity, PhotonBudget};
use crate::ba::CapacityResult;
use crate::channel::Transmission;
use crate::continuous::PoissonCapacity;
use crate::experiments::{PriorProfile, SweepRecord};

pub const SWEEP_SCHEMA: &str = "photon-capacity/sweep/v1";
pub const PRIOR_SCHEMA: &str = "photon-capacity/prior/v1";
pub const ANALYTIC_SCHEMA: &str = "photon-capacity/analytic/v1";
pub const CAPACITY_SCHEMA: &str = "photon-capacity/capacity/v1";

/// Columns of the sweep CSV, in order. They follow [`SweepRecord`].
pub const SWEEP_COLUMNS: [&str; 16] = [
    "eta",
    "nbar",
    "output_mean",
    "c_fock",
    "fock_gap",
    "c_poisson",
    "r_negbin",
    "r_star",
    "c_hom",
    "c_het",
    "c_classical",
    "bowen",
    "gordon",
    "fock_converged",
    "poisson_converged",
    "errors",
];

/// Priors longer than this are summarized unless the full vector is asked
/// for.
pub const PRIOR_SUMMARY_LEN: usize = 16;

/// `printf("%.12g")`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_g(x).parse().unwrap_or(x)
    } else {
        x
    }
}

/// Serialize to JSON with every float rounded to 12 significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Value {
    let mut v = serde_json::to_value(value).expect("serializable report");
    round_floats(&mut v);
    v
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Short description of a prior: size, head, and the largest entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorSummary {
    pub support_size: usize,
    pub mean: f64,
    /// `(value, probability)` for the first symbols.
    pub head: Vec<(f64, f64)>,
    /// `(value, probability)` for the heaviest symbols, heaviest first.
    pub heaviest: Vec<(f64, f64)>,
}

impl PriorSummary {
    pub fn new(values: &[f64], probs: &[f64]) -> Self {
        let pairs: Vec<(f64, f64)> = values.iter().copied().zip(probs.iter().copied()).collect();
        let mut heaviest = pairs.clone();
        heaviest.sort_by(|a, b| b.1.total_cmp(&a.1));
        heaviest.truncate(PRIOR_SUMMARY_LEN);
        Self {
            support_size: pairs.len(),
            mean: pairs.iter().map(|(v, p)| v * p).sum(),
            head: pairs.iter().copied().take(PRIOR_SUMMARY_LEN).collect(),
            heaviest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PriorReport {
    Summary(PriorSummary),
    Full { values: Vec<f64>, probs: Vec<f64> },
}

impl PriorReport {
    pub fn new(values: &[f64], probs: &[f64], full: bool) -> Self {
        if full {
            PriorReport::Full {
                values: values.to_vec(),
                probs: probs.to_vec(),
            }
        } else {
            PriorReport::Summary(PriorSummary::new(values, probs))
        }
    }
}

/// JSON body of a single capacity solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub schema: &'static str,
    pub kind: &'static str,
    pub rate_bits: f64,
    pub gap_bits: f64,
    pub upper_bound_bits: f64,
    pub iterations: usize,
    pub converged: bool,
    pub multiplier: f64,
    pub mean_constraint_residual: f64,
    pub prior: PriorReport,
}

impl CapacityReport {
    pub fn fock(r: &CapacityResult, full_prior: bool) -> Self {
        Self::build("fock", r, full_prior)
    }

    pub fn poisson(p: &PoissonCapacity, full_prior: bool) -> Self {
        Self::build("poisson", &p.capacity, full_prior)
    }

    fn build(kind: &'static str, r: &CapacityResult, full_prior: bool) -> Self {
        Self {
            schema: CAPACITY_SCHEMA,
            kind,
            rate_bits: r.rate_bits,
            gap_bits: r.gap_bits,
            upper_bound_bits: r.upper_bound_bits(),
            iterations: r.iterations,
            converged: r.converged,
            multiplier: r.multiplier,
            mean_constraint_residual: r.mean_constraint_residual,
            prior: PriorReport::new(r.prior.values(), r.prior.probs(), full_prior),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

fn csv_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

/// Lines starting with `#` before the header: the schema tag, then any
/// extra metadata such as the run configuration.
fn preamble<W: Write>(out: &mut W, schema: &str, meta: &[(&str, String)]) -> io::Result<()> {
    writeln!(out, "# schema: {schema}")?;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    Ok(())
}

/// Sweep table. Missing solver outputs are empty fields; `errors` joins the
/// per-cell messages with `"; "`.
pub fn write_sweep_csv<W: Write>(mut out: W, records: &[SweepRecord], meta: &[(&str, String)]) -> io::Result<()> {
    preamble(&mut out, SWEEP_SCHEMA, meta)?;
    let mut w = csv_writer(out);
    w.write_record(SWEEP_COLUMNS).map_err(csv_io)?;
    for r in records {
        w.write_record([
            fmt_g(r.eta),
            fmt_g(r.nbar),
            fmt_g(r.output_mean),
            opt(r.c_fock),
            opt(r.fock_gap),
            opt(r.c_poisson),
            opt(r.r_negbin),
            opt(r.r_star),
            fmt_g(r.c_hom),
            fmt_g(r.c_het),
            fmt_g(r.c_classical),
            opt(r.bowen),
            opt(r.gordon),
            r.fock_converged.to_string(),
            r.poisson_converged.to_string(),
            r.errors.join("; "),
        ])
        .map_err(csv_io)?;
    }
    w.flush()
}

/// Prior profile table, one row per photon number. `p_0` repeats on every
/// row so that the column can be read alone; the tail maxima are also
/// listed in the preamble.
pub fn write_prior_csv<W: Write>(mut out: W, profile: &PriorProfile, meta: &[(&str, String)]) -> io::Result<()> {
    let maxima: Vec<String> = profile.tail_maxima.iter().map(|k| k.to_string()).collect();
    let mut all_meta = meta.to_vec();
    all_meta.push(("rate_bits", fmt_g(profile.rate_bits)));
    all_meta.push(("gap_bits", fmt_g(profile.gap_bits)));
    all_meta.push(("converged", profile.converged.to_string()));
    all_meta.push(("tail_maxima", maxima.join(" ")));
    preamble(&mut out, PRIOR_SCHEMA, &all_meta)?;
    let mut w = csv_writer(out);
    w.write_record(["k", "p_k", "p_0", "tail_maximum"]).map_err(csv_io)?;
    let p0 = fmt_g(profile.p0);
    for (k, &p) in profile.probs.iter().enumerate() {
        let is_max = profile.tail_maxima.binary_search(&k).is_ok();
        w.write_record([k.to_string(), fmt_g(p), p0.clone(), is_max.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()
}

/// Closed-form baselines for one `(eta, nbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticRow {
    pub eta: f64,
    pub nbar: f64,
    pub output_mean: f64,
    pub c_classical: f64,
    pub c_hom: f64,
    pub c_het: f64,
    pub bowen: Option<f64>,
    pub gordon: Option<f64>,
}

impl AnalyticRow {
    pub fn new(eta: Transmission, nbar: PhotonBudget) -> Self {
        Self {
            eta: eta.value(),
            nbar: nbar.value(),
            output_mean: eta.value() * nbar.value(),
            c_classical: classical_capacity(eta, nbar),
            c_hom: homodyne_capacity(eta, nbar),
            c_het: heterodyne_capacity(eta, nbar),
            bowen: bowen_asymptotic(eta, nbar).ok(),
            gordon: gordon_asymptotic(eta, nbar).ok(),
        }
    }
}

pub fn write_analytic_csv<W: Write>(mut out: W, rows: &[AnalyticRow], meta: &[(&str, String)]) -> io::Result<()> {
    preamble(&mut out, ANALYTIC_SCHEMA, meta)?;
    let mut w = csv_writer(out);
    w.write_record(["eta", "nbar", "output_mean", "c_classical", "c_hom", "c_het", "bowen", "gordon"])
        .map_err(csv_io)?;
    for r in rows {
        w.write_record([
            fmt_g(r.eta),
            fmt_g(r.nbar),
            fmt_g(r.output_mean),
            fmt_g(r.c_classical),
            fmt_g(r.c_hom),
            fmt_g(r.c_het),
            opt(r.bowen),
            opt(r.gordon),
        ])
        .map_err(csv_io)?;
    }
    w.flush()
}

/// Single-solve CSV: one row of scalars, then `value,probability` rows of
/// the prior.
pub fn write_capacity_csv<W: Write>(mut out: W, report: &CapacityReport, values: &[f64], probs: &[f64], meta: &[(&str, String)]) -> io::Result<()> {
    let mut all_meta = meta.to_vec();
    all_meta.push(("kind", report.kind.to_string()));
    all_meta.push(("rate_bits", fmt_g(report.rate_bits)));
    all_meta.push(("gap_bits", fmt_g(report.gap_bits)));
    all_meta.push(("iterations", report.iterations.to_string()));
    all_meta.push(("converged", report.converged.to_string()));
    preamble(&mut out, CAPACITY_SCHEMA, &all_meta)?;
    let mut w = csv_writer(out);
    w.write_record(["value", "probability"]).map_err(csv_io)?;
    for (v, p) in values.iter().zip(probs) {
        w.write_record([fmt_g(*v), fmt_g(*p)]).map_err(csv_io)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_g(2.0), "2");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(6.372746054), "6.372746054");
        assert_eq!(fmt_g(1234567.891234567), "1234567.89123");
        assert_eq!(fmt_g(1e-5), "1e-05");
        assert_eq!(fmt_g(1.5e-4), "0.00015");
        assert_eq!(fmt_g(1e12), "1e+12");
        assert_eq!(fmt_g(999999999999.9), "1e+12");
        assert_eq!(fmt_g(-0.5), "-0.5");
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }

    #[test]
    fn rounded_json_keeps_twelve_digits() {
        let v = to_rounded_json(&vec![1.0 / 3.0, 2.0]);
        assert_eq!(v.to_string(), "[0.333333333333,2.0]");
    }

    #[test]
    fn sweep_header_matches_record_fields() {
        let rec = SweepRecord {
            eta: 0.5,
            nbar: 2.0,
            output_mean: 1.0,
            c_fock: None,
            fock_gap: None,
            c_poisson: Some(0.8),
            r_negbin: None,
            r_star: None,
            c_hom: 1.0,
            c_het: 1.0,
            c_classical: 2.0,
            bowen: None,
            gordon: None,
            fock_converged: false,
            poisson_converged: true,
            errors: vec!["a, b".into()],
        };
        let fields: Vec<String> = match serde_json::to_value(&rec).unwrap() {
            Value::Object(o) => o.keys().cloned().collect(),
            _ => unreachable!(),
        };
        let mut sorted_cols: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
        sorted_cols.sort();
        let mut sorted_fields = fields;
        sorted_fields.sort();
        assert_eq!(sorted_cols, sorted_fields);

        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[rec], &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# schema: {SWEEP_SCHEMA}"));
        assert_eq!(lines[1], SWEEP_COLUMNS.join(","));
        assert_eq!(lines[2], "0.5,2,1,,,0.8,,,1,1,2,,,false,true,\"a, b\"");
    }
}
