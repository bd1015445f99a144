//! Trace records and their JSON-lines serialization.
//!
//! A trace file is one header line, one line per accepted step, and one end
//! line. Floats are written with 17 significant digits so that files round
//! trip bit-exactly; identical runs produce byte-identical files. Wall time
//! is kept in memory only and surfaces through the run summary instead.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::driver::SolverConfig;
use crate::error::{Error, Result};
use crate::problem::ConstantRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    PredZero,
    ProxGradSmall,
    ModelDecreaseSmall,
    MaxOuter,
    MaxRejections,
    Diverged,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::PredZero => "pred-zero",
            TerminationReason::ProxGradSmall => "prox-grad-small",
            TerminationReason::ModelDecreaseSmall => "model-decrease-small",
            TerminationReason::MaxOuter => "max-outer",
            TerminationReason::MaxRejections => "max-rejections",
            TerminationReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSummary {
    pub kkt_residual: f64,
    pub suboptimality: f64,
    pub iterations: usize,
    pub converged: bool,
    pub slow_path: bool,
}

/// One accepted outer step, including every rejected trial's `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub outer: usize,
    /// Scalar weight at acceptance.
    pub mu: f64,
    pub rejections: usize,
    pub rejected_mus: Vec<f64>,
    pub pred: f64,
    /// `pred - suboptimality`, the value used in the ratio test.
    pub pred_adjusted: f64,
    pub act: f64,
    pub rho: f64,
    pub accepted: bool,
    pub step_norm: f64,
    pub metric_step_norm: f64,
    pub prox_grad_norm: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub f_before: f64,
    pub f_after: f64,
    pub subproblem: SubproblemSummary,
    pub x_after: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub problem: String,
    pub seed: u64,
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub meta: TraceMeta,
    pub config: SolverConfig,
    pub constants: ConstantRegistry,
    pub x0: Vec<f64>,
    pub steps: Vec<StepReport>,
    pub termination: TerminationReason,
    pub final_point: Vec<f64>,
    pub final_objective: f64,
    /// Set when the model-decrease rule stopped the run.
    pub slope_bound: Option<f64>,
    /// Measured, not serialized.
    pub wall_time: Option<f64>,
}

impl Trace {
    pub fn accepted_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn total_rejections(&self) -> usize {
        self.steps.iter().map(|s| s.rejections).sum()
    }

    pub fn final_prox_grad_norm(&self) -> Option<f64> {
        self.steps.last().map(|s| s.prox_grad_norm)
    }

    /// Gap to a known optimal value, when the header carries one.
    pub fn objective_gap(&self) -> Option<f64> {
        self.meta.f_star.map(|f| self.final_objective - f)
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    kind: String,
    version: u32,
    meta: TraceMeta,
    config: SolverConfig,
    constants: ConstantRegistry,
    x0: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    kind: String,
    #[serde(flatten)]
    step: StepReport,
}

#[derive(Serialize, Deserialize)]
struct EndLine {
    kind: String,
    termination: TerminationReason,
    final_point: Vec<f64>,
    final_objective: f64,
    accepted_steps: usize,
    total_rejections: usize,
    slope_bound: Option<f64>,
}

/// serde_json formatter that prints every float with 17 significant digits.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value.serialize(&mut ser)?;
    String::from_utf8(out)
        .map_err(|e| Error::numerical(format!("trace serialization produced invalid utf8: {e}")))
}

/// Incremental JSON-lines writer: header first, then one step line per
/// accepted iteration (flushed immediately, so interrupted runs remain
/// parseable up to the last accepted step), then the end line.
pub struct TraceWriter<W: Write> {
    w: W,
    steps: usize,
    rejections: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(
        mut w: W,
        meta: &TraceMeta,
        config: &SolverConfig,
        constants: &ConstantRegistry,
        x0: &[f64],
    ) -> Result<Self> {
        let header = HeaderLine {
            kind: "header".into(),
            version: 1,
            meta: meta.clone(),
            config: config.clone(),
            constants: constants.clone(),
            x0: x0.to_vec(),
        };
        writeln!(w, "{}", to_json_line(&header)?)?;
        w.flush()?;
        Ok(TraceWriter {
            w,
            steps: 0,
            rejections: 0,
        })
    }

    pub fn step(&mut self, step: &StepReport) -> Result<()> {
        let line = StepLine {
            kind: "step".into(),
            step: step.clone(),
        };
        writeln!(self.w, "{}", to_json_line(&line)?)?;
        self.w.flush()?;
        self.steps += 1;
        self.rejections += step.rejections;
        Ok(())
    }

    pub fn finish(
        mut self,
        termination: TerminationReason,
        final_point: &[f64],
        final_objective: f64,
        slope_bound: Option<f64>,
    ) -> Result<()> {
        let end = EndLine {
            kind: "end".into(),
            termination,
            final_point: final_point.to_vec(),
            final_objective,
            accepted_steps: self.steps,
            total_rejections: self.rejections,
            slope_bound,
        };
        writeln!(self.w, "{}", to_json_line(&end)?)?;
        self.w.flush()?;
        Ok(())
    }
}

/// Writes the trace in JSON-lines form.
pub fn write_trace<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    let header = HeaderLine {
        kind: "header".into(),
        version: 1,
        meta: trace.meta.clone(),
        config: trace.config.clone(),
        constants: trace.constants.clone(),
        x0: trace.x0.clone(),
    };
    writeln!(w, "{}", to_json_line(&header)?)?;
    for step in &trace.steps {
        let line = StepLine {
            kind: "step".into(),
            step: step.clone(),
        };
        writeln!(w, "{}", to_json_line(&line)?)?;
    }
    let end = EndLine {
        kind: "end".into(),
        termination: trace.termination,
        final_point: trace.final_point.clone(),
        final_objective: trace.final_objective,
        accepted_steps: trace.accepted_steps(),
        total_rejections: trace.total_rejections(),
        slope_bound: trace.slope_bound,
    };
    writeln!(w, "{}", to_json_line(&end)?)?;
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    String::from_utf8(buf)
        .map_err(|e| Error::numerical(format!("trace serialization produced invalid utf8: {e}")))
}

/// Reads a possibly truncated JSON-lines trace (an interrupted run has a
/// header and some step lines but no end line). Returns the trace and
/// whether the end line was present; truncated traces get termination
/// `max-outer` as a placeholder and the last accepted iterate as the final
/// point.
pub fn read_trace_prefix<R: BufRead>(r: R) -> Result<(Trace, bool)> {
    read_trace_impl(r, true)
}

/// Reads a JSON-lines trace, reporting the 1-based line number on failure.
pub fn read_trace<R: BufRead>(r: R) -> Result<Trace> {
    read_trace_impl(r, false).map(|(trace, _)| trace)
}

fn read_trace_impl<R: BufRead>(r: R, allow_truncated: bool) -> Result<(Trace, bool)> {
    let mut header: Option<HeaderLine> = None;
    let mut steps: Vec<StepReport> = Vec::new();
    let mut end: Option<EndLine> = None;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::TraceParse {
                line: lineno,
                message: e.to_string(),
            })?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::TraceParse {
                line: lineno,
                message: "missing `kind` field".into(),
            })?
            .to_string();
        let fail = |e: serde_json::Error| Error::TraceParse {
            line: lineno,
            message: e.to_string(),
        };
        match kind.as_str() {
            "header" => header = Some(serde_json::from_value(value).map_err(fail)?),
            "step" => {
                let parsed: StepLine = serde_json::from_value(value).map_err(fail)?;
                steps.push(parsed.step);
            }
            "end" => end = Some(serde_json::from_value(value).map_err(fail)?),
            other => {
                return Err(Error::TraceParse {
                    line: lineno,
                    message: format!("unknown line kind `{other}`"),
                })
            }
        }
    }
    let header = header.ok_or_else(|| Error::TraceParse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let complete = end.is_some();
    let end = match end {
        Some(end) => end,
        None if allow_truncated => EndLine {
            kind: "end".into(),
            termination: TerminationReason::MaxOuter,
            final_point: steps
                .last()
                .map(|s| s.x_after.clone())
                .unwrap_or_else(|| header.x0.clone()),
            final_objective: steps.last().map(|s| s.f_after).unwrap_or(f64::NAN),
            accepted_steps: steps.len(),
            total_rejections: steps.iter().map(|s| s.rejections).sum(),
            slope_bound: None,
        },
        None => {
            return Err(Error::TraceParse {
                line: steps.len() + 1,
                message: "missing end line".into(),
            })
        }
    };
    Ok((
        Trace {
            meta: header.meta,
            config: header.config,
            constants: header.constants,
            x0: header.x0,
            steps,
            termination: end.termination,
            final_point: end.final_point,
            final_objective: end.final_objective,
            slope_bound: end.slope_bound,
            wall_time: None,
        },
        complete,
    ))
}

/// Per-step CSV table of a trace (fixed header row).
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from(
        "outer,mu,rejections,pred,act,rho,step_norm,metric_step_norm,prox_grad_norm,\
         sigma_min,sigma_max,f_before,f_after,kkt_residual,suboptimality,subproblem_iterations\n",
    );
    for s in &trace.steps {
        out.push_str(&format!(
            "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            s.outer,
            s.mu,
            s.rejections,
            s.pred,
            s.act,
            s.rho,
            s.step_norm,
            s.metric_step_norm,
            s.prox_grad_norm,
            s.sigma_min,
            s.sigma_max,
            s.f_before,
            s.f_after,
            s.subproblem.kkt_residual,
            s.subproblem.suboptimality,
            s.subproblem.iterations,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace() -> Trace {
        Trace {
            meta: TraceMeta {
                problem: "unit".into(),
                seed: 7,
                f_star: Some(0.0),
            },
            config: SolverConfig::default(),
            constants: ConstantRegistry {
                l_h: 0.0,
                beta_c: 0.0,
                beta_s: 1.0,
                l_s: 1.0,
                channel_lipschitz: vec![1.0],
                channel_gradient_lipschitz: vec![None],
                linearizable: vec![],
                l_r: 1.0,
                beta_r: 0.0,
                l_upper: 1.0,
                l_lower: 1.0,
                curvature_cap: 1.0,
            },
            x0: vec![2.0],
            steps: vec![StepReport {
                outer: 0,
                mu: 1.0,
                rejections: 1,
                rejected_mus: vec![0.5],
                pred: 2.0,
                pred_adjusted: 2.0 - 1e-17,
                act: 2.0,
                rho: 1.0,
                accepted: true,
                step_norm: 2.0,
                metric_step_norm: 2.0,
                prox_grad_norm: 2.0,
                sigma_min: 1.0,
                sigma_max: 1.0,
                f_before: 2.0,
                f_after: 0.0,
                subproblem: SubproblemSummary {
                    kkt_residual: 1e-12,
                    suboptimality: 5e-25,
                    iterations: 30,
                    converged: true,
                    slow_path: false,
                },
                x_after: vec![0.0],
            }],
            termination: TerminationReason::PredZero,
            final_point: vec![0.0],
            final_objective: 0.0,
            slope_bound: None,
            wall_time: Some(0.001),
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let trace = tiny_trace();
        let text = trace_to_string(&trace).unwrap();
        let parsed = read_trace(text.as_bytes()).unwrap();
        assert_eq!(parsed.steps, trace.steps);
        assert_eq!(parsed.termination, trace.termination);
        assert_eq!(parsed.config, trace.config);
        assert_eq!(parsed.constants, trace.constants);
        // floats survive the 17-significant-digit form bit-exactly
        assert_eq!(parsed.steps[0].pred_adjusted, trace.steps[0].pred_adjusted);
        // re-serialization is byte-identical
        assert_eq!(trace_to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn truncated_trace_keeps_its_prefix() {
        let trace = tiny_trace();
        let text = trace_to_string(&trace).unwrap();
        // drop the end line, as an interrupted run would
        let cut = text.rfind("{\"kind\":\"end\"").unwrap();
        let truncated = &text[..cut];
        assert!(read_trace(truncated.as_bytes()).is_err());
        let (partial, complete) = read_trace_prefix(truncated.as_bytes()).unwrap();
        assert!(!complete);
        assert_eq!(partial.steps, trace.steps);
        assert_eq!(partial.final_point, trace.steps.last().unwrap().x_after);
    }

    #[test]
    fn parse_error_names_line() {
        let trace = tiny_trace();
        let mut text = trace_to_string(&trace).unwrap();
        text.insert_str(text.find('\n').unwrap() + 1, "{broken\n");
        match read_trace(text.as_bytes()) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let trace = tiny_trace();
        let csv = trace_to_csv(&trace);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("outer,"));
    }
}
