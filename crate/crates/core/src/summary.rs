//! One-row-per-run CSV summaries of traces.

use crate::driver::Trace;

pub const SUMMARY_HEADER: &str = "problem,seed,termination,accepted_steps,total_rejections,\
subproblem_solves,final_prox_grad_norm,final_objective,objective_gap,wall_time_s";

/// Renders one CSV row per trace under a fixed header.
pub fn export_summary(traces: &[Trace]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for t in traces {
        let solves: usize = t.steps.iter().map(|s| s.rejections + 1).sum();
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.16e},{},{}\n",
            t.meta.problem,
            t.meta.seed,
            t.termination.as_str(),
            t.accepted_steps(),
            t.total_rejections(),
            solves,
            fmt_opt(t.final_prox_grad_norm()),
            t.final_objective,
            fmt_opt(t.objective_gap()),
            fmt_opt(t.wall_time),
        ));
    }
    out
}
