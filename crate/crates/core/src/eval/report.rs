//! Line-oriented text rendering of reports. JSON forms come from serde.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::evaluate::{AttackStats, EvalReport};
use super::lsim::{AngleReport, LsimReport};

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.4}%", 100.0 * x))
}

fn list(v: &[f64]) -> String {
    v.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(",")
}

pub fn render_eval(r: &EvalReport) -> String {
    let mut s = String::new();
    let c = &r.counts;
    let _ = writeln!(s, "variant    {}", r.variant);
    let _ = writeln!(s, "lambda     {}", r.lambda);
    let _ = writeln!(s, "mode       {}", serde_json::to_value(r.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
    let _ = writeln!(s, "pairs      {}", r.pairs);
    let _ = writeln!(s, "counts     tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_);
    let _ = writeln!(s, "far        {}", pct(r.far));
    let _ = writeln!(s, "frr        {}", pct(r.frr));
    let _ = writeln!(s, "f1         {}", opt(r.f1, 4));
    let _ = writeln!(s, "eer        {}", pct(r.eer));
    let entropy = r.entropy.map_or_else(
        || "-".to_string(),
        |e| format!("{:.2} bits{}", e.bits, if e.lower_bound { " (lower bound)" } else { "" }),
    );
    let _ = writeln!(s, "entropy    {entropy}");
    let _ = writeln!(s, "tau        {}", list(&r.tau_used));
    let caps: Vec<String> = r.capacities.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(s, "capacity   {}", caps.join(","));
    if let Some(a) = &r.attack_stats {
        s.push_str(&render_attack(a));
    }
    s
}

pub fn render_attack(a: &AttackStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "attack             {}", a.attack);
    let _ = writeln!(s, "references         {}", a.references);
    let _ = writeln!(s, "attempts/reference {}", a.attempts_per_reference);
    let _ = writeln!(s, "false accepts      {}", a.false_accepts);
    let _ = writeln!(s, "far                {}", pct(a.far));
    let _ = writeln!(s, "broken fraction    {}", opt(a.broken_fraction, 4));
    let _ = writeln!(s, "mean trials        {}", opt(a.mean_trials, 2));
    s
}

pub fn render_lsim(r: &LsimReport) -> String {
    let mut s = String::new();
    let g = serde_json::to_value(r.granularity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let _ = writeln!(s, "granularity {g}");
    let _ = writeln!(s, "lambda      {}", r.lambda);
    let _ = writeln!(s, "P1          {:.4}  (valid pairs: {})", r.p1, r.n_valid);
    let _ = writeln!(s, "P2          {:.4}  (invalid pairs: {})", r.p2, r.n_invalid);
    let _ = writeln!(s, "U           {}", r.u);
    let _ = writeln!(s, "p_value     {:.3e}{}", r.p_value, if r.exact_test { " (exact)" } else { "" });
    s
}

pub fn render_angle(r: &AngleReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "label    analytic  empirical  gap");
    let _ = writeln!(s, "valid    {:<9} {:<10} {}", opt(r.analytic_valid, 4), opt(r.empirical_valid, 4), opt(r.gap_valid, 4));
    let _ = writeln!(s, "invalid  {:<9} {:<10} {}", opt(r.analytic_invalid, 4), opt(r.empirical_invalid, 4), opt(r.gap_invalid, 4));
    s
}

/// One row of a trained-threshold table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub variant: String,
    pub lambda: usize,
    pub taus: Vec<f64>,
    pub mean_f1: Vec<f64>,
}

pub fn render_tau_table(rows: &[TauRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>6}  {:<40} mean F1", "variant", "lambda", "tau");
    for r in rows {
        let _ = writeln!(s, "{:<8} {:>6}  {:<40} {}", r.variant, r.lambda, list(&r.taus), list(&r.mean_f1));
    }
    s
}
