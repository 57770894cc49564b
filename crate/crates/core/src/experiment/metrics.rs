use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const METRICS_HEADER: &str = "round,selected,gammas,train_loss,val_accuracy,wall_ms";

/// Per-round summary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round_index: usize,
    /// Empty for centralized runs.
    pub selected_ids: Vec<u32>,
    /// Normalized importance weight of every client, by client id.
    pub gammas: Vec<f64>,
    pub train_loss: f64,
    /// Accuracy of the composed global model on the held-out split.
    pub val_accuracy: f64,
    pub wall_ms: u64,
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

pub fn metrics_csv(reports: &[RoundReport]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round_index,
            join(&r.selected_ids, |id| id.to_string()),
            join(&r.gammas, |g| format_sig6(*g)),
            format_sig6(r.train_loss),
            format_sig6(r.val_accuracy),
            r.wall_ms
        )
        .unwrap();
    }
    out
}

pub fn emit_metrics(reports: &[RoundReport], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, metrics_csv(reports))?;
    Ok(())
}
