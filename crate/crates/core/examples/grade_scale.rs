//! The eleven-letter grade scale and the metrics built on it.
//!
//! ```text
//! cargo run --example grade_scale
//! ```

use gradegraph::domain::Letter;
use gradegraph::metrics::{f1_at_risk, mae, pta, tick_error, AtRiskRule, AT_RISK_THRESHOLD};

fn main() -> gradegraph::Result<()> {
    println!("letter  value  ticks from B");
    for l in Letter::ALL {
        println!("{:<7} {:>5.2}  {:>2}", l.symbol(), l.value(), l.ticks(Letter::B));
    }

    let truths = [Letter::B, Letter::CPlus, Letter::A, Letter::D, Letter::C];
    let predictions = [3.1, 2.9, 3.5, 1.2, 2.4];
    let values: Vec<f64> = truths.iter().map(|l| l.value()).collect();

    println!("\ntruth  predicted  snapped  ticks");
    for (t, &p) in truths.iter().zip(&predictions) {
        println!("{:<6} {:>9.2}  {:<7}  {}", t.symbol(), p, Letter::nearest(p).symbol(), tick_error(*t, p));
    }
    let [p0, p1, p2] = pta(&truths, &predictions)?;
    let (f1, c) = f1_at_risk(&values, &predictions, AT_RISK_THRESHOLD, AtRiskRule::Inclusive)?;
    println!("\nMAE {:.4}", mae(&values, &predictions)?);
    println!("PTA0 {p0:.1}%  PTA1 {p1:.1}%  PTA2 {p2:.1}%");
    println!("at risk (≤ {AT_RISK_THRESHOLD}): TP {} FP {} FN {} TN {}, F1 {f1:.3}", c.tp, c.fp, c.fn_, c.tn);
    Ok(())
}
