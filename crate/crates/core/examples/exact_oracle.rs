//! Exact mutual-information pursuit over an empirical joint distribution.
//!
//! cargo run --release --example exact_oracle

use infopursuit::answers::synth_generate;
use infopursuit::exactip::{TabularJoint, DEFAULT_ALPHA, DEFAULT_EPSILON_STOP};
use infopursuit::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::informative(8, 0.3, 4);
    let (answers, labels) = synth_generate(&spec, 5000)?;
    let joint = TabularJoint::new(&answers, &labels, 0, DEFAULT_ALPHA)?;

    for report in 0..3 {
        let run = joint.run(answers.row(report), DEFAULT_EPSILON_STOP, 8)?;
        println!(
            "report {report} (label {}): prior P(y=1) = {:.3}",
            labels.get(report, 0),
            run.initial_posterior
        );
        for (step, mi) in run.trace.steps.iter().zip(&run.mi_per_step) {
            println!(
                "  {}. q{} = {:>2}  MI {:.4} nats  ->  P(y=1) = {:.3}",
                step.step,
                step.query_id,
                step.answer.value(),
                mi,
                step.posterior
            );
        }
        println!("  stop: {}, prediction {}", run.trace.stop_reason, run.trace.prediction);
    }
    Ok(())
}
