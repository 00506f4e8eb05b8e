//! Runs the pipeline on the built-in reference corpus and prints, per CAN ID,
//! the true layout next to the inferred one, followed by the scores.
//!
//! cargo run --release --example reference_corpus -- [seed] [duration_s]

use canslice::eval::{evaluate, inferred_from_document};
use canslice::pipeline::{infer, InferOptions};
use canslice::synth::{generate, SynthSpec};

fn initial(label: impl std::fmt::Debug) -> char {
    format!("{label:?}").chars().next().unwrap_or('?')
}

fn main() -> canslice::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut spec = SynthSpec::reference();
    if let Some(seed) = args.next() {
        spec.seed = seed.parse().expect("seed must be an integer");
    }
    if let Some(duration) = args.next() {
        spec.duration_s = duration.parse().expect("duration must be a number");
    }

    let corpus = generate(&spec)?;
    let inference = infer(&corpus.trace, None, &InferOptions::default())?;
    for m in &inference.document.messages {
        let truth = &corpus.truth.messages[&m.id()];
        let expected: Vec<String> = truth
            .signals
            .iter()
            .filter_map(|s| {
                let r = s.sequential_range()?;
                Some(format!(
                    "{}-{}{}",
                    r.start,
                    r.end,
                    s.category.map_or('?', initial)
                ))
            })
            .collect();
        let inferred: Vec<String> = m
            .slices
            .iter()
            .map(|s| {
                let name = s
                    .descriptive_label
                    .as_deref()
                    .map(|d| format!("({d})"))
                    .unwrap_or_default();
                format!("{}-{}{}{name}", s.m, s.n, s.label.map_or('?', initial))
            })
            .collect();
        println!(
            "{}\n  truth    {}\n  inferred {}",
            m.id(),
            expected.join(" "),
            inferred.join(" ")
        );
    }
    println!("eps0 = {:?}\n", inference.document.eps0);
    let report = evaluate(&inferred_from_document(&inference.document), &corpus.truth)?;
    print!("{}", report.to_table());
    Ok(())
}
