use batchalign::corpus::generate_synthetic_corpus;
use batchalign::dataset::{build_samples, Label};
use batchalign::prompting::render_prompt;

fn main() {
    let corpus = generate_synthetic_corpus(7, 60, 4, 12).unwrap();
    let groups = build_samples(&corpus, 11).unwrap();
    let pos = groups.iter().find(|g| g.key.label == Label::Positive).unwrap();
    let neg = groups.iter().find(|g| g.key.label == Label::Negative).unwrap();
    let lang = corpus.languages[0].clone();
    println!("=== POSITIVE ({}) ===\n{}", pos.key, render_prompt(&pos.members[&lang]).text);
    println!("=== NEGATIVE ({}) ===\n{}", neg.key, render_prompt(&neg.members[&lang]).text);
}
