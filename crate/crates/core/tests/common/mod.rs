#![allow(dead_code)]

pub mod oracles;

use motion_compose::dataset::{extract_pairs, synth_corpus, ActionPair, CorpusConfig};
use motion_compose::model::{prepare_items, training_stats, Model, ModelConfig, ModelKind, TrainItem};
use motion_compose::text::Vocabulary;

pub fn small_pairs(sequences: usize, seed: u64) -> Vec<ActionPair> {
    let cfg = CorpusConfig { sequences, seed, ..CorpusConfig::default() };
    synth_corpus(&cfg).unwrap().iter().flat_map(|r| extract_pairs(r).unwrap()).collect()
}

pub fn vocab_of(pairs: &[ActionPair]) -> Vocabulary {
    let texts: Vec<String> = pairs.iter().flat_map(|p| [p.text_1.clone(), p.text_2.clone()]).collect();
    Vocabulary::build(&texts).unwrap()
}

pub fn model_for(kind: ModelKind, config: ModelConfig, pairs: &[ActionPair], init_seed: u64) -> (Model, Vec<TrainItem>) {
    let vocab = vocab_of(pairs);
    let stats = training_stats(kind, pairs).unwrap();
    let items = prepare_items(kind, pairs, &vocab, &stats).unwrap();
    let skeleton = pairs[0].motion_1.skeleton().clone();
    let model = Model::new(kind, config, vocab, stats, skeleton, 30.0, init_seed).unwrap();
    (model, items)
}
