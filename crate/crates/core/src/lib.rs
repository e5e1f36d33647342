pub mod cli;
pub mod composer;
pub mod decomposer;
pub mod evaluator;
pub mod http;
pub mod jsonl;
pub mod lexicon;
pub mod parse;
pub mod pool;
pub mod progressive;
pub mod protocol;
pub mod scene_graph;
