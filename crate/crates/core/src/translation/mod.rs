//! Parallel-corpus artifacts: source strings, word alignments, phrase
//! tables and language models.

pub mod ibm1;
pub mod lm;
pub mod phrases;
pub mod source;

pub use ibm1::{align_corpus, train_ibm1, Alignment, LexicalTable};
pub use lm::{estimate_lm, lm_logprob, NgramLm};
pub use phrases::{extract_phrases, PhraseEntry, PhraseTable};
pub use source::{sr_to_source, source_to_sr};
