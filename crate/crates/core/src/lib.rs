//! Desk-scale sequential transfer learning for four-class emotion
//! classification of short messages: distant hashtag labeling, a micro
//! transformer / DAN encoder pair, masked-LM pretraining, frozen and
//! unfrozen adaptation, and an evaluation harness with benchmark
//! taxonomy mapping and fine-tuning-set-size ablations.

pub mod adapt;
pub mod autodiff;
pub mod bundle;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod pretrain;
pub mod synthetic;
pub mod tokenizer;

pub use error::{Error, Result};
