// mdbook cannot run listings that depend on a workspace crate, so every
// chapter becomes the doc comment of an empty module and `cargo test --doc`
// runs the listings instead. One module per chapter keeps failures easy to
// place.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/preprocessing.md")]
pub mod preprocessing {}
#[doc = include_str!("src/network.md")]
pub mod network {}
#[doc = include_str!("src/quantization.md")]
pub mod quantization {}
#[doc = include_str!("src/train-on-request.md")]
pub mod train_on_request {}
#[doc = include_str!("src/continual-learning.md")]
pub mod continual_learning {}
#[doc = include_str!("src/data.md")]
pub mod data {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
