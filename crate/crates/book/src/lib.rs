//! Runs the guide's code listings as doc-tests. Each chapter is a module so a
//! failure points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/input-data.md")]
pub mod input_data {}
#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod preprocessing {}
#[doc = include_str!("../../../book/src/stations.md")]
pub mod stations {}
#[doc = include_str!("../../../book/src/isolation-forest.md")]
pub mod isolation_forest {}
#[doc = include_str!("../../../book/src/spi.md")]
pub mod spi {}
#[doc = include_str!("../../../book/src/impact.md")]
pub mod impact {}
#[doc = include_str!("../../../book/src/alignment.md")]
pub mod alignment {}
#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
