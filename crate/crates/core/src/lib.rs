pub mod bits;
pub mod config;
pub mod flash;
pub mod halo;
pub mod metrics;
pub mod net;

// Runs the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/flash-model.md")]
    mod flash_model {}
    #[doc = include_str!("../../../book/src/enrollment.md")]
    mod enrollment {}
    #[doc = include_str!("../../../book/src/challenges.md")]
    mod challenges {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
