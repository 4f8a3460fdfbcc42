//! The narrative guide, one module per chapter. Each page is included
//! verbatim from `book/src/`, so the rendered book and these docs are
//! the same bytes and `cargo test --doc` runs every code block the
//! book shows.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(overview, "overview.md");
chapter!(world, "world.md");
chapter!(clustering, "clustering.md");
chapter!(discovery, "discovery.md");
chapter!(replies, "replies.md");
chapter!(maintenance, "maintenance.md");
chapter!(baseline, "baseline.md");
chapter!(experiments, "experiments.md");
chapter!(determinism, "determinism.md");
