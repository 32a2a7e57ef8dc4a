//! Compiles every code block of the guide in `book/` and of the README as a
//! doc-test.

#[cfg(doctest)]
mod chapters {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/messages.md")]
    mod messages {}
    #[doc = include_str!("../../../book/src/forwarding.md")]
    mod forwarding {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_chapter_is_compiled() {
        let summary = include_str!("../../../book/src/SUMMARY.md");
        let this = include_str!("lib.rs");
        for line in summary.lines().filter(|l| l.contains("](")) {
            let file = line.split("](").nth(1).unwrap().trim_end_matches(')');
            assert!(this.contains(&format!("book/src/{file}\")")), "{file} is not compiled");
        }
    }
}
