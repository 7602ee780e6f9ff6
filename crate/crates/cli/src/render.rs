//! Plain-text rendering of module results.

use std::fmt::Write as _;

use taiscan_core::corpus::{Corpus, UnitRef};
use taiscan_core::ragflow::{ArticleGroup, AssessmentResult};

fn titled(corpus: &Corpus, r: &UnitRef) -> String {
    corpus
        .get_unit(r)
        .map(|u| u.display_title())
        .unwrap_or_else(|_| r.heading())
}

pub fn assessment(result: &AssessmentResult, corpus: &Corpus) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Risk Level: {}", result.risk_level);
    for group in ArticleGroup::ALL {
        let refs = result.articles_in(group);
        let _ = writeln!(out, "\n{}:", group.label());
        if refs.is_empty() {
            out.push_str("  (none)\n");
        }
        for r in refs {
            let _ = writeln!(out, "  {}", titled(corpus, r));
        }
    }
    for (label, refs) in [("Recitals", &result.recitals), ("Annexes", &result.annexes)] {
        if !refs.is_empty() {
            let list: Vec<String> = refs.iter().map(|r| titled(corpus, r)).collect();
            let _ = writeln!(out, "\n{label}:\n  {}", list.join("\n  "));
        }
    }
    for w in &result.warnings {
        let _ = writeln!(out, "\nwarning: {w}");
    }
    let _ = writeln!(out, "\nprompt version: {}", result.prompt_version);
    if result.rewrite_fallback {
        out.push_str("note: query rewrite was empty; the composed query was used\n");
    }
    out
}
