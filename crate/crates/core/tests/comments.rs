mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use secmine::comments::{comment_key, extract_comments, normalize_comment, ExtensionMap, LanguageProfile};

fn profiles() -> [(LanguageProfile, &'static str); 3] {
    [
        (LanguageProfile::php(), "src/a.php"),
        (LanguageProfile::javascript(), "web/app.js"),
        (LanguageProfile::shell(), "bin/run.sh"),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lexer_recovers_generated_comments(seed in any::<u64>(), which in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (profile, path) = &profiles()[which];
        let src = common::generate_source(&mut rng, profile, path);
        let got = extract_comments(&src.text, profile, path);
        prop_assert_eq!(got, src.expected, "source {:?}", src.text);
    }

    #[test]
    fn key_is_a_fixpoint(text in "[ \\t\\n*/#a-zA-Z]{0,40}") {
        for (marker, closer) in [("//", None), ("#", None), ("/*", Some("*/"))] {
            let key = comment_key(&text, marker, closer);
            prop_assert_eq!(comment_key(&key, marker, closer), key.clone());
            prop_assert_eq!(key.trim(), key.as_str());
            prop_assert!(!key.contains("  "));
        }
    }

    #[test]
    fn lexer_never_panics(text in "\\PC{0,80}") {
        for (profile, path) in profiles() {
            for c in extract_comments(&text, &profile, path) {
                prop_assert!(c.start_line <= c.end_line);
                prop_assert!(text.contains(c.text.as_str()));
            }
        }
    }
}

#[test]
fn markers_inside_strings_are_not_comments() {
    let php = LanguageProfile::php();
    let src = "<?php\n$u = \"http://x/#y\"; // TODO xss\n$s = '/* no */'; /* Hack\n * for ldap */\n";
    let keys: Vec<String> = extract_comments(src, &php, "a.php")
        .into_iter()
        .map(|c| normalize_comment(c).key)
        .collect();
    assert_eq!(keys, vec!["todo xss", "hack for ldap"]);
}

#[test]
fn extension_detection() {
    let map = ExtensionMap::default();
    assert_eq!(map.detect("lib/x.PHP").map(|p| p.name.as_str()), map.detect("lib/x.php").map(|p| p.name.as_str()));
    assert_eq!(map.detect("a/b.js").unwrap().name, "javascript");
    assert!(map.detect("README.md").is_none());
}
