use std::sync::LazyLock;

use regex::Regex;
use unicode_segmentation::UnicodeSegmentation;

pub const USER_TOKEN: &str = "USER";
pub const URL_TOKEN: &str = "URL";

// URLs are matched first so an `@` inside a URL is not taken as a mention.
static SENSITIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?P<url>(?:https?://|www\.)\S+)|(?P<user>@\w+)").expect("static regex")
});

/// Replace mentions and URLs with sentinels, split on Unicode word
/// boundaries (each punctuation mark is its own token) and lowercase every
/// token except the sentinels.
pub fn preprocess_text(raw: &str) -> Vec<String> {
    let replaced = SENSITIVE.replace_all(raw, |caps: &regex::Captures<'_>| {
        if caps.name("url").is_some() {
            format!(" {URL_TOKEN} ")
        } else {
            format!(" {USER_TOKEN} ")
        }
    });
    replaced
        .split_word_bounds()
        .filter(|seg| !seg.chars().all(char::is_whitespace))
        .map(|seg| {
            if seg == USER_TOKEN || seg == URL_TOKEN {
                seg.to_string()
            } else {
                seg.to_lowercase()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        preprocess_text(s)
    }

    #[test]
    fn mention_and_url() {
        assert_eq!(toks("@john check https://t.co/x"), ["USER", "check", "URL"]);
    }

    #[test]
    fn lowercase_and_punctuation() {
        assert_eq!(toks("ALL Lives Matter!"), ["all", "lives", "matter", "!"]);
    }

    #[test]
    fn empty() {
        assert!(toks("").is_empty());
        assert!(toks("   \t\n").is_empty());
    }

    #[test]
    fn www_and_repeated_mentions() {
        assert_eq!(
            toks("@a @b http://x www.Example.com/p?q=1"),
            ["USER", "USER", "URL", "URL"]
        );
    }

    #[test]
    fn each_punctuation_mark_is_a_token() {
        assert_eq!(toks("wow!!"), ["wow", "!", "!"]);
        assert_eq!(toks("Hi,there"), ["hi", ",", "there"]);
    }

    #[test]
    fn sentinels_never_collide_with_vocabulary() {
        // lowercase "user" typed by an author stays a normal word
        assert_eq!(toks("user Url"), ["user", "url"]);
    }

    #[test]
    fn bare_at_sign_is_kept() {
        assert_eq!(toks("meet @ noon"), ["meet", "@", "noon"]);
    }

    proptest! {
        #[test]
        fn idempotent(raw in "[ -~àéüß€😀\\t]{0,60}") {
            let once = preprocess_text(&raw);
            let twice = preprocess_text(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn output_is_lowercase_except_sentinels(raw in "\\PC{0,40}") {
            for t in preprocess_text(&raw) {
                if t != USER_TOKEN && t != URL_TOKEN {
                    prop_assert_eq!(t.to_lowercase(), t);
                }
            }
        }
    }
}
