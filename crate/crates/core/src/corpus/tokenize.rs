/// Placeholder token for any maximal run of digits.
pub const DIGIT: &str = "<digit>";

/// Lowercases and splits on anything that is neither a letter nor a digit.
/// Letter runs and digit runs inside a word become separate tokens, and each
/// digit run collapses to [`DIGIT`].
pub fn tokenize(text: &str) -> Vec<String> {
    #[derive(PartialEq)]
    enum Run {
        None,
        Letters,
        Digits,
    }
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut run = Run::None;
    let flush = |current: &mut String, run: &Run, tokens: &mut Vec<String>| match run {
        Run::Letters => tokens.push(std::mem::take(current)),
        Run::Digits => {
            current.clear();
            tokens.push(DIGIT.to_string());
        }
        Run::None => {}
    };
    for ch in text.chars() {
        let kind = if ch.is_numeric() {
            Run::Digits
        } else if ch.is_alphabetic() {
            Run::Letters
        } else {
            Run::None
        };
        if kind != run {
            flush(&mut current, &run, &mut tokens);
            run = kind;
        }
        if run == Run::Letters {
            current.extend(ch.to_lowercase());
        }
    }
    flush(&mut current, &run, &mut tokens);
    tokens
}
