//! English number verbalization: "forty two" style, no hyphens, no "and".

use serde::{Deserialize, Serialize};

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [&str; 7] = [
    "",
    "thousand",
    "million",
    "billion",
    "trillion",
    "quadrillion",
    "quintillion",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumberGrammar {
    /// Read "21st" as "twenty first".
    pub ordinals: bool,
    /// Read plausible years (1100-2099) as "nineteen ninety".
    pub years: bool,
}

impl Default for NumberGrammar {
    fn default() -> Self {
        NumberGrammar {
            ordinals: true,
            years: false,
        }
    }
}

fn below_thousand(n: u64, out: &mut Vec<&'static str>) {
    debug_assert!(n < 1000);
    let (h, rest) = (n / 100, n % 100);
    if h > 0 {
        out.push(ONES[h as usize]);
        out.push("hundred");
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 != 0 {
            out.push(ONES[(rest % 10) as usize]);
        }
    } else if rest > 0 {
        out.push(ONES[rest as usize]);
    }
}

/// Cardinal word form of `n`.
pub fn cardinal(n: u64) -> String {
    if n == 0 {
        return ONES[0].to_string();
    }
    let mut groups = Vec::new();
    let mut rest = n;
    while rest > 0 {
        groups.push(rest % 1000);
        rest /= 1000;
    }
    let mut words = Vec::new();
    for (scale, &g) in groups.iter().enumerate().rev() {
        if g == 0 {
            continue;
        }
        below_thousand(g, &mut words);
        if scale > 0 {
            words.push(SCALES[scale]);
        }
    }
    words.join(" ")
}

/// Turns the last word of a cardinal into its ordinal form.
pub fn ordinalize(cardinal_words: &str) -> String {
    let (head, last) = match cardinal_words.rfind(' ') {
        Some(i) => (&cardinal_words[..=i], &cardinal_words[i + 1..]),
        None => ("", cardinal_words),
    };
    let last = match last {
        "one" => "first".to_string(),
        "two" => "second".to_string(),
        "three" => "third".to_string(),
        "five" => "fifth".to_string(),
        "eight" => "eighth".to_string(),
        "nine" => "ninth".to_string(),
        "twelve" => "twelfth".to_string(),
        w if w.ends_with('y') => format!("{}ieth", &w[..w.len() - 1]),
        w => format!("{w}th"),
    };
    format!("{head}{last}")
}

/// Year reading for 1100..=2099, or `None` outside that range.
pub fn year(n: u64) -> Option<String> {
    if !(1100..=2099).contains(&n) {
        return None;
    }
    if (2000..2010).contains(&n) {
        return Some(cardinal(n));
    }
    let (hi, lo) = (n / 100, n % 100);
    Some(match lo {
        0 => format!("{} hundred", cardinal(hi)),
        1..=9 => format!("{} oh {}", cardinal(hi), cardinal(lo)),
        _ => format!("{} {}", cardinal(hi), cardinal(lo)),
    })
}

fn digitwise(digits: &str) -> String {
    digits
        .bytes()
        .map(|b| ONES[(b - b'0') as usize])
        .collect::<Vec<_>>()
        .join(" ")
}

struct NumberToken {
    end: usize,
    words: String,
}

/// Parses a number starting at `start` (an ASCII digit).
fn parse_number(chars: &[char], start: usize, grammar: NumberGrammar) -> NumberToken {
    let is_digit = |i: usize| chars.get(i).is_some_and(|c| c.is_ascii_digit());
    let mut i = start;
    while is_digit(i) {
        i += 1;
    }
    let mut integer: String = chars[start..i].iter().collect();
    let mut grouped = false;

    // Thousands separators: 1,000 or 12,345,678
    if integer.len() <= 3 && !integer.starts_with('0') {
        while chars.get(i) == Some(&',')
            && (1..=3).all(|k| is_digit(i + k))
            && !is_digit(i + 4)
        {
            integer.extend(&chars[i + 1..i + 4]);
            i += 4;
            grouped = true;
        }
    }

    let mut fraction = None;
    if chars.get(i) == Some(&'.') && is_digit(i + 1) {
        let mut j = i + 1;
        while is_digit(j) {
            j += 1;
        }
        fraction = Some(chars[i + 1..j].iter().collect::<String>());
        i = j;
    }

    let mut ordinal = false;
    if grammar.ordinals && fraction.is_none() {
        if let (Some(a), Some(b)) = (chars.get(i), chars.get(i + 1)) {
            let suffix: String = [a.to_ascii_lowercase(), b.to_ascii_lowercase()].iter().collect();
            let terminated = chars.get(i + 2).is_none_or(|c| !c.is_alphabetic());
            if matches!(suffix.as_str(), "st" | "nd" | "rd" | "th") && terminated {
                ordinal = true;
                i += 2;
            }
        }
    }

    let leading_zero = integer.len() > 1 && integer.starts_with('0');
    let value = if leading_zero {
        None
    } else {
        integer.parse::<u64>().ok()
    };
    let mut words = match value {
        Some(v) if grammar.years && !grouped && !ordinal && fraction.is_none() && integer.len() == 4 => {
            year(v).unwrap_or_else(|| cardinal(v))
        }
        Some(v) => cardinal(v),
        None => digitwise(&integer),
    };
    if let Some(f) = fraction {
        words.push_str(" point ");
        words.push_str(&digitwise(&f));
    }
    if ordinal {
        words = ordinalize(&words);
    }
    NumberToken { end: i, words }
}

/// Replaces every digit group with its word form. Words are separated from
/// adjacent letters by a single space; all other text is untouched.
pub fn verbalize(text: &str, grammar: NumberGrammar) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if !c.is_ascii_digit() {
            out.push(c);
            i += 1;
            continue;
        }
        let tok = parse_number(&chars, i, grammar);
        if out.chars().next_back().is_some_and(char::is_alphanumeric) {
            out.push(' ');
        }
        out.push_str(&tok.words);
        if chars.get(tok.end).is_some_and(|c| c.is_alphanumeric()) {
            out.push(' ');
        }
        i = tok.end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built reference for 0..=1000, assembled from spelled-out
    /// fragments rather than the lookup tables above.
    fn reference(n: u32) -> String {
        let units = "zero one two three four five six seven eight nine".split(' ').collect::<Vec<_>>();
        let teens = "ten eleven twelve thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
            .split(' ')
            .collect::<Vec<_>>();
        let tens = "twenty thirty forty fifty sixty seventy eighty ninety".split(' ').collect::<Vec<_>>();
        let two_digit = |m: u32| -> String {
            match m {
                0..=9 => units[m as usize].to_string(),
                10..=19 => teens[(m - 10) as usize].to_string(),
                _ if m.is_multiple_of(10) => tens[(m / 10 - 2) as usize].to_string(),
                _ => format!("{} {}", tens[(m / 10 - 2) as usize], units[(m % 10) as usize]),
            }
        };
        match n {
            1000 => "one thousand".to_string(),
            0..=99 => two_digit(n),
            _ if n.is_multiple_of(100) => format!("{} hundred", units[(n / 100) as usize]),
            _ => format!("{} hundred {}", units[(n / 100) as usize], two_digit(n % 100)),
        }
    }

    #[test]
    fn cardinals_agree_with_reference_table() {
        for n in 0..=1000u32 {
            assert_eq!(cardinal(n as u64), reference(n), "n = {n}");
        }
        // Spot checks written out by hand.
        assert_eq!(cardinal(42), "forty two");
        assert_eq!(cardinal(101), "one hundred one");
        assert_eq!(cardinal(110), "one hundred ten");
        assert_eq!(cardinal(999), "nine hundred ninety nine");
    }

    #[test]
    fn large_cardinals() {
        assert_eq!(cardinal(1_000_001), "one million one");
        assert_eq!(cardinal(35_042), "thirty five thousand forty two");
        assert_eq!(cardinal(2_000_000_000), "two billion");
        assert_eq!(
            cardinal(u64::MAX),
            "eighteen quintillion four hundred forty six quadrillion seven hundred forty four \
             trillion seventy three billion seven hundred nine million five hundred fifty one \
             thousand six hundred fifteen"
        );
    }

    #[test]
    fn ordinals() {
        let g = NumberGrammar::default();
        assert_eq!(verbalize("1st", g), "first");
        assert_eq!(verbalize("the 22nd day", g), "the twenty second day");
        assert_eq!(verbalize("3rd", g), "third");
        assert_eq!(verbalize("11th", g), "eleventh");
        assert_eq!(verbalize("12th", g), "twelfth");
        assert_eq!(verbalize("40th", g), "fortieth");
        assert_eq!(verbalize("100th", g), "one hundredth");
        // Suffix followed by letters is not an ordinal.
        assert_eq!(verbalize("5thing", g), "five thing");
    }

    #[test]
    fn text_examples() {
        let g = NumberGrammar::default();
        assert_eq!(verbalize("2 doses", g), "two doses");
        assert_eq!(verbalize("room 42", g), "room forty two");
        assert_eq!(verbalize("1000 personas", g), "one thousand personas");
        assert_eq!(verbalize("3.5 mg", g), "three point five mg");
        assert_eq!(verbalize("3.14", g), "three point one four");
        assert_eq!(verbalize("1,000 people", g), "one thousand people");
        assert_eq!(verbalize("12,345,678", g), "twelve million three hundred forty five thousand six hundred seventy eight");
        assert_eq!(verbalize("call 007", g), "call zero zero seven");
        assert_eq!(verbalize("COVID19", g), "COVID nineteen");
        assert_eq!(verbalize("end 3.", g), "end three.");
        assert_eq!(verbalize("-5", g), "-five");
        assert_eq!(verbalize("no digits here", g), "no digits here");
    }

    #[test]
    fn overlong_groups_read_digitwise() {
        let g = NumberGrammar::default();
        assert_eq!(
            verbalize("99999999999999999999", g),
            ["nine"; 20].join(" ")
        );
    }

    #[test]
    fn years_when_enabled() {
        let g = NumberGrammar {
            years: true,
            ..NumberGrammar::default()
        };
        assert_eq!(verbalize("in 1990", g), "in nineteen ninety");
        assert_eq!(verbalize("1905", g), "nineteen oh five");
        assert_eq!(verbalize("1900", g), "nineteen hundred");
        assert_eq!(verbalize("2005", g), "two thousand five");
        assert_eq!(verbalize("2024", g), "twenty twenty four");
        assert_eq!(verbalize("1000", g), "one thousand");
        assert_eq!(verbalize("1,990", g), "one thousand nine hundred ninety");
    }
}
