//! SQL hardness estimation from keyword components.
//!
//! A query is tokenized, three component sums are taken over the keyword
//! tokens, and the sums are bucketed into easy / medium / hard / extra.
//!
//! | label  | comp1      | comp2 | other |
//! |--------|------------|-------|-------|
//! | easy   | ≤ 1        | = 0   | = 0   |
//! | medium | ≤ 1        | ≤ 2   | = 0   |
//! |        | ≤ 2        | ≤ 1   | = 0   |
//! | hard   | ≤ 2        | > 2   | = 0   |
//! |        | > 2 and ≤ 3| ≤ 2   | = 0   |
//! |        | ≤ 1        | = 0   | ≤ 1   |
//! | extra  | anything else             |
//!
//! Rows are tried top to bottom and the first match wins.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
    #[error("unterminated quoted identifier starting at byte {0}")]
    UnterminatedIdentifier(usize),
    #[error("empty SQL text")]
    Empty,
}

const KEYWORDS: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "COLLATE", "CREATE", "CROSS", "DELETE",
    "DESC", "DISTINCT", "DROP", "ELSE", "END", "ESCAPE", "EXCEPT", "EXISTS", "FILTER", "FROM", "FULL",
    "GLOB", "GROUP", "HAVING", "IN", "INNER", "INSERT", "INTERSECT", "INTO", "IS", "ISNULL", "JOIN",
    "LEFT", "LIKE", "LIMIT", "NATURAL", "NOT", "NOTNULL", "NULL", "OFFSET", "ON", "OR", "ORDER", "OUTER",
    "OVER", "PARTITION", "RECURSIVE", "REGEXP", "RIGHT", "SELECT", "SET", "TABLE", "THEN", "UNION",
    "UPDATE", "USING", "VALUES", "WHEN", "WHERE", "WINDOW", "WITH",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Uppercase keyword text; `GROUP BY` and `ORDER BY` are single tokens.
    Keyword(String),
    Identifier(String),
    Literal,
    Punctuation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
    /// Parenthesis nesting depth at the token.
    pub depth: usize,
}

impl Token {
    pub fn keyword(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Keyword(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SqlTokenStream {
    pub tokens: Vec<Token>,
}

impl SqlTokenStream {
    pub fn keywords(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().filter_map(Token::keyword)
    }

    pub fn keyword_count(&self, keyword: &str) -> usize {
        self.keywords().filter(|k| *k == keyword).count()
    }

    pub fn has_keyword(&self, keyword: &str) -> bool {
        self.keywords().any(|k| k == keyword)
    }

    /// `SELECT` tokens nested inside parentheses.
    pub fn subquery_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| t.depth > 0 && t.keyword() == Some("SELECT"))
            .count()
    }
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Tokenizes SQL text. String literals, quoted identifiers and comments never
/// yield keyword tokens.
pub fn tokenize_sql(sql: &str) -> Result<SqlTokenStream, LexError> {
    if sql.trim().is_empty() {
        return Err(LexError::Empty);
    }
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(sql.len(), |(b, _)| *b);
    let mut tokens: Vec<Token> = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;

    // Scans a quoted run closed by `close`, where a doubled `close` is an escape.
    let scan_quoted = |start: usize, close: char| -> Option<usize> {
        let mut j = start + 1;
        while j < chars.len() {
            if chars[j].1 == close {
                if chars.get(j + 1).map(|c| c.1) == Some(close) {
                    j += 2;
                    continue;
                }
                return Some(j + 1);
            }
            j += 1;
        }
        None
    };

    while i < chars.len() {
        let c = chars[i].1;
        let next = chars.get(i + 1).map(|c| c.1);
        let start = i;

        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && next == Some('-') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i].1 == '*' && chars.get(i + 1).map(|c| c.1) == Some('/')) {
                i += 1;
            }
            i = (i + 2).min(chars.len());
            continue;
        }

        let kind = if c == '\'' || ((c == 'x' || c == 'X') && next == Some('\'')) {
            let open = if c == '\'' { i } else { i + 1 };
            i = scan_quoted(open, '\'').ok_or(LexError::UnterminatedString(byte_at(start)))?;
            TokenKind::Literal
        } else if c == '"' || c == '`' {
            i = scan_quoted(i, c).ok_or(LexError::UnterminatedIdentifier(byte_at(start)))?;
            TokenKind::Identifier(sql[byte_at(start)..byte_at(i)].to_owned())
        } else if c == '[' {
            let close = chars[i..].iter().position(|x| x.1 == ']');
            let close = close.ok_or(LexError::UnterminatedIdentifier(byte_at(start)))?;
            i += close + 1;
            TokenKind::Identifier(sql[byte_at(start)..byte_at(i)].to_owned())
        } else if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            i += 1;
            while i < chars.len() {
                let d = chars[i].1;
                let exp_sign = (d == '+' || d == '-') && matches!(chars[i - 1].1, 'e' | 'E');
                if d.is_ascii_alphanumeric() || d == '.' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            TokenKind::Literal
        } else if is_word_start(c) {
            while i < chars.len() && is_word_char(chars[i].1) {
                i += 1;
            }
            let word = &sql[byte_at(start)..byte_at(i)];
            let upper = word.to_ascii_uppercase();
            if KEYWORDS.contains(&upper.as_str()) {
                TokenKind::Keyword(upper)
            } else {
                TokenKind::Identifier(word.to_owned())
            }
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().map(|c| c.1).collect();
            if matches!(two.as_str(), "<=" | ">=" | "<>" | "!=" | "||" | "==" | "<<" | ">>") {
                i += 2;
                TokenKind::Punctuation(two)
            } else {
                i += 1;
                TokenKind::Punctuation(c.to_string())
            }
        };

        let token_depth = depth;
        if let TokenKind::Punctuation(p) = &kind {
            match p.as_str() {
                "(" => depth += 1,
                ")" => depth = depth.saturating_sub(1),
                _ => {}
            }
        }

        // Fold `GROUP BY` / `ORDER BY` into one compound keyword.
        if let TokenKind::Keyword(k) = &kind {
            if k == "BY" {
                if let Some(prev) = tokens.last_mut() {
                    if matches!(prev.keyword(), Some("GROUP") | Some("ORDER")) {
                        let merged = format!("{} BY", prev.keyword().unwrap_or_default());
                        prev.kind = TokenKind::Keyword(merged);
                        prev.span = prev.span.start..byte_at(i);
                        continue;
                    }
                }
            }
        }

        tokens.push(Token { kind, span: byte_at(start)..byte_at(i), depth: token_depth });
    }

    Ok(SqlTokenStream { tokens })
}

pub const COMPONENT1_KEYWORDS: [&str; 7] = ["WHERE", "GROUP BY", "ORDER BY", "LIMIT", "JOIN", "OR", "LIKE"];
pub const COMPONENT2_KEYWORDS: [&str; 3] = ["EXCEPT", "UNION", "INTERSECT"];

/// How keyword families contribute to the component sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Each keyword contributes at most one (indicator semantics).
    #[default]
    Presence,
    /// Each occurrence of a keyword contributes one.
    Occurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub comp1: u32,
    pub comp2: u32,
    pub other: u32,
}

impl ComponentCounts {
    pub const fn new(comp1: u32, comp2: u32, other: u32) -> Self {
        ComponentCounts { comp1, comp2, other }
    }
}

pub fn component_counts(tokens: &SqlTokenStream, mode: CountMode) -> ComponentCounts {
    let family_sum = |family: &[&str]| -> u32 {
        family
            .iter()
            .map(|k| match mode {
                CountMode::Presence => tokens.has_keyword(k) as u32,
                CountMode::Occurrence => tokens.keyword_count(k) as u32,
            })
            .sum()
    };
    let other = ["SELECT", "WHERE", "GROUP BY"]
        .iter()
        .map(|k| (tokens.keyword_count(k) > 1) as u32)
        .sum();
    ComponentCounts { comp1: family_sum(&COMPONENT1_KEYWORDS), comp2: family_sum(&COMPONENT2_KEYWORDS), other }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extra,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::Extra];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extra => "extra",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown difficulty `{s}`"))
    }
}

pub fn classify(c: ComponentCounts) -> Difficulty {
    let ComponentCounts { comp1, comp2, other } = c;
    if comp1 <= 1 && comp2 == 0 && other == 0 {
        Difficulty::Easy
    } else if (comp1 <= 1 && comp2 <= 2 && other == 0) || (comp1 <= 2 && comp2 <= 1 && other == 0) {
        Difficulty::Medium
    } else if (comp1 <= 2 && comp2 > 2 && other == 0)
        || (comp1 > 2 && comp1 <= 3 && comp2 <= 2 && other == 0)
        || (comp1 <= 1 && comp2 == 0 && other <= 1)
    {
        Difficulty::Hard
    } else {
        Difficulty::Extra
    }
}

/// Tokenize, count and classify in one step.
pub fn classify_sql(sql: &str, mode: CountMode) -> Result<(ComponentCounts, Difficulty), LexError> {
    let counts = component_counts(&tokenize_sql(sql)?, mode);
    Ok((counts, classify(counts)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Construct {
    #[serde(rename = "GROUP BY")]
    GroupBy,
    #[serde(rename = "ORDER BY")]
    OrderBy,
    #[serde(rename = "JOIN")]
    Join,
    #[serde(rename = "Sub-Query")]
    SubQuery,
    #[serde(rename = "HAVING")]
    Having,
    #[serde(rename = "DISTINCT")]
    Distinct,
    #[serde(rename = "CASE")]
    Case,
    #[serde(rename = "WITH")]
    With,
}

impl Construct {
    pub const ALL: [Construct; 8] = [
        Construct::GroupBy,
        Construct::OrderBy,
        Construct::Join,
        Construct::SubQuery,
        Construct::Having,
        Construct::Distinct,
        Construct::Case,
        Construct::With,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Construct::GroupBy => "GROUP BY",
            Construct::OrderBy => "ORDER BY",
            Construct::Join => "JOIN",
            Construct::SubQuery => "Sub-Query",
            Construct::Having => "HAVING",
            Construct::Distinct => "DISTINCT",
            Construct::Case => "CASE",
            Construct::With => "WITH",
        }
    }

    pub fn present_in(self, tokens: &SqlTokenStream) -> bool {
        match self {
            Construct::SubQuery => tokens.subquery_count() > 0,
            other => tokens.has_keyword(other.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructUsage {
    pub construct: Construct,
    pub count: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxUsageStats {
    pub corpus_size: usize,
    /// Queries that failed to tokenize; they count towards the corpus but no construct.
    pub unlexable: usize,
    pub constructs: Vec<ConstructUsage>,
}

fn percentage(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Per-construct presence counts over a corpus of SQL strings.
pub fn syntax_usage<S: AsRef<str>>(corpus: &[S]) -> SyntaxUsageStats {
    let mut counts = [0usize; Construct::ALL.len()];
    let mut unlexable = 0;
    for sql in corpus {
        match tokenize_sql(sql.as_ref()) {
            Ok(tokens) => {
                for (slot, construct) in counts.iter_mut().zip(Construct::ALL) {
                    *slot += construct.present_in(&tokens) as usize;
                }
            }
            Err(_) => unlexable += 1,
        }
    }
    SyntaxUsageStats {
        corpus_size: corpus.len(),
        unlexable,
        constructs: Construct::ALL
            .into_iter()
            .zip(counts)
            .map(|(construct, count)| ConstructUsage { construct, count, percentage: percentage(count, corpus.len()) })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelShare {
    pub difficulty: Difficulty,
    pub count: usize,
    pub percentage: f64,
}

/// Count and percentage of each label, in `Easy..Extra` order.
pub fn difficulty_distribution(labels: &[Difficulty]) -> Vec<LabelShare> {
    Difficulty::ALL
        .into_iter()
        .map(|d| {
            let count = labels.iter().filter(|l| **l == d).count();
            LabelShare { difficulty: d, count, percentage: percentage(count, labels.len()) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(sql: &str) -> ComponentCounts {
        component_counts(&tokenize_sql(sql).unwrap(), CountMode::Presence)
    }

    #[test]
    fn literal_keywords_are_ignored() {
        let t = tokenize_sql("SELECT * FROM t WHERE note = 'ORDER BY'").unwrap();
        assert_eq!(t.keyword_count("ORDER BY"), 0);
        assert_eq!(t.keyword_count("WHERE"), 1);
        let t = tokenize_sql("SELECT \"order\" FROM t -- ORDER BY x\n/* UNION */").unwrap();
        assert!(!t.has_keyword("ORDER BY"));
        assert!(!t.has_keyword("UNION"));
    }

    #[test]
    fn compound_keywords_tolerate_whitespace() {
        let t = tokenize_sql("select a from t group   by a").unwrap();
        assert_eq!(t.keyword_count("GROUP BY"), 1);
        assert!(!t.has_keyword("GROUP"));
        let t = tokenize_sql("SELECT a FROM t ORDER\n\tBY a").unwrap();
        assert_eq!(t.keyword_count("ORDER BY"), 1);
    }

    #[test]
    fn subquery_depth() {
        let t = tokenize_sql("SELECT x FROM (SELECT x FROM t)").unwrap();
        assert_eq!(t.keyword_count("SELECT"), 2);
        assert_eq!(t.subquery_count(), 1);
    }

    #[test]
    fn join_variants_yield_join() {
        for sql in [
            "SELECT 1 FROM a LEFT JOIN b ON a.x = b.x",
            "SELECT 1 FROM a INNER JOIN b USING (x)",
            "SELECT 1 FROM a LEFT OUTER JOIN b ON 1",
            "SELECT 1 FROM a CROSS JOIN b",
        ] {
            assert_eq!(counts(sql).comp1, 1, "{sql}");
        }
    }

    #[test]
    fn word_boundaries() {
        // ORDER, ORIGIN and LIKELY are not OR / LIKE.
        let c = counts("SELECT origin, likely FROM orders ORDER BY origin");
        assert_eq!(c, ComponentCounts::new(1, 0, 0));
    }

    #[test]
    fn unbalanced_quote_is_an_error() {
        assert_eq!(tokenize_sql("SELECT 'abc"), Err(LexError::UnterminatedString(7)));
        assert!(matches!(tokenize_sql("SELECT \"abc"), Err(LexError::UnterminatedIdentifier(7))));
        assert_eq!(tokenize_sql("   "), Err(LexError::Empty));
    }

    #[test]
    fn escaped_quotes_and_blobs() {
        let t = tokenize_sql("SELECT 'it''s WHERE' , x'00ff' FROM t").unwrap();
        assert!(!t.has_keyword("WHERE"));
        assert_eq!(t.tokens.iter().filter(|t| t.kind == TokenKind::Literal).count(), 2);
    }

    #[test]
    fn component_examples() {
        assert_eq!(counts("SELECT a FROM t"), ComponentCounts::new(0, 0, 0));
        assert_eq!(counts("SELECT a FROM t WHERE x>1 GROUP BY a ORDER BY a"), ComponentCounts::new(3, 0, 0));
        assert_eq!(counts("SELECT a FROM t UNION SELECT a FROM u"), ComponentCounts::new(0, 1, 1));
    }

    #[test]
    fn occurrence_mode_counts_repeats() {
        let sql = "SELECT a FROM t UNION SELECT a FROM u UNION SELECT a FROM v WHERE x OR y OR z";
        let t = tokenize_sql(sql).unwrap();
        assert_eq!(component_counts(&t, CountMode::Presence), ComponentCounts::new(2, 1, 1));
        assert_eq!(component_counts(&t, CountMode::Occurrence), ComponentCounts::new(3, 2, 1));
    }

    #[test]
    fn classify_anchors() {
        assert_eq!(classify(ComponentCounts::new(0, 0, 0)), Difficulty::Easy);
        assert_eq!(classify(ComponentCounts::new(1, 0, 0)), Difficulty::Easy);
        assert_eq!(classify(ComponentCounts::new(2, 0, 0)), Difficulty::Medium);
        assert_eq!(classify(ComponentCounts::new(3, 0, 0)), Difficulty::Hard);
        assert_eq!(classify(ComponentCounts::new(4, 0, 0)), Difficulty::Extra);
        assert_eq!(classify(ComponentCounts::new(0, 3, 0)), Difficulty::Hard);
        assert_eq!(classify(ComponentCounts::new(0, 0, 1)), Difficulty::Hard);
        assert_eq!(classify(ComponentCounts::new(2, 0, 1)), Difficulty::Extra);
    }

    #[test]
    fn difficulty_order_and_parse() {
        assert!(Difficulty::Easy < Difficulty::Medium && Difficulty::Hard < Difficulty::Extra);
        assert_eq!("Hard".parse::<Difficulty>(), Ok(Difficulty::Hard));
        assert!("trivial".parse::<Difficulty>().is_err());
    }

    #[test]
    fn syntax_usage_counts_once_per_query() {
        let corpus = [
            "SELECT a, COUNT(*) FROM t GROUP BY a",
            "SELECT a FROM t GROUP BY a HAVING COUNT(*) > 1 ORDER BY a",
            "SELECT a FROM t WHERE a IN (SELECT a FROM u) GROUP BY a",
            "SELECT DISTINCT a FROM t",
        ];
        let stats = syntax_usage(&corpus);
        let get = |c: Construct| stats.constructs.iter().find(|u| u.construct == c).unwrap().clone();
        assert_eq!((get(Construct::GroupBy).count, get(Construct::GroupBy).percentage), (3, 75.0));
        assert_eq!(get(Construct::SubQuery).count, 1);
        assert_eq!((get(Construct::With).count, get(Construct::With).percentage), (0, 0.0));
        assert_eq!(get(Construct::Having).count, 1);
    }

    #[test]
    fn distribution_sums_to_corpus() {
        let labels = [Difficulty::Easy, Difficulty::Easy, Difficulty::Extra, Difficulty::Hard];
        let d = difficulty_distribution(&labels);
        assert_eq!(d.iter().map(|s| s.count).sum::<usize>(), 4);
        assert_eq!(d[0].percentage, 50.0);
        assert_eq!(d[1].count, 0);
    }
}
