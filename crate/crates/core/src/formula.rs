//! Propositional formulas: syntax tree, parser, renderer and truth-table semantics.
//!
//! Accepted notation (whitespace is ignored):
//!
//! | connective | ascii            | unicode |
//! |------------|------------------|---------|
//! | not        | `~` `-`          | `¬`     |
//! | and        | `*` `&`          | `∧`     |
//! | or         | `+` `|`          | `∨`     |
//! | implies    | `>` `->`         | `→`     |
//! | iff        | `<>` `<->`       | `↔`     |
//!
//! Unparenthesized input binds `¬` tightest, then `∧`, `∨`, `→` and `↔`.
//! `→` and `↔` associate to the right, `∧` and `∨` to the left. Rendering
//! always parenthesizes every binary node, so `parse(render(f)) == f`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest number of distinct variables the truth-table oracle will enumerate.
pub const MAX_ORACLE_VARIABLES: usize = 20;

/// A propositional variable, one of the letters `A`..=`Z`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u8);

impl Var {
    pub fn new(letter: char) -> Option<Var> {
        letter
            .is_ascii_uppercase()
            .then(|| Var(letter as u8 - b'A'))
    }

    /// Variable by alphabet index (`0` is `A`).
    pub fn from_index(index: usize) -> Option<Var> {
        (index < 26).then(|| Var(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Operator kinds, used for weighting and for rule patterns.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Operator {
    Negation,
    Conjunction,
    Disjunction,
    Implication,
    Biconditional,
}

/// Abstract syntax tree of a propositional statement.
///
/// Equality is structural: `(A ∧ B)` and `(B ∧ A)` are different statements.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Var(Var),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

/// Output notation for [`Formula::render`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notation {
    #[default]
    Ascii,
    Unicode,
}

impl Formula {
    /// Variable node. Panics if `letter` is not an uppercase ASCII letter.
    pub fn var(letter: char) -> Formula {
        Formula::Var(Var::new(letter).expect("variable must be a letter A-Z"))
    }

    pub fn not(inner: Formula) -> Formula {
        Formula::Not(Box::new(inner))
    }

    pub fn and(left: Formula, right: Formula) -> Formula {
        Formula::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Formula, right: Formula) -> Formula {
        Formula::Or(Box::new(left), Box::new(right))
    }

    pub fn implies(antecedent: Formula, consequent: Formula) -> Formula {
        Formula::Implies(Box::new(antecedent), Box::new(consequent))
    }

    pub fn iff(left: Formula, right: Formula) -> Formula {
        Formula::Iff(Box::new(left), Box::new(right))
    }

    /// Build a binary node of the given kind. `Negation` is not binary and panics.
    pub fn binary(op: Operator, left: Formula, right: Formula) -> Formula {
        match op {
            Operator::Conjunction => Formula::and(left, right),
            Operator::Disjunction => Formula::or(left, right),
            Operator::Implication => Formula::implies(left, right),
            Operator::Biconditional => Formula::iff(left, right),
            Operator::Negation => panic!("negation is unary"),
        }
    }

    /// Root operator, or `None` for a variable.
    pub fn operator(&self) -> Option<Operator> {
        match self {
            Formula::Var(_) => None,
            Formula::Not(_) => Some(Operator::Negation),
            Formula::And(..) => Some(Operator::Conjunction),
            Formula::Or(..) => Some(Operator::Disjunction),
            Formula::Implies(..) => Some(Operator::Implication),
            Formula::Iff(..) => Some(Operator::Biconditional),
        }
    }

    /// Operands of a binary node.
    pub fn operands(&self) -> Option<(&Formula, &Formula)> {
        match self {
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) | Formula::Iff(l, r) => {
                Some((l, r))
            }
            _ => None,
        }
    }

    /// The negated formula, if this is a negation.
    pub fn negated(&self) -> Option<&Formula> {
        match self {
            Formula::Not(inner) => Some(inner),
            _ => None,
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Formula::Var(_) => 1,
            Formula::Not(inner) => 1 + inner.size(),
            _ => {
                let (l, r) = self.operands().unwrap();
                1 + l.size() + r.size()
            }
        }
    }

    /// Height of the tree; a variable has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Var(_) => 0,
            Formula::Not(inner) => 1 + inner.depth(),
            _ => {
                let (l, r) = self.operands().unwrap();
                1 + l.depth().max(r.depth())
            }
        }
    }

    pub fn render(&self, notation: Notation) -> String {
        let mut out = String::new();
        self.write_to(&mut out, notation);
        out
    }

    /// Canonical ascii rendering, used for keys and wire formats.
    pub fn ascii(&self) -> String {
        self.render(Notation::Ascii)
    }

    pub fn unicode(&self) -> String {
        self.render(Notation::Unicode)
    }

    fn write_to(&self, out: &mut String, notation: Notation) {
        match self {
            Formula::Var(v) => out.push(v.letter()),
            Formula::Not(inner) => {
                out.push_str(match notation {
                    Notation::Ascii => "~",
                    Notation::Unicode => "¬",
                });
                inner.write_to(out, notation);
            }
            _ => {
                let (l, r) = self.operands().unwrap();
                let glyph = match (self.operator().unwrap(), notation) {
                    (Operator::Conjunction, Notation::Ascii) => "*",
                    (Operator::Disjunction, Notation::Ascii) => "+",
                    (Operator::Implication, Notation::Ascii) => ">",
                    (Operator::Biconditional, Notation::Ascii) => "<>",
                    (Operator::Conjunction, Notation::Unicode) => "∧",
                    (Operator::Disjunction, Notation::Unicode) => "∨",
                    (Operator::Implication, Notation::Unicode) => "→",
                    (Operator::Biconditional, Notation::Unicode) => "↔",
                    (Operator::Negation, _) => unreachable!(),
                };
                out.push('(');
                l.write_to(out, notation);
                out.push(' ');
                out.push_str(glyph);
                out.push(' ');
                r.write_to(out, notation);
                out.push(')');
            }
        }
    }

    /// All distinct subtrees including `self`, in pre-order of first occurrence.
    pub fn subformulas(&self) -> Vec<Formula> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.collect_subformulas(&mut seen, &mut out);
        out
    }

    fn collect_subformulas<'a>(&'a self, seen: &mut BTreeSet<&'a Formula>, out: &mut Vec<Formula>) {
        if seen.insert(self) {
            out.push(self.clone());
        }
        match self {
            Formula::Var(_) => {}
            Formula::Not(inner) => inner.collect_subformulas(seen, out),
            _ => {
                let (l, r) = self.operands().unwrap();
                l.collect_subformulas(seen, out);
                r.collect_subformulas(seen, out);
            }
        }
    }

    /// Bitmask of the variables occurring in the formula (bit `i` = letter `i`).
    pub fn variable_mask(&self) -> u32 {
        match self {
            Formula::Var(v) => 1 << v.index(),
            Formula::Not(inner) => inner.variable_mask(),
            _ => {
                let (l, r) = self.operands().unwrap();
                l.variable_mask() | r.variable_mask()
            }
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        mask_to_vars(self.variable_mask())
    }

    /// Truth value under `valuation`, or `None` if some variable is unassigned.
    pub fn evaluate(&self, valuation: &Valuation) -> Option<bool> {
        if self.variable_mask() & !valuation.defined != 0 {
            return None;
        }
        Some(self.eval_bits(valuation.values))
    }

    /// Evaluate with `bits` giving the value of every letter; unassigned letters read as false.
    pub(crate) fn eval_bits(&self, bits: u32) -> bool {
        match self {
            Formula::Var(v) => bits & (1 << v.index()) != 0,
            Formula::Not(inner) => !inner.eval_bits(bits),
            Formula::And(l, r) => l.eval_bits(bits) && r.eval_bits(bits),
            Formula::Or(l, r) => l.eval_bits(bits) || r.eval_bits(bits),
            Formula::Implies(l, r) => !l.eval_bits(bits) || r.eval_bits(bits),
            Formula::Iff(l, r) => l.eval_bits(bits) == r.eval_bits(bits),
        }
    }
}

fn mask_to_vars(mask: u32) -> BTreeSet<Var> {
    (0..26)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| Var(i as u8))
        .collect()
}

impl fmt::Display for Formula {
    /// Ascii by default; the alternate flag (`{:#}`) selects unicode.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let notation = if f.alternate() {
            Notation::Unicode
        } else {
            Notation::Ascii
        };
        f.write_str(&self.render(notation))
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.unicode())
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Formula, ParseError> {
        parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.ascii())
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Formula, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A (partial) truth assignment over the letters `A`..=`Z`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Valuation {
    values: u32,
    defined: u32,
}

impl Valuation {
    pub fn new() -> Valuation {
        Valuation::default()
    }

    pub fn set(&mut self, var: Var, value: bool) {
        let bit = 1 << var.index();
        self.defined |= bit;
        if value {
            self.values |= bit;
        } else {
            self.values &= !bit;
        }
    }

    pub fn with(mut self, var: Var, value: bool) -> Valuation {
        self.set(var, value);
        self
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        let bit = 1 << var.index();
        (self.defined & bit != 0).then_some(self.values & bit != 0)
    }

    /// True if every variable of `formula` is assigned.
    pub fn covers(&self, formula: &Formula) -> bool {
        formula.variable_mask() & !self.defined == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("truth-table oracle supports at most {cap} variables, got {count}")]
    TooManyVariables { count: usize, cap: usize },
}

/// Enumerate every valuation of the variables in `premises` and `goal`; true iff
/// each valuation satisfying all premises also satisfies `goal`.
pub fn entails<'a, I>(premises: I, goal: &Formula) -> Result<bool, FormulaError>
where
    I: IntoIterator<Item = &'a Formula>,
{
    let premises: Vec<&Formula> = premises.into_iter().collect();
    let mask = premises
        .iter()
        .fold(goal.variable_mask(), |m, p| m | p.variable_mask());
    let letters: Vec<u32> = (0..26).filter(|i| mask & (1 << i) != 0).collect();
    if letters.len() > MAX_ORACLE_VARIABLES {
        return Err(FormulaError::TooManyVariables {
            count: letters.len(),
            cap: MAX_ORACLE_VARIABLES,
        });
    }
    for assignment in 0u32..(1 << letters.len()) {
        let bits = letters
            .iter()
            .enumerate()
            .filter(|(slot, _)| assignment & (1 << slot) != 0)
            .fold(0u32, |acc, (_, letter)| acc | (1 << letter));
        if premises.iter().all(|p| p.eval_bits(bits)) && !goal.eval_bits(bits) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Semantic equivalence by truth table.
pub fn equivalent(a: &Formula, b: &Formula) -> Result<bool, FormulaError> {
    Ok(entails([a], b)? && entails([b], a)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedEnd,
    UnexpectedToken(String),
    UnknownCharacter(char),
    UnbalancedParenthesis,
}

/// Parse failure at a character offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: {}", describe(.kind))]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Empty => "empty formula".into(),
        ParseErrorKind::UnexpectedEnd => "unexpected end of input".into(),
        ParseErrorKind::UnexpectedToken(t) => format!("unexpected token `{t}`"),
        ParseErrorKind::UnknownCharacter(c) => format!("unknown character `{c}`"),
        ParseErrorKind::UnbalancedParenthesis => "unbalanced parenthesis".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Var(Var),
    Not,
    And,
    Or,
    Implies,
    Iff,
    Open,
    Close,
}

impl Token {
    fn text(self) -> String {
        match self {
            Token::Var(v) => v.letter().to_string(),
            Token::Not => "~".into(),
            Token::And => "*".into(),
            Token::Or => "+".into(),
            Token::Implies => ">".into(),
            Token::Iff => "<>".into(),
            Token::Open => "(".into(),
            Token::Close => ")".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<(Vec<(usize, Token)>, usize), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let token = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            'A'..='Z' => Token::Var(Var::new(c).unwrap()),
            '~' | '¬' => Token::Not,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Token::Implies
            }
            '-' => Token::Not,
            '*' | '&' | '∧' => Token::And,
            '+' | '|' | '∨' => Token::Or,
            '>' | '→' => Token::Implies,
            '↔' => Token::Iff,
            '<' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Token::Iff
            }
            '<' if chars.get(i + 1) == Some(&'-') && chars.get(i + 2) == Some(&'>') => {
                i += 2;
                Token::Iff
            }
            '(' => Token::Open,
            ')' => Token::Close,
            other => {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::UnknownCharacter(other),
                })
            }
        };
        tokens.push((start, token));
        i += 1;
    }
    Ok((tokens, chars.len()))
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).map(|(_, t)| *t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind,
        }
    }

    fn biconditional(&mut self) -> Result<Formula, ParseError> {
        let left = self.implication()?;
        if self.peek() == Some(Token::Iff) {
            self.bump();
            let right = self.biconditional()?;
            return Ok(Formula::iff(left, right));
        }
        Ok(left)
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let left = self.disjunction()?;
        if self.peek() == Some(Token::Implies) {
            self.bump();
            let right = self.implication()?;
            return Ok(Formula::implies(left, right));
        }
        Ok(left)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.conjunction()?;
        while self.peek() == Some(Token::Or) {
            self.bump();
            left = Formula::or(left, self.conjunction()?);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while self.peek() == Some(Token::And) {
            self.bump();
            left = Formula::and(left, self.unary()?);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Token::Not) => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Some(Token::Var(v)) => {
                self.bump();
                Ok(Formula::Var(v))
            }
            Some(Token::Open) => {
                self.bump();
                let inner = self.biconditional()?;
                match self.peek() {
                    Some(Token::Close) => {
                        self.bump();
                        Ok(inner)
                    }
                    None => Err(self.error(ParseErrorKind::UnbalancedParenthesis)),
                    Some(t) => Err(self.error(ParseErrorKind::UnexpectedToken(t.text()))),
                }
            }
            Some(t) => Err(self.error(ParseErrorKind::UnexpectedToken(t.text()))),
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
        }
    }
}

/// Parse a formula written in ascii or unicode notation.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let (tokens, end) = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
    };
    let formula = parser.biconditional()?;
    match parser.peek() {
        None => Ok(formula),
        Some(Token::Close) => Err(parser.error(ParseErrorKind::UnbalancedParenthesis)),
        Some(t) => Err(parser.error(ParseErrorKind::UnexpectedToken(t.text()))),
    }
}
