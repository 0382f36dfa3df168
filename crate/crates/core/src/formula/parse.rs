//! Recursive-descent parser for the formula grammar.

use crate::error::{Error, Result};

use super::{FormulaAst, RandomEffectTerm, Term, Transform};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Tilde,
    Plus,
    Minus,
    Star,
    Colon,
    Caret,
    Pipe,
    LParen,
    RParen,
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            ':' => Tok::Colon,
            '^' => Tok::Caret,
            '|' => Tok::Pipe,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    j += 1;
                }
                let v: u64 = text[i..j]
                    .parse()
                    .map_err(|_| Error::parse(start, "invalid number"))?;
                i = j;
                toks.push((Tok::Int(v), start));
                continue;
            }
            _ if is_ident_start(c) => {
                let mut j = i;
                while j < bytes.len() && is_ident_continue(bytes[j] as char) {
                    j += 1;
                }
                let name = text[i..j].to_string();
                i = j;
                toks.push((Tok::Ident(name), start));
                continue;
            }
            _ => return Err(Error::parse(start, format!("unexpected character '{c}'"))),
        };
        toks.push((tok, start));
        i += 1;
    }
    toks.push((Tok::End, bytes.len()));
    Ok(toks)
}

impl Lexer {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize> {
        let (tok, off) = self.next();
        if tok == want {
            Ok(off)
        } else {
            Err(Error::parse(off, format!("expected {what}")))
        }
    }
}

/// Collects the pieces of one `+`/`-`-separated right-hand side.
#[derive(Default)]
struct RhsParts {
    terms: Vec<Term>,
    intercept: Option<bool>,
    random: Vec<RandomEffectTerm>,
}

impl RhsParts {
    fn push_terms(&mut self, ts: Vec<Term>) {
        for t in ts {
            let key = t.canonical_key();
            if !self.terms.iter().any(|u| u.canonical_key() == key) {
                self.terms.push(t);
            }
        }
    }
}

/// Parse one formula. The text must contain exactly one `~`.
pub fn parse_formula(text: &str) -> Result<FormulaAst> {
    let tilde_count = text.bytes().filter(|&b| b == b'~').count();
    if tilde_count != 1 {
        return Err(Error::parse(
            0,
            format!("formula must contain exactly one '~', found {tilde_count}"),
        ));
    }
    let mut lx = Lexer { toks: lex(text)?, pos: 0 };

    // Left-hand side: identifiers joined by '+'.
    let mut lhs_vars = Vec::new();
    loop {
        match lx.next() {
            (Tok::Ident(name), _) => lhs_vars.push(name),
            (_, off) => return Err(Error::parse(off, "expected a response variable name")),
        }
        match lx.next() {
            (Tok::Plus, _) => continue,
            (Tok::Tilde, _) => break,
            (_, off) => return Err(Error::parse(off, "expected '+' or '~'")),
        }
    }

    let mut parts = RhsParts::default();
    parse_rhs(&mut lx, &mut parts, false)?;
    let off = lx.offset();
    if *lx.peek() != Tok::End {
        return Err(Error::parse(off, "trailing input after formula"));
    }

    Ok(FormulaAst {
        lhs_vars,
        fixed_terms: parts.terms,
        has_intercept: parts.intercept.unwrap_or(true),
        random_terms: parts.random,
    })
}

/// Parse a `+`/`-` separated term list into `parts`. When `inside_re` is
/// true, group parentheses are rejected (no nested random effects).
fn parse_rhs(lx: &mut Lexer, parts: &mut RhsParts, inside_re: bool) -> Result<()> {
    loop {
        let negated = if *lx.peek() == Tok::Minus {
            lx.next();
            true
        } else {
            false
        };
        let off = lx.offset();
        match lx.peek().clone() {
            Tok::Int(v) => {
                lx.next();
                match (v, negated) {
                    (1, false) => parts.intercept = Some(true),
                    (1, true) | (0, false) => parts.intercept = Some(false),
                    _ => {
                        return Err(Error::parse(
                            off,
                            "only '1', '- 1' and '0' are allowed as numeric terms",
                        ))
                    }
                }
            }
            Tok::LParen => {
                if negated {
                    return Err(Error::parse(off, "cannot remove a parenthesized term"));
                }
                if inside_re {
                    return Err(Error::parse(off, "nested random-effect parentheses"));
                }
                lx.next();
                parts.random.push(parse_re_group(lx)?);
            }
            Tok::Ident(_) => {
                if negated {
                    return Err(Error::parse(off, "term removal ('- term') is not supported"));
                }
                let ts = parse_star_expr(lx)?;
                parts.push_terms(ts);
            }
            _ => return Err(Error::parse(off, "expected a term")),
        }
        match lx.peek() {
            Tok::Plus => {
                lx.next();
            }
            Tok::Minus => continue,
            _ => break,
        }
    }
    Ok(())
}

/// `a * b * c` expansion: the product of two term sets is the union of both
/// plus all pairwise interactions.
fn parse_star_expr(lx: &mut Lexer) -> Result<Vec<Term>> {
    let mut acc = vec![parse_colon_expr(lx)?];
    while *lx.peek() == Tok::Star {
        lx.next();
        let off = lx.offset();
        let rhs = parse_colon_expr(lx)?;
        let mut expanded = acc.clone();
        expanded.push(rhs.clone());
        for left in &acc {
            expanded.push(cross(left, &rhs, off)?);
        }
        acc = expanded;
    }
    Ok(acc)
}

fn cross(a: &Term, b: &Term, off: usize) -> Result<Term> {
    let mut vars: Vec<String> = Vec::new();
    for t in [a, b] {
        match t {
            Term::Main { var } => vars.push(var.clone()),
            Term::Interaction { vars: vs } => vars.extend(vs.iter().cloned()),
            Term::Transform { .. } => {
                return Err(Error::parse(off, "transforms cannot appear in interactions"))
            }
        }
    }
    let mut seen = Vec::new();
    vars.retain(|v| {
        if seen.contains(v) {
            false
        } else {
            seen.push(v.clone());
            true
        }
    });
    if vars.len() == 1 {
        Ok(Term::Main { var: vars.pop().unwrap() })
    } else {
        Ok(Term::Interaction { vars })
    }
}

/// `a:b:c` or a single atom.
fn parse_colon_expr(lx: &mut Lexer) -> Result<Term> {
    let first = parse_atom(lx)?;
    if *lx.peek() != Tok::Colon {
        return Ok(first);
    }
    let off = lx.offset();
    let mut vars = match first {
        Term::Main { var } => vec![var],
        Term::Transform { .. } => {
            return Err(Error::parse(off, "transforms cannot appear in interactions"))
        }
        Term::Interaction { vars } => vars,
    };
    while *lx.peek() == Tok::Colon {
        lx.next();
        let off = lx.offset();
        match parse_atom(lx)? {
            Term::Main { var } => {
                if !vars.contains(&var) {
                    vars.push(var);
                }
            }
            _ => return Err(Error::parse(off, "transforms cannot appear in interactions")),
        }
    }
    if vars.len() == 1 {
        Ok(Term::Main { var: vars.pop().unwrap() })
    } else {
        Ok(Term::Interaction { vars })
    }
}

/// A plain variable or a transform call.
fn parse_atom(lx: &mut Lexer) -> Result<Term> {
    let (tok, off) = lx.next();
    let name = match tok {
        Tok::Ident(n) => n,
        _ => return Err(Error::parse(off, "expected a variable name")),
    };
    if *lx.peek() != Tok::LParen {
        return Ok(Term::Main { var: name });
    }
    // A call: must be one of the supported transforms.
    lx.next(); // consume '('
    let tag = match name.as_str() {
        "I" => Transform::Square,
        "log" => Transform::Log,
        "exp" => Transform::Exp,
        other => {
            return Err(Error::parse(off, format!("unknown transform tag '{other}'")));
        }
    };
    let (vtok, voff) = lx.next();
    let var = match vtok {
        Tok::Ident(v) => v,
        _ => return Err(Error::parse(voff, "expected a variable name inside transform")),
    };
    if tag == Transform::Square {
        lx.expect(Tok::Caret, "'^' in I(v^2)")?;
        let (etok, eoff) = lx.next();
        if etok != Tok::Int(2) {
            return Err(Error::parse(eoff, "only I(v^2) is supported"));
        }
    }
    lx.expect(Tok::RParen, "')'")?;
    Ok(Term::Transform { tag, var })
}

/// The inside of `( ... | group )`; the opening paren is already consumed.
fn parse_re_group(lx: &mut Lexer) -> Result<RandomEffectTerm> {
    let mut parts = RhsParts::default();
    parse_rhs(lx, &mut parts, true)?;
    lx.expect(Tok::Pipe, "'|' in random-effect term")?;
    let (gtok, goff) = lx.next();
    let group_var = match gtok {
        Tok::Ident(g) => g,
        _ => return Err(Error::parse(goff, "expected a grouping variable")),
    };
    let off = lx.expect(Tok::RParen, "')'")?;
    let inner_intercept = parts.intercept.unwrap_or(true);
    if parts.terms.is_empty() && !inner_intercept {
        return Err(Error::parse(off, "empty random-effect term"));
    }
    Ok(RandomEffectTerm { inner_terms: parts.terms, inner_intercept, group_var })
}
