//! Textual rule format, one rule per block:
//!
//! ```text
//! rule similar_names on games {
//!     LHS: edit(y.Name, y2.Name) <= 1;
//!     RHS: eq(y.Genre, y2.Genre);
//! }
//! ```
//!
//! Constraints are `edit(a, b) <= k`, `abs(a, b) <= k`, `eq(a, b)` and
//! `rel(v, "name", end)`; operands are `var.attr`, `var.eid`, quoted
//! constants, or `*`. A bare `LHS: ... RHS: ...;` body is accepted as a
//! single anonymous rule.

use crate::constraint::{DistanceConstraint, Operand};
use crate::error::{GigError, Result};
use crate::rule::{Gdd, Provenance};
use crate::value::AttributeValue;

/// Parse a rule file.
pub fn parse_rules(text: &str) -> Result<Vec<Gdd>> {
    Parser::new(text).parse_file()
}

/// Canonical rendering; `parse(render(rules))` is identity.
pub fn render_rules(rules: &[Gdd]) -> String {
    let mut out = String::new();
    for rule in rules {
        out.push_str(&format!("rule {} on {} {{\n", rule.name, rule.pattern_name));
        out.push_str("    LHS:");
        out.push_str(&render_constraints(&rule.phi_x));
        out.push_str("    RHS:");
        out.push_str(&render_constraints(&rule.phi_y));
        out.push_str("}\n\n");
    }
    out
}

fn render_constraints(phi: &[DistanceConstraint]) -> String {
    if phi.is_empty() {
        return " ;\n".to_string();
    }
    let mut out = String::new();
    for c in phi {
        out.push_str(&format!("\n        {c};"));
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Number(f64),
    Symbol(char),
    Le, // <=
}

struct Located {
    token: Token,
    line: usize,
    col: usize,
}

struct Parser {
    tokens: Vec<Located>,
    pos: usize,
    end_line: usize,
    end_col: usize,
    lex_error: Option<String>,
}

impl Parser {
    fn new(text: &str) -> Parser {
        let mut tokens = Vec::new();
        let mut line = 1usize;
        let mut col = 1usize;
        let mut chars = text.chars().peekable();
        let mut error: Option<(usize, usize, String)> = None;
        while let Some(&c) = chars.peek() {
            let (tl, tc) = (line, col);
            let mut advance = |chars: &mut std::iter::Peekable<std::str::Chars>| {
                let c = chars.next().unwrap();
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                c
            };
            if c.is_whitespace() {
                advance(&mut chars);
                continue;
            }
            if c == '#' {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    advance(&mut chars);
                }
                continue;
            }
            let token = if c.is_alphabetic() || c == '_' {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(advance(&mut chars));
                    } else {
                        break;
                    }
                }
                Token::Ident(s)
            } else if c.is_ascii_digit() || c == '-' {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || matches!(c, '.' | '-' | 'e' | 'E' | '+') {
                        s.push(advance(&mut chars));
                    } else {
                        break;
                    }
                }
                match s.parse::<f64>() {
                    Ok(n) => Token::Number(n),
                    Err(_) => {
                        error = Some((tl, tc, format!("bad number `{s}`")));
                        break;
                    }
                }
            } else if c == '"' {
                advance(&mut chars);
                let mut s = String::new();
                let mut closed = false;
                while let Some(&c) = chars.peek() {
                    advance(&mut chars);
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => {
                            if let Some(&next) = chars.peek() {
                                advance(&mut chars);
                                s.push(next);
                            }
                        }
                        other => s.push(other),
                    }
                }
                if !closed {
                    error = Some((tl, tc, "unterminated string".into()));
                    break;
                }
                Token::Str(s)
            } else if c == '<' {
                advance(&mut chars);
                if chars.peek() == Some(&'=') {
                    advance(&mut chars);
                    Token::Le
                } else {
                    error = Some((tl, tc, "expected `<=`".into()));
                    break;
                }
            } else if matches!(c, '{' | '}' | '(' | ')' | ',' | ';' | ':' | '.' | '*' | '=') {
                Token::Symbol(advance(&mut chars))
            } else {
                error = Some((tl, tc, format!("unexpected character `{c}`")));
                break;
            };
            tokens.push(Located {
                token,
                line: tl,
                col: tc,
            });
        }
        let mut parser = Parser {
            tokens,
            pos: 0,
            end_line: line,
            end_col: col,
            lex_error: None,
        };
        if let Some((line, col, msg)) = error {
            // Poison the stream so parsing reports the lex error.
            parser.tokens.clear();
            parser.end_line = line;
            parser.end_col = col;
            parser.lex_error = Some(msg);
        }
        parser
    }

    fn parse_file(mut self) -> Result<Vec<Gdd>> {
        if let Some(msg) = self.lex_error.take() {
            return Err(GigError::Syntax {
                line: self.end_line,
                col: self.end_col,
                msg,
            });
        }
        // Bare LHS/RHS body: a single anonymous rule.
        if matches!(self.peek(), Some(Token::Ident(k)) if k == "LHS") {
            let (phi_x, phi_y) = self.parse_body(false)?;
            self.expect_end()?;
            return Ok(vec![Gdd::new("anonymous", "default", phi_x, phi_y, Provenance::Loaded)
                .map_err(|e| self.rule_error(e))?]);
        }
        let mut rules = Vec::new();
        while self.peek().is_some() {
            rules.push(self.parse_rule()?);
        }
        Ok(rules)
    }

    fn parse_rule(&mut self) -> Result<Gdd> {
        self.expect_keyword("rule")?;
        let name = self.expect_ident("rule name")?;
        self.expect_keyword("on")?;
        let pattern_name = self.expect_ident("pattern name")?;
        self.expect_symbol('{')?;
        let (phi_x, phi_y) = self.parse_body(true)?;
        self.expect_symbol('}')?;
        Gdd::new(name, pattern_name, phi_x, phi_y, Provenance::Loaded)
            .map_err(|e| self.rule_error(e))
    }

    fn rule_error(&self, e: GigError) -> GigError {
        GigError::Syntax {
            line: self.end_line,
            col: self.end_col,
            msg: e.to_string(),
        }
    }

    fn parse_body(
        &mut self,
        braced: bool,
    ) -> Result<(Vec<DistanceConstraint>, Vec<DistanceConstraint>)> {
        self.expect_keyword("LHS")?;
        self.expect_symbol(':')?;
        let phi_x = self.parse_constraints("RHS")?;
        self.expect_keyword("RHS")?;
        self.expect_symbol(':')?;
        let terminator = if braced { Some('}') } else { None };
        let phi_y = self.parse_constraints_until(terminator)?;
        Ok((phi_x, phi_y))
    }

    /// Constraints up to (not consuming) the given keyword.
    fn parse_constraints(&mut self, stop_keyword: &str) -> Result<Vec<DistanceConstraint>> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Ident(k)) if k == stop_keyword => return Ok(out),
                Some(Token::Symbol(';')) => {
                    self.advance();
                }
                Some(_) => {
                    out.push(self.parse_constraint()?);
                    self.expect_symbol(';')?;
                }
                None => return Err(self.unexpected_end(&format!("`{stop_keyword}`"))),
            }
        }
    }

    fn parse_constraints_until(&mut self, close: Option<char>) -> Result<Vec<DistanceConstraint>> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Symbol(c)) if Some(*c) == close => return Ok(out),
                Some(Token::Symbol(';')) => {
                    self.advance();
                }
                Some(_) => {
                    out.push(self.parse_constraint()?);
                    self.expect_symbol(';')?;
                }
                None if close.is_none() => return Ok(out),
                None => return Err(self.unexpected_end("`}`")),
            }
        }
    }

    fn parse_constraint(&mut self) -> Result<DistanceConstraint> {
        let func = self.expect_ident("constraint function")?;
        self.expect_symbol('(')?;
        match func.as_str() {
            "edit" | "abs" => {
                let left = self.parse_operand()?;
                self.expect_symbol(',')?;
                let right = self.parse_operand()?;
                self.expect_symbol(')')?;
                self.expect_le()?;
                let threshold = self.expect_number()?;
                if threshold < 0.0 {
                    return Err(self.error_here("threshold must be non-negative"));
                }
                Ok(if func == "edit" {
                    DistanceConstraint::edit(left, right, threshold)
                } else {
                    DistanceConstraint::abs(left, right, threshold)
                })
            }
            "eq" => {
                let left = self.parse_operand()?;
                self.expect_symbol(',')?;
                let right = self.parse_operand()?;
                self.expect_symbol(')')?;
                Ok(DistanceConstraint::eq(left, right))
            }
            "rel" => {
                let variable = self.expect_ident("variable")?;
                self.expect_symbol(',')?;
                let rela = match self.next_token("relation name")? {
                    Token::Str(s) => s,
                    _ => return Err(self.error_here("relation name must be quoted")),
                };
                self.expect_symbol(',')?;
                let end = match self.next_token("relation end")? {
                    Token::Ident(v) => Operand::Relation {
                        variable: v,
                        rela: rela.clone(),
                    },
                    Token::Str(s) => Operand::Constant(AttributeValue::text(s)),
                    Token::Symbol('*') => Operand::Wildcard,
                    _ => return Err(self.error_here("relation end must be a variable, string or *")),
                };
                self.expect_symbol(')')?;
                Ok(DistanceConstraint::rel(&variable, &rela, end))
            }
            other => Err(self.error_here(&format!("unknown constraint function `{other}`"))),
        }
    }

    fn parse_operand(&mut self) -> Result<Operand> {
        match self.next_token("operand")? {
            Token::Ident(variable) => {
                self.expect_symbol('.')?;
                let attribute = self.expect_ident("attribute")?;
                if attribute == "eid" {
                    Ok(Operand::Eid { variable })
                } else {
                    Ok(Operand::Cell { variable, attribute })
                }
            }
            Token::Str(s) => Ok(Operand::Constant(AttributeValue::text(s))),
            Token::Number(n) => Ok(Operand::Constant(AttributeValue::Number(n))),
            Token::Symbol('*') => Ok(Operand::Wildcard),
            _ => Err(self.error_here("expected `var.attr`, a constant, or `*`")),
        }
    }

    // Token-stream helpers.

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.token)
    }

    fn advance(&mut self) -> Option<&Located> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos.saturating_sub(1))
            .map(|t| (t.line, t.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn error_here(&self, msg: &str) -> GigError {
        let (line, col) = self.here();
        GigError::Syntax {
            line,
            col,
            msg: msg.to_string(),
        }
    }

    fn unexpected_end(&self, expected: &str) -> GigError {
        GigError::Syntax {
            line: self.end_line,
            col: self.end_col,
            msg: format!("unexpected end of input, expected {expected}"),
        }
    }

    fn next_token(&mut self, expected: &str) -> Result<Token> {
        match self.advance() {
            Some(t) => Ok(t.token.clone()),
            None => Err(self.unexpected_end(expected)),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String> {
        match self.next_token(what)? {
            Token::Ident(s) => Ok(s),
            _ => Err(self.error_here(&format!("expected {what}"))),
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<()> {
        match self.next_token(&format!("`{keyword}`"))? {
            Token::Ident(s) if s == keyword => Ok(()),
            _ => Err(self.error_here(&format!("expected `{keyword}`"))),
        }
    }

    fn expect_symbol(&mut self, symbol: char) -> Result<()> {
        match self.next_token(&format!("`{symbol}`"))? {
            Token::Symbol(c) if c == symbol => Ok(()),
            _ => Err(self.error_here(&format!("expected `{symbol}`"))),
        }
    }

    fn expect_le(&mut self) -> Result<()> {
        match self.next_token("`<=`")? {
            Token::Le => Ok(()),
            _ => Err(self.error_here("expected `<=`")),
        }
    }

    fn expect_number(&mut self) -> Result<f64> {
        match self.next_token("a number")? {
            Token::Number(n) => Ok(n),
            _ => Err(self.error_here("expected a number")),
        }
    }

    fn expect_end(&mut self) -> Result<()> {
        if self.peek().is_some() {
            Err(self.error_here("trailing input after rule body"))
        } else {
            Ok(())
        }
    }
}
