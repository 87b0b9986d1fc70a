//! `EVAL` templates: `{VAR}` substitution followed by evaluation of a small
//! Python-like expression language. No names, calls or attribute access.
//!
//! ```text
//! expr    := or ('if' or 'else' expr)?
//! or      := and ('or' and)*
//! and     := not ('and' not)*
//! not     := 'not' not | cmp
//! cmp     := sum (cmpop sum)*          chains like a < b < c
//! sum     := term (('+'|'-') term)*
//! term    := unary (('*'|'/') unary)*
//! unary   := '-' unary | atom
//! atom    := NUMBER | STRING | True | False | None | '(' expr ')'
//! ```

use thiserror::Error;

use super::value::{format_number, Environment, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("UNBOUND_PLACEHOLDER: `{0}`")]
    Unbound(String),
    #[error("TEMPLATE_SYNTAX: {0}")]
    Syntax(String),
    #[error("TEMPLATE_TYPE: {0}")]
    Type(String),
}

/// Canonical literal for a value inside an expression.
pub fn render_literal(v: &Value) -> Result<String, TemplateError> {
    Ok(match v {
        Value::Number(n) => format_number(*n),
        Value::Boolean(b) => if *b { "True" } else { "False" }.to_string(),
        Value::Text(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Null => "None".to_string(),
        other => {
            return Err(TemplateError::Type(format!(
                "cannot substitute a {} value into a template",
                other.tag_name()
            )))
        }
    })
}

/// Phase one: replace every `{NAME}` with its literal rendering.
pub fn substitute(template: &str, env: &Environment) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| TemplateError::Syntax("unclosed `{`".into()))?;
        let name = after[..close].trim();
        if !crate::dsl::is_identifier(name) {
            return Err(TemplateError::Syntax(format!("bad placeholder `{{{name}}}`")));
        }
        let v = env
            .get(name)
            .ok_or_else(|| TemplateError::Unbound(name.to_string()))?;
        out.push_str(&render_literal(v)?);
        rest = &after[close + 1..];
    }
    if rest.contains('}') {
        return Err(TemplateError::Syntax("unmatched `}`".into()));
    }
    out.push_str(rest);
    Ok(out)
}

/// Substitute then evaluate.
pub fn eval_template(template: &str, env: &Environment) -> Result<Value, TemplateError> {
    let expr = substitute(template, env)?;
    eval_expression(&expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Word(String),
    Op(&'static str),
    LParen,
    RParen,
}

const OPS: &[&str] = &["==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/"];

fn tokenize(src: &str) -> Result<Vec<Tok>, TemplateError> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut toks = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<f64>()
                .map_err(|_| TemplateError::Syntax(format!("bad number `{text}`")))?;
            toks.push(Tok::Num(n));
        } else if c == '\'' || c == '"' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(TemplateError::Syntax("unterminated string".into())),
                    Some('\\') => {
                        let esc = *chars
                            .get(i + 1)
                            .ok_or_else(|| TemplateError::Syntax("dangling escape".into()))?;
                        s.push(esc);
                        i += 2;
                    }
                    Some(&ch) if ch == quote => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Word(chars[start..i].iter().collect()));
        } else if c == '(' {
            toks.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            toks.push(Tok::RParen);
            i += 1;
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let op = OPS
                .iter()
                .find(|op| rest.starts_with(**op))
                .ok_or_else(|| TemplateError::Syntax(format!("unexpected `{c}`")))?;
            toks.push(Tok::Op(op));
            i += op.len();
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone, PartialEq)]
enum Lit {
    Num(f64),
    Str(String),
    Bool(bool),
    None,
}

impl Lit {
    fn truthy(&self) -> bool {
        match self {
            Lit::Num(n) => *n != 0.0,
            Lit::Str(s) => !s.is_empty(),
            Lit::Bool(b) => *b,
            Lit::None => false,
        }
    }

    fn numeric(&self) -> Option<f64> {
        match self {
            Lit::Num(n) => Some(*n),
            Lit::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Lit::Num(_) => "number",
            Lit::Str(_) => "str",
            Lit::Bool(_) => "bool",
            Lit::None => "None",
        }
    }

    fn into_value(self) -> Value {
        match self {
            Lit::Num(n) => Value::Number(n),
            Lit::Str(s) => Value::Text(s),
            Lit::Bool(b) => Value::Boolean(b),
            Lit::None => Value::Null,
        }
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn type_err(op: &str, a: &Lit, b: &Lit) -> TemplateError {
    TemplateError::Type(format!(
        "unsupported operand types for {op}: {} and {}",
        a.type_name(),
        b.type_name()
    ))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.peek_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Lit, TemplateError> {
        let body = self.or()?;
        if self.eat_word("if") {
            let cond = self.or()?;
            if !self.eat_word("else") {
                return Err(TemplateError::Syntax("expected `else`".into()));
            }
            let other = self.expr()?;
            return Ok(if cond.truthy() { body } else { other });
        }
        Ok(body)
    }

    fn or(&mut self) -> Result<Lit, TemplateError> {
        let mut left = self.and()?;
        while self.eat_word("or") {
            let right = self.and()?;
            left = if left.truthy() { left } else { right };
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Lit, TemplateError> {
        let mut left = self.not()?;
        while self.eat_word("and") {
            let right = self.not()?;
            left = if left.truthy() { right } else { left };
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<Lit, TemplateError> {
        if self.eat_word("not") {
            let v = self.not()?;
            return Ok(Lit::Bool(!v.truthy()));
        }
        self.cmp()
    }

    fn cmp_op(&mut self) -> Option<&'static str> {
        match self.peek() {
            Some(Tok::Op(op)) if matches!(*op, "==" | "!=" | "<" | "<=" | ">" | ">=") => {
                let op = *op;
                self.pos += 1;
                Some(op)
            }
            Some(Tok::Word(w)) if w == "in" => {
                self.pos += 1;
                Some("in")
            }
            Some(Tok::Word(w)) if w == "not" => {
                if matches!(self.toks.get(self.pos + 1), Some(Tok::Word(x)) if x == "in") {
                    self.pos += 2;
                    Some("not in")
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn cmp(&mut self) -> Result<Lit, TemplateError> {
        let mut left = self.sum()?;
        let mut result: Option<bool> = None;
        while let Some(op) = self.cmp_op() {
            let right = self.sum()?;
            let ok = compare(op, &left, &right)?;
            result = Some(result.unwrap_or(true) && ok);
            left = right;
        }
        Ok(match result {
            Some(b) => Lit::Bool(b),
            None => left,
        })
    }

    fn sum(&mut self) -> Result<Lit, TemplateError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op(op)) if matches!(*op, "+" | "-") => *op,
                _ => break,
            };
            self.pos += 1;
            let right = self.term()?;
            left = match (op, &left, &right) {
                ("+", Lit::Str(a), Lit::Str(b)) => Lit::Str(format!("{a}{b}")),
                _ => match (left.numeric(), right.numeric()) {
                    (Some(a), Some(b)) => Lit::Num(if op == "+" { a + b } else { a - b }),
                    _ => return Err(type_err(op, &left, &right)),
                },
            };
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Lit, TemplateError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op(op)) if matches!(*op, "*" | "/") => *op,
                _ => break,
            };
            self.pos += 1;
            let right = self.unary()?;
            left = match (left.numeric(), right.numeric()) {
                (Some(_), Some(b)) if op == "/" && b == 0.0 => {
                    return Err(TemplateError::Type("division by zero".into()))
                }
                (Some(a), Some(b)) => Lit::Num(if op == "*" { a * b } else { a / b }),
                _ => return Err(type_err(op, &left, &right)),
            };
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Lit, TemplateError> {
        if matches!(self.peek(), Some(Tok::Op("-"))) {
            self.pos += 1;
            let v = self.unary()?;
            return v
                .numeric()
                .map(|n| Lit::Num(-n))
                .ok_or_else(|| TemplateError::Type(format!("bad operand for unary -: {}", v.type_name())));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Lit, TemplateError> {
        let tok = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| TemplateError::Syntax("unexpected end of expression".into()))?;
        self.pos += 1;
        let lit = match tok {
            Tok::Num(n) => Lit::Num(n),
            Tok::Str(s) => Lit::Str(s),
            Tok::Word(w) => match w.as_str() {
                "True" => Lit::Bool(true),
                "False" => Lit::Bool(false),
                "None" => Lit::None,
                _ => return Err(TemplateError::Syntax(format!("name `{w}` is not allowed"))),
            },
            Tok::LParen => {
                let v = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(TemplateError::Syntax("expected `)`".into()));
                }
                self.pos += 1;
                v
            }
            other => return Err(TemplateError::Syntax(format!("unexpected {other:?}"))),
        };
        if self.peek() == Some(&Tok::LParen) {
            return Err(TemplateError::Syntax("calls are not allowed".into()));
        }
        Ok(lit)
    }
}

fn compare(op: &str, a: &Lit, b: &Lit) -> Result<bool, TemplateError> {
    match op {
        "in" | "not in" => match (a, b) {
            (Lit::Str(x), Lit::Str(y)) => Ok(y.contains(x.as_str()) == (op == "in")),
            _ => Err(type_err(op, a, b)),
        },
        "==" | "!=" => {
            let eq = match (a.numeric(), b.numeric()) {
                (Some(x), Some(y)) => x == y,
                _ => a == b,
            };
            Ok(eq == (op == "=="))
        }
        _ => {
            let ord = match (a, b) {
                (Lit::Str(x), Lit::Str(y)) => x.cmp(y),
                _ => match (a.numeric(), b.numeric()) {
                    (Some(x), Some(y)) => x.partial_cmp(&y).ok_or_else(|| type_err(op, a, b))?,
                    _ => return Err(type_err(op, a, b)),
                },
            };
            Ok(match op {
                "<" => ord.is_lt(),
                "<=" => ord.is_le(),
                ">" => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
    }
}

/// Evaluate an already-substituted expression.
pub fn eval_expression(src: &str) -> Result<Value, TemplateError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(TemplateError::Syntax("empty expression".into()));
    }
    let mut p = Parser { toks, pos: 0 };
    let v = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(TemplateError::Syntax(format!(
            "unexpected trailing {:?}",
            p.toks[p.pos]
        )));
    }
    Ok(v.into_value())
}
