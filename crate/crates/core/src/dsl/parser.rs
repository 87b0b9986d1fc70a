//! Line-oriented parser and canonical serializer for program text.
//!
//! Grammar, one statement per line:
//!
//! ```text
//! statement := TARGET '=' MODULE '(' [kwarg (',' kwarg)*] ')'
//! kwarg     := name '=' value
//! value     := IDENT | 'str' | "str" | f"template" | number
//! ```

use std::iter::Peekable;
use std::str::CharIndices;

use super::ast::{is_identifier, Arg, NumberLit, Program, Statement, FINAL_TARGET, RESULT_MODULE};
use super::diagnostic::{Diagnostic, DiagnosticCode};

/// Parse failure with every diagnostic found and the statements that did parse.
#[derive(Debug, Clone)]
pub struct ParseFailure {
    pub diagnostics: Vec<Diagnostic>,
    pub statements: Vec<Statement>,
}

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lines: Vec<String> = self.diagnostics.iter().map(|d| d.to_string()).collect();
        f.write_str(&lines.join("; "))
    }
}

impl std::error::Error for ParseFailure {}

pub fn parse_program(source: &str) -> Result<Program, ParseFailure> {
    let mut statements = Vec::new();
    let mut diagnostics = Vec::new();
    let mut last_line = 0;

    // a statement wrapped over several lines is numbered by its first line
    let mut pending: Option<(usize, String)> = None;
    let mut flush = |pending: &mut Option<(usize, String)>| {
        if let Some((line_no, text)) = pending.take() {
            match parse_statement(&text, line_no) {
                Ok(stmt) => statements.push(stmt),
                Err(msg) => diagnostics.push(Diagnostic::new(DiagnosticCode::Syntax, line_no, msg)),
            }
        }
    };
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some((_, text)) = pending.as_mut() {
            if open_parens(text) > 0 && !starts_statement(line) {
                text.push_str(line.trim());
                continue;
            }
        }
        flush(&mut pending);
        last_line = line_no;
        pending = Some((line_no, line.to_string()));
    }
    flush(&mut pending);

    if last_line == 0 {
        diagnostics.push(Diagnostic::new(
            DiagnosticCode::Syntax,
            1,
            "empty program",
        ));
    } else {
        let ends_in_result = statements.last().is_some_and(|s: &Statement| {
            s.line_no == last_line && s.module_name == RESULT_MODULE && s.target == FINAL_TARGET
        });
        if !ends_in_result {
            diagnostics.push(Diagnostic::new(
                DiagnosticCode::MissingResult,
                last_line,
                format!("last statement must be {FINAL_TARGET}={RESULT_MODULE}(var=...)"),
            ));
        }
    }

    if diagnostics.is_empty() {
        Ok(Program {
            statements,
            source_text: source.to_string(),
        })
    } else {
        Err(ParseFailure {
            diagnostics,
            statements,
        })
    }
}

/// Parse a single statement line.
pub fn parse_statement(line: &str, line_no: usize) -> Result<Statement, String> {
    let mut cur = Cursor::new(line);
    cur.skip_ws();
    let target = cur.ident().ok_or("expected target variable")?;
    if !is_identifier(&target) {
        return Err(format!("target `{target}` must match [A-Z][A-Z0-9_]*"));
    }
    cur.skip_ws();
    cur.expect('=')?;
    cur.skip_ws();
    let module_name = cur.ident().ok_or("expected module name after `=`")?;
    if !is_identifier(&module_name) {
        return Err(format!("module name `{module_name}` must match [A-Z][A-Z0-9_]*"));
    }
    cur.skip_ws();
    cur.expect('(')?;
    let mut args: Vec<(String, Arg)> = Vec::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.bump();
    } else {
        loop {
            cur.skip_ws();
            let key = cur.ident().ok_or("expected keyword argument name")?;
            cur.skip_ws();
            cur.expect('=')?;
            cur.skip_ws();
            let value = cur.value()?;
            if args.iter().any(|(k, _)| *k == key) {
                return Err(format!("duplicate keyword argument `{key}`"));
            }
            args.push((key, value));
            cur.skip_ws();
            match cur.bump() {
                Some(',') => continue,
                Some(')') => break,
                Some(c) => return Err(format!("unexpected `{c}` in argument list")),
                None => return Err("unterminated argument list".into()),
            }
        }
    }
    cur.skip_ws();
    if let Some(c) = cur.peek() {
        return Err(format!("unexpected trailing `{c}`"));
    }
    Ok(Statement {
        target,
        module_name,
        args,
        line_no,
    })
}

struct Cursor<'a> {
    src: &'a str,
    it: Peekable<CharIndices<'a>>,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            it: src.char_indices().peekable(),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.it.peek().map(|(_, c)| *c)
    }

    fn bump(&mut self) -> Option<char> {
        self.it.next().map(|(_, c)| c)
    }

    fn pos(&mut self) -> usize {
        self.it.peek().map(|(i, _)| *i).unwrap_or(self.src.len())
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn expect(&mut self, want: char) -> Result<(), String> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(format!("expected `{want}`, found `{c}`")),
            None => Err(format!("expected `{want}`, found end of line")),
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        let end = self.pos();
        Some(self.src[start..end].to_string())
    }

    fn quoted(&mut self, quote: char) -> Result<String, String> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated string literal".into()),
                Some('\\') if self.peek() == Some(quote) => {
                    self.bump();
                    out.push(quote);
                }
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn value(&mut self) -> Result<Arg, String> {
        match self.peek() {
            Some('\'') => {
                self.bump();
                Ok(Arg::Str(self.quoted('\'')?))
            }
            Some('"') => {
                self.bump();
                Ok(Arg::Str(self.quoted('"')?))
            }
            Some('f') => {
                let save = self.it.clone();
                self.bump();
                if self.peek() == Some('"') {
                    self.bump();
                    Ok(Arg::Template(self.template_body()?))
                } else {
                    self.it = save;
                    Err("bare lowercase identifiers are not values; quote string literals".into())
                }
            }
            Some(c) if c.is_ascii_digit() || c == '-' || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let name = self.ident().unwrap_or_default();
                if is_identifier(&name) {
                    Ok(Arg::Name(name))
                } else {
                    Err(format!(
                        "`{name}` is not a variable name; quote string literals"
                    ))
                }
            }
            Some(c) => Err(format!("unexpected `{c}` where a value was expected")),
            None => Err("expected a value".into()),
        }
    }

    /// Template payload up to the closing unescaped `"`, kept verbatim.
    fn template_body(&mut self) -> Result<String, String> {
        let start = self.pos();
        loop {
            let here = self.pos();
            match self.bump() {
                None => return Err("unterminated template string".into()),
                Some('\\') => {
                    self.bump();
                }
                Some('"') => return Ok(self.src[start..here].to_string()),
                Some(_) => {}
            }
        }
    }

    fn number(&mut self) -> Result<Arg, String> {
        let start = self.pos();
        if self.peek() == Some('-') {
            self.bump();
        }
        let mut digits = 0;
        let mut dots = 0;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                digits += 1;
            } else if c == '.' {
                dots += 1;
            } else {
                break;
            }
            self.bump();
        }
        let end = self.pos();
        let text = &self.src[start..end];
        if digits == 0 || dots > 1 || text.ends_with('.') || text.starts_with('.') {
            return Err(format!("malformed number `{text}`"));
        }
        let value: f64 = text
            .parse()
            .map_err(|_| format!("malformed number `{text}`"))?;
        Ok(Arg::Number(NumberLit {
            text: text.to_string(),
            value,
        }))
    }
}

/// Canonical text: one statement per line, no whitespace outside payloads.
pub fn serialize_program(p: &Program) -> String {
    p.statements
        .iter()
        .map(serialize_statement)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn serialize_statement(s: &Statement) -> String {
    let args: Vec<String> = s
        .args
        .iter()
        .map(|(k, v)| format!("{k}={}", serialize_arg(v)))
        .collect();
    format!("{}={}({})", s.target, s.module_name, args.join(","))
}

pub fn serialize_arg(a: &Arg) -> String {
    match a {
        Arg::Name(n) => n.clone(),
        Arg::Str(s) => format!("'{}'", s.replace('\'', "\\'")),
        Arg::Template(t) => format!("f\"{t}\""),
        Arg::Number(n) => n.text.clone(),
    }
}

/// Join lines broken by typesetting or model output wrapping: any line that
/// does not start a new `TARGET=` statement is appended to the previous one.
pub fn join_continuations<'a>(lines: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if starts_statement(line) || out.is_empty() {
            out.push(line.to_string());
        } else if let Some(last) = out.last_mut() {
            last.push_str(line);
        }
    }
    out
}

/// Parenthesis depth at the end of `text`, ignoring quoted characters.
fn open_parens(text: &str) -> i32 {
    let mut depth = 0;
    let mut quote: Option<char> = None;
    for c in text.chars() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, '(') => depth += 1,
            (None, ')') => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// Whether `line` opens a statement (`IDENT=` followed by a module call).
pub fn starts_statement(line: &str) -> bool {
    let Some(eq) = line.find('=') else {
        return false;
    };
    let (lhs, rhs) = (line[..eq].trim(), line[eq + 1..].trim_start());
    is_identifier(lhs) && rhs.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PURSE: &str = "BOX0=LOC(image=IMAGE,object='person')\nIMAGE0=CROP_LEFTOF(image=IMAGE,box=BOX0)\nBOX1=LOC(image=IMAGE0,object='purse')\nANSWER0=COUNT(box=BOX1)\nANSWER1=EVAL(expr=f\"'left' if {ANSWER0} > 0 else 'right'\")\nFINAL_RESULT=RESULT(var=ANSWER1)";

    #[test]
    fn wrapped_statements_join_and_keep_their_first_line() {
        let src = "BOX0=LOC(image=IMAGE,object='towel')\nANSWER0=COMPARE_ATTRIBUTE(image=IMAGE,box1=BOX0,object1='towel'\n,attribute='color')\nFINAL_RESULT=RESULT(var=ANSWER0)";
        let p = parse_program(src).unwrap();
        assert_eq!(p.statements.len(), 3);
        assert_eq!(p.statements[1].line_no, 2);
        assert_eq!(p.statements[2].line_no, 4);
        let bad = parse_program("BOX0=LOC(image=IMAGE,object='a'\nnonsense\nFINAL_RESULT=RESULT(var=BOX0)").unwrap_err();
        assert_eq!(bad.diagnostics[0].line_no, 1);
        let stray = parse_program("BOX0=LOC(image=IMAGE,object='a')\nnonsense\nFINAL_RESULT=RESULT(var=BOX0)").unwrap_err();
        assert_eq!(stray.diagnostics[0].line_no, 2);
    }

    #[test]
    fn purse_program_parses_with_template() {
        let p = parse_program(PURSE).unwrap();
        assert_eq!(p.statements.len(), 6);
        let eval = &p.statements[4];
        assert_eq!(eval.module_name, "EVAL");
        match eval.arg("expr").unwrap() {
            Arg::Template(t) => assert_eq!(t, "'left' if {ANSWER0} > 0 else 'right'"),
            other => panic!("expected template, got {other:?}"),
        }
        assert_eq!(eval.referenced_names(), vec!["ANSWER0"]);
        assert_eq!(eval.line_no, 5);
    }

    #[test]
    fn purse_program_serializes_byte_identical() {
        let p = parse_program(PURSE).unwrap();
        assert_eq!(serialize_program(&p), PURSE);
    }

    #[test]
    fn minimal_program() {
        let p = parse_program("FINAL_RESULT=RESULT(var=IMAGE)").unwrap();
        assert_eq!(p.statements.len(), 1);
        assert_eq!(p.statements[0].arg("var"), Some(&Arg::Name("IMAGE".into())));
        assert_eq!(serialize_program(&p), "FINAL_RESULT=RESULT(var=IMAGE)");
        let q = parse_program("FINAL_RESULT=RESULT(var=ANSWER0)").unwrap();
        assert_eq!(serialize_program(&q), "FINAL_RESULT=RESULT(var=ANSWER0)");
    }

    #[test]
    fn missing_result_is_reported() {
        let err = parse_program("ANSWER0=COUNT(box=BOX9)").unwrap_err();
        assert_eq!(err.diagnostics.len(), 1);
        assert_eq!(err.diagnostics[0].code, DiagnosticCode::MissingResult);
        assert_eq!(err.statements.len(), 1);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let src = "BOX0=LOC(image=IMAGE,object='cat')\n\nBOX1=LOC(image=IMAGE object='dog')\nFINAL_RESULT=RESULT(var=BOX0)";
        let err = parse_program(src).unwrap_err();
        assert_eq!(err.diagnostics.len(), 1);
        assert_eq!(err.diagnostics[0].code, DiagnosticCode::Syntax);
        assert_eq!(err.diagnostics[0].line_no, 3);
    }

    #[test]
    fn whitespace_is_tolerated_and_normalized() {
        let p = parse_program("A = LOC( image = IMAGE , object = \"cat\" )\nFINAL_RESULT=RESULT(var=A)").unwrap();
        assert_eq!(
            serialize_program(&p),
            "A=LOC(image=IMAGE,object='cat')\nFINAL_RESULT=RESULT(var=A)"
        );
    }

    #[test]
    fn escaped_quote_round_trips() {
        let src = "A=VQA(image=IMAGE,question='what\\'s this?')\nFINAL_RESULT=RESULT(var=A)";
        let p = parse_program(src).unwrap();
        assert_eq!(p.statements[0].arg("question"), Some(&Arg::Str("what's this?".into())));
        assert_eq!(serialize_program(&p), src);
    }

    #[test]
    fn rejects_lowercase_bare_words_and_booleans() {
        assert!(parse_statement("A=LOC(image=IMAGE,object=cat)", 1).is_err());
        assert!(parse_statement("A=LOC(image=IMAGE,flag=True)", 1).is_err());
        assert!(parse_statement("a=LOC(image=IMAGE)", 1).is_err());
        assert!(parse_statement("A=LOC(image=IMAGE,image=IMAGE)", 1).is_err());
        assert!(parse_statement("A=LOC(image=IMAGE))", 1).is_err());
    }

    #[test]
    fn numbers_keep_their_lexeme() {
        let s = parse_statement("B=SORT_SPATIAL(image=IMAGE,box_list=A,location='right',index=2)", 1).unwrap();
        match s.arg("index").unwrap() {
            Arg::Number(n) => {
                assert_eq!(n.text, "2");
                assert_eq!(n.value, 2.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_statement("B=X(v=1.)", 1).is_err());
        assert!(parse_statement("B=X(v=-0.5)", 1).is_ok());
    }

    #[test]
    fn continuation_lines_are_joined() {
        let wrapped = "ANSWER0=CHOOSE_ATTRIBUTE(image=IMAGE,box=BOX0,object='coat',\n        attribute1='thick',attribute2='thin')\nFINAL_RESULT=RESULT(var=ANSWER0)";
        let joined = join_continuations(wrapped.lines());
        assert_eq!(joined.len(), 2);
        assert!(joined[0].ends_with("attribute1='thick',attribute2='thin')"));
    }
}
