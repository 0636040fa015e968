//! One-call-per-line grammar for planner output.
//!
//! ```text
//! line  := [ident "="] expr [comment]
//! expr  := ident "(" [arg ("," arg)*] ")" | ident "[" string "]"
//! arg   := string | number | ident | ident "[" string "]"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use super::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    SetBoundingBox,
    IdListOfEntity,
    GeoFilter,
    /// `var['subject']` or `var['object']` on a filter result.
    Select,
}

impl Function {
    pub fn name(self) -> &'static str {
        match self {
            Function::SetBoundingBox => "set_bounding_box",
            Function::IdListOfEntity => "id_list_of_entity",
            Function::GeoFilter => "geo_filter",
            Function::Select => "select",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "set_bounding_box" => Some(Function::SetBoundingBox),
            "id_list_of_entity" => Some(Function::IdListOfEntity),
            "geo_filter" => Some(Function::GeoFilter),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Arg {
    Str(String),
    Num(f64),
    Var(String),
    Field { var: String, field: String },
}

impl Arg {
    /// Variables this argument reads.
    pub fn var(&self) -> Option<&str> {
        match self {
            Arg::Var(v) | Arg::Field { var: v, .. } => Some(v),
            _ => None,
        }
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Str(s) => f.write_str(&quote(s)),
            Arg::Num(n) => write!(f, "{n}"),
            Arg::Var(v) => f.write_str(v),
            Arg::Field { var, field } => write!(f, "{var}[{}]", quote(field)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Call {
    pub function: Function,
    pub args: Vec<Arg>,
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.function == Function::Select {
            if let [a @ Arg::Field { .. }] = self.args.as_slice() {
                return write!(f, "{a}");
            }
        }
        let args: Vec<String> = self.args.iter().map(Arg::to_string).collect();
        write!(f, "{}({})", self.function.name(), args.join(", "))
    }
}

/// A parsed line: optional assignment target, the call and a trailing comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub target: Option<String>,
    pub call: Call,
    pub comment: Option<String>,
}

struct Cursor<'a> {
    line: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str) -> Self {
        Self { line, chars: line.char_indices().collect(), pos: 0 }
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.line.len(), |c| c.0)
    }

    fn err(&self, reason: impl Into<String>) -> PlanError {
        PlanError::CallSyntax { text: self.line.to_string(), position: self.offset(), reason: reason.into() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), PlanError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    /// Identifier, allowing dotted paths so that `os.system` is reported as
    /// a call rather than a syntax error.
    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            let ok = c == '_' || c.is_alphanumeric() || (c == '.' && self.pos > start);
            if !ok || (self.pos == start && c.is_ascii_digit()) {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().map(|c| c.1).collect())
    }

    fn string(&mut self) -> Result<String, PlanError> {
        self.skip_ws();
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => return Err(self.err("expected a string")),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated string")),
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        None => return Err(self.err("unterminated string")),
                        Some('n') => out.push('\n'),
                        Some(c) => out.push(c),
                    }
                    self.pos += 1;
                }
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn number(&mut self) -> Result<f64, PlanError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        text.parse().map_err(|_| {
            self.pos = start;
            self.err(format!("invalid number `{text}`"))
        })
    }

    fn field(&mut self, var: String) -> Result<Arg, PlanError> {
        let field = self.string()?;
        self.expect(']')?;
        Ok(Arg::Field { var, field })
    }

    fn arg(&mut self) -> Result<Arg, PlanError> {
        self.skip_ws();
        match self.peek() {
            Some('\'' | '"') => Ok(Arg::Str(self.string()?)),
            Some(c) if c.is_ascii_digit() || c == '-' || c == '.' => Ok(Arg::Num(self.number()?)),
            _ => {
                let name = self.ident().ok_or_else(|| self.err("expected an argument"))?;
                if self.eat('[') {
                    self.field(name)
                } else if self.eat('(') {
                    Err(self.err("nested calls are not supported"))
                } else if self.eat('=') {
                    Err(self.err("keyword arguments are not supported"))
                } else {
                    Ok(Arg::Var(name))
                }
            }
        }
    }

    fn rest_is_comment(&mut self) -> Result<Option<String>, PlanError> {
        self.skip_ws();
        match self.peek() {
            None => Ok(None),
            Some('#') => {
                let text: String = self.chars[self.pos + 1..].iter().map(|c| c.1).collect();
                self.pos = self.chars.len();
                let text = text.trim().to_string();
                Ok((!text.is_empty()).then_some(text))
            }
            Some(';') => Err(self.err("one call per line")),
            Some(_) => Err(self.err("unexpected trailing text")),
        }
    }
}

/// Parses one planner line into a whitelisted call.
pub fn parse_call_text(line: &str) -> Result<Statement, PlanError> {
    let mut cur = Cursor::new(line.trim());
    let first = cur.ident().ok_or_else(|| cur.err("expected a function call"))?;
    let (target, name) = if cur.eat('=') {
        let name = cur.ident().ok_or_else(|| cur.err("expected a function call"))?;
        (Some(first), name)
    } else {
        (None, first)
    };
    if let Some(t) = &target {
        if t.contains('.') {
            return Err(PlanError::CallSyntax {
                text: line.trim().to_string(),
                position: 0,
                reason: format!("cannot assign to `{t}`"),
            });
        }
    }
    let call = if cur.eat('[') {
        if name.contains('.') {
            return Err(cur.err("expected a variable name"));
        }
        Call { function: Function::Select, args: vec![cur.field(name)?] }
    } else {
        if !cur.eat('(') {
            return Err(cur.err("expected `(`"));
        }
        let function = Function::from_name(&name).ok_or_else(|| PlanError::NonWhitelistedCall(name.clone()))?;
        let mut args = Vec::new();
        if !cur.eat(')') {
            loop {
                args.push(cur.arg()?);
                if cur.eat(')') {
                    break;
                }
                cur.expect(',')?;
                // Trailing comma before the closing paren.
                if cur.eat(')') {
                    break;
                }
            }
        }
        Call { function, args }
    };
    let comment = cur.rest_is_comment()?;
    check_arity(&call)?;
    Ok(Statement { target, call, comment })
}

fn check_arity(call: &Call) -> Result<(), PlanError> {
    let arity = |expected: usize| {
        if call.args.len() == expected {
            Ok(())
        } else {
            Err(PlanError::Arity { function: call.function.name(), expected, got: call.args.len() })
        }
    };
    let bad = |i: usize, want: &str| {
        Err(PlanError::ArgumentType { function: call.function.name(), index: i + 1, expected: want.to_string() })
    };
    match call.function {
        Function::SetBoundingBox | Function::IdListOfEntity => {
            arity(1)?;
            if !matches!(call.args[0], Arg::Str(_)) {
                return bad(0, "a string");
            }
        }
        Function::GeoFilter => {
            arity(3)?;
            if !matches!(call.args[0], Arg::Str(_)) {
                return bad(0, "a relation string");
            }
            for i in 1..3 {
                if call.args[i].var().is_none() {
                    return bad(i, "a variable");
                }
            }
        }
        Function::Select => {
            arity(1)?;
            match &call.args[0] {
                Arg::Field { field, .. } if field == "subject" || field == "object" => {}
                _ => return bad(0, "`subject` or `object`"),
            }
        }
    }
    Ok(())
}
