//! Tokenizer and grammar for single action lines.
//!
//! ```text
//! line    := "STOP"
//!          | "connect" "(" operand "," port ")"
//!          | "disconnect" "(" port ")"
//!          | "set" "(" port "," literal ")"
//!          | [ident ("," ident)* "="] TypeName "(" [arg ("," arg)* [","]] ")"
//! arg     := ident "=" (literal | operand)
//! operand := ident | port
//! port    := ident "." ident
//! ```
//!
//! Literals are JSON literals: numbers, double-quoted strings, `true`,
//! `false`, `null`.

use serde_json::Value;

use crate::edit::PortRef;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Lit(Value),
    Eq,
    Comma,
    Dot,
    LParen,
    RParen,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Var(String),
    Port(PortRef),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArgValue {
    Literal(Value),
    Ref(Operand),
}

/// Parsed shape of one action line, before variables are resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum ActionSyntax {
    Stop,
    Connect {
        src: Operand,
        dst: PortRef,
    },
    Disconnect {
        dst: PortRef,
    },
    Set {
        target: PortRef,
        value: Value,
    },
    Call {
        outputs: Option<Vec<String>>,
        type_name: String,
        args: Vec<(String, ArgValue)>,
    },
}

impl ActionSyntax {
    /// Type name in the call position, for node-instantiating lines.
    pub fn type_name(&self) -> Option<&str> {
        match self {
            ActionSyntax::Call { type_name, .. } => Some(type_name),
            _ => None,
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(line: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '=' => {
                toks.push(Tok::Eq);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '.' => {
                toks.push(Tok::Dot);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '"' => {
                let mut j = i + 1;
                let mut closed = false;
                while j < chars.len() {
                    match chars[j].1 {
                        '\\' => j += 2,
                        '"' => {
                            closed = true;
                            break;
                        }
                        _ => j += 1,
                    }
                }
                if !closed {
                    return Err(format!("unterminated string starting at column {pos}"));
                }
                let end = chars[j].0 + 1;
                let v: Value = serde_json::from_str(&line[pos..end])
                    .map_err(|e| format!("bad string literal at column {pos}: {e}"))?;
                toks.push(Tok::Lit(v));
                i = j + 1;
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut j = i + 1;
                while j < chars.len()
                    && (chars[j].1.is_ascii_digit() || matches!(chars[j].1, '.' | 'e' | 'E' | '+' | '-'))
                {
                    j += 1;
                }
                let end = chars.get(j).map_or(line.len(), |&(p, _)| p);
                let v: Value = serde_json::from_str(&line[pos..end])
                    .map_err(|_| format!("bad number literal `{}`", &line[pos..end]))?;
                if !v.is_number() {
                    return Err(format!("bad number literal `{}`", &line[pos..end]));
                }
                toks.push(Tok::Lit(v));
                i = j;
            }
            c if is_ident_start(c) => {
                let mut j = i + 1;
                while j < chars.len() && is_ident_char(chars[j].1) {
                    j += 1;
                }
                let end = chars.get(j).map_or(line.len(), |&(p, _)| p);
                let word = &line[pos..end];
                toks.push(match word {
                    "true" => Tok::Lit(Value::Bool(true)),
                    "false" => Tok::Lit(Value::Bool(false)),
                    "null" => Tok::Lit(Value::Null),
                    _ => Tok::Ident(word.to_string()),
                });
                i = j;
            }
            other => return Err(format!("unexpected character `{other}` at column {pos}")),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(format!("expected {what}, found {}", describe(&t))),
            None => Err(format!("expected {what}, found end of line")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => Err(format!("expected {what}, found {}", describe(&t))),
            None => Err(format!("expected {what}, found end of line")),
        }
    }

    fn port(&mut self) -> Result<PortRef, String> {
        let node = self.ident("node id")?;
        self.expect(Tok::Dot, "`.`")?;
        let port = self.ident("port name")?;
        Ok(PortRef::new(node, port))
    }

    fn operand(&mut self) -> Result<Operand, String> {
        let name = self.ident("variable or node.port")?;
        if self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            let port = self.ident("port name")?;
            return Ok(Operand::Port(PortRef::new(name, port)));
        }
        Ok(Operand::Var(name))
    }

    fn literal(&mut self) -> Result<Value, String> {
        match self.next() {
            Some(Tok::Lit(v)) => Ok(v),
            Some(t) => Err(format!("expected a literal, found {}", describe(&t))),
            None => Err("expected a literal, found end of line".into()),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn line(&mut self) -> Result<ActionSyntax, String> {
        let syntax = match (self.peek(), self.peek_at(1)) {
            (Some(Tok::Ident(w)), None) if w == "STOP" => {
                self.pos += 1;
                ActionSyntax::Stop
            }
            (Some(Tok::Ident(w)), Some(Tok::LParen)) if w == "connect" => {
                self.pos += 2;
                let src = self.operand()?;
                self.expect(Tok::Comma, "`,`")?;
                let dst = self.port()?;
                self.expect(Tok::RParen, "`)`")?;
                ActionSyntax::Connect { src, dst }
            }
            (Some(Tok::Ident(w)), Some(Tok::LParen)) if w == "disconnect" => {
                self.pos += 2;
                let dst = self.port()?;
                self.expect(Tok::RParen, "`)`")?;
                ActionSyntax::Disconnect { dst }
            }
            (Some(Tok::Ident(w)), Some(Tok::LParen)) if w == "set" => {
                self.pos += 2;
                let target = self.port()?;
                self.expect(Tok::Comma, "`,`")?;
                let value = self.literal()?;
                self.expect(Tok::RParen, "`)`")?;
                ActionSyntax::Set { target, value }
            }
            _ => self.call()?,
        };
        if !self.at_end() {
            let t = self.next().expect("not at end");
            return Err(format!("unexpected {} after end of action", describe(&t)));
        }
        Ok(syntax)
    }

    fn call(&mut self) -> Result<ActionSyntax, String> {
        let has_lhs = self.toks.contains(&Tok::Eq)
            && !matches!(self.peek_at(1), Some(Tok::LParen));
        let outputs = if has_lhs {
            let mut names = vec![self.ident("output variable")?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                names.push(self.ident("output variable")?);
            }
            self.expect(Tok::Eq, "`=`")?;
            Some(names)
        } else {
            None
        };
        let type_name = self.ident("node type name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args: Vec<(String, ArgValue)> = Vec::new();
        while self.peek() != Some(&Tok::RParen) {
            let key = self.ident("argument name")?;
            self.expect(Tok::Eq, "`=`")?;
            let value = match self.peek() {
                Some(Tok::Lit(_)) => ArgValue::Literal(self.literal()?),
                _ => ArgValue::Ref(self.operand()?),
            };
            if args.iter().any(|(k, _)| *k == key) {
                return Err(format!("argument `{key}` given twice"));
            }
            args.push((key, value));
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::RParen) => {}
                Some(t) => return Err(format!("expected `,` or `)`, found {}", describe(t))),
                None => return Err("expected `)`, found end of line".into()),
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(ActionSyntax::Call {
            outputs,
            type_name,
            args,
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Lit(v) => format!("literal {v}"),
        Tok::Eq => "`=`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Dot => "`.`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
    }
}

/// Parses one action line without consulting any graph or registry.
pub fn parse_syntax(line: &str) -> Result<ActionSyntax, String> {
    if line.contains('\n') || line.contains('\r') {
        return Err("an action must be a single line".into());
    }
    let toks = lex(line)?;
    if toks.is_empty() {
        return Err("empty action".into());
    }
    Parser { toks, pos: 0 }.line()
}
