//! Recursive-descent parser for the program source format.
//!
//! Grammar (statements end with `;`, `#` starts a line comment):
//!
//! ```text
//! program   := item*
//! item      := "input" name ":" dim "x" dim ";"
//!            | "output" name ";"
//!            | name ":=" expr ";"
//! expr      := term (("+" | "-") term)*
//! term      := unary ("*" unary)*
//! unary     := "-" unary | postfix
//! postfix   := primary "'"*
//! primary   := number | name | "(" expr ")" | "inv" "(" expr ")"
//! ```
//!
//! Numeric literals are scalar coefficients and must multiply a matrix
//! expression. Parsing also enforces single assignment and definition
//! before use.

use std::collections::BTreeSet;

use super::{Dim, Expr, InputDecl, Program, Statement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Assign, // :=
    Colon,
    Semi,
    Plus,
    Minus,
    Star,
    Tick, // '
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<SpannedTok>> {
    let mut out = Vec::new();
    for (line_idx, line) in src.lines().enumerate() {
        let line_no = line_idx + 1;
        let bytes: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let col = i + 1;
            match c {
                '#' => break,
                c if c.is_whitespace() => {
                    i += 1;
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                        i += 1;
                    }
                    let word: String = bytes[start..i].iter().collect();
                    out.push(SpannedTok {
                        tok: Tok::Ident(word),
                        line: line_no,
                        col,
                    });
                }
                c if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) => {
                    let start = i;
                    while i < bytes.len()
                        && (bytes[i].is_ascii_digit()
                            || bytes[i] == '.'
                            || bytes[i] == 'e'
                            || bytes[i] == 'E'
                            || ((bytes[i] == '+' || bytes[i] == '-')
                                && i > start
                                && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                    {
                        i += 1;
                    }
                    let text: String = bytes[start..i].iter().collect();
                    let value: f64 = text.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        col,
                        msg: format!("bad numeric literal `{text}`"),
                    })?;
                    out.push(SpannedTok {
                        tok: Tok::Number(value),
                        line: line_no,
                        col,
                    });
                }
                ':' => {
                    if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                        out.push(SpannedTok {
                            tok: Tok::Assign,
                            line: line_no,
                            col,
                        });
                        i += 2;
                    } else {
                        out.push(SpannedTok {
                            tok: Tok::Colon,
                            line: line_no,
                            col,
                        });
                        i += 1;
                    }
                }
                ';' => {
                    out.push(SpannedTok {
                        tok: Tok::Semi,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                '+' => {
                    out.push(SpannedTok {
                        tok: Tok::Plus,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                '-' => {
                    out.push(SpannedTok {
                        tok: Tok::Minus,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                '*' => {
                    out.push(SpannedTok {
                        tok: Tok::Star,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                '\'' => {
                    out.push(SpannedTok {
                        tok: Tok::Tick,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                '(' => {
                    out.push(SpannedTok {
                        tok: Tok::LParen,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                ')' => {
                    out.push(SpannedTok {
                        tok: Tok::RParen,
                        line: line_no,
                        col,
                    });
                    i += 1;
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        col,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&SpannedTok> {
        self.toks.get(self.pos)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> (usize, usize) {
        self.peek()
            .map(|t| (t.line, t.col))
            .or_else(|| self.toks.last().map(|t| (t.line, t.col + 1)))
            .unwrap_or((1, 1))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<SpannedTok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<SpannedTok> {
        match self.peek() {
            Some(t) if t.tok == tok => Ok(self.bump().unwrap()),
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize)> {
        match self.peek().cloned() {
            Some(SpannedTok {
                tok: Tok::Ident(name),
                line,
                ..
            }) => {
                self.bump();
                Ok((name, line))
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn parse_dim(&mut self) -> Result<Dim> {
        match self.peek().cloned() {
            Some(SpannedTok {
                tok: Tok::Ident(s), ..
            }) => {
                self.bump();
                Ok(Dim::Sym(s))
            }
            Some(SpannedTok {
                tok: Tok::Number(v),
                line,
                col,
            }) => {
                self.bump();
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("dimension must be a positive integer, got {v}"),
                    });
                }
                Ok(Dim::Lit(v as usize))
            }
            _ => Err(self.err("expected a dimension (symbol or integer)")),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let mut acc = self.parse_term()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    acc = Expr::add(acc, rhs);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    acc = Expr::sub(acc, rhs);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    /// A product. Numeric factors fold into one scalar coefficient; at least
    /// one matrix factor must remain.
    fn parse_term(&mut self) -> Result<Expr> {
        let mut coeff = 1.0f64;
        let mut factors: Vec<Expr> = Vec::new();
        loop {
            match self.parse_unary()? {
                Factor::Number(v) => coeff *= v,
                Factor::Matrix(e) => factors.push(e),
            }
            if matches!(self.peek().map(|t| &t.tok), Some(Tok::Star)) {
                self.bump();
            } else {
                break;
            }
        }
        let mut it = factors.into_iter();
        let product = match it.next() {
            Some(first) => it.fold(first, Expr::mul),
            None => return Err(self.err("numeric literal must multiply a matrix expression")),
        };
        Ok(if coeff == 1.0 {
            product
        } else {
            Expr::scale(coeff, product)
        })
    }

    fn parse_unary(&mut self) -> Result<Factor> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Minus)) {
            self.bump();
            return Ok(match self.parse_unary()? {
                Factor::Number(v) => Factor::Number(-v),
                Factor::Matrix(e) => Factor::Matrix(Expr::scale(-1.0, e)),
            });
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<Factor> {
        let mut base = self.parse_primary()?;
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Tick)) {
            match base {
                Factor::Matrix(e) => {
                    self.bump();
                    base = Factor::Matrix(Expr::transpose(e));
                }
                Factor::Number(_) => return Err(self.err("cannot transpose a numeric literal")),
            }
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Factor> {
        match self.peek().cloned() {
            Some(SpannedTok {
                tok: Tok::Number(v), ..
            }) => {
                self.bump();
                Ok(Factor::Number(v))
            }
            Some(SpannedTok {
                tok: Tok::Ident(name),
                ..
            }) => {
                self.bump();
                if name == "inv" && matches!(self.peek().map(|t| &t.tok), Some(Tok::LParen)) {
                    self.bump();
                    let inner = self.parse_expr()?;
                    self.expect(Tok::RParen, "`)` closing inv(...)")?;
                    Ok(Factor::Matrix(Expr::inverse(inner)))
                } else {
                    Ok(Factor::Matrix(Expr::var(name)))
                }
            }
            Some(SpannedTok { tok: Tok::LParen, .. }) => {
                self.bump();
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Factor::Matrix(inner))
            }
            _ => Err(self.err("expected an expression")),
        }
    }
}

enum Factor {
    Number(f64),
    Matrix(Expr),
}

pub fn parse_program(src: &str) -> Result<Program> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut program = Program {
        inputs: Vec::new(),
        statements: Vec::new(),
        outputs: Vec::new(),
    };
    let mut defined: BTreeSet<String> = BTreeSet::new();

    while !p.at_end() {
        let (word, line) = p.expect_ident("`input`, `output`, or a statement target")?;
        match word.as_str() {
            "input" => {
                let (name, line) = p.expect_ident("input name")?;
                p.expect(Tok::Colon, "`:` after input name")?;
                let rows = p.parse_dim()?;
                let (sep, _) = p.expect_ident("`x` between dimensions")?;
                if sep != "x" {
                    return Err(p.err("expected `x` between dimensions"));
                }
                let cols = p.parse_dim()?;
                p.expect(Tok::Semi, "`;`")?;
                if !defined.insert(name.clone()) {
                    return Err(Error::Redefinition { name, line });
                }
                program.inputs.push(InputDecl {
                    name,
                    rows,
                    cols,
                    line,
                });
            }
            "output" => {
                let (name, line) = p.expect_ident("output name")?;
                p.expect(Tok::Semi, "`;`")?;
                if !defined.contains(&name) {
                    return Err(Error::UndefinedName { name, line });
                }
                program.outputs.push(name);
            }
            target => {
                let target = target.to_string();
                p.expect(Tok::Assign, "`:=`")?;
                let expr = p.parse_expr()?;
                p.expect(Tok::Semi, "`;`")?;
                for used in expr.names() {
                    if !defined.contains(&used) {
                        return Err(Error::UndefinedName { name: used, line });
                    }
                }
                if !defined.insert(target.clone()) {
                    return Err(Error::Redefinition { name: target, line });
                }
                program.statements.push(Statement { target, expr, line });
            }
        }
    }
    Ok(program)
}
