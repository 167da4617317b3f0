use super::{BinOp, CmpOp, Expr, ExprError, Func};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok| out.push(Token { tok, line: tl, column: tc });

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(tl, tc, format!("malformed number `{text}`")))?;
            push(Tok::Num(value));
            col += i - start;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            push(Tok::Ident(chars[start..i].iter().collect()));
            col += i - start;
            continue;
        }
        if c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\n' {
                    return Err(syntax(tl, tc, "unterminated string literal"));
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(syntax(tl, tc, "unterminated string literal"));
            }
            push(Tok::Str(chars[start + 1..i].iter().collect()));
            i += 1;
            col += i - start;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, width) = match two.as_str() {
            "<=" => (Tok::Op("<="), 2),
            ">=" => (Tok::Op(">="), 2),
            "==" => (Tok::Op("="), 2),
            _ => match c {
                '+' => (Tok::Op("+"), 1),
                '-' | '\u{2212}' => (Tok::Op("-"), 1),
                '*' | '\u{00d7}' => (Tok::Op("*"), 1),
                '/' | '\u{00f7}' => (Tok::Op("/"), 1),
                '<' => (Tok::Op("<"), 1),
                '>' => (Tok::Op(">"), 1),
                '=' => (Tok::Op("="), 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                ',' => (Tok::Comma, 1),
                ':' => (Tok::Colon, 1),
                other => return Err(syntax(tl, tc, format!("unexpected character `{other}`"))),
            },
        };
        push(tok);
        i += width;
        col += width;
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ExprError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.column, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.additive()?;
        let op = match self.peek().tok {
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            Tok::Op("=") => CmpOp::Eq,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.additive()?;
        Ok(Expr::Compare {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    fn additive(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().tok == Tok::Op("-") {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Number(v)),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                if name == "partition" {
                    return self.partition();
                }
                let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                    name: name.clone(),
                    line: t.line,
                    column: t.column,
                })?;
                self.next();
                let mut args = vec![self.expr()?];
                while self.peek().tok == Tok::Comma {
                    self.next();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
                let arity = func.arity();
                if args.len() < arity.0 || arity.1.is_some_and(|max| args.len() > max) {
                    return Err(ExprError::Arity {
                        func: func.name(),
                        expected: arity,
                        found: args.len(),
                    });
                }
                Ok(Expr::Call { func, args })
            }
            other => Err(syntax(t.line, t.column, format!("unexpected {}", describe(&other)))),
        }
    }

    fn partition(&mut self) -> Result<Expr, ExprError> {
        self.expect(Tok::LParen, "`(`")?;
        let t = self.next();
        let Tok::Ident(parent) = t.tok else {
            return Err(syntax(t.line, t.column, "expected the partitioning variable"));
        };
        let mut branches = Vec::new();
        while self.peek().tok == Tok::Comma {
            self.next();
            let t = self.next();
            let Tok::Str(state) = t.tok else {
                return Err(syntax(t.line, t.column, "expected a quoted state label"));
            };
            self.expect(Tok::Colon, "`:`")?;
            branches.push((state, self.expr()?));
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        if branches.is_empty() {
            return Err(syntax(t.line, t.column, "partition needs at least one branch"));
        }
        Ok(Expr::Partition { parent, branches })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(o) => format!("`{o}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses expression source text into an [`Expr`].
pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    let t = p.next();
    if t.tok != Tok::End {
        return Err(syntax(t.line, t.column, format!("unexpected {}", describe(&t.tok))));
    }
    Ok(e)
}
