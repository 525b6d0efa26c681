//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, tightest first: `^`, unary `-`, `*` `/`, `+` `-`. Exponents
//! are numeric: a literal or a parenthesized expression that constant-folds
//! to a number. A unary minus applied directly to a literal produces a
//! negative constant, except when the literal is the base of a power
//! (`-4^2` is `-(4^2)`).

use super::{fold, ExprError, Exponent, Func, Node};

pub(super) fn parse(text: &str, dimension: usize) -> Result<Node, ExprError> {
    let mut cursor = Cursor {
        src: text.as_bytes(),
        pos: 0,
        dimension,
    };
    cursor.skip_ws();
    if cursor.at_end() {
        return Err(cursor.syntax("empty expression"));
    }
    let node = cursor.expr()?;
    cursor.skip_ws();
    if !cursor.at_end() {
        return Err(cursor.syntax(format!(
            "unexpected character `{}`",
            cursor.src[cursor.pos] as char
        )));
    }
    Ok(node)
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    dimension: usize,
}

impl Cursor<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            position: self.pos,
            message: message.into(),
        }
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut node = self.term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                let rhs = self.term()?;
                node = Node::Add(Box::new(node), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                node = Node::Sub(Box::new(node), Box::new(rhs));
            } else {
                return Ok(node);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut node = self.factor()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                let rhs = self.factor()?;
                node = Node::Mul(Box::new(node), Box::new(rhs));
            } else if self.eat(b'/') {
                let rhs = self.factor()?;
                node = Node::Div(Box::new(node), Box::new(rhs));
            } else {
                return Ok(node);
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        if self.eat(b'-') {
            self.skip_ws();
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                let value = self.number()?;
                self.skip_ws();
                if self.peek() == Some(b'^') {
                    // `^` binds tighter than the sign: -4^2 = -(4^2).
                    self.pos += 1;
                    let exponent = self.exponent()?;
                    return Ok(Node::Neg(Box::new(Node::Pow(
                        Box::new(Node::Constant(value)),
                        exponent,
                    ))));
                }
                return Ok(Node::Constant(-value));
            }
            let inner = self.factor()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        self.skip_ws();
        if self.eat(b'^') {
            let exponent = self.exponent()?;
            return Ok(Node::Pow(Box::new(base), exponent));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Exponent, ExprError> {
        self.skip_ws();
        let negative = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        let value = match self.peek() {
            Some(c) if c.is_ascii_digit() => self.number()?,
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                match fold(inner) {
                    Node::Constant(c) => c,
                    _ => {
                        return Err(ExprError::Syntax {
                            position: start,
                            message: "exponent must be a constant".into(),
                        })
                    }
                }
            }
            _ => return Err(self.syntax("expected a numeric exponent")),
        };
        Ok(Exponent::from_value(if negative { -value } else { value }))
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(c) if c.is_ascii_digit() => Ok(Node::Constant(self.number()?)),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(self.syntax(format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // Not an exponent suffix; leave `e` for the caller.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| ExprError::Syntax {
            position: start,
            message: format!("invalid number `{text}`"),
        })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        // Variables are exactly x1..xn.
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ExprError::Syntax {
                    position: start,
                    message: format!("invalid variable index in `{name}`"),
                })?;
                if index == 0 {
                    return Err(ExprError::UnknownIdentifier {
                        position: start,
                        name: name.to_string(),
                    });
                }
                if index > self.dimension {
                    return Err(ExprError::VariableOutOfRange {
                        index,
                        dimension: self.dimension,
                    });
                }
                return Ok(Node::Variable(index));
            }
        }
        if let Some(func) = Func::from_name(name) {
            self.skip_ws();
            if !self.eat(b'(') {
                return Err(self.syntax(format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            self.skip_ws();
            if !self.eat(b')') {
                return Err(self.syntax("expected `)`"));
            }
            return Ok(Node::Func(func, Box::new(arg)));
        }
        Err(ExprError::UnknownIdentifier {
            position: start,
            name: name.to_string(),
        })
    }
}
