//! Recursive-descent parser producing the unchecked AST of one file.

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::Diagnostic;

pub(crate) struct FileItems {
    pub classes: Vec<ClassDef>,
    pub functions: Vec<MethodDef>,
}

pub(crate) struct Parser<'a> {
    file_name: &'a str,
    file: usize,
    tokens: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'a> Parser<'a> {
    pub fn new(file_name: &'a str, file: usize, tokens: &'a [Token]) -> Self {
        Self { file_name, file, tokens, pos: 0 }
    }

    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn tok(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = self.tok();
        Err(Diagnostic::syntax(self.file_name, t.line, t.col, msg))
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<&Token> {
        if *self.peek() == kind {
            Ok(self.bump())
        } else {
            self.error(format!("expected `{}`, found `{}`", kind, self.peek()))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            TokenKind::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found `{other}`")),
        }
    }

    fn normalized(&self, from: usize, to_inclusive: usize) -> Vec<String> {
        self.tokens[from..=to_inclusive].iter().map(|t| t.kind.text()).collect()
    }

    pub fn parse_file(mut self) -> PResult<FileItems> {
        let mut classes = Vec::new();
        let mut functions = Vec::new();
        loop {
            match self.peek() {
                TokenKind::Eof => break,
                TokenKind::Class => classes.push(self.class()?),
                TokenKind::Fn => functions.push(self.method(false)?),
                other => {
                    return self.error(format!("expected `class` or `fn` at top level, found `{other}`"))
                }
            }
        }
        Ok(FileItems { classes, functions })
    }

    fn class(&mut self) -> PResult<ClassDef> {
        let start_line = self.expect(TokenKind::Class)?.line;
        let name = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut fields = Vec::new();
        let mut constructors = Vec::new();
        let mut methods = Vec::new();
        loop {
            match self.peek() {
                TokenKind::RBrace => break,
                TokenKind::Var => fields.push(self.field()?),
                TokenKind::Init => constructors.push((self.tok().line, self.tok().col, self.method(true)?)),
                TokenKind::Fn => methods.push(self.method(false)?),
                other => {
                    return self.error(format!("expected `var`, `init` or `fn` in class body, found `{other}`"))
                }
            }
        }
        let end_line = self.expect(TokenKind::RBrace)?.line;
        if constructors.len() > 1 {
            let (line, col, _) = constructors[1];
            return Err(Diagnostic::duplicate(
                self.file_name,
                line,
                col,
                format!("class {name} declares more than one constructor"),
            ));
        }
        Ok(ClassDef {
            name,
            fields,
            constructor: constructors.pop().map(|(_, _, c)| c),
            methods,
            span: Span { file: self.file, start_line, end_line },
        })
    }

    fn field(&mut self) -> PResult<FieldDef> {
        let start_line = self.expect(TokenKind::Var)?.line;
        let name = self.ident()?;
        self.expect(TokenKind::Colon)?;
        let ty = self.ty()?;
        self.expect(TokenKind::Assign)?;
        let init = self.literal()?;
        let end_line = self.expect(TokenKind::Semi)?.line;
        Ok(FieldDef { name, ty, init, span: Span { file: self.file, start_line, end_line } })
    }

    fn literal(&mut self) -> PResult<Literal> {
        let negative = self.eat(&TokenKind::Minus);
        match self.peek().clone() {
            TokenKind::Int(v) => {
                self.bump();
                self.int_value(v, negative).map(Literal::Int)
            }
            TokenKind::True if !negative => {
                self.bump();
                Ok(Literal::Bool(true))
            }
            TokenKind::False if !negative => {
                self.bump();
                Ok(Literal::Bool(false))
            }
            other => self.error(format!("expected literal, found `{other}`")),
        }
    }

    fn int_value(&self, magnitude: u64, negative: bool) -> PResult<i64> {
        const MIN_MAGNITUDE: u64 = 1 << 63;
        match (negative, magnitude) {
            (true, MIN_MAGNITUDE) => Ok(i64::MIN),
            (_, m) if m < MIN_MAGNITUDE => Ok(if negative { -(m as i64) } else { m as i64 }),
            _ => {
                let prev = &self.tokens[self.pos.saturating_sub(1)];
                Err(Diagnostic::syntax(self.file_name, prev.line, prev.col, "integer literal out of range"))
            }
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let t = match self.peek().clone() {
            TokenKind::TyInt => Type::Int,
            TokenKind::TyBool => Type::Bool,
            TokenKind::TyVoid => Type::Void,
            TokenKind::Ident(c) => Type::Object(c),
            other => return self.error(format!("expected type, found `{other}`")),
        };
        self.bump();
        Ok(t)
    }

    fn method(&mut self, constructor: bool) -> PResult<MethodDef> {
        let start = self.pos;
        let start_line = self.tok().line;
        let name = if constructor {
            self.expect(TokenKind::Init)?;
            "init".to_string()
        } else {
            self.expect(TokenKind::Fn)?;
            self.ident()?
        };
        self.expect(TokenKind::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != TokenKind::RParen {
            loop {
                let pname = self.ident()?;
                self.expect(TokenKind::Colon)?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        let ret = if constructor {
            Type::Void
        } else {
            self.expect(TokenKind::Colon)?;
            self.ty()?
        };
        let (body, _) = self.block()?;
        let end = self.pos - 1;
        let end_line = self.tokens[end].line;
        Ok(MethodDef {
            name,
            params,
            ret,
            body,
            span: Span { file: self.file, start_line, end_line },
            normalized: self.normalized(start, end),
        })
    }

    /// Returns the statements and the line of the opening brace.
    fn block(&mut self) -> PResult<(Vec<Stmt>, u32)> {
        let open_line = self.expect(TokenKind::LBrace)?.line;
        let mut stmts = Vec::new();
        while *self.peek() != TokenKind::RBrace {
            if *self.peek() == TokenKind::Eof {
                return self.error("unexpected end of file, expected `}`");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok((stmts, open_line))
    }

    fn simple(&mut self, kind: StmtKind, line: u32, start: usize) -> PResult<Stmt> {
        let semi = self.expect(TokenKind::Semi)?;
        let (end_line, end) = (semi.line, semi.end);
        Ok(Stmt { kind, line, head_end_line: end_line, range: Some((start, end)) })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let line = self.tok().line;
        let start = self.tok().start;
        match self.peek().clone() {
            TokenKind::Var => {
                self.bump();
                let name = self.ident()?;
                self.expect(TokenKind::Colon)?;
                let ty = self.ty()?;
                self.expect(TokenKind::Assign)?;
                let init = self.expr()?;
                self.simple(StmtKind::VarDecl { name, ty, init }, line, start)
            }
            TokenKind::If => self.if_stmt(),
            TokenKind::While => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let cond = self.expr()?;
                self.expect(TokenKind::RParen)?;
                let (body, head_end_line) = self.block()?;
                Ok(Stmt { kind: StmtKind::While { cond, body }, line, head_end_line, range: None })
            }
            TokenKind::Return => {
                self.bump();
                let value = if *self.peek() == TokenKind::Semi { None } else { Some(self.expr()?) };
                self.simple(StmtKind::Return(value), line, start)
            }
            TokenKind::This
                if *self.peek_at(1) == TokenKind::Dot
                    && matches!(self.peek_at(2), TokenKind::Ident(_))
                    && *self.peek_at(3) == TokenKind::Assign =>
            {
                self.bump();
                self.bump();
                let field = self.ident()?;
                self.bump();
                let value = self.expr()?;
                self.simple(StmtKind::FieldAssign { field, value }, line, start)
            }
            TokenKind::Ident(name) if *self.peek_at(1) == TokenKind::Assign => {
                self.bump();
                self.bump();
                let value = self.expr()?;
                self.simple(StmtKind::Assign { name, value }, line, start)
            }
            _ => {
                let e = self.expr()?;
                self.simple(StmtKind::Expr(e), line, start)
            }
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let line = self.expect(TokenKind::If)?.line;
        self.expect(TokenKind::LParen)?;
        let cond = self.expr()?;
        self.expect(TokenKind::RParen)?;
        let (then_body, head_end_line) = self.block()?;
        let (else_body, else_line) = if *self.peek() == TokenKind::Else {
            let else_line = self.bump().line;
            if *self.peek() == TokenKind::If {
                (Some(vec![self.if_stmt()?]), Some(else_line))
            } else {
                (Some(self.block()?.0), Some(else_line))
            }
        } else {
            (None, None)
        };
        Ok(Stmt {
            kind: StmtKind::If { cond, then_body, else_body, else_line },
            line,
            head_end_line,
            range: None,
        })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> PResult<Expr> {
        const LEVELS: &[&[(TokenKind, BinOp)]] = &[
            &[(TokenKind::OrOr, BinOp::Or)],
            &[(TokenKind::AndAnd, BinOp::And)],
            &[(TokenKind::EqEq, BinOp::Eq), (TokenKind::NotEq, BinOp::Ne)],
            &[
                (TokenKind::Lt, BinOp::Lt),
                (TokenKind::Le, BinOp::Le),
                (TokenKind::Gt, BinOp::Gt),
                (TokenKind::Ge, BinOp::Ge),
            ],
            &[(TokenKind::Plus, BinOp::Add), (TokenKind::Minus, BinOp::Sub)],
            &[(TokenKind::Star, BinOp::Mul), (TokenKind::Slash, BinOp::Div), (TokenKind::Percent, BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        loop {
            let Some(op) = LEVELS[level].iter().find(|(k, _)| k == self.peek()).map(|(_, op)| *op) else {
                break;
            };
            let line = self.bump().line;
            let rhs = self.binary_level(level + 1)?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), line };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let line = self.tok().line;
        match self.peek() {
            TokenKind::Minus => {
                self.bump();
                if let TokenKind::Int(v) = *self.peek() {
                    self.bump();
                    let value = self.int_value(v, true)?;
                    return self.postfix(Expr { kind: ExprKind::Lit(Literal::Int(value)), line });
                }
                let inner = self.unary()?;
                Ok(Expr { kind: ExprKind::Unary(UnOp::Neg, Box::new(inner)), line })
            }
            TokenKind::Bang => {
                self.bump();
                let inner = self.unary()?;
                Ok(Expr { kind: ExprKind::Unary(UnOp::Not, Box::new(inner)), line })
            }
            _ => {
                let p = self.primary()?;
                self.postfix(p)
            }
        }
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if *self.peek() != TokenKind::RParen {
            loop {
                args.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(args)
    }

    fn postfix(&mut self, mut e: Expr) -> PResult<Expr> {
        while *self.peek() == TokenKind::Dot {
            let line = self.bump().line;
            let method = self.ident()?;
            if *self.peek() != TokenKind::LParen {
                return self.error("fields of other objects are not accessible; only `this.field` is");
            }
            let args = self.args()?;
            e = Expr { kind: ExprKind::CallOn { recv: Box::new(e), method, args }, line };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let line = self.tok().line;
        let kind = match self.peek().clone() {
            TokenKind::Int(v) => {
                self.bump();
                ExprKind::Lit(Literal::Int(self.int_value(v, false)?))
            }
            TokenKind::True => {
                self.bump();
                ExprKind::Lit(Literal::Bool(true))
            }
            TokenKind::False => {
                self.bump();
                ExprKind::Lit(Literal::Bool(false))
            }
            TokenKind::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(e);
            }
            TokenKind::This => {
                self.bump();
                if *self.peek() != TokenKind::Dot {
                    return self.error("`this` must be followed by `.field` or `.method(...)`");
                }
                self.bump();
                let name = self.ident()?;
                if *self.peek() == TokenKind::LParen {
                    ExprKind::CallSelf { method: name, args: self.args()? }
                } else {
                    ExprKind::FieldRead(name)
                }
            }
            TokenKind::New => {
                self.bump();
                let class = self.ident()?;
                ExprKind::New { class, args: self.args()? }
            }
            TokenKind::Ident(name) => {
                self.bump();
                if *self.peek() == TokenKind::LParen {
                    ExprKind::CallFn { name, args: self.args()? }
                } else {
                    ExprKind::Local(name)
                }
            }
            other => return self.error(format!("expected expression, found `{other}`")),
        };
        Ok(Expr { kind, line })
    }
}
