//! Recursive-descent parser for scripts and expressions.
//!
//! Calls of operator names build operator nodes; the filter shorthands
//! (keyword equality, `att/op/c` and textual predicates with `$params`)
//! desugar into ordinary lambdas over a row parameter named `_row`.

use std::collections::BTreeMap;

use super::lexer::{tokenize, Token, TokenKind};
use super::{Mutation, Script, Spanned, Stmt};
use crate::error::{Error, Result};
use crate::expr::{
    AggKind, AggSpec, BinOp, Builtin, ColRef, Expr, GroupBy, GroupingSet, JoinPair, Operator,
    SetOpKind,
};
use crate::model::{Value, ROOT_NAME};

/// Parameter name used by desugared filter shorthands.
pub const ROW_PARAM: &str = "_row";

const KEYWORDS: &[&str] = &["and", "or", "not", "in", "fn", "lambda", "true", "false"];

/// Names that build operator nodes when called.
pub const OPERATOR_NAMES: &[&str] = &[
    "filter",
    "group",
    "aggregate",
    "group_and_aggregate",
    "grouping_sets",
    "join",
    "subdatabase",
    "reduce_DB",
    "union",
    "intersect",
    "minus",
    "difference",
    "deep_copy",
    "copy",
    "map_member",
    "rnd_str",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn parse_script(src: &str) -> Result<Script> {
    let mut p = Parser::new(tokenize(src)?);
    let mut stmts = Vec::new();
    loop {
        p.skip_separators();
        if p.at(&TokenKind::Eof) {
            break;
        }
        let line = p.peek().line;
        let stmt = p.statement()?;
        stmts.push(Spanned { line, stmt });
        match p.peek().kind {
            TokenKind::Newline | TokenKind::Semi | TokenKind::Eof => {}
            _ => return Err(p.unexpected(&["end of statement"])),
        }
    }
    Ok(Script { stmts })
}

/// Parses a single expression spanning the whole input.
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser::new(tokenize(src)?);
    p.skip_separators();
    let e = p.expr()?;
    p.skip_separators();
    if !p.at(&TokenKind::Eof) {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(e)
}

struct Arg {
    name: Option<String>,
    expr: Expr,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Lambda parameters in scope, innermost last.
    scope: Vec<String>,
    /// Set while parsing a textual predicate: bare names read attributes of
    /// the row and `$name` refers to these parameter expressions.
    row_params: Option<BTreeMap<String, Expr>>,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser {
            toks,
            pos: 0,
            scope: Vec::new(),
            row_params: None,
        }
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].kind
    }

    fn at(&self, k: &TokenKind) -> bool {
        &self.peek().kind == k
    }

    fn at_ident(&self, name: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == name)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, k: &TokenKind) -> bool {
        if self.at(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, k: TokenKind) -> Result<Token> {
        if self.at(&k) {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[&k.to_string()]))
        }
    }

    fn unexpected(&self, expected: &[&str]) -> Error {
        let t = self.peek();
        Error::Parse {
            line: t.line,
            column: t.column,
            message: format!("unexpected {}", t.kind),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn error_at(&self, line: usize, column: usize, msg: impl Into<String>) -> Error {
        Error::parse(line, column, msg)
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek().kind, TokenKind::Newline | TokenKind::Semi) {
            self.bump();
        }
    }

    fn ident(&mut self) -> Result<String> {
        match &self.peek().kind {
            TokenKind::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    // ---- statements ----

    fn statement(&mut self) -> Result<Stmt> {
        if let TokenKind::Ident(word) = &self.peek().kind {
            let word = word.clone();
            let follows_access = matches!(
                self.peek_at(1),
                TokenKind::Assign | TokenKind::ColonAssign | TokenKind::Dot | TokenKind::LBracket
            );
            if !follows_access {
                match word.as_str() {
                    "begin" | "commit" | "rollback" => {
                        self.bump();
                        if self.eat(&TokenKind::LParen) {
                            self.expect(TokenKind::RParen)?;
                        }
                        return Ok(match word.as_str() {
                            "begin" => Stmt::Begin,
                            "commit" => Stmt::Commit,
                            _ => Stmt::Rollback,
                        });
                    }
                    "show" => {
                        self.bump();
                        return Ok(Stmt::Show(self.expr()?));
                    }
                    "explain" => {
                        self.bump();
                        return Ok(Stmt::Explain(self.expr()?));
                    }
                    "load" | "save" => {
                        self.bump();
                        let path = match self.bump().kind {
                            TokenKind::Str(s) => s,
                            _ => {
                                self.pos -= 1;
                                return Err(self.unexpected(&["quoted path"]));
                            }
                        };
                        return Ok(if word == "load" {
                            Stmt::Load(path)
                        } else {
                            Stmt::Save(path)
                        });
                    }
                    "del" => {
                        self.bump();
                        let t = self.peek().clone();
                        return match self.postfix()? {
                            Expr::Apply(target, key) => Ok(Stmt::Mutate {
                                target: *target,
                                mutation: Mutation::Delete { key },
                            }),
                            _ => Err(self.error_at(t.line, t.column, "`del` needs an indexed target")),
                        };
                    }
                    _ => {}
                }
            }
        }

        let start = self.peek().clone();
        let lhs = self.expr()?;
        let op_tok = self.peek().kind.clone();
        match op_tok {
            TokenKind::Assign => {
                self.bump();
                let rhs = self.expr()?;
                match lhs {
                    Expr::Ref(path) if path.len() == 1 => Ok(Stmt::Let {
                        name: path[0].clone(),
                        expr: rhs,
                    }),
                    Expr::Ref(path) if path.len() == 2 && path[0] != ROOT_NAME => {
                        Ok(Stmt::SetMember {
                            var: path[0].clone(),
                            member: path[1].clone(),
                            expr: rhs,
                        })
                    }
                    Expr::Apply(inner, attr) if matches!(inner.as_ref(), Expr::Apply(..)) => {
                        let Expr::Apply(target, key) = *inner else {
                            unreachable!()
                        };
                        let [attr] = <[Expr; 1]>::try_from(attr).map_err(|_| {
                            self.error_at(start.line, start.column, "attribute index takes one value")
                        })?;
                        Ok(Stmt::Mutate {
                            target: *target,
                            mutation: Mutation::SetAttr {
                                key,
                                attr,
                                op: None,
                                value: rhs,
                            },
                        })
                    }
                    Expr::Apply(target, key) => Ok(Stmt::Mutate {
                        target: *target,
                        mutation: Mutation::SetTuple { key, value: rhs },
                    }),
                    _ => Err(self.error_at(
                        start.line,
                        start.column,
                        "cannot assign to this expression",
                    )),
                }
            }
            TokenKind::PlusAssign | TokenKind::MinusAssign => {
                self.bump();
                let rhs = self.expr()?;
                let op = if op_tok == TokenKind::PlusAssign {
                    BinOp::Add
                } else {
                    BinOp::Sub
                };
                match lhs {
                    Expr::Apply(inner, attr) if matches!(inner.as_ref(), Expr::Apply(..)) => {
                        let Expr::Apply(target, key) = *inner else {
                            unreachable!()
                        };
                        let [attr] = <[Expr; 1]>::try_from(attr).map_err(|_| {
                            self.error_at(start.line, start.column, "attribute index takes one value")
                        })?;
                        Ok(Stmt::Mutate {
                            target: *target,
                            mutation: Mutation::SetAttr {
                                key,
                                attr,
                                op: Some(op),
                                value: rhs,
                            },
                        })
                    }
                    _ => Err(self.error_at(
                        start.line,
                        start.column,
                        "compound assignment needs `target[key][attr]`",
                    )),
                }
            }
            TokenKind::ColonAssign => {
                self.bump();
                let rhs = self.expr()?;
                let name = match lhs {
                    Expr::Ref(path) if path.len() == 2 && path[0] == ROOT_NAME => path[1].clone(),
                    Expr::Apply(f, args)
                        if matches!(f.as_ref(), Expr::Ref(p) if p.len() == 1 && p[0] == ROOT_NAME) =>
                    {
                        match args.as_slice() {
                            [Expr::Lit(Value::Text(n))] => n.clone(),
                            _ => {
                                return Err(self.error_at(
                                    start.line,
                                    start.column,
                                    "`:=` needs DB(\"name\") on the left",
                                ))
                            }
                        }
                    }
                    _ => {
                        return Err(self.error_at(
                            start.line,
                            start.column,
                            "`:=` assigns into the database: DB.name := expr",
                        ))
                    }
                };
                Ok(Stmt::Assign { name, expr: rhs })
            }
            _ => {
                if let Expr::Apply(f, args) = &lhs {
                    if let (Expr::Ref(path), [value]) = (f.as_ref(), args.as_slice()) {
                        if path.len() >= 2 && path.last().map(String::as_str) == Some("add") {
                            return Ok(Stmt::Mutate {
                                target: Expr::Ref(path[..path.len() - 1].to_vec()),
                                mutation: Mutation::Add {
                                    value: value.clone(),
                                },
                            });
                        }
                    }
                }
                Ok(Stmt::Expr(lhs))
            }
        }
    }

    // ---- expressions ----

    fn expr(&mut self) -> Result<Expr> {
        if self.at_ident("fn") || self.at_ident("lambda") {
            return self.lambda();
        }
        self.or_expr()
    }

    fn lambda(&mut self) -> Result<Expr> {
        let arrow_style = self.at_ident("fn");
        self.bump();
        let mut params = Vec::new();
        if arrow_style {
            self.expect(TokenKind::LParen)?;
            if !self.at(&TokenKind::RParen) {
                loop {
                    params.push(self.ident()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
            }
            self.expect(TokenKind::RParen)?;
            self.expect(TokenKind::Arrow)?;
        } else {
            loop {
                params.push(self.ident()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(TokenKind::Colon)?;
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                let t = self.peek();
                return Err(self.error_at(t.line, t.column, format!("duplicate parameter {p}")));
            }
        }
        let n = self.scope.len();
        self.scope.extend(params.iter().cloned());
        let body = self.expr();
        self.scope.truncate(n);
        Ok(Expr::Lambda(params, Box::new(body?)))
    }

    fn or_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.and_expr()?;
        while self.at_ident("or") {
            self.bump();
            lhs = Expr::bin(BinOp::Or, lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.not_expr()?;
        while self.at_ident("and") {
            self.bump();
            lhs = Expr::bin(BinOp::And, lhs, self.not_expr()?);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr> {
        if self.at_ident("not") {
            self.bump();
            return Ok(Expr::not(self.not_expr()?));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match &self.peek().kind {
                TokenKind::Lt => BinOp::Lt,
                TokenKind::Le => BinOp::Le,
                TokenKind::Gt => BinOp::Gt,
                TokenKind::Ge => BinOp::Ge,
                TokenKind::Eq => BinOp::Eq,
                TokenKind::Ne => BinOp::Ne,
                TokenKind::Ident(s) if s == "in" => {
                    self.bump();
                    lhs = Expr::in_(lhs, self.add_expr()?);
                    continue;
                }
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.add_expr()?);
        }
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.mul_expr()?);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if !self.at(&TokenKind::Minus) {
            return self.postfix();
        }
        let minus = self.bump();
        match self.peek().kind.clone() {
            TokenKind::Int(n) if !self.literal_has_postfix() => {
                self.bump();
                let v = if n == i64::MAX as u64 + 1 {
                    i64::MIN
                } else {
                    -i64::try_from(n).map_err(|_| {
                        self.error_at(minus.line, minus.column, "integer literal out of range")
                    })?
                };
                Ok(Expr::lit(v))
            }
            TokenKind::Float(x) if !self.literal_has_postfix() => {
                self.bump();
                Ok(Expr::lit(-x))
            }
            _ => Ok(Expr::bin(BinOp::Sub, Expr::lit(0), self.unary()?)),
        }
    }

    fn literal_has_postfix(&self) -> bool {
        matches!(
            self.peek_at(1),
            TokenKind::Dot | TokenKind::LParen | TokenKind::LBracket
        )
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut e = self.primary()?;
        loop {
            match self.peek().kind {
                TokenKind::LParen => {
                    let args = self.call_args()?;
                    let mut positional = Vec::new();
                    for a in args {
                        if a.name.is_some() {
                            return Err(self.error_at(
                                a.line,
                                a.column,
                                "keyword arguments are only accepted by operators",
                            ));
                        }
                        positional.push(a.expr);
                    }
                    e = Expr::apply(e, positional);
                }
                TokenKind::LBracket => {
                    self.bump();
                    let mut keys = vec![self.expr()?];
                    while self.eat(&TokenKind::Comma) {
                        keys.push(self.expr()?);
                    }
                    self.expect(TokenKind::RBracket)?;
                    e = Expr::apply(e, keys);
                }
                TokenKind::Dot => {
                    self.bump();
                    let name = match self.bump().kind {
                        TokenKind::Ident(s) => s,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected(&["member name"]));
                        }
                    };
                    e = match e {
                        Expr::Ref(mut path) => {
                            path.push(name);
                            Expr::Ref(path)
                        }
                        other => Expr::attr(other, name),
                    };
                }
                _ => return Ok(e),
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Arg>> {
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if self.eat(&TokenKind::RParen) {
            return Ok(args);
        }
        loop {
            let t = self.peek().clone();
            let name = match (&t.kind, self.peek_at(1)) {
                (TokenKind::Ident(s), TokenKind::Assign) if !is_keyword(s) => {
                    self.bump();
                    self.bump();
                    Some(s.clone())
                }
                _ => None,
            };
            let expr = self.expr()?;
            args.push(Arg {
                name,
                expr,
                line: t.line,
                column: t.column,
            });
            if self.eat(&TokenKind::RParen) {
                return Ok(args);
            }
            if !self.eat(&TokenKind::Comma) {
                return Err(self.unexpected(&["`,`", "`)`"]));
            }
            if self.eat(&TokenKind::RParen) {
                return Ok(args);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.peek().clone();
        match t.kind {
            TokenKind::Int(n) => {
                self.bump();
                let v = i64::try_from(n)
                    .map_err(|_| self.error_at(t.line, t.column, "integer literal out of range"))?;
                Ok(Expr::lit(v))
            }
            TokenKind::Float(x) => {
                self.bump();
                Ok(Expr::lit(x))
            }
            TokenKind::Str(s) => {
                self.bump();
                Ok(Expr::lit(s))
            }
            TokenKind::Dollar(name) => {
                self.bump();
                match &self.row_params {
                    Some(params) => params.get(&name).cloned().ok_or_else(|| {
                        self.error_at(t.line, t.column, format!("no value given for ${name}"))
                    }),
                    None => Err(self.error_at(
                        t.line,
                        t.column,
                        "`$` parameters only appear in textual predicates",
                    )),
                }
            }
            TokenKind::Ident(name) => match name.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Expr::lit(name == "true"))
                }
                "fn" | "lambda" => self.lambda(),
                "and" | "or" | "in" | "not" => Err(self.unexpected(&["expression"])),
                _ => {
                    self.bump();
                    if self.scope.contains(&name) {
                        return Ok(Expr::Param(name));
                    }
                    if self.at(&TokenKind::LParen) && OPERATOR_NAMES.contains(&name.as_str()) {
                        let args = self.call_args()?;
                        return build_operator(&name, args, t.line, t.column);
                    }
                    if self.row_params.is_some() && !self.at(&TokenKind::LParen) {
                        return Ok(Expr::attr(Expr::Param(ROW_PARAM.into()), name));
                    }
                    Ok(Expr::Ref(vec![name]))
                }
            },
            TokenKind::LParen => {
                if matches!(
                    (self.peek_at(1), self.peek_at(2)),
                    (TokenKind::Ident(_), TokenKind::Assign)
                ) {
                    let args = self.call_args()?;
                    let mut fields = Vec::new();
                    for a in args {
                        let Some(name) = a.name else {
                            return Err(self.error_at(
                                a.line,
                                a.column,
                                "expected `name=value` inside a keyword tuple",
                            ));
                        };
                        fields.push((name, a.expr));
                    }
                    return Ok(Expr::Record(fields));
                }
                self.bump();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::LBracket => {
                self.bump();
                let mut items = Vec::new();
                while !self.at(&TokenKind::RBracket) {
                    items.push(self.expr()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RBracket)?;
                Ok(Expr::List(items))
            }
            TokenKind::LBrace => {
                self.bump();
                let mut fields = Vec::new();
                while !self.at(&TokenKind::RBrace) {
                    let name = match self.bump().kind {
                        TokenKind::Ident(s) | TokenKind::Str(s) => s,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected(&["attribute name"]));
                        }
                    };
                    self.expect(TokenKind::Colon)?;
                    fields.push((name, self.expr()?));
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(TokenKind::RBrace)?;
                Ok(Expr::Record(fields))
            }
            _ => Err(self.unexpected(&["expression"])),
        }
    }
}

// ---- operator construction ----

struct Args {
    positional: Vec<Expr>,
    keyword: Vec<(String, Expr)>,
    line: usize,
    column: usize,
    op: String,
}

impl Args {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.column, format!("{}: {}", self.op, msg.into()))
    }

    fn take_kw(&mut self, name: &str) -> Option<Expr> {
        let i = self.keyword.iter().position(|(k, _)| k == name)?;
        Some(self.keyword.remove(i).1)
    }

    /// The data input: `input=` or the last positional argument.
    fn input(&mut self) -> Result<Expr> {
        if let Some(e) = self.take_kw("input") {
            return Ok(e);
        }
        self.positional
            .pop()
            .ok_or_else(|| self.err("missing input"))
    }

    fn no_more(&self) -> Result<()> {
        if let Some((k, _)) = self.keyword.first() {
            return Err(self.err(format!("unexpected keyword argument {k}")));
        }
        if !self.positional.is_empty() {
            return Err(self.err("too many arguments"));
        }
        Ok(())
    }
}

fn build_operator(name: &str, raw: Vec<Arg>, line: usize, column: usize) -> Result<Expr> {
    let mut a = Args {
        positional: Vec::new(),
        keyword: Vec::new(),
        line,
        column,
        op: name.to_string(),
    };
    for arg in raw {
        match arg.name {
            Some(k) => {
                if a.keyword.iter().any(|(n, _)| *n == k) {
                    return Err(Error::parse(
                        arg.line,
                        arg.column,
                        format!("keyword argument {k} given twice"),
                    ));
                }
                a.keyword.push((k, arg.expr));
            }
            None => a.positional.push(arg.expr),
        }
    }
    let unary = |a: &mut Args, op: Operator| -> Result<Expr> {
        let input = a.input()?;
        a.no_more()?;
        Ok(Expr::Op(op, vec![input]))
    };
    match name {
        "filter" => build_filter(a),
        "group" => {
            let input = a.input()?;
            let e = match a.take_kw("by") {
                Some(by) => Expr::Op(Operator::Group(GroupBy::Attrs(names(&a, &by)?)), vec![input]),
                None => {
                    let f = a.positional.pop().ok_or_else(|| a.err("needs by=[...] or a key function"))?;
                    Expr::Op(Operator::Group(GroupBy::KeyFn), vec![f, input])
                }
            };
            a.no_more()?;
            Ok(e)
        }
        "aggregate" => {
            let input = a.input()?;
            let specs = agg_specs(&mut a)?;
            a.no_more()?;
            Ok(Expr::Op(Operator::Aggregate(specs), vec![input]))
        }
        "group_and_aggregate" | "grouping_sets" => {
            let input = a.input()?;
            // group_and_aggregate([(by=.., name=..), ..], input) spells grouping
            // sets; any other leading argument is a key function
            let is_set = |i: &Expr| {
                matches!(i, Expr::Record(fs)
                    if fs.iter().any(|(k, _)| k == "by") && fs.iter().any(|(k, _)| k == "name"))
            };
            if name == "grouping_sets"
                || (a.keyword.is_empty()
                    && matches!(a.positional.first(), Some(Expr::List(items))
                        if !items.is_empty() && items.iter().all(is_set)))
            {
                let Some(Expr::List(items)) = a.positional.pop() else {
                    return Err(a.err("expected a list of grouping sets"));
                };
                let mut sets = Vec::new();
                for item in items {
                    let Expr::Record(fields) = item else {
                        return Err(a.err("grouping sets are written (by=[...], out=Agg(), name=\"...\")"));
                    };
                    let mut set = Args {
                        positional: Vec::new(),
                        keyword: fields,
                        line,
                        column,
                        op: name.to_string(),
                    };
                    let by = match set.take_kw("by") {
                        Some(by) => names(&set, &by)?,
                        None => return Err(set.err("grouping set without by=[...]")),
                    };
                    let set_name = match set.take_kw("name") {
                        Some(Expr::Lit(Value::Text(s))) => s,
                        _ => return Err(set.err("grouping set needs name=\"...\"")),
                    };
                    let aggs = agg_specs(&mut set)?;
                    sets.push(GroupingSet {
                        by,
                        aggs,
                        name: set_name,
                    });
                }
                a.no_more()?;
                return Ok(Expr::Op(Operator::GroupingSets(sets), vec![input]));
            }
            let by = a.take_kw("by");
            let key_fn = if by.is_none() { a.positional.pop() } else { None };
            let specs = agg_specs(&mut a)?;
            a.no_more()?;
            match (by, key_fn) {
                (Some(by), _) => Ok(Expr::Op(
                    Operator::GroupAndAggregate(GroupBy::Attrs(names(&a, &by)?), specs),
                    vec![input],
                )),
                (None, Some(f)) => Ok(Expr::Op(
                    Operator::GroupAndAggregate(GroupBy::KeyFn, specs),
                    vec![f, input],
                )),
                (None, None) => Err(a.err("needs by=[...] or a key function")),
            }
        }
        "join" => {
            let on = match a.take_kw("on") {
                Some(on) => Some(join_pairs(&a, on)?),
                None => None,
            };
            unary(&mut a, Operator::Join(on))
        }
        "subdatabase" => {
            let outer = match a.take_kw("outer") {
                Some(Expr::Lit(Value::Text(s))) => vec![s],
                Some(list) => names(&a, &list)?,
                None => return Err(a.err("needs outer=[...]")),
            };
            unary(&mut a, Operator::OuterMark(outer))
        }
        "reduce_DB" => unary(&mut a, Operator::ReduceDb),
        "deep_copy" => unary(&mut a, Operator::DeepCopy),
        "copy" => unary(&mut a, Operator::Copy),
        "union" | "intersect" | "minus" | "difference" => {
            let kind = match name {
                "union" => SetOpKind::Union,
                "intersect" => SetOpKind::Intersect,
                "minus" => SetOpKind::Minus,
                _ => SetOpKind::Difference,
            };
            if a.positional.len() != 2 || !a.keyword.is_empty() {
                return Err(a.err("takes exactly two databases"));
            }
            Ok(Expr::Op(Operator::SetOp(kind), a.positional))
        }
        "map_member" => {
            if a.positional.len() != 3 || !a.keyword.is_empty() {
                return Err(a.err("takes a database, a member name and a function"));
            }
            let f = a.positional.pop().unwrap();
            let member = match a.positional.pop().unwrap() {
                Expr::Lit(Value::Text(s)) => s,
                _ => return Err(a.err("member name must be a string literal")),
            };
            let db = a.positional.pop().unwrap();
            Ok(Expr::Op(Operator::MapMember(member), vec![db, f]))
        }
        "rnd_str" => {
            if !a.keyword.is_empty() {
                return Err(a.err("takes no keyword arguments"));
            }
            Ok(Expr::Builtin(Builtin::RndStr, a.positional))
        }
        _ => Err(a.err("unknown operator")),
    }
}

fn build_filter(mut a: Args) -> Result<Expr> {
    let row = || Expr::Param(ROW_PARAM.into());
    if a.keyword.iter().any(|(k, _)| k == "att") {
        let att = match a.take_kw("att") {
            Some(Expr::Lit(Value::Text(s))) => s,
            _ => return Err(a.err("att= must be an attribute name string")),
        };
        let op = match a.take_kw("op") {
            Some(Expr::Ref(p)) if p.len() == 1 => p[0].clone(),
            Some(Expr::Lit(Value::Text(s))) => s,
            _ => return Err(a.err("op= must be one of gt, ge, lt, le, eq, ne")),
        };
        let op = match op.as_str() {
            "gt" => BinOp::Gt,
            "ge" => BinOp::Ge,
            "lt" => BinOp::Lt,
            "le" => BinOp::Le,
            "eq" => BinOp::Eq,
            "ne" => BinOp::Ne,
            other => return Err(a.err(format!("unknown comparison {other}"))),
        };
        let c = a.take_kw("c").ok_or_else(|| a.err("missing c="))?;
        let input = a.input()?;
        a.no_more()?;
        let body = Expr::bin(op, Expr::attr(row(), att), c);
        return Ok(Expr::filter(Expr::lambda([ROW_PARAM], body), input));
    }
    let input = a.input()?;
    if !a.keyword.is_empty() {
        let mut body: Option<Expr> = None;
        for (k, v) in std::mem::take(&mut a.keyword) {
            let eq = Expr::bin(BinOp::Eq, Expr::attr(row(), k), v);
            body = Some(match body {
                None => eq,
                Some(b) => Expr::bin(BinOp::And, b, eq),
            });
        }
        a.no_more()?;
        return Ok(Expr::filter(Expr::lambda([ROW_PARAM], body.unwrap()), input));
    }
    match a.positional.len() {
        1 => {
            let pred = a.positional.pop().unwrap();
            Ok(Expr::filter(pred, input))
        }
        2 => {
            let params = a.positional.pop().unwrap();
            let text = a.positional.pop().unwrap();
            let Expr::Lit(Value::Text(text)) = text else {
                return Err(a.err("a textual predicate must be a string literal"));
            };
            let Expr::Record(fields) = params else {
                return Err(a.err("predicate parameters must be a record {name: value}"));
            };
            let body = parse_row_predicate(&text, fields.into_iter().collect())
                .map_err(|e| a.err(format!("in textual predicate: {e}")))?;
            Ok(Expr::filter(Expr::lambda([ROW_PARAM], body), input))
        }
        _ => Err(a.err("expected filter(predicate, input)")),
    }
}

/// Parses the text of a textual predicate. Parameters are substituted as
/// expression nodes; their values are never spliced into the text.
fn parse_row_predicate(text: &str, params: BTreeMap<String, Expr>) -> Result<Expr> {
    let mut p = Parser::new(tokenize(text)?);
    p.row_params = Some(params);
    let e = p.expr()?;
    if !p.at(&TokenKind::Eof) {
        return Err(p.unexpected(&["end of predicate"]));
    }
    Ok(e)
}

fn names(a: &Args, e: &Expr) -> Result<Vec<String>> {
    let Expr::List(items) = e else {
        return Err(a.err("expected a list of names"));
    };
    items
        .iter()
        .map(|i| match i {
            Expr::Lit(Value::Text(s)) => Ok(s.clone()),
            _ => Err(a.err("names must be string literals")),
        })
        .collect()
}

fn agg_specs(a: &mut Args) -> Result<Vec<AggSpec>> {
    let mut specs = Vec::new();
    for (out, e) in std::mem::take(&mut a.keyword) {
        if out == "input" || out == "by" {
            a.keyword.push((out, e));
            continue;
        }
        let spec = match &e {
            Expr::Apply(f, args) => match (f.as_ref(), args.as_slice()) {
                (Expr::Ref(p), args) if p.len() == 1 => {
                    let kind = AggKind::from_name(&p[0])
                        .ok_or_else(|| a.err(format!("unknown aggregate {}", p[0])))?;
                    let attr = match args {
                        [] => None,
                        [Expr::Lit(Value::Text(s))] => Some(s.clone()),
                        [Expr::Ref(q)] if q.len() == 1 => Some(q[0].clone()),
                        _ => return Err(a.err("aggregates take one attribute name")),
                    };
                    AggSpec { out, kind, attr }
                }
                _ => return Err(a.err(format!("{out}= must be an aggregate such as Count()"))),
            },
            _ => return Err(a.err(format!("{out}= must be an aggregate such as Count()"))),
        };
        specs.push(spec);
    }
    Ok(specs)
}

fn join_pairs(a: &Args, on: Expr) -> Result<Vec<JoinPair>> {
    let Expr::List(pairs) = on else {
        return Err(a.err("on= expects [[a.x, b.y], ...]"));
    };
    let col = |e: &Expr| -> Result<ColRef> {
        match e {
            Expr::Ref(p) if p.len() == 2 => Ok(ColRef::new(p[0].clone(), p[1].clone())),
            _ => Err(a.err("join columns are written relation.column")),
        }
    };
    pairs
        .iter()
        .map(|pair| match pair {
            Expr::List(two) if two.len() == 2 => Ok(JoinPair {
                left: col(&two[0])?,
                right: col(&two[1])?,
            }),
            _ => Err(a.err("each join condition is a pair [a.x, b.y]")),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age_gt_42() -> Expr {
        Expr::filter(
            Expr::lambda(
                ["p"],
                Expr::bin(BinOp::Gt, Expr::attr(Expr::param("p"), "age"), Expr::lit(42)),
            ),
            Expr::name("customers"),
        )
    }

    #[test]
    fn lambda_filter() {
        assert_eq!(
            parse_expr("filter(fn(p) => p.age > 42, customers)").unwrap(),
            age_gt_42()
        );
        assert_eq!(
            parse_expr("filter(lambda p: p(\"age\") > 42, customers)").unwrap(),
            age_gt_42()
        );
    }

    #[test]
    fn filter_shorthands_agree() {
        let a = parse_expr("filter(att='age', op=gt, c=42, customers)").unwrap();
        let b = parse_expr("filter(\"age > $foo\", {foo: 42}, customers)").unwrap();
        assert_eq!(a, b);
        let c = parse_expr("filter(state='NY', DB.customers)").unwrap();
        let Expr::Op(Operator::Filter, inputs) = c else {
            panic!()
        };
        assert_eq!(inputs[1], Expr::path(["DB", "customers"]));
    }

    #[test]
    fn hostile_parameter_stays_a_value() {
        let e = parse_expr("filter(\"name == $n\", {n: \"x\\\" or true or \\\"\"}, customers)")
            .unwrap();
        let Expr::Op(_, inputs) = e else { panic!() };
        let Expr::Lambda(_, body) = &inputs[0] else {
            panic!()
        };
        let Expr::BinOp(BinOp::Eq, _, rhs) = body.as_ref() else {
            panic!("{body:?}")
        };
        assert_eq!(**rhs, Expr::lit("x\" or true or \""));
    }

    #[test]
    fn dot_sugar_extends_paths() {
        assert_eq!(parse_expr("DB.customers").unwrap(), Expr::path(["DB", "customers"]));
        assert_eq!(
            parse_expr("DB(\"customers\")").unwrap(),
            Expr::apply(Expr::name("DB"), vec![Expr::lit("customers")])
        );
    }

    #[test]
    fn mutation_statements() {
        let s = parse_script("customers[3][\"age\"] = 50\ndel customers[3]\ncustomers.add({name: 'S', age: 28})")
            .unwrap();
        assert!(matches!(
            &s.stmts[0].stmt,
            Stmt::Mutate { mutation: Mutation::SetAttr { op: None, .. }, .. }
        ));
        assert!(matches!(
            &s.stmts[1].stmt,
            Stmt::Mutate { mutation: Mutation::Delete { .. }, .. }
        ));
        assert!(matches!(
            &s.stmts[2].stmt,
            Stmt::Mutate { mutation: Mutation::Add { .. }, .. }
        ));
        let s = parse_script("accounts[42]['balance'] -= 100").unwrap();
        assert!(matches!(
            &s.stmts[0].stmt,
            Stmt::Mutate { mutation: Mutation::SetAttr { op: Some(BinOp::Sub), .. }, .. }
        ));
    }

    #[test]
    fn incomplete_lambda_is_a_parse_error() {
        let err = parse_expr("fn(x) =>").unwrap_err();
        let Error::Parse { line, column, .. } = err else {
            panic!("{err:?}")
        };
        assert_eq!((line, column), (1, 9));
    }

    #[test]
    fn negative_literals() {
        assert_eq!(parse_expr("-5").unwrap(), Expr::lit(-5));
        assert_eq!(parse_expr("-9223372036854775808").unwrap(), Expr::lit(i64::MIN));
        assert!(parse_expr("9223372036854775808").is_err());
    }

    #[test]
    fn grouping_sets_form() {
        let e = parse_expr(
            "group_and_aggregate([(by=[\"age\"], count=Count(), name=\"age_cc\"), (by=[], min=Min(\"age\"), name=\"global_min\")], input=customers)",
        )
        .unwrap();
        let Expr::Op(Operator::GroupingSets(sets), _) = e else {
            panic!()
        };
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[1].aggs[0], AggSpec::over("min", AggKind::Min, "age"));
    }

    #[test]
    fn list_valued_key_function_is_not_grouping_sets() {
        for src in ["group_and_aggregate([], c=Count(), R)", "group_and_aggregate([{by: 1}], c=Count(), R)"] {
            let e = parse_expr(src).unwrap();
            assert!(matches!(e, Expr::Op(Operator::GroupAndAggregate(GroupBy::KeyFn, _), _)), "{src}");
        }
    }
}
