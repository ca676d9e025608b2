use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SqlError;
use chrono::NaiveDate;

/// Words that cannot be used as bare identifiers or implicit aliases.
pub const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "as", "and", "or", "not", "like", "between", "in", "join", "inner",
    "on", "tablesample", "system", "bernoulli", "error", "within", "probability", "date", "interval", "distinct",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED.contains(&word)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Parse SQL text into a query AST. FROM subqueries that are plain
/// aggregation-free selections are flattened into the outer query.
pub fn parse_query(sql: &str) -> Result<Query, SqlError> {
    let mut p = Parser { toks: tokenize(sql)?, pos: 0 };
    let q = p.query()?;
    if p.peek() == &Tok::Semicolon {
        p.pos += 1;
    }
    if p.peek() != &Tok::Eof {
        return Err(p.error(format!("unexpected {}", describe(p.peek()))));
    }
    super::validate::flatten(q)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("'{w}'"),
        Tok::Int(v) => format!("number {v}"),
        Tok::Float(v) => format!("number {v}"),
        Tok::Str(s) => format!("string '{s}'"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn error(&self, message: String) -> SqlError {
        let t = &self.toks[self.pos];
        SqlError::Syntax { line: t.line, col: t.col, message }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(x) if x == w)
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), SqlError> {
        if self.eat_word(w) {
            Ok(())
        } else {
            Err(self.error(format!("expected {}, found {}", w.to_uppercase(), describe(self.peek()))))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), SqlError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, SqlError> {
        match self.peek().clone() {
            Tok::Word(w) if !is_reserved(&w) => {
                self.pos += 1;
                Ok(w)
            }
            other => Err(self.error(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn number(&mut self) -> Result<f64, SqlError> {
        match self.next() {
            Tok::Int(v) => Ok(v as f64),
            Tok::Float(v) => Ok(v),
            other => {
                self.pos -= 1;
                Err(self.error(format!("expected number, found {}", describe(&other))))
            }
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        self.expect_word("select")?;
        let mut select = vec![self.select_item()?];
        while self.eat(&Tok::Comma) {
            select.push(self.select_item()?);
        }
        self.expect_word("from")?;
        let mut from = vec![self.table_item(JoinKind::Comma)?];
        loop {
            if self.eat(&Tok::Comma) {
                from.push(self.table_item(JoinKind::Comma)?);
            } else if self.is_word("join") || self.is_word("inner") {
                if self.eat_word("inner") {
                    self.expect_word("join")?;
                } else {
                    self.pos += 1;
                }
                let mut item = self.table_item(JoinKind::Comma)?;
                self.expect_word("on")?;
                item.join = JoinKind::Inner(self.expr()?);
                from.push(item);
            } else {
                break;
            }
        }
        let selection = if self.eat_word("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_word("group") {
            self.expect_word("by")?;
            group_by.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                group_by.push(self.expr()?);
            }
        }
        let error = if self.eat_word("error") {
            self.expect_word("within")?;
            let e = self.number()?;
            self.expect(&Tok::Percent, "'%'")?;
            self.expect_word("probability")?;
            let p = self.number()?;
            self.expect(&Tok::Percent, "'%'")?;
            if !(e > 0.0 && e < 100.0) {
                return Err(self.error(format!("error bound must be in (0%, 100%), got {e}%")));
            }
            if !(p > 0.0 && p < 100.0) {
                return Err(self.error(format!("probability must be in (0%, 100%), got {p}%")));
            }
            Some(ErrorClause { error_percent: e, probability_percent: p })
        } else {
            None
        };
        Ok(Query { select, from, selection, group_by, error })
    }

    fn select_item(&mut self) -> Result<SelectItem, SqlError> {
        let expr = self.expr()?;
        let alias = if self.eat_word("as") || matches!(self.peek(), Tok::Word(w) if !is_reserved(w)) {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(SelectItem { expr, alias })
    }

    fn table_item(&mut self, join: JoinKind) -> Result<FromItem, SqlError> {
        let source = if self.eat(&Tok::LParen) {
            let q = self.query()?;
            self.expect(&Tok::RParen, "')'")?;
            TableSource::Subquery(Box::new(q))
        } else {
            TableSource::Table(self.ident()?)
        };
        let alias = if self.eat_word("as") || matches!(self.peek(), Tok::Word(w) if !is_reserved(w)) {
            Some(self.ident()?)
        } else {
            None
        };
        let sample = if self.eat_word("tablesample") {
            let method = if self.eat_word("system") {
                SampleMethod::System
            } else if self.eat_word("bernoulli") {
                SampleMethod::Bernoulli
            } else {
                return Err(self.error("expected SYSTEM or BERNOULLI".into()));
            };
            self.expect(&Tok::LParen, "'('")?;
            let percent = self.number()?;
            self.eat(&Tok::Percent);
            self.expect(&Tok::RParen, "')'")?;
            if !(0.0..=100.0).contains(&percent) {
                return Err(self.error(format!("sampling percentage must be in [0, 100], got {percent}")));
            }
            Some(TableSample { method, percent })
        } else {
            None
        };
        Ok(FromItem { source, alias, sample, join })
    }

    fn expr(&mut self) -> Result<Expr, SqlError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.and_expr()?;
        while self.eat_word("or") {
            left = Expr::binary(BinaryOp::Or, left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.not_expr()?;
        while self.eat_word("and") {
            left = Expr::binary(BinaryOp::And, left, self.not_expr()?);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expr, SqlError> {
        if self.eat_word("not") {
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(self.not_expr()?) });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<Expr, SqlError> {
        let left = self.additive()?;
        let op = match self.peek() {
            Tok::Eq => Some(BinaryOp::Eq),
            Tok::NotEq => Some(BinaryOp::NotEq),
            Tok::Lt => Some(BinaryOp::Lt),
            Tok::LtEq => Some(BinaryOp::LtEq),
            Tok::Gt => Some(BinaryOp::Gt),
            Tok::GtEq => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            return Ok(Expr::binary(op, left, self.additive()?));
        }
        let negated = self.is_word("not")
            && matches!(self.peek_at(1), Tok::Word(w) if w == "like" || w == "between" || w == "in");
        if negated {
            self.pos += 1;
        }
        if self.eat_word("like") {
            return match self.next() {
                Tok::Str(pattern) => Ok(Expr::Like { expr: Box::new(left), pattern, negated }),
                other => {
                    self.pos -= 1;
                    Err(self.error(format!("LIKE expects a string pattern, found {}", describe(&other))))
                }
            };
        }
        if self.eat_word("between") {
            let low = self.additive()?;
            self.expect_word("and")?;
            let high = self.additive()?;
            return Ok(Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated });
        }
        if self.eat_word("in") {
            self.expect(&Tok::LParen, "'('")?;
            let mut list = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                list.push(self.expr()?);
            }
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::InList { expr: Box::new(left), list, negated });
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(left),
            };
            self.pos += 1;
            left = Expr::binary(op, left, self.multiplicative()?);
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, SqlError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(left),
            };
            self.pos += 1;
            left = Expr::binary(op, left, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, SqlError> {
        if self.eat(&Tok::Minus) {
            // Fold minus into numeric literals so "-5" is one literal.
            return Ok(match self.unary()? {
                Expr::Literal(Literal::Int(v)) if v != i64::MIN => Expr::int(-v),
                Expr::Literal(Literal::Float(v)) => Expr::float(-v),
                e => Expr::Unary { op: UnaryOp::Neg, expr: Box::new(e) },
            });
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SqlError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.pos += 1;
                Ok(Expr::int(v))
            }
            Tok::Float(v) => {
                self.pos += 1;
                Ok(Expr::float(v))
            }
            Tok::Str(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Word(w) if w == "date" => {
                self.pos += 1;
                self.date_literal()
            }
            Tok::Word(w) if w == "interval" => {
                self.pos += 1;
                self.interval_literal()
            }
            Tok::Word(w) if self.peek_at(1) == &Tok::LParen && !is_reserved(&w) => {
                self.pos += 2;
                self.call(&w)
            }
            Tok::Word(_) => {
                let first = self.ident()?;
                if self.eat(&Tok::Dot) {
                    let name = self.ident()?;
                    Ok(Expr::Column(ColumnRef { qualifier: Some(first), name }))
                } else {
                    Ok(Expr::Column(ColumnRef { qualifier: None, name: first }))
                }
            }
            other => Err(self.error(format!("expected expression, found {}", describe(&other)))),
        }
    }

    fn date_literal(&mut self) -> Result<Expr, SqlError> {
        match self.next() {
            Tok::Str(s) => match NaiveDate::parse_from_str(&s, "%Y-%m-%d") {
                Ok(d) => Ok(Expr::Literal(Literal::Date(days_from_date(d)))),
                Err(_) => {
                    self.pos -= 1;
                    Err(self.error(format!("invalid date '{s}', expected YYYY-MM-DD")))
                }
            },
            other => {
                self.pos -= 1;
                Err(self.error(format!("DATE expects a string, found {}", describe(&other))))
            }
        }
    }

    fn interval_literal(&mut self) -> Result<Expr, SqlError> {
        let text = match self.next() {
            Tok::Str(s) => s,
            other => {
                self.pos -= 1;
                return Err(self.error(format!("INTERVAL expects a string, found {}", describe(&other))));
            }
        };
        let mut parts = text.split_whitespace();
        let amount = parts.next().and_then(|a| a.parse::<i64>().ok());
        let unit_word = match parts.next() {
            Some(u) => u.to_ascii_lowercase(),
            None => match self.peek().clone() {
                Tok::Word(u) if parse_unit(&u).is_some() => {
                    self.pos += 1;
                    u
                }
                _ => return Err(self.error(format!("interval '{text}' needs a unit (day, month, year)"))),
            },
        };
        match (amount, parse_unit(&unit_word), parts.next()) {
            (Some(amount), Some(unit), None) => Ok(Expr::Literal(Literal::Interval { amount, unit })),
            _ => Err(self.error(format!("invalid interval '{text}'"))),
        }
    }

    fn call(&mut self, name: &str) -> Result<Expr, SqlError> {
        let func = match name {
            "sum" => AggFunc::Sum,
            "count" => AggFunc::Count,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            "_blockid" => {
                let t = self.ident()?;
                self.expect(&Tok::RParen, "')'")?;
                return Ok(Expr::BlockId(t));
            }
            other => return Err(self.error(format!("unknown function '{other}'"))),
        };
        if func == AggFunc::Count && self.eat(&Tok::Star) {
            self.expect(&Tok::RParen, "')'")?;
            return Ok(Expr::agg(AggFunc::Count, None));
        }
        let distinct = self.eat_word("distinct");
        let arg = self.expr()?;
        self.expect(&Tok::RParen, "')'")?;
        Ok(Expr::Aggregate { func, arg: Some(Box::new(arg)), distinct })
    }
}

fn parse_unit(u: &str) -> Option<IntervalUnit> {
    match u {
        "day" | "days" => Some(IntervalUnit::Day),
        "month" | "months" => Some(IntervalUnit::Month),
        "year" | "years" => Some(IntervalUnit::Year),
        _ => None,
    }
}
