use super::{Formula, FormulaError, Signature, Symbol, Term};

/// Parse a formula over `sig` whose free variables are `free_vars`, in order.
///
/// ```text
/// formula := imp ('<->' imp)*
/// imp     := or ('->' imp)?
/// or      := and ('|' and)*
/// and     := unary ('&' unary)*
/// unary   := '!' unary | ('exists' | 'forall') ident '.' formula | atom
/// atom    := '(' formula ')' | rel '(' terms ')' | term '=' term
/// term    := var | const | func '(' terms ')'
/// ```
///
/// Quantifier bodies extend as far to the right as possible. `<->` is
/// expanded into a conjunction of two implications.
pub fn parse_formula(source: &str, sig: &Signature, free_vars: &[String]) -> Result<Formula, FormulaError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        sig,
        free: free_vars,
        bound: Vec::new(),
    };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(f)
}

/// Parse a single term whose variables are `vars`.
pub fn parse_term(source: &str, sig: &Signature, vars: &[String]) -> Result<Term, FormulaError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        sig,
        free: vars,
        bound: Vec::new(),
    };
    let t = p.term()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    sig: &'a Signature,
    free: &'a [String],
    bound: Vec<String>,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> FormulaError {
        FormulaError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn at(&mut self, tok: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(tok.as_bytes())
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.at(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), FormulaError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{tok}`")))
        }
    }

    fn ident(&mut self) -> Option<(usize, String)> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_alphabetic() || *c == b'_' => {}
            _ => return None,
        }
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        Some((start, String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()))
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.imp()?;
        while self.eat("<->") {
            let rhs = self.imp()?;
            lhs = Formula::and(Formula::implies(lhs.clone(), rhs.clone()), Formula::implies(rhs, lhs));
        }
        Ok(lhs)
    }

    fn imp(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.or()?;
        if self.eat("->") {
            let rhs = self.imp()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.and()?;
        while self.eat("|") {
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.eat("&") {
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        if self.eat("!") {
            return Ok(Formula::not(self.unary()?));
        }
        let save = self.pos;
        if let Some((_, word)) = self.ident() {
            if word == "exists" || word == "forall" {
                let (_, name) = self
                    .ident()
                    .ok_or_else(|| self.syntax("expected a bound variable name"))?;
                self.expect(".")?;
                let var = self.free.len() + self.bound.len();
                self.bound.push(name.clone());
                let body = self.formula();
                self.bound.pop();
                let body = Box::new(body?);
                return Ok(if word == "exists" {
                    Formula::Exists { var, name, body }
                } else {
                    Formula::Forall { var, name, body }
                });
            }
        }
        self.pos = save;
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, FormulaError> {
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        let save = self.pos;
        if let Some((offset, name)) = self.ident() {
            if let (Some(Symbol::Relation(r)), false) = (self.sig.lookup(&name), self.is_var(&name)) {
                let args = self.args(&name, offset)?;
                let arity = self.sig.relations()[r].1;
                if args.len() != arity {
                    return Err(FormulaError::Arity {
                        name,
                        expected: arity,
                        found: args.len(),
                    });
                }
                return Ok(Formula::Rel(r, args));
            }
        }
        self.pos = save;
        let lhs = self.term()?;
        self.expect("=")?;
        let rhs = self.term()?;
        Ok(Formula::Eq(lhs, rhs))
    }

    fn is_var(&self, name: &str) -> bool {
        self.bound.iter().any(|b| b == name) || self.free.iter().any(|f| f == name)
    }

    fn args(&mut self, name: &str, offset: usize) -> Result<Vec<Term>, FormulaError> {
        if !self.eat("(") {
            return Err(FormulaError::Syntax {
                offset,
                message: format!("`{name}` must be applied to arguments"),
            });
        }
        let mut args = vec![self.term()?];
        while self.eat(",") {
            args.push(self.term()?);
        }
        self.expect(")")?;
        Ok(args)
    }

    fn term(&mut self) -> Result<Term, FormulaError> {
        let (offset, name) = self.ident().ok_or_else(|| self.syntax("expected a term"))?;
        if let Some(i) = self.bound.iter().rposition(|b| *b == name) {
            return Ok(Term::Var(self.free.len() + i));
        }
        if let Some(i) = self.free.iter().position(|f| *f == name) {
            return Ok(Term::Var(i));
        }
        match self.sig.lookup(&name) {
            Some(Symbol::Constant(c)) => Ok(Term::Const(c)),
            Some(Symbol::Function(g)) => {
                let args = self.args(&name, offset)?;
                let arity = self.sig.functions()[g].1;
                if args.len() != arity {
                    return Err(FormulaError::Arity {
                        name,
                        expected: arity,
                        found: args.len(),
                    });
                }
                Ok(Term::App(g, args))
            }
            _ => Err(FormulaError::UnknownSymbol { name, offset }),
        }
    }
}
