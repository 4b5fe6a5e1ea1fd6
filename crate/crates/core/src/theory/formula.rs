//! Formulas and value expressions over a fluent signature.

use std::collections::BTreeSet;
use std::fmt;

use super::sexpr::{self, SExpr};
use super::{FluentId, Signature, ValueKind, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    fn from_symbol(s: &str) -> Option<Cmp> {
        Some(match s {
            "=" => Cmp::Eq,
            "!=" | "/=" => Cmp::Ne,
            "<" => Cmp::Lt,
            "<=" => Cmp::Le,
            ">" => Cmp::Gt,
            ">=" => Cmp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }

    /// `a op b` becomes `b flipped(op) a`.
    fn flipped(self) -> Cmp {
        match self {
            Cmp::Lt => Cmp::Gt,
            Cmp::Le => Cmp::Ge,
            Cmp::Gt => Cmp::Lt,
            Cmp::Ge => Cmp::Le,
            other => other,
        }
    }

    pub fn apply<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
        }
    }

    /// Compares a computed probability with a threshold, allowing `tol`
    /// of slack. The six relations stay pairwise complementary.
    pub fn apply_tolerant(self, value: f64, threshold: f64, tol: f64) -> bool {
        match self {
            Cmp::Eq => (value - threshold).abs() <= tol,
            Cmp::Ne => (value - threshold).abs() > tol,
            Cmp::Lt => value < threshold - tol,
            Cmp::Le => value <= threshold + tol,
            Cmp::Gt => value > threshold + tol,
            Cmp::Ge => value >= threshold - tol,
        }
    }
}

/// Integer-valued expression. Symbolic constants are interned codes.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueExpr {
    Const(i64),
    Fluent(FluentId),
    Add(Vec<ValueExpr>),
    Sub(Box<ValueExpr>, Box<ValueExpr>),
    Neg(Box<ValueExpr>),
    Mul(Vec<ValueExpr>),
    If(Box<Formula>, Box<ValueExpr>, Box<ValueExpr>),
}

/// Threshold of an epistemic atom, kept with its source literal so exact
/// scalars can parse it without float rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub literal: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Compare(Cmp, ValueExpr, ValueExpr),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// `Bel(inner) cmp threshold`
    Bel {
        cmp: Cmp,
        inner: Box<Formula>,
        threshold: Threshold,
    },
    Know(Box<Formula>),
}

/// An epistemic atom handed to the evaluator callback.
#[derive(Debug, Clone, Copy)]
pub enum Epistemic<'a> {
    Bel {
        cmp: Cmp,
        inner: &'a Formula,
        threshold: &'a Threshold,
    },
    Know(&'a Formula),
}

impl ValueExpr {
    pub fn eval(&self, w: &WorldState) -> i64 {
        match self {
            ValueExpr::Const(c) => *c,
            ValueExpr::Fluent(f) => w.get(*f),
            ValueExpr::Add(xs) => xs.iter().map(|x| x.eval(w)).fold(0i64, i64::saturating_add),
            ValueExpr::Sub(a, b) => a.eval(w).saturating_sub(b.eval(w)),
            ValueExpr::Neg(a) => a.eval(w).saturating_neg(),
            ValueExpr::Mul(xs) => xs.iter().map(|x| x.eval(w)).fold(1i64, i64::saturating_mul),
            ValueExpr::If(c, a, b) => {
                if c.eval_objective(w) {
                    a.eval(w)
                } else {
                    b.eval(w)
                }
            }
        }
    }

    pub fn collect_fluents(&self, out: &mut BTreeSet<FluentId>) {
        match self {
            ValueExpr::Const(_) => {}
            ValueExpr::Fluent(f) => {
                out.insert(*f);
            }
            ValueExpr::Add(xs) | ValueExpr::Mul(xs) => xs.iter().for_each(|x| x.collect_fluents(out)),
            ValueExpr::Sub(a, b) => {
                a.collect_fluents(out);
                b.collect_fluents(out);
            }
            ValueExpr::Neg(a) => a.collect_fluents(out),
            ValueExpr::If(c, a, b) => {
                c.collect_fluents(out);
                a.collect_fluents(out);
                b.collect_fluents(out);
            }
        }
    }

    /// Renders with constants printed as `kind` values.
    pub fn render(&self, sig: &Signature, kind: ValueKind) -> String {
        match self {
            ValueExpr::Const(c) => sig.render_const(*c, kind),
            ValueExpr::Fluent(f) => sig.fluents[*f].name.clone(),
            ValueExpr::Add(xs) => render_list("+", xs.iter().map(|x| x.render(sig, kind))),
            ValueExpr::Mul(xs) => render_list("*", xs.iter().map(|x| x.render(sig, kind))),
            ValueExpr::Sub(a, b) => format!("(- {} {})", a.render(sig, kind), b.render(sig, kind)),
            ValueExpr::Neg(a) => format!("(- {})", a.render(sig, kind)),
            ValueExpr::If(c, a, b) => format!("(if {} {} {})", c.render(sig), a.render(sig, kind), b.render(sig, kind)),
        }
    }

    /// Kind of the expression when it can be read off syntactically.
    pub fn infer_kind(&self, sig: &Signature) -> Option<ValueKind> {
        match self {
            ValueExpr::Const(_) => None,
            ValueExpr::Fluent(f) => Some(sig.fluents[*f].kind),
            ValueExpr::If(_, a, b) => a.infer_kind(sig).or_else(|| b.infer_kind(sig)),
            _ => Some(ValueKind::Int),
        }
    }
}

fn render_list(head: &str, parts: impl Iterator<Item = String>) -> String {
    let mut s = format!("({head}");
    for p in parts {
        s.push(' ');
        s.push_str(&p);
    }
    s.push(')');
    s
}

impl Formula {
    /// Truth value at a single world, with epistemic atoms supplied by `oracle`.
    pub fn eval_with(&self, w: &WorldState, oracle: &mut dyn FnMut(Epistemic<'_>) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Compare(cmp, a, b) => cmp.apply(&a.eval(w), &b.eval(w)),
            Formula::Not(f) => !f.eval_with(w, oracle),
            Formula::And(fs) => fs.iter().all(|f| f.eval_with(w, oracle)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval_with(w, oracle)),
            Formula::Implies(a, b) => !a.eval_with(w, oracle) || b.eval_with(w, oracle),
            Formula::Bel { cmp, inner, threshold } => oracle(Epistemic::Bel {
                cmp: *cmp,
                inner,
                threshold,
            }),
            Formula::Know(inner) => oracle(Epistemic::Know(inner)),
        }
    }

    /// Standard truth evaluation. Epistemic atoms, if any, are read against
    /// the point belief concentrated on `w`.
    pub fn eval_objective(&self, w: &WorldState) -> bool {
        self.eval_with(w, &mut |atom| match atom {
            Epistemic::Bel { cmp, inner, threshold } => {
                let bel = if inner.eval_objective(w) { 1.0 } else { 0.0 };
                cmp.apply(&bel, &threshold.value)
            }
            Epistemic::Know(inner) => inner.eval_objective(w),
        })
    }

    pub fn is_objective(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Compare(..) => true,
            Formula::Not(f) => f.is_objective(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(Formula::is_objective),
            Formula::Implies(a, b) => a.is_objective() && b.is_objective(),
            Formula::Bel { .. } | Formula::Know(_) => false,
        }
    }

    pub fn collect_fluents(&self, out: &mut BTreeSet<FluentId>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Compare(_, a, b) => {
                a.collect_fluents(out);
                b.collect_fluents(out);
            }
            Formula::Not(f) | Formula::Know(f) => f.collect_fluents(out),
            Formula::Bel { inner, .. } => inner.collect_fluents(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_fluents(out)),
            Formula::Implies(a, b) => {
                a.collect_fluents(out);
                b.collect_fluents(out);
            }
        }
    }

    pub fn fluents(&self) -> BTreeSet<FluentId> {
        let mut out = BTreeSet::new();
        self.collect_fluents(&mut out);
        out
    }

    /// Renders back to the S-expression syntax accepted by [`parse_formula`].
    pub fn render(&self, sig: &Signature) -> String {
        match self {
            Formula::True => "true".into(),
            Formula::False => "false".into(),
            Formula::Compare(cmp, a, b) => {
                let kind = a
                    .infer_kind(sig)
                    .or_else(|| b.infer_kind(sig))
                    .unwrap_or(ValueKind::Int);
                format!("({} {} {})", cmp.symbol(), a.render(sig, kind), b.render(sig, kind))
            }
            Formula::Not(f) => format!("(not {})", f.render(sig)),
            Formula::And(fs) => render_list("and", fs.iter().map(|f| f.render(sig))),
            Formula::Or(fs) => render_list("or", fs.iter().map(|f| f.render(sig))),
            Formula::Implies(a, b) => format!("(implies {} {})", a.render(sig), b.render(sig)),
            Formula::Bel { cmp, inner, threshold } => {
                format!("({} (bel {}) {})", cmp.symbol(), inner.render(sig), threshold.literal)
            }
            Formula::Know(f) => format!("(know {})", f.render(sig)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for FormulaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.offset, self.message)
    }
}

impl From<sexpr::ReadError> for FormulaError {
    fn from(e: sexpr::ReadError) -> Self {
        FormulaError {
            offset: e.offset,
            message: e.message,
        }
    }
}

fn err<T>(at: &SExpr, message: impl Into<String>) -> Result<T, FormulaError> {
    Err(FormulaError {
        offset: at.offset(),
        message: message.into(),
    })
}

pub fn parse_formula(text: &str, sig: &Signature) -> Result<Formula, FormulaError> {
    let expr = sexpr::read(text)?;
    FormulaParser { sig }.formula(&expr, false)
}

/// Parses a value expression and returns it with its inferred kind.
pub fn parse_value(text: &str, sig: &Signature) -> Result<(ValueExpr, ValueKind), FormulaError> {
    let expr = sexpr::read(text)?;
    FormulaParser { sig }.value(&expr, None)
}

struct FormulaParser<'a> {
    sig: &'a Signature,
}

impl FormulaParser<'_> {
    fn formula(&self, e: &SExpr, inside_epistemic: bool) -> Result<Formula, FormulaError> {
        match e {
            SExpr::Atom { text, .. } => match text.as_str() {
                "true" => Ok(Formula::True),
                "false" => Ok(Formula::False),
                other => err(e, format!("expected a formula, found atom `{other}`")),
            },
            SExpr::List { items, .. } => {
                let Some(head) = items.first().and_then(SExpr::as_atom) else {
                    return err(e, "formula must start with an operator");
                };
                let args = &items[1..];
                match head {
                    "not" => {
                        self.arity(e, args, 1)?;
                        Ok(Formula::Not(Box::new(self.formula(&args[0], inside_epistemic)?)))
                    }
                    "and" | "or" => {
                        let parts = args
                            .iter()
                            .map(|a| self.formula(a, inside_epistemic))
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(if head == "and" {
                            Formula::And(parts)
                        } else {
                            Formula::Or(parts)
                        })
                    }
                    "implies" | "=>" => {
                        self.arity(e, args, 2)?;
                        Ok(Formula::Implies(
                            Box::new(self.formula(&args[0], inside_epistemic)?),
                            Box::new(self.formula(&args[1], inside_epistemic)?),
                        ))
                    }
                    "know" => {
                        self.arity(e, args, 1)?;
                        if inside_epistemic {
                            return err(e, "epistemic atoms cannot be nested");
                        }
                        Ok(Formula::Know(Box::new(self.formula(&args[0], true)?)))
                    }
                    "bel" => err(e, "`bel` must be compared with a threshold, e.g. (> (bel f) 0.8)"),
                    op => {
                        let Some(cmp) = Cmp::from_symbol(op) else {
                            return err(e, format!("unknown operator `{op}`"));
                        };
                        self.arity(e, args, 2)?;
                        if let Some(bel) = self.bel_atom(cmp, &args[0], &args[1], inside_epistemic)? {
                            return Ok(bel);
                        }
                        if let Some(bel) = self.bel_atom(cmp.flipped(), &args[1], &args[0], inside_epistemic)? {
                            return Ok(bel);
                        }
                        let (a, ka) = self.value(&args[0], None)?;
                        let (b, kb) = self.value(&args[1], Some(ka))?;
                        // a bare symbol on the left is typed by the right side
                        let (a, ka) = if ka != kb && matches!(a, ValueExpr::Const(_)) {
                            self.value(&args[0], Some(kb))?
                        } else {
                            (a, ka)
                        };
                        if ka != kb {
                            return err(e, "comparison mixes integer and symbolic operands");
                        }
                        if ka == ValueKind::Sym && !matches!(cmp, Cmp::Eq | Cmp::Ne) {
                            return err(e, "symbolic values only support = and !=");
                        }
                        Ok(Formula::Compare(cmp, a, b))
                    }
                }
            }
        }
    }

    fn bel_atom(
        &self,
        cmp: Cmp,
        lhs: &SExpr,
        rhs: &SExpr,
        inside_epistemic: bool,
    ) -> Result<Option<Formula>, FormulaError> {
        let SExpr::List { items, .. } = lhs else {
            return Ok(None);
        };
        if items.first().and_then(SExpr::as_atom) != Some("bel") {
            return Ok(None);
        }
        if inside_epistemic {
            return err(lhs, "epistemic atoms cannot be nested");
        }
        self.arity(lhs, &items[1..], 1)?;
        let inner = self.formula(&items[1], true)?;
        let Some(literal) = rhs.as_atom() else {
            return err(rhs, "belief threshold must be a number");
        };
        let value: f64 = match literal.split_once('/') {
            Some((n, d)) => match (n.parse::<f64>(), d.parse::<f64>()) {
                (Ok(n), Ok(d)) if d != 0.0 => n / d,
                _ => return err(rhs, format!("bad threshold `{literal}`")),
            },
            None => match literal.parse() {
                Ok(v) => v,
                Err(_) => return err(rhs, format!("bad threshold `{literal}`")),
            },
        };
        if !(0.0..=1.0).contains(&value) {
            return err(rhs, format!("threshold {literal} outside [0, 1]"));
        }
        Ok(Some(Formula::Bel {
            cmp,
            inner: Box::new(inner),
            threshold: Threshold {
                value,
                literal: literal.to_string(),
            },
        }))
    }

    fn arity(&self, e: &SExpr, args: &[SExpr], n: usize) -> Result<(), FormulaError> {
        if args.len() == n {
            Ok(())
        } else {
            err(e, format!("expected {n} argument(s), found {}", args.len()))
        }
    }

    fn value(&self, e: &SExpr, expect: Option<ValueKind>) -> Result<(ValueExpr, ValueKind), FormulaError> {
        match e {
            SExpr::Atom { text, .. } => {
                if let Ok(n) = text.parse::<i64>() {
                    return Ok((ValueExpr::Const(n), ValueKind::Int));
                }
                if let Some(id) = self.sig.fluent_id(text) {
                    return Ok((ValueExpr::Fluent(id), self.sig.fluents[id].kind));
                }
                if let Some(code) = self.sig.symbol_code(text) {
                    if expect != Some(ValueKind::Int) {
                        return Ok((ValueExpr::Const(code), ValueKind::Sym));
                    }
                }
                err(e, format!("unknown fluent `{text}`"))
            }
            SExpr::List { items, .. } => {
                let Some(head) = items.first().and_then(SExpr::as_atom) else {
                    return err(e, "expression must start with an operator");
                };
                let args = &items[1..];
                let ints = |this: &Self| -> Result<Vec<ValueExpr>, FormulaError> {
                    args.iter()
                        .map(|a| {
                            let (v, k) = this.value(a, Some(ValueKind::Int))?;
                            if k != ValueKind::Int {
                                return err(a, "arithmetic on a symbolic value");
                            }
                            Ok(v)
                        })
                        .collect()
                };
                match head {
                    "+" => Ok((ValueExpr::Add(ints(self)?), ValueKind::Int)),
                    "*" => Ok((ValueExpr::Mul(ints(self)?), ValueKind::Int)),
                    "-" => {
                        let mut xs = ints(self)?;
                        match xs.len() {
                            1 => Ok((ValueExpr::Neg(Box::new(xs.remove(0))), ValueKind::Int)),
                            2 => {
                                let b = xs.pop().unwrap();
                                let a = xs.pop().unwrap();
                                Ok((ValueExpr::Sub(Box::new(a), Box::new(b)), ValueKind::Int))
                            }
                            n => err(e, format!("`-` takes 1 or 2 arguments, found {n}")),
                        }
                    }
                    "if" | "ite" => {
                        self.arity(e, args, 3)?;
                        let cond = self.formula(&args[0], false)?;
                        if !cond.is_objective() {
                            return err(&args[0], "conditions in expressions must be objective");
                        }
                        let (a, ka) = self.value(&args[1], expect)?;
                        let (b, kb) = self.value(&args[2], Some(ka))?;
                        if ka != kb {
                            return err(e, "branches of `if` have different kinds");
                        }
                        Ok((ValueExpr::If(Box::new(cond), Box::new(a), Box::new(b)), ka))
                    }
                    op => err(e, format!("unknown expression operator `{op}`")),
                }
            }
        }
    }
}
