//! CPD expression language.
//!
//! Chance and utility nodes may be defined by a small expression language:
//! arithmetic over parent values, `min`/`max`/`abs`/`if`, comparisons, the
//! distribution constructors `Uniform`, `Normal`, `TNormal`, `Gamma`,
//! `Binomial` and `Arithmetic`, and partitioned forms that pick a
//! sub-expression by the state of a discrete parent.
//!
//! ```text
//! expr        = comparison ;
//! comparison  = additive [ ( "<" | "<=" | ">" | ">=" | "=" | "==" ) additive ] ;
//! additive    = term { ( "+" | "-" ) term } ;
//! term        = unary { ( "*" | "/" ) unary } ;
//! unary       = "-" unary | primary ;
//! primary     = number | string | partition | call | ident | "(" expr ")" ;
//! call        = ident "(" expr { "," expr } ")" ;
//! partition   = "partition" "(" ident "," branch { "," branch } ")" ;
//! branch      = string ":" expr ;
//! ident       = [A-Za-z_][A-Za-z0-9_]* ;
//! number      = digits [ "." digits ] [ ( "e" | "E" ) [ "+" | "-" ] digits ] ;
//! string      = '"' { any character except '"' } '"' ;
//! ```
//!
//! `×`, `÷` and `−` are accepted as aliases of `*`, `/` and `-`.

mod eval;
mod parse;
mod print;

pub use eval::{evaluate, evaluate_deterministic, evaluate_distribution, Binding, Env, Outcome};
pub use parse::parse_expression;

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div => 3,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    pub(crate) fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Eq => ord == Equal,
        }
    }
}

/// Built-in functions and distribution constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Min,
    Max,
    Abs,
    If,
    Uniform,
    Normal,
    TNormal,
    Gamma,
    Binomial,
    Arithmetic,
}

/// Accepted argument counts: `(min, max)`, `None` meaning unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arity(pub usize, pub Option<usize>);

impl std::fmt::Display for Arity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.1 {
            Some(max) if max == self.0 => write!(f, "{}", self.0),
            Some(max) => write!(f, "{}..{}", self.0, max),
            None => write!(f, "at least {}", self.0),
        }
    }
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Min,
        Func::Max,
        Func::Abs,
        Func::If,
        Func::Uniform,
        Func::Normal,
        Func::TNormal,
        Func::Gamma,
        Func::Binomial,
        Func::Arithmetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::If => "if",
            Func::Uniform => "Uniform",
            Func::Normal => "Normal",
            Func::TNormal => "TNormal",
            Func::Gamma => "Gamma",
            Func::Binomial => "Binomial",
            Func::Arithmetic => "Arithmetic",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(self) -> Arity {
        match self {
            Func::Min | Func::Max => Arity(2, None),
            Func::Abs | Func::Arithmetic => Arity(1, Some(1)),
            Func::If => Arity(3, Some(3)),
            Func::Uniform | Func::Normal | Func::Gamma | Func::Binomial => Arity(2, Some(2)),
            Func::TNormal => Arity(4, Some(4)),
        }
    }

    pub fn is_distribution(self) -> bool {
        matches!(
            self,
            Func::Uniform
                | Func::Normal
                | Func::TNormal
                | Func::Gamma
                | Func::Binomial
                | Func::Arithmetic
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    /// String literal; only meaningful as a state label produced by `if`.
    Str(String),
    Var(String),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Compare {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: Func,
        args: Vec<Expr>,
    },
    /// Sub-expression chosen by the state label of a discrete parent.
    Partition {
        parent: String,
        branches: Vec<(String, Expr)>,
    },
}

/// What an expression produces when evaluated at its root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprShape {
    /// A real number.
    Deterministic,
    /// A state label (`if(c, "True", "False")`) or a bare comparison.
    Label,
    /// A distribution constructor, possibly behind partition branches.
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown function `{name}` at line {line}, column {column}")]
    UnknownFunction {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("`{func}` expects {expected} argument(s), found {found}")]
    Arity {
        func: &'static str,
        expected: Arity,
        found: usize,
    },
    #[error("variable `{0}` is not a parent of this node")]
    UnknownVariable(String),
    #[error("{0}")]
    Placement(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("type error: {0}")]
    Type(String),
    #[error("non-finite result in `{0}`")]
    NonFinite(String),
    #[error("partition on `{parent}` has no branch for state `{state}`")]
    MissingBranch { parent: String, state: String },
    #[error(transparent)]
    Distribution(#[from] crate::discretize::DistributionError),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Expr {
        Expr::Call { func, args }
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Every variable referenced, including partition parents.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) | Expr::Str(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Binary { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
                lhs.collect_vars(out);
                rhs.collect_vars(out);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_vars(out)),
            Expr::Partition { parent, branches } => {
                out.insert(parent.clone());
                branches.iter().for_each(|(_, e)| e.collect_vars(out));
            }
        }
    }

    /// Variables that appear only as distribution parameters (never in a
    /// position that determines the node's value directly).
    pub fn parameter_only_variables(&self) -> BTreeSet<String> {
        let all = self.variables();
        let mut direct = BTreeSet::new();
        self.collect_direct(&mut direct);
        all.difference(&direct).cloned().collect()
    }

    fn collect_direct(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Call { func, args } if func.is_distribution() && *func != Func::Arithmetic => {}
            Expr::Partition { parent, branches } => {
                out.insert(parent.clone());
                branches.iter().for_each(|(_, e)| e.collect_direct(out));
            }
            other => other.collect_vars(out),
        }
    }

    /// Static checks: every referenced variable is among `parents`,
    /// distribution constructors appear only at the root or directly under
    /// partition branches, and comparisons appear only as an `if` condition
    /// or at the root.
    pub fn check(&self, parents: &[&str]) -> Result<ExprShape, ExprError> {
        for v in self.variables() {
            if !parents.contains(&v.as_str()) {
                return Err(ExprError::UnknownVariable(v));
            }
        }
        self.root_shape()
    }

    fn root_shape(&self) -> Result<ExprShape, ExprError> {
        match self {
            Expr::Partition { branches, .. } => {
                let mut shape = None;
                for (_, branch) in branches {
                    let s = branch.root_shape()?;
                    match shape {
                        None => shape = Some(s),
                        Some(prev) if prev == s => {}
                        // A point-valued branch can sit beside distribution branches.
                        Some(ExprShape::Distribution) if s == ExprShape::Deterministic => {}
                        Some(ExprShape::Deterministic) if s == ExprShape::Distribution => {
                            shape = Some(ExprShape::Distribution)
                        }
                        Some(_) => {
                            return Err(ExprError::Placement(
                                "partition branches mix labels and numbers".into(),
                            ))
                        }
                    }
                }
                shape.ok_or_else(|| ExprError::Placement("partition with no branches".into()))
            }
            Expr::Call { func, args } if func.is_distribution() => {
                for a in args {
                    a.check_inner(false)?;
                }
                Ok(ExprShape::Distribution)
            }
            Expr::Compare { lhs, rhs, .. } => {
                lhs.check_inner(false)?;
                rhs.check_inner(false)?;
                Ok(ExprShape::Label)
            }
            Expr::Str(_) => Ok(ExprShape::Label),
            Expr::Call { func: Func::If, args } => {
                args[0].check_condition()?;
                let a = args[1].check_inner(true)?;
                let b = args[2].check_inner(true)?;
                if a != b {
                    return Err(ExprError::Placement(
                        "`if` branches must both be labels or both be numbers".into(),
                    ));
                }
                Ok(a)
            }
            other => other.check_inner(false),
        }
    }

    fn check_condition(&self) -> Result<(), ExprError> {
        match self {
            Expr::Compare { op, lhs, rhs } => {
                // `X = "label"` tests a discrete parent's state.
                let labelled = matches!(**lhs, Expr::Str(_)) || matches!(**rhs, Expr::Str(_));
                if labelled && *op == CmpOp::Eq {
                    for side in [lhs, rhs] {
                        if !matches!(**side, Expr::Str(_) | Expr::Var(_)) {
                            return Err(ExprError::Placement(
                                "label comparisons take a variable and a string".into(),
                            ));
                        }
                    }
                    return Ok(());
                }
                lhs.check_inner(false)?;
                rhs.check_inner(false)?;
                Ok(())
            }
            _ => Err(ExprError::Placement(
                "`if` condition must be a comparison".into(),
            )),
        }
    }

    /// Shape of a nested sub-expression; only numbers and (when
    /// `labels_ok`) string literals are allowed below the root.
    fn check_inner(&self, labels_ok: bool) -> Result<ExprShape, ExprError> {
        match self {
            Expr::Number(_) | Expr::Var(_) => Ok(ExprShape::Deterministic),
            Expr::Str(_) if labels_ok => Ok(ExprShape::Label),
            Expr::Str(s) => Err(ExprError::Placement(format!(
                "string literal \"{s}\" is only allowed as an `if` result"
            ))),
            Expr::Neg(e) => e.check_inner(false),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.check_inner(false)?;
                rhs.check_inner(false)?;
                Ok(ExprShape::Deterministic)
            }
            Expr::Compare { .. } => Err(ExprError::Placement(
                "comparisons are only allowed as an `if` condition or at the root".into(),
            )),
            Expr::Call { func, .. } if func.is_distribution() => Err(ExprError::Placement(format!(
                "`{}` may only appear at the root or directly inside a partition branch",
                func.name()
            ))),
            Expr::Call { func: Func::If, args } => {
                args[0].check_condition()?;
                let a = args[1].check_inner(labels_ok)?;
                let b = args[2].check_inner(labels_ok)?;
                if a != b {
                    return Err(ExprError::Placement(
                        "`if` branches must both be labels or both be numbers".into(),
                    ));
                }
                Ok(a)
            }
            Expr::Call { args, .. } => {
                for a in args {
                    a.check_inner(false)?;
                }
                Ok(ExprShape::Deterministic)
            }
            Expr::Partition { .. } => Err(ExprError::Placement(
                "partitions may only appear at the root".into(),
            )),
        }
    }
}
