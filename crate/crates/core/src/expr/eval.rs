use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{BinOp, Expr, ExprError, Func};
use crate::discretize::DistributionSpec;

/// Value bound to a variable during evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Number(f64),
    /// A discrete state: its label and, when the domain is numeric, its value.
    State { label: String, value: Option<f64> },
}

impl Binding {
    pub fn state(label: &str, value: Option<f64>) -> Binding {
        Binding::State {
            label: label.to_string(),
            value,
        }
    }
}

pub type Env = BTreeMap<String, Binding>;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Number(f64),
    Label(String),
    Bool(bool),
    Distribution(DistributionSpec),
}

/// Evaluates any well-placed expression.
pub fn evaluate(expr: &Expr, env: &Env) -> Result<Outcome, ExprError> {
    match expr {
        Expr::Str(s) => Ok(Outcome::Label(s.clone())),
        Expr::Compare { op, lhs, rhs } => compare(*op, lhs, rhs, env).map(Outcome::Bool),
        Expr::Partition { parent, branches } => {
            let branch = select_branch(parent, branches, env)?;
            evaluate(branch, env)
        }
        Expr::Call { func: Func::If, args } => {
            let cond = match evaluate(&args[0], env)? {
                Outcome::Bool(b) => b,
                _ => return Err(ExprError::Type("`if` condition must be a comparison".into())),
            };
            evaluate(if cond { &args[1] } else { &args[2] }, env)
        }
        Expr::Call { func, args } if func.is_distribution() => {
            let nums = args
                .iter()
                .map(|a| number(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            let spec = match func {
                Func::Uniform => DistributionSpec::uniform(nums[0], nums[1])?,
                Func::Normal => DistributionSpec::normal(nums[0], nums[1])?,
                Func::TNormal => DistributionSpec::tnormal(nums[0], nums[1], nums[2], nums[3])?,
                Func::Gamma => DistributionSpec::gamma(nums[0], nums[1])?,
                Func::Binomial => DistributionSpec::binomial(nums[0], nums[1])?,
                Func::Arithmetic => DistributionSpec::point(nums[0])?,
                _ => unreachable!(),
            };
            Ok(Outcome::Distribution(spec))
        }
        other => number(other, env).map(Outcome::Number),
    }
}

/// Evaluates a distribution-free numeric expression.
pub fn evaluate_deterministic(expr: &Expr, env: &Env) -> Result<f64, ExprError> {
    match evaluate(expr, env)? {
        Outcome::Number(v) => Ok(v),
        Outcome::Label(l) => Err(ExprError::Type(format!("expected a number, found label \"{l}\""))),
        Outcome::Bool(_) => Err(ExprError::Type("expected a number, found a comparison".into())),
        Outcome::Distribution(_) => Err(ExprError::Type(
            "expected a number, found a distribution".into(),
        )),
    }
}

/// Resolves an expression to a distribution; plain numbers become point masses.
pub fn evaluate_distribution(expr: &Expr, env: &Env) -> Result<DistributionSpec, ExprError> {
    match evaluate(expr, env)? {
        Outcome::Distribution(d) => Ok(d),
        Outcome::Number(v) => Ok(DistributionSpec::point(v)?),
        _ => Err(ExprError::Type("expected a distribution".into())),
    }
}

fn select_branch<'a>(
    parent: &str,
    branches: &'a [(String, Expr)],
    env: &Env,
) -> Result<&'a Expr, ExprError> {
    let binding = env
        .get(parent)
        .ok_or_else(|| ExprError::Unbound(parent.to_string()))?;
    let found = match binding {
        Binding::State { label, .. } => branches.iter().find(|(s, _)| s == label),
        Binding::Number(v) => branches
            .iter()
            .find(|(s, _)| s.parse::<f64>().is_ok_and(|x| x == *v)),
    };
    found.map(|(_, e)| e).ok_or_else(|| ExprError::MissingBranch {
        parent: parent.to_string(),
        state: match binding {
            Binding::State { label, .. } => label.clone(),
            Binding::Number(v) => v.to_string(),
        },
    })
}

fn label_of<'a>(e: &'a Expr, env: &'a Env) -> Option<&'a str> {
    match e {
        Expr::Str(s) => Some(s),
        Expr::Var(v) => match env.get(v) {
            Some(Binding::State { label, .. }) => Some(label),
            _ => None,
        },
        _ => None,
    }
}

fn compare(op: super::CmpOp, lhs: &Expr, rhs: &Expr, env: &Env) -> Result<bool, ExprError> {
    // Label equality, e.g. `ID = "True"`.
    if matches!(lhs, Expr::Str(_)) || matches!(rhs, Expr::Str(_)) {
        let (Some(a), Some(b)) = (label_of(lhs, env), label_of(rhs, env)) else {
            return Err(ExprError::Type("string literal compared with a number".into()));
        };
        return match op {
            super::CmpOp::Eq => Ok(a == b),
            _ => Err(ExprError::Type("labels only support `=`".into())),
        };
    }
    let a = number(lhs, env)?;
    let b = number(rhs, env)?;
    let ord = a.partial_cmp(&b).unwrap_or(Ordering::Equal);
    Ok(op.holds(ord))
}

fn finite(v: f64, ctx: &Expr) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite(ctx.to_string()))
    }
}

fn number(expr: &Expr, env: &Env) -> Result<f64, ExprError> {
    match expr {
        Expr::Number(v) => Ok(*v),
        Expr::Var(name) => match env.get(name) {
            Some(Binding::Number(v)) => Ok(*v),
            Some(Binding::State { value: Some(v), .. }) => Ok(*v),
            Some(Binding::State { label, value: None }) => Err(ExprError::Type(format!(
                "state \"{label}\" of `{name}` has no numeric value"
            ))),
            None => Err(ExprError::Unbound(name.clone())),
        },
        Expr::Neg(e) => Ok(-number(e, env)?),
        Expr::Binary { op, lhs, rhs } => {
            let a = number(lhs, env)?;
            let b = number(rhs, env)?;
            let v = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    a / b
                }
            };
            finite(v, expr)
        }
        Expr::Call { func, args } => match func {
            Func::Min | Func::Max => {
                let mut acc = number(&args[0], env)?;
                for a in &args[1..] {
                    let v = number(a, env)?;
                    acc = if *func == Func::Min { acc.min(v) } else { acc.max(v) };
                }
                Ok(acc)
            }
            Func::Abs => Ok(number(&args[0], env)?.abs()),
            Func::If => match evaluate(&args[0], env)? {
                Outcome::Bool(c) => number(if c { &args[1] } else { &args[2] }, env),
                _ => Err(ExprError::Type("`if` condition must be a comparison".into())),
            },
            _ => Err(ExprError::Type(format!(
                "`{}` yields a distribution, not a number",
                func.name()
            ))),
        },
        Expr::Partition { parent, branches } => number(select_branch(parent, branches, env)?, env),
        Expr::Str(s) => Err(ExprError::Type(format!("label \"{s}\" used as a number"))),
        Expr::Compare { .. } => Err(ExprError::Type("comparison used as a number".into())),
    }
}
