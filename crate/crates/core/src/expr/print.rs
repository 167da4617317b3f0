use std::fmt;

use super::Expr;

const CMP_PREC: u8 = 1;
const ATOM_PREC: u8 = 9;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Compare { .. } => CMP_PREC,
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Neg(_) => 4,
        Expr::Number(v) if v.is_sign_negative() => 4,
        _ => ATOM_PREC,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    // `{:?}` keeps a decimal point or exponent so the literal reads as a real.
    write!(f, "{v:?}")
}

/// Prints source text that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => number(f, *v),
            Expr::Str(s) => write!(f, "\"{s}\""),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                child(f, inner, precedence(inner) < ATOM_PREC)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                child(f, lhs, precedence(lhs) < p)?;
                write!(f, " {} ", op.symbol())?;
                child(f, rhs, precedence(rhs) <= p)
            }
            Expr::Compare { op, lhs, rhs } => {
                child(f, lhs, precedence(lhs) <= CMP_PREC)?;
                write!(f, " {} ", op.symbol())?;
                child(f, rhs, precedence(rhs) <= CMP_PREC)
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Partition { parent, branches } => {
                write!(f, "partition({parent}")?;
                for (state, e) in branches {
                    write!(f, ", \"{state}\": {e}")?;
                }
                f.write_str(")")
            }
        }
    }
}
