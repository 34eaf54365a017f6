//! Canonical MiniLang text: one statement per line, two-space indents,
//! minimal parentheses.

use std::fmt::Write;

use crate::ast::{Expr, ExprKind, Program, Stmt, StmtKind};
use crate::value::escape;

pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for decl in &program.inputs {
        let _ = writeln!(out, "input {}: {};", decl.name, decl.ty);
    }
    for stmt in &program.body {
        print_stmt(stmt, 0, &mut out);
    }
    out
}

pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, Prec::Or, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn print_block(stmts: &[Stmt], level: usize, out: &mut String) {
    out.push_str("{\n");
    for stmt in stmts {
        print_stmt(stmt, level + 1, out);
    }
    indent(level, out);
    out.push('}');
}

fn print_stmt(stmt: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match &stmt.kind {
        StmtKind::Let { name, value } => {
            let _ = write!(out, "let {name} = ");
            write_expr(value, Prec::Or, out);
            out.push(';');
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            out.push_str("if (");
            write_expr(cond, Prec::Or, out);
            out.push_str(") ");
            print_block(then_block, level, out);
            if let Some(else_block) = else_block {
                out.push_str(" else ");
                print_block(else_block, level, out);
            }
        }
        StmtKind::Accept => out.push_str("accept;"),
        StmtKind::Reject => out.push_str("reject;"),
    }
    out.push('\n');
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Or,
    And,
    Not,
    Cmp,
    Primary,
}

fn prec(e: &Expr) -> Prec {
    match e.kind {
        ExprKind::Or(..) => Prec::Or,
        ExprKind::And(..) => Prec::And,
        ExprKind::Not(_) => Prec::Not,
        ExprKind::Cmp { .. } => Prec::Cmp,
        _ => Prec::Primary,
    }
}

fn write_expr(e: &Expr, min: Prec, out: &mut String) {
    if prec(e) < min {
        out.push('(');
        write_expr(e, Prec::Or, out);
        out.push(')');
        return;
    }
    match &e.kind {
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Str(bytes) => {
            let _ = write!(out, "\"{}\"", escape(bytes));
        }
        ExprKind::Var(name) => out.push_str(name),
        ExprKind::Or(a, b) => {
            write_expr(a, Prec::Or, out);
            out.push_str(" || ");
            write_expr(b, Prec::And, out);
        }
        ExprKind::And(a, b) => {
            write_expr(a, Prec::And, out);
            out.push_str(" && ");
            write_expr(b, Prec::Not, out);
        }
        ExprKind::Not(inner) => {
            out.push('!');
            write_expr(inner, Prec::Not, out);
        }
        ExprKind::Cmp { op, lhs, rhs } => {
            write_expr(lhs, Prec::Primary, out);
            let _ = write!(out, " {} ", op.as_str());
            write_expr(rhs, Prec::Primary, out);
        }
        ExprKind::Contains { haystack, needle } => call(out, "contains", &[haystack, needle], &[]),
        ExprKind::Length(inner) => call(out, "length", &[inner], &[]),
        ExprKind::Substring { value, start, len } => {
            call(out, "substring", &[value, start, len], &[])
        }
        ExprKind::HashEq { value, digest } => {
            call(out, "hash_eq", &[value], &[format!("digest\"{digest}\"")])
        }
        ExprKind::HashContains {
            value,
            digest,
            window,
        } => call(
            out,
            "hash_contains",
            &[value],
            &[format!("digest\"{digest}\""), window.to_string()],
        ),
    }
}

fn call(out: &mut String, name: &str, args: &[&Expr], extra: &[String]) {
    out.push_str(name);
    out.push('(');
    for (i, arg) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(arg, Prec::Or, out);
    }
    for arg in extra {
        out.push_str(", ");
        out.push_str(arg);
    }
    out.push(')');
}
