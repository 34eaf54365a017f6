//! Random well-typed MiniLang programs.

#![allow(dead_code)]

use pathharden_core::ast::{CmpOp, Expr, ExprKind, InputDecl, InputType, Program, Stmt, StmtKind, Type};
use pathharden_core::crypto::{Digest, HashConfig};
use pathharden_core::Span;
use rand::seq::SliceRandom;
use rand::Rng;

const MAX_EXPR_DEPTH: u32 = 4;
const MAX_BLOCK_DEPTH: u32 = 3;

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    scope: Vec<(String, Type)>,
    fresh: usize,
}

pub fn random_program<R: Rng>(rng: &mut R) -> Program {
    let n_inputs = rng.gen_range(0..=4);
    let inputs: Vec<InputDecl> = (0..n_inputs)
        .map(|i| InputDecl {
            name: format!("in{i}"),
            ty: if rng.gen_bool(0.5) { InputType::Int } else { InputType::String },
            span: Span::default(),
        })
        .collect();
    let mut gen = Gen {
        scope: inputs.iter().map(|d| (d.name.clone(), d.ty.into())).collect(),
        rng,
        fresh: 0,
    };
    let body = gen.block(0);
    Program { inputs, body }
}

pub fn random_digest<R: Rng>(rng: &mut R) -> Digest {
    let bits = 8 * rng.gen_range(1..=32u32);
    let salt_len = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(1..=16) };
    let salt: Vec<u8> = (0..salt_len).map(|_| rng.gen()).collect();
    let cfg = HashConfig::new(salt, bits).unwrap();
    let bytes: Vec<u8> = (0..cfg.digest_len()).map(|_| rng.gen()).collect();
    Digest::from_parts(cfg, bytes).unwrap()
}

pub fn random_bytes<R: Rng>(rng: &mut R, max: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max);
    let palette: &[u8] = b"ab\"\\\n\t\x00\x7f\xff/{};=(x)";
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.6) {
                rng.gen_range(b' '..=b'~')
            } else if rng.gen_bool(0.5) {
                *palette.choose(rng).unwrap()
            } else {
                rng.gen()
            }
        })
        .collect()
}

impl<R: Rng> Gen<'_, R> {
    fn block(&mut self, depth: u32) -> Vec<Stmt> {
        let mark = self.scope.len();
        let n = self.rng.gen_range(0..=if depth == 0 { 6 } else { 3 });
        let stmts = (0..n).map(|_| self.stmt(depth)).collect();
        self.scope.truncate(mark);
        stmts
    }

    fn stmt(&mut self, depth: u32) -> Stmt {
        let kind = match self.rng.gen_range(0..10) {
            0..=2 => {
                let ty = *[Type::Int, Type::String, Type::Bool].choose(self.rng).unwrap();
                let value = self.expr(ty, 0);
                let name = format!("t{}", self.fresh);
                self.fresh += 1;
                self.scope.push((name.clone(), ty));
                StmtKind::Let { name, value }
            }
            3..=6 if depth < MAX_BLOCK_DEPTH => StmtKind::If {
                cond: self.expr(Type::Bool, 0),
                then_block: self.block(depth + 1),
                else_block: self.rng.gen_bool(0.4).then(|| self.block(depth + 1)),
            },
            3..=7 => StmtKind::Reject,
            _ => StmtKind::Accept,
        };
        Stmt::new(kind)
    }

    fn var_of(&mut self, ty: Type) -> Option<Expr> {
        let names: Vec<&String> = self.scope.iter().filter(|(_, t)| *t == ty).map(|(n, _)| n).collect();
        names.choose(self.rng).map(|n| Expr::var(n.as_str()))
    }

    fn boxed(&mut self, ty: Type, depth: u32) -> Box<Expr> {
        Box::new(self.expr(ty, depth + 1))
    }

    fn expr(&mut self, ty: Type, depth: u32) -> Expr {
        let leaf = depth >= MAX_EXPR_DEPTH || self.rng.gen_bool(0.3);
        if leaf || ty != Type::Bool && self.rng.gen_bool(0.4) {
            if self.rng.gen_bool(0.5) {
                if let Some(v) = self.var_of(ty) {
                    return v;
                }
            }
            return match ty {
                Type::Int => Expr::int(match self.rng.gen_range(0..3) {
                    0 => self.rng.gen_range(0..10),
                    1 => self.rng.gen_range(0..100_000),
                    _ => self.rng.gen(),
                }),
                Type::String => Expr::str(random_bytes(self.rng, 12)),
                Type::Bool => {
                    // no boolean literals in the language
                    let a = self.expr(Type::Int, MAX_EXPR_DEPTH);
                    let b = self.expr(Type::Int, MAX_EXPR_DEPTH);
                    Expr::cmp(CmpOp::Eq, a, b)
                }
            };
        }
        let kind = match ty {
            Type::Int => ExprKind::Length(self.boxed(Type::String, depth)),
            Type::String => ExprKind::Substring {
                value: self.boxed(Type::String, depth),
                start: self.boxed(Type::Int, depth),
                len: self.boxed(Type::Int, depth),
            },
            Type::Bool => match self.rng.gen_range(0..8) {
                0 | 1 => {
                    let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
                        .choose(self.rng)
                        .unwrap();
                    let operand = if op.is_order() {
                        *[Type::Int, Type::String].choose(self.rng).unwrap()
                    } else {
                        *[Type::Int, Type::String, Type::Bool].choose(self.rng).unwrap()
                    };
                    ExprKind::Cmp {
                        op,
                        lhs: self.boxed(operand, depth),
                        rhs: self.boxed(operand, depth),
                    }
                }
                2 => ExprKind::And(self.boxed(Type::Bool, depth), self.boxed(Type::Bool, depth)),
                3 => ExprKind::Or(self.boxed(Type::Bool, depth), self.boxed(Type::Bool, depth)),
                4 => ExprKind::Not(self.boxed(Type::Bool, depth)),
                5 => ExprKind::Contains {
                    haystack: self.boxed(Type::String, depth),
                    needle: self.boxed(Type::String, depth),
                },
                6 => {
                    let t = *[Type::Int, Type::String].choose(self.rng).unwrap();
                    ExprKind::HashEq {
                        value: self.boxed(t, depth),
                        digest: random_digest(self.rng),
                    }
                }
                _ => ExprKind::HashContains {
                    value: self.boxed(Type::String, depth),
                    digest: random_digest(self.rng),
                    window: self.rng.gen_range(1..=40),
                },
            },
        };
        Expr::new(kind)
    }
}
