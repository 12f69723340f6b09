//! Operator semantics shared by constant folding and both simulators.
//!
//! Every operator has a self-determined result width: arithmetic and
//! bitwise operators take the wider operand's width, comparisons and
//! logical operators produce one bit, shifts keep the left operand's width.

use crate::frontend::ast::{BinaryOp, UnaryOp};
use crate::value::{mask, Value};

pub fn binary_width(op: BinaryOp, a: u32, b: u32) -> u32 {
    use BinaryOp::*;
    match op {
        Add | Sub | Mul | And | Or | Xor => a.max(b),
        Eq | Ne | Lt | Le | Gt | Ge | LogicAnd | LogicOr => 1,
        Shl | Shr => a,
    }
}

pub fn unary_width(op: UnaryOp, a: u32) -> u32 {
    match op {
        UnaryOp::Not | UnaryOp::Neg => a,
        UnaryOp::LogicNot | UnaryOp::ReduceAnd | UnaryOp::ReduceOr | UnaryOp::ReduceXor => 1,
    }
}

pub fn binary(op: BinaryOp, a: Value, b: Value) -> Value {
    use BinaryOp::*;
    let w = binary_width(op, a.width(), b.width());
    let (x, y) = (a.bits(), b.bits());
    let r = match op {
        Add => x.wrapping_add(y),
        Sub => x.wrapping_sub(y),
        Mul => x.wrapping_mul(y),
        And => x & y,
        Or => x | y,
        Xor => x ^ y,
        Eq => (x == y) as u64,
        Ne => (x != y) as u64,
        Lt => (x < y) as u64,
        Le => (x <= y) as u64,
        Gt => (x > y) as u64,
        Ge => (x >= y) as u64,
        Shl => {
            if y >= 64 {
                0
            } else {
                x << y
            }
        }
        Shr => {
            if y >= 64 {
                0
            } else {
                x >> y
            }
        }
        LogicAnd => (x != 0 && y != 0) as u64,
        LogicOr => (x != 0 || y != 0) as u64,
    };
    Value::new(w, r)
}

pub fn unary(op: UnaryOp, a: Value) -> Value {
    let w = unary_width(op, a.width());
    let x = a.bits();
    let r = match op {
        UnaryOp::Not => !x,
        UnaryOp::Neg => x.wrapping_neg(),
        UnaryOp::LogicNot => (x == 0) as u64,
        UnaryOp::ReduceAnd => (x == mask(a.width())) as u64,
        UnaryOp::ReduceOr => (x != 0) as u64,
        UnaryOp::ReduceXor => (x.count_ones() & 1) as u64,
    };
    Value::new(w, r)
}

/// Concatenation, first element most significant.
pub fn concat(parts: impl IntoIterator<Item = Value>) -> Option<Value> {
    let mut width = 0u32;
    let mut bits = 0u64;
    for p in parts {
        width += p.width();
        if width > crate::value::MAX_WIDTH {
            return None;
        }
        bits = if p.width() >= 64 { 0 } else { bits << p.width() } | p.bits();
    }
    (width > 0).then(|| Value::new(width, bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_wraps_at_operand_width() {
        let r = binary(BinaryOp::Add, Value::new(8, 200), Value::new(8, 100));
        assert_eq!(r, Value::new(8, 44));
        let r = binary(BinaryOp::Add, Value::new(8, 200), Value::new(16, 100));
        assert_eq!(r, Value::new(16, 300));
    }

    #[test]
    fn comparisons_are_one_bit() {
        assert_eq!(
            binary(BinaryOp::Lt, Value::new(4, 3), Value::new(32, 9)),
            Value::bit(true)
        );
        assert_eq!(unary(UnaryOp::LogicNot, Value::new(8, 0)), Value::bit(true));
        assert_eq!(unary(UnaryOp::Not, Value::new(4, 0b1010)), Value::new(4, 0b0101));
        assert_eq!(unary(UnaryOp::ReduceAnd, Value::new(3, 7)), Value::bit(true));
        assert_eq!(unary(UnaryOp::ReduceXor, Value::new(3, 6)), Value::bit(false));
    }

    #[test]
    fn concat_orders_msb_first() {
        let v = concat([Value::new(4, 0xa), Value::new(8, 0x5c)]).unwrap();
        assert_eq!(v, Value::new(12, 0xa5c));
        assert!(concat([Value::new(40, 1), Value::new(40, 1)]).is_none());
    }
}
