//! Two-state bit vectors of up to 64 bits.

use std::fmt;

pub const MAX_WIDTH: u32 = 64;

/// A sized two-state value. Bits above `width` are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Value {
    width: u32,
    bits: u64,
}

#[inline]
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl Value {
    pub fn new(width: u32, bits: u64) -> Self {
        debug_assert!((1..=MAX_WIDTH).contains(&width));
        Value {
            width,
            bits: bits & mask(width),
        }
    }

    pub fn zero(width: u32) -> Self {
        Value::new(width, 0)
    }

    pub fn bit(b: bool) -> Self {
        Value::new(1, b as u64)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_true(&self) -> bool {
        self.bits != 0
    }

    /// Truncate or zero-extend to `width`.
    pub fn resize(&self, width: u32) -> Value {
        Value::new(width, self.bits)
    }

    /// Little-endian byte image, `ceil(width / 8)` bytes long.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n = self.width.div_ceil(8) as usize;
        self.bits.to_le_bytes()[..n].to_vec()
    }

    pub fn from_le_bytes(width: u32, bytes: &[u8]) -> Value {
        let mut buf = [0u8; 8];
        let n = bytes.len().min(8);
        buf[..n].copy_from_slice(&bytes[..n]);
        Value::new(width, u64::from_le_bytes(buf))
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'h{:x}", self.width, self.bits)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'d{}", self.width, self.bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_masks_high_bits() {
        assert_eq!(Value::new(4, 0xff).bits(), 0xf);
        assert_eq!(Value::new(64, u64::MAX).bits(), u64::MAX);
    }

    #[test]
    fn byte_image_is_ceil_width() {
        assert_eq!(Value::new(1, 1).to_le_bytes(), vec![1]);
        assert_eq!(Value::new(9, 0x1ff).to_le_bytes(), vec![0xff, 0x01]);
        assert_eq!(Value::new(32, 0x0403_0201).to_le_bytes(), vec![1, 2, 3, 4]);
        let v = Value::new(13, 0x1abc);
        assert_eq!(Value::from_le_bytes(13, &v.to_le_bytes()), v);
    }
}
