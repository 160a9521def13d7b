//! MSB-first bit strings packed into bytes. Segments of an intermediate-value
//! stream need not be byte aligned (e.g. T = 8 bits split over r = 2 senders).

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitBuf {
    bytes: Vec<u8>,
    len: usize,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self { bytes: vec![0; len.div_ceil(8)], len }
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self { bytes: bytes.to_vec(), len: bytes.len() * 8 }
    }

    pub fn from_packed(bytes: Vec<u8>, len: usize) -> Self {
        assert!(bytes.len() == len.div_ceil(8), "packed length mismatch");
        let mut buf = Self { bytes, len };
        buf.clear_tail();
        buf
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn get(&self, i: usize) -> bool {
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    fn set(&mut self, i: usize, bit: bool) {
        let mask = 1u8 << (7 - i % 8);
        if bit {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) {
        if self.len % 8 == 0 {
            self.bytes.extend_from_slice(bytes);
            self.len += bytes.len() * 8;
        } else {
            self.append(&BitBuf::from_bytes(bytes));
        }
    }

    pub fn append(&mut self, other: &BitBuf) {
        let start = self.len;
        self.len += other.len;
        self.bytes.resize(self.len.div_ceil(8), 0);
        for i in 0..other.len {
            self.set(start + i, other.get(i));
        }
    }

    /// Bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> BitBuf {
        assert!(start + len <= self.len, "bit slice out of range");
        if start % 8 == 0 {
            let mut out = BitBuf {
                bytes: self.bytes[start / 8..(start + len).div_ceil(8)].to_vec(),
                len,
            };
            out.clear_tail();
            return out;
        }
        let mut out = BitBuf::zeros(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    pub fn xor_assign(&mut self, other: &BitBuf) {
        assert_eq!(self.len, other.len, "xor of unequal bit lengths");
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a ^= b;
        }
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xFFu8 << (8 - rem);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unaligned_slices_and_append() {
        let buf = BitBuf::from_bytes(&[0b1011_0011, 0b0101_1100]);
        let lo = buf.slice(0, 4);
        let mid = buf.slice(4, 7);
        let hi = buf.slice(11, 5);
        assert_eq!(lo.as_bytes(), &[0b1011_0000]);
        assert_eq!(mid.as_bytes(), &[0b0011_0100]);
        let mut joined = BitBuf::new();
        joined.append(&lo);
        joined.append(&mid);
        joined.append(&hi);
        assert_eq!(joined, buf);
    }

    #[test]
    fn xor_is_involutive() {
        let a = BitBuf::from_bytes(&[0xAA, 0x0F]).slice(3, 9);
        let b = BitBuf::from_bytes(&[0x5C, 0xF1]).slice(1, 9);
        let mut c = a.clone();
        c.xor_assign(&b);
        c.xor_assign(&b);
        assert_eq!(c, a);
    }
}
