//! MSB-first bit packing over a fixed byte buffer.

pub(crate) struct BitWriter<const N: usize> {
    buf: [u8; N],
    pos: usize,
}

impl<const N: usize> BitWriter<N> {
    pub(crate) fn new() -> Self {
        Self {
            buf: [0; N],
            pos: 0,
        }
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub(crate) fn put(&mut self, value: u32, width: u32) {
        debug_assert!(width <= 32);
        debug_assert!(self.pos + width as usize <= N * 8, "frame overrun");
        for i in (0..width).rev() {
            if (value >> i) & 1 == 1 {
                self.buf[self.pos / 8] |= 0x80 >> (self.pos % 8);
            }
            self.pos += 1;
        }
    }

    pub(crate) fn put_flag(&mut self, flag: bool) {
        self.put(flag as u32, 1);
    }

    pub(crate) fn finish(self) -> [u8; N] {
        debug_assert_eq!(self.pos, N * 8, "frame underfilled");
        self.buf
    }
}

pub(crate) struct BitReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, width: u32) -> u32 {
        let mut out = 0u32;
        for _ in 0..width {
            let bit = (self.buf[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            out = (out << 1) | bit as u32;
            self.pos += 1;
        }
        out
    }

    pub(crate) fn take_flag(&mut self) -> bool {
        self.take(1) == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packs_across_byte_boundaries() {
        let mut w = BitWriter::<3>::new();
        w.put(0xA, 4);
        w.put(0x3, 4);
        w.put(0xFFF, 12);
        w.put(0x5, 4);
        let bytes = w.finish();
        assert_eq!(bytes, [0xA3, 0xFF, 0xF5]);

        let mut r = BitReader::new(&bytes);
        assert_eq!(r.take(4), 0xA);
        assert_eq!(r.take(4), 0x3);
        assert_eq!(r.take(12), 0xFFF);
        assert_eq!(r.take(4), 0x5);
    }
}
