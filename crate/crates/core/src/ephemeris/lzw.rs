//! Decoder for the unix `compress` (.Z) format used by older GNSS archives.

const MAGIC: [u8; 2] = [0x1f, 0x9d];
const CLEAR: usize = 256;

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn read(&mut self, n_bits: usize) -> Option<usize> {
        if self.pos + n_bits > self.data.len() * 8 {
            return None;
        }
        let mut code = 0usize;
        for k in 0..n_bits {
            let bit = self.pos + k;
            if self.data[bit / 8] >> (bit % 8) & 1 == 1 {
                code |= 1 << k;
            }
        }
        self.pos += n_bits;
        Some(code)
    }

    /// Codes are written in groups of eight; a width change or clear
    /// discards the rest of the current group.
    fn align(&mut self, segment_start: usize, n_bits: usize) {
        let group = n_bits * 8;
        let used = self.pos - segment_start;
        self.pos = segment_start + used.div_ceil(group) * group;
    }
}

/// Decompresses a `.Z` stream. Returns `None` for a bad header or a corrupt
/// code stream.
pub fn decompress_unix_z(input: &[u8]) -> Option<Vec<u8>> {
    if input.len() < 3 || input[0..2] != MAGIC {
        return None;
    }
    let max_bits = (input[2] & 0x1f) as usize;
    let block_mode = input[2] & 0x80 != 0;
    if !(9..=16).contains(&max_bits) {
        return None;
    }
    let max_max_code = 1usize << max_bits;
    let first_free = if block_mode { 257 } else { 256 };

    let mut prefix = vec![0u16; max_max_code];
    let mut suffix = vec![0u8; max_max_code];
    for (i, s) in suffix.iter_mut().enumerate().take(256) {
        *s = i as u8;
    }

    let mut reader = BitReader { data: &input[3..], pos: 0 };
    let mut segment_start = 0;
    let mut n_bits = 9;
    let mut max_code = (1 << n_bits) - 1;
    let mut free = first_free;
    let mut old: Option<usize> = None;
    let mut fin = 0u8;
    let mut out = Vec::with_capacity(input.len() * 3);
    let mut stack = Vec::new();

    loop {
        if free > max_code && n_bits < max_bits {
            reader.align(segment_start, n_bits);
            segment_start = reader.pos;
            n_bits += 1;
            max_code = if n_bits == max_bits { max_max_code } else { (1 << n_bits) - 1 };
        }
        let Some(code) = reader.read(n_bits) else { break };
        let Some(prev) = old else {
            if code > 255 {
                return None;
            }
            fin = code as u8;
            out.push(fin);
            old = Some(code);
            continue;
        };
        if code == CLEAR && block_mode {
            // mirrors the reference decoder: the next code fills a dead slot
            // at 256, hence the one-lower limit for the first width change
            reader.align(segment_start, n_bits);
            segment_start = reader.pos;
            n_bits = 9;
            max_code = (1 << n_bits) - 2;
            free = first_free - 1;
            continue;
        }
        let mut cur = code;
        if cur >= free {
            if cur > free {
                return None;
            }
            stack.push(fin);
            cur = prev;
        }
        while cur >= 256 {
            stack.push(suffix[cur]);
            cur = prefix[cur] as usize;
        }
        fin = suffix[cur];
        stack.push(fin);
        out.extend(stack.drain(..).rev());
        if free < max_max_code {
            prefix[free] = prev as u16;
            suffix[free] = fin;
            free += 1;
        }
        old = Some(code);
    }
    Some(out)
}
