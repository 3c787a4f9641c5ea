use crate::tokenizer::{Timeline, TokenId};

pub const PACK_WIDTH: usize = 1024;

/// `rows × width` token matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBatch {
    pub width: usize,
    pub data: Vec<TokenId>,
}

impl PackedBatch {
    pub fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn row(&self, r: usize) -> &[TokenId] {
        &self.data[r * self.width..(r + 1) * self.width]
    }
}

/// Pack timelines into batches of `b` rows of [`PACK_WIDTH`] tokens.
pub fn pack(timelines: &[Timeline], b: usize, pad: TokenId) -> Vec<PackedBatch> {
    pack_with_width(timelines, b, PACK_WIDTH, pad)
}

/// Concatenate timelines and fill rows row-major; the last row is completed
/// with `pad` and the last batch may hold fewer than `b` rows.
pub fn pack_with_width(
    timelines: &[Timeline],
    b: usize,
    width: usize,
    pad: TokenId,
) -> Vec<PackedBatch> {
    assert!(b >= 1 && width >= 1, "batch rows and width must be positive");
    let mut stream: Vec<TokenId> = timelines
        .iter()
        .flat_map(|t| t.tokens.iter().copied())
        .collect();
    if stream.is_empty() {
        return Vec::new();
    }
    let rows = stream.len().div_ceil(width);
    stream.resize(rows * width, pad);
    stream
        .chunks(b * width)
        .map(|chunk| PackedBatch {
            width,
            data: chunk.to_vec(),
        })
        .collect()
}

/// Start of the packed row holding stream position `i`.
pub fn row_start(i: usize, width: usize) -> usize {
    i - i % width
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TimelineEnding;

    fn tl(len: usize, first: TokenId) -> Timeline {
        let tokens: Vec<TokenId> = (0..len).map(|i| first + (i % 7) as TokenId).collect();
        Timeline::new("x".into(), tokens, vec![0; len], TimelineEnding::Window)
    }

    #[test]
    fn three_timelines_fill_two_rows_exactly() {
        // 1000 + 1000 + 48 = 2048 = 2 · 1024: one full batch, no PAD
        let t = [tl(1000, 1), tl(1000, 2), tl(48, 3)];
        let batches = pack(&t, 2, 0);
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].rows(), 2);
        assert!(batches[0].data.iter().all(|x| *x != 0));

        let t = [tl(1000, 1), tl(1000, 2), tl(49, 3)];
        let batches = pack(&t, 2, 0);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].rows(), 1);
        assert_eq!(batches[1].data.iter().filter(|x| **x == 0).count(), 1023);
    }

    #[test]
    fn single_short_timeline() {
        let b = pack(&[tl(10, 1)], 1, 99);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].data.iter().filter(|x| **x == 99).count(), 1014);
    }

    #[test]
    fn readback_is_concatenation() {
        let t = [tl(5, 1), tl(9, 2), tl(3, 4)];
        let flat: Vec<TokenId> = t.iter().flat_map(|x| x.tokens.clone()).collect();
        let back: Vec<TokenId> = pack_with_width(&t, 2, 4, 0)
            .iter()
            .flat_map(|b| b.data.clone())
            .collect();
        assert_eq!(&back[..flat.len()], &flat[..]);
        assert!(back[flat.len()..].iter().all(|x| *x == 0));
        assert!(pack(&[], 3, 0).is_empty());
        assert_eq!(row_start(2049, 1024), 2048);
    }
}
