//! Flat-vector view of the trainable parameters, with named blocks for
//! diagnostics.

#[derive(Debug, Clone)]
pub struct ParamLayout {
    blocks: Vec<(String, usize)>,
    offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn from_blocks(blocks: Vec<(String, usize)>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut total = 0;
        for (_, len) in &blocks {
            offsets.push(total);
            total += len;
        }
        ParamLayout {
            blocks,
            offsets,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Name of the block a flat index falls into.
    pub fn block_of(&self, idx: usize) -> &str {
        match self.offsets.binary_search(&idx) {
            Ok(i) => &self.blocks[i].0,
            Err(0) => "unknown",
            Err(i) => &self.blocks[i - 1].0,
        }
    }

    pub fn blocks(&self) -> &[(String, usize)] {
        &self.blocks
    }
}
