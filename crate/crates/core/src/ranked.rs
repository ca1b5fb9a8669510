//! Sorted multiset-free container with fast rank lookup.

const MAX_BLOCK: usize = 512;

/// Sorted set split into bounded blocks: `O(√n)`-ish insert, remove and
/// `nth`, where a plain `BTreeSet` needs `O(rank)` for `nth`.
#[derive(Debug, Clone)]
pub(crate) struct RankedSet<K> {
    blocks: Vec<Vec<K>>,
    len: usize,
}

impl<K> Default for RankedSet<K> {
    fn default() -> Self {
        RankedSet {
            blocks: Vec::new(),
            len: 0,
        }
    }
}

impl<K: Ord + Copy> RankedSet<K> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// First block whose last element is `>= key` (or the last block).
    fn block_for(&self, key: &K) -> usize {
        let i = self.blocks.partition_point(|b| b.last().is_some_and(|last| last < key));
        i.min(self.blocks.len().saturating_sub(1))
    }

    /// Returns false if the key was already present.
    pub fn insert(&mut self, key: K) -> bool {
        if self.blocks.is_empty() {
            self.blocks.push(vec![key]);
            self.len = 1;
            return true;
        }
        let b = self.block_for(&key);
        let block = &mut self.blocks[b];
        match block.binary_search(&key) {
            Ok(_) => return false,
            Err(pos) => block.insert(pos, key),
        }
        self.len += 1;
        if block.len() > MAX_BLOCK {
            let tail = block.split_off(MAX_BLOCK / 2);
            self.blocks.insert(b + 1, tail);
        }
        true
    }

    pub fn remove(&mut self, key: &K) -> bool {
        if self.blocks.is_empty() {
            return false;
        }
        let b = self.block_for(key);
        let block = &mut self.blocks[b];
        let Ok(pos) = block.binary_search(key) else {
            return false;
        };
        block.remove(pos);
        self.len -= 1;
        if block.is_empty() {
            self.blocks.remove(b);
        }
        true
    }

    pub fn nth(&self, mut rank: usize) -> Option<K> {
        for block in &self.blocks {
            if rank < block.len() {
                return Some(block[rank]);
            }
            rank -= block.len();
        }
        None
    }

    pub fn iter(&self) -> impl Iterator<Item = &K> {
        self.blocks.iter().flatten()
    }
}
