use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key {
    pub priority: f64,
    pub id: u64,
    pub slot: usize,
}

/// Rank order: higher priority first, older item first among equals.
fn order(a: &Key, b: &Key) -> Ordering {
    b.priority.total_cmp(&a.priority).then(a.id.cmp(&b.id))
}

const BLOCK: usize = 256;

/// Sorted sequence split into bounded blocks: `O(sqrt n)` insert, remove and
/// select-by-rank without a balanced tree.
#[derive(Debug, Clone, Default)]
pub struct RankList {
    blocks: Vec<Vec<Key>>,
    len: usize,
}

impl RankList {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn first(&self) -> Option<&Key> {
        self.blocks.first().and_then(|b| b.first())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Key> {
        self.blocks.iter().flatten()
    }

    /// Index of the first block whose last key is not before `key`.
    fn block_for(&self, key: &Key) -> usize {
        self.blocks
            .partition_point(|b| order(b.last().expect("blocks are never empty"), key) == Ordering::Less)
    }

    pub fn insert(&mut self, key: Key) {
        if self.blocks.is_empty() {
            self.blocks.push(vec![key]);
            self.len = 1;
            return;
        }
        let bi = self.block_for(&key).min(self.blocks.len() - 1);
        let block = &mut self.blocks[bi];
        let pos = block.partition_point(|k| order(k, &key) == Ordering::Less);
        block.insert(pos, key);
        if block.len() > 2 * BLOCK {
            let tail = block.split_off(BLOCK);
            self.blocks.insert(bi + 1, tail);
        }
        self.len += 1;
    }

    /// Removes an exact key; returns whether it was present.
    pub fn remove(&mut self, key: Key) -> bool {
        let bi = self.block_for(&key);
        let Some(block) = self.blocks.get_mut(bi) else {
            return false;
        };
        let pos = block.partition_point(|k| order(k, &key) == Ordering::Less);
        if pos < block.len()
            && block[pos].id == key.id
            && block[pos].slot == key.slot
            && block[pos].priority.to_bits() == key.priority.to_bits()
        {
            block.remove(pos);
            if block.is_empty() {
                self.blocks.remove(bi);
            }
            self.len -= 1;
            true
        } else {
            false
        }
    }

    /// Key at 0-based rank `k`.
    pub fn select(&self, mut k: usize) -> Key {
        for block in &self.blocks {
            if k < block.len() {
                return block[k];
            }
            k -= block.len();
        }
        panic!("rank out of range");
    }
}
