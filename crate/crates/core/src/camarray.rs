//! Dynamic word-length CAM.
//!
//! Each row holds up to 1024 bits split into four 256-bit chunks. Enabling a
//! prefix of the chunks sets the active word length; a search compares the
//! key against the active prefix of every valid row at once and reports the
//! per-row hamming distance. Every state change and search is appended to an
//! event log that the cost model prices later.

use crate::geodot::{xor_popcount, HashBits};
use crate::{Error, Result};

pub const CHUNK_BITS: usize = 256;
pub const MAX_CHUNKS: usize = 4;
pub const MAX_WORD_BITS: usize = CHUNK_BITS * MAX_CHUNKS;
pub const ALLOWED_ROWS: [usize; 4] = [64, 128, 256, 512];
pub const ALLOWED_WORD_BITS: [usize; 4] = [256, 512, 768, 1024];

const ROW_WORDS: usize = MAX_WORD_BITS / 64;

/// Default sense window: one cycle per search. Multi-cycle time-domain
/// sensing is modeled by raising it (CLI flag or cost table).
pub const DEFAULT_SENSE_WINDOW_CYCLES: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CamConfig {
    rows: usize,
    sense_window_cycles: u32,
    distance_bucket: Option<u32>,
}

impl CamConfig {
    pub fn new(rows: usize) -> Result<Self> {
        if !ALLOWED_ROWS.contains(&rows) {
            return Err(Error::Config(format!("CAM row count {rows} not in {ALLOWED_ROWS:?}")));
        }
        Ok(Self { rows, sense_window_cycles: DEFAULT_SENSE_WINDOW_CYCLES, distance_bucket: None })
    }

    pub fn with_sense_window(mut self, cycles: u32) -> Result<Self> {
        if cycles == 0 {
            return Err(Error::Config("sense window must be at least one cycle".into()));
        }
        self.sense_window_cycles = cycles;
        Ok(self)
    }

    /// Report distances quantized to buckets of `width` (the bucket midpoint,
    /// capped at the word length). `None` reports exact distances.
    pub fn with_distance_bucket(mut self, width: Option<u32>) -> Result<Self> {
        if width == Some(0) {
            return Err(Error::Config("distance bucket width must be positive".into()));
        }
        self.distance_bucket = width;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn chunk_bits(&self) -> usize {
        CHUNK_BITS
    }

    pub fn max_chunks(&self) -> usize {
        MAX_CHUNKS
    }

    pub fn sense_window_cycles(&self) -> u32 {
        self.sense_window_cycles
    }

    pub fn distance_bucket(&self) -> Option<u32> {
        self.distance_bucket
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CamEvent {
    WriteRow { row: usize, word_bits: usize },
    Search { word_bits: usize, valid_rows: usize, cycles: u32 },
    Reconfigure { word_bits: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowMatch {
    pub row: usize,
    pub distance: u32,
}

#[derive(Clone, Debug)]
pub struct CamState {
    config: CamConfig,
    active_chunks: usize,
    storage: Vec<[u64; ROW_WORDS]>,
    valid: Vec<bool>,
    events: Vec<CamEvent>,
}

fn word_bits_to_chunks(bits: usize) -> Result<usize> {
    if ALLOWED_WORD_BITS.contains(&bits) {
        Ok(bits / CHUNK_BITS)
    } else {
        Err(Error::Config(format!("word length {bits} not in {ALLOWED_WORD_BITS:?}")))
    }
}

impl CamState {
    pub fn new(config: CamConfig) -> Self {
        Self {
            config,
            active_chunks: 1,
            storage: vec![[0; ROW_WORDS]; config.rows],
            valid: vec![false; config.rows],
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &CamConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn active_word_bits(&self) -> usize {
        self.active_chunks * CHUNK_BITS
    }

    pub fn valid_rows(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn is_valid(&self, row: usize) -> bool {
        self.valid.get(row).copied().unwrap_or(false)
    }

    /// Enable the first `bits / 256` chunks. Stored bits are untouched.
    pub fn set_word_length(&mut self, bits: usize) -> Result<()> {
        self.active_chunks = word_bits_to_chunks(bits)?;
        self.events.push(CamEvent::Reconfigure { word_bits: bits });
        Ok(())
    }

    /// Store `bits` in the prefix of `row`; the remaining positions are
    /// zeroed and the row becomes valid.
    pub fn write_row(&mut self, row: usize, bits: &HashBits) -> Result<()> {
        if row >= self.config.rows {
            return Err(Error::out_of_range("CAM row", format!("{row} (rows = {})", self.config.rows)));
        }
        if bits.len() > MAX_WORD_BITS {
            return Err(Error::out_of_range("CAM word", bits.len()));
        }
        let slot = &mut self.storage[row];
        *slot = [0; ROW_WORDS];
        slot[..bits.words().len()].copy_from_slice(bits.words());
        self.valid[row] = true;
        self.events.push(CamEvent::WriteRow { row, word_bits: self.active_word_bits() });
        Ok(())
    }

    /// Mark every row invalid (valid-bit reset; not a costed event).
    pub fn invalidate_all(&mut self) {
        self.valid.fill(false);
    }

    /// Full 1024-bit contents of a row, including inactive chunks.
    pub fn stored_row(&self, row: usize) -> Option<HashBits> {
        self.storage.get(row).map(|w| HashBits::from_words(w.to_vec(), MAX_WORD_BITS))
    }

    fn check_key(&self, key: &HashBits) -> Result<()> {
        if key.len() != self.active_word_bits() {
            return Err(Error::HashLengthMismatch { left: key.len(), right: self.active_word_bits() });
        }
        Ok(())
    }

    fn quantize(&self, distance: u32) -> u32 {
        match self.config.distance_bucket {
            None => distance,
            Some(w) => ((distance / w) * w + w / 2).min(self.active_word_bits() as u32),
        }
    }

    fn compare_into(&self, key: &HashBits, out: &mut Vec<RowMatch>) {
        out.clear();
        let words = self.active_chunks * CHUNK_BITS / 64;
        let key = &key.words()[..words];
        for (row, stored) in self.storage.iter().enumerate() {
            if self.valid[row] {
                let distance = self.quantize(xor_popcount(key, &stored[..words]));
                out.push(RowMatch { row, distance });
            }
        }
    }

    /// One parallel search: distances for every valid row, in row order.
    pub fn search(&mut self, key: &HashBits) -> Result<Vec<RowMatch>> {
        let mut out = Vec::with_capacity(self.config.rows);
        self.search_into(key, &mut out)?;
        Ok(out)
    }

    /// [`search`](Self::search) into a reusable buffer.
    pub fn search_into(&mut self, key: &HashBits, out: &mut Vec<RowMatch>) -> Result<()> {
        self.check_key(key)?;
        self.compare_into(key, out);
        self.events.push(CamEvent::Search {
            word_bits: self.active_word_bits(),
            valid_rows: out.len(),
            cycles: self.config.sense_window_cycles,
        });
        Ok(())
    }

    /// Same result as [`search`](Self::search) without logging an event.
    /// Safe to call concurrently on a shared reference.
    pub fn peek(&self, key: &HashBits) -> Result<Vec<RowMatch>> {
        self.check_key(key)?;
        let mut out = Vec::with_capacity(self.config.rows);
        self.compare_into(key, &mut out);
        Ok(out)
    }

    pub fn events(&self) -> &[CamEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<CamEvent> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodot::hamming_distance;
    use proptest::prelude::*;

    fn cam(rows: usize) -> CamState {
        CamState::new(CamConfig::new(rows).unwrap())
    }

    #[test]
    fn new_cam_examples() {
        let c = cam(64);
        assert_eq!(c.rows(), 64);
        assert_eq!(c.valid_rows(), 0);
        assert_eq!(c.active_word_bits(), 256);
        assert_eq!(cam(512).rows(), 512);
        assert!(CamConfig::new(100).is_err());
        assert!(CamConfig::new(64).unwrap().with_sense_window(0).is_err());
    }

    #[test]
    fn set_word_length_examples() {
        let mut c = cam(64);
        c.set_word_length(512).unwrap();
        assert_eq!(c.active_word_bits(), 512);
        assert!(c.set_word_length(300).is_err());
        assert_eq!(c.active_word_bits(), 512);
        assert_eq!(c.events(), &[CamEvent::Reconfigure { word_bits: 512 }]);
    }

    #[test]
    fn write_row_examples() {
        let mut c = cam(64);
        c.write_row(0, &HashBits::ones(256)).unwrap();
        assert!(c.is_valid(0));
        assert!(c.write_row(64, &HashBits::ones(256)).is_err());
        assert!(c.write_row(0, &HashBits::ones(1025)).is_err());

        c.set_word_length(1024).unwrap();
        c.write_row(1, &HashBits::ones(1024)).unwrap();
        c.write_row(1, &HashBits::ones(256)).unwrap();
        let stored = c.stored_row(1).unwrap();
        assert_eq!(stored.count_ones(), 256, "overwrite replaces the whole row");
    }

    #[test]
    fn search_examples() {
        let mut c = cam(64);
        c.write_row(0, &HashBits::zeros(256)).unwrap();
        let key = HashBits::ones(256);
        c.write_row(5, &key).unwrap();
        let hits = c.search(&key).unwrap();
        assert_eq!(hits, vec![RowMatch { row: 0, distance: 256 }, RowMatch { row: 5, distance: 0 }]);
        assert!(c.search(&HashBits::ones(512)).is_err());
    }

    #[test]
    fn search_uses_active_prefix_only() {
        let mut c = cam(64);
        c.set_word_length(1024).unwrap();
        let mut row = HashBits::zeros(1024);
        for i in 500..700 {
            row.set(i, true);
        }
        c.write_row(3, &row).unwrap();

        c.set_word_length(512).unwrap();
        let hits = c.search(&HashBits::zeros(512)).unwrap();
        // only bits 500..512 fall inside the active word
        assert_eq!(hits, vec![RowMatch { row: 3, distance: 12 }]);
    }

    #[test]
    fn shrinking_word_length_keeps_bits() {
        let mut c = cam(64);
        c.set_word_length(1024).unwrap();
        let row = HashBits::ones(1024);
        c.write_row(0, &row).unwrap();
        c.set_word_length(256).unwrap();
        assert_eq!(c.search(&HashBits::zeros(256)).unwrap()[0].distance, 256);
        c.set_word_length(1024).unwrap();
        assert_eq!(c.stored_row(0).unwrap(), row);
        assert_eq!(c.search(&HashBits::zeros(1024)).unwrap()[0].distance, 1024);
    }

    #[test]
    fn one_event_per_search() {
        let mut c = cam(128);
        for r in 0..100 {
            c.write_row(r, &HashBits::zeros(256)).unwrap();
        }
        c.take_events();
        c.search(&HashBits::ones(256)).unwrap();
        assert_eq!(
            c.events(),
            &[CamEvent::Search { word_bits: 256, valid_rows: 100, cycles: DEFAULT_SENSE_WINDOW_CYCLES }]
        );
    }

    #[test]
    fn invalid_rows_are_skipped() {
        let mut c = cam(64);
        c.write_row(2, &HashBits::zeros(256)).unwrap();
        c.invalidate_all();
        assert!(c.peek(&HashBits::zeros(256)).unwrap().is_empty());
    }

    #[test]
    fn bucketed_distances() {
        let cfg = CamConfig::new(64).unwrap().with_distance_bucket(Some(16)).unwrap();
        let mut c = CamState::new(cfg);
        let mut row = HashBits::zeros(256);
        for i in 0..37 {
            row.set(i, true);
        }
        c.write_row(0, &row).unwrap();
        c.write_row(1, &HashBits::ones(256)).unwrap();
        let hits = c.search(&HashBits::zeros(256)).unwrap();
        assert_eq!(hits[0].distance, 40);
        assert_eq!(hits[1].distance, 256);
    }

    fn arb_hash(k: usize) -> impl Strategy<Value = HashBits> {
        proptest::collection::vec(any::<u64>(), k / 64).prop_map(move |w| HashBits::from_words(w, k))
    }

    proptest! {
        #[test]
        fn search_equals_hamming_on_prefix(
            rows in proptest::collection::vec(arb_hash(1024), 1..64),
            key in arb_hash(1024),
            word in prop::sample::select(ALLOWED_WORD_BITS.to_vec()),
        ) {
            let mut c = cam(64);
            c.set_word_length(1024).unwrap();
            for (i, r) in rows.iter().enumerate() {
                c.write_row(i, r).unwrap();
            }
            c.set_word_length(word).unwrap();
            let key = key.prefix(word).unwrap();
            let hits = c.search(&key).unwrap();
            prop_assert_eq!(hits.len(), rows.len());
            for (hit, r) in hits.iter().zip(&rows) {
                let expected = hamming_distance(&key, &r.prefix(word).unwrap()).unwrap();
                prop_assert_eq!(hit.distance, expected);
            }
            prop_assert_eq!(c.peek(&key).unwrap(), hits);
        }
    }
}
