use crate::error::{Error, Result};
use crate::losses::check_unit_rows;
use crate::prior::sample_prior;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fixed-capacity FIFO ring buffer of unit-norm key vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyQueue {
    keys: Tensor,
    /// Slot that the next enqueued key overwrites (the oldest entry).
    cursor: usize,
}

impl KeyQueue {
    /// A full queue of `capacity` uniform-sphere keys.
    pub fn init(capacity: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::contract("queue capacity must be positive"));
        }
        Ok(Self {
            keys: sample_prior(dim, capacity, rng)?,
            cursor: 0,
        })
    }

    pub fn from_parts(keys: Tensor, cursor: usize) -> Result<Self> {
        check_unit_rows(&keys, "queue keys")?;
        if cursor >= keys.rows() {
            return Err(Error::contract(format!(
                "queue cursor {cursor} out of range for {} keys",
                keys.rows()
            )));
        }
        Ok(Self { keys, cursor })
    }

    pub fn capacity(&self) -> usize {
        self.keys.rows()
    }

    pub fn dim(&self) -> usize {
        self.keys.cols()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Ring storage; row order is not age order.
    pub fn keys(&self) -> &Tensor {
        &self.keys
    }

    /// Keys from oldest to newest.
    pub fn ordered(&self) -> Tensor {
        let k = self.capacity();
        let idx: Vec<usize> = (0..k).map(|i| (self.cursor + i) % k).collect();
        self.keys.select_rows(&idx).expect("indices in range")
    }

    /// Replaces the `B` oldest keys with the rows of `batch`.
    pub fn enqueue(&mut self, batch: &Tensor) -> Result<()> {
        if batch.rank() != 2 || batch.cols() != self.dim() {
            return Err(Error::shape(format!(
                "keys of shape {:?} do not fit a queue of width {}",
                batch.shape(),
                self.dim()
            )));
        }
        if batch.rows() > self.capacity() {
            return Err(Error::contract(format!(
                "cannot enqueue {} keys into a queue of {}",
                batch.rows(),
                self.capacity()
            )));
        }
        check_unit_rows(batch, "enqueued keys")?;
        let k = self.capacity();
        for i in 0..batch.rows() {
            self.keys.row_mut(self.cursor).copy_from_slice(batch.row(i));
            self.cursor = (self.cursor + 1) % k;
        }
        Ok(())
    }
}
