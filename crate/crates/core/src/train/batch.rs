use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Instance indices sorted by ascending size (index breaks ties) and cut
/// into contiguous batches of `batch_size`; the last may be short.
///
/// With `shuffle_seed`, instances of equal size are shuffled among
/// themselves before slicing. The size order is kept.
pub fn make_batches(sizes: &[usize], batch_size: usize, shuffle_seed: Option<u64>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (sizes[i], i));
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for bucket in order.chunk_by_mut(|&a, &b| sizes[a] == sizes[b]) {
            bucket.shuffle(&mut rng);
        }
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
