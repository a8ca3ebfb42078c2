use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{verify, verify_csv_with, verify_ofx_with, VerifyStatus};
use crate::domain::ExportFormat;

/// Interior offsets sampled at random on top of the record boundaries.
pub const SWEEP_RANDOM_OFFSETS: usize = 100;

/// Offsets just past each complete record in a well-formed export.
pub fn record_boundaries(data: &[u8], format: ExportFormat) -> Vec<usize> {
    let mut ends = Vec::new();
    match format {
        ExportFormat::Csv => verify_csv_with(data, |_, end| ends.push(end)),
        _ => verify_ofx_with(data, |_, end| ends.push(end)),
    };
    ends
}

/// Verifies prefixes of `data` cut at every record boundary, at offset 0 and
/// at `SWEEP_RANDOM_OFFSETS` seeded interior offsets. The full length is
/// never included. Returns `(offset, status)` sorted by offset.
pub fn truncation_sweep(data: &[u8], format: ExportFormat, seed: u64) -> Vec<(usize, VerifyStatus)> {
    let mut offsets = record_boundaries(data, format);
    offsets.push(0);
    if data.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        offsets.extend((0..SWEEP_RANDOM_OFFSETS).map(|_| rng.gen_range(1..data.len())));
    }
    offsets.retain(|&k| k < data.len());
    offsets.sort_unstable();
    offsets.dedup();
    offsets.into_iter().map(|k| (k, verify(&data[..k], format).status)).collect()
}
