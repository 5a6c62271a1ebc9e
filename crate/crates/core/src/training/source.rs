use crate::signal::RngStream;
use crate::transceiver::MessageId;

/// `count` i.i.d. uniform messages over `[0, m)`.
pub fn training_source(rng: &mut RngStream, count: usize, m: usize) -> Vec<MessageId> {
    (0..count).map(|_| rng.index(m)).collect()
}
