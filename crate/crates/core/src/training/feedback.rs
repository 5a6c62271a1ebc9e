use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transceiver::LossVector;

/// What the receiver sends back to the transmitter during transmitter
/// training: per-example losses and the minibatch sequence number. Nothing
/// else crosses from the receiver side to the transmitter side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackMessage {
    pub sequence: u64,
    pub losses: LossVector,
}

impl FeedbackMessage {
    /// Wire encoding. Losses are serialized in shortest round-trip form, so
    /// decoding recovers them bit-exactly.
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("feedback always serializes")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let msg: Self = serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("feedback: {e}")))?;
        if msg.losses.as_slice().iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("feedback losses"));
        }
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn encoding_is_lossless(seq in any::<u64>(), losses in prop::collection::vec(0.0f64..50.0, 0..64)) {
            let msg = FeedbackMessage { sequence: seq, losses: LossVector(losses) };
            prop_assert_eq!(FeedbackMessage::decode(&msg.encode()).unwrap(), msg);
        }
    }

    #[test]
    fn rejects_extra_fields() {
        let bad = br#"{"sequence":1,"losses":[0.5],"gradient":[1.0]}"#;
        assert!(FeedbackMessage::decode(bad).is_err());
    }
}
