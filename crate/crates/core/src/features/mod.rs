//! FBank and wavelet-scalogram front-ends.

mod audio;
mod cache;
mod channel;
mod deltas;
mod extract;
mod filterbank;
mod map;
mod stft;

pub use audio::Audio;
pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use channel::{channel_transform, inverse_channel_transform, ChannelMode};
pub use deltas::{deltas, stack_deltas, DELTA_HALF_WIDTH};
pub use extract::{extract_fbank, extract_scalogram, FbankConfig, ScalogramConfig, LOG_FLOOR};
pub use filterbank::{hz_to_mel, mel_filterbank, mel_to_hz, wavelet_filterbank, FilterBank, FilterKind, WaveletLayout};
pub use map::{FeatureKind, FeatureMap};
pub use stft::{frame_count, hamming, next_pow2, stft, Spectrogram};
