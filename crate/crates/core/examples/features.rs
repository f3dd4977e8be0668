//! FBank and scalogram extraction for one synthetic stereo clip, plus the
//! SCNF1 cache round trip.

use scenegan::dataset::{synth_clip, MiniConfig};
use scenegan::features::{extract_fbank, extract_scalogram, read_cache, write_cache, ChannelMode, FbankConfig, ScalogramConfig};

fn main() -> scenegan::Result<()> {
    let mini = MiniConfig { sample_rate: 16_000, duration_s: 10.0, ..MiniConfig::default() };
    let clip = synth_clip(3, 1, 0, &mini);

    let fbank = FbankConfig { sample_rate: 16_000, deltas: true, ..FbankConfig::default() };
    let fb = extract_fbank(&clip, &fbank)?;
    println!("fbank (frames, channels, filters) = {:?}", fb.shape());

    let scal = ScalogramConfig { sample_rate: 16_000, channel_mode: ChannelMode::AveDiff, ..ScalogramConfig::default() };
    let sc = extract_scalogram(&clip, &scal)?;
    println!("scalogram {:?}, first frame, lowest filters: {:?}", sc.shape(), &sc.data[..4]);

    let dir = std::env::temp_dir().join("scenegan-features");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("clip.scnf");
    write_cache(&sc, &path)?;
    assert_eq!(read_cache(&path)?, sc);
    println!("cached at {}", path.display());
    Ok(())
}
