//! Tensor files, PGM images and IDX ingestion, as used by the command line.

use aiqn::cli::{parse_idx, pgm_bytes, Bars, TensorFile};
use aiqn::numerics::Rng;

fn main() -> aiqn::Result<()> {
    let images = Bars::dataset(3, &mut Rng::new(51));
    let file = TensorFile::new(images).with_meta("height", 8).with_meta("width", 8).with_meta("seed", 51);
    let bytes = file.to_bytes();
    let back = TensorFile::from_bytes(&bytes)?;
    println!("tensor file: {} bytes, shape {:?}, image size {:?}", bytes.len(), back.tensor.shape(), back.image_size());

    let pgm = pgm_bytes(back.tensor.row(0), 8, 8)?;
    let header_end = pgm.len() - 64;
    println!("pgm header: {:?}", String::from_utf8_lossy(&pgm[..header_end]));

    // Two 2x3 unsigned-byte images in IDX layout.
    let mut idx = vec![0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
    idx.extend((0..12u8).map(|v| v * 20));
    let (t, item) = parse_idx(&idx)?;
    println!("idx: {} items of shape {item:?}, first row {:?}", t.rows(), t.row(0));
    Ok(())
}
