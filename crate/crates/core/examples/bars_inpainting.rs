//! Trains on the 8x8 bars images, then completes the top half of held-out
//! images. Each top half admits exactly two clean completions; the
//! completions should split between them.

use aiqn::cli::Bars;
use aiqn::network::{AiqnModel, ModelSpec};
use aiqn::numerics::Rng;
use aiqn::sampling::{inpaint, nearest_mode, InpaintRequest};
use aiqn::training::{train, TrainConfig};

fn render(img: &[f64]) -> String {
    img.chunks(Bars::SIDE)
        .map(|r| r.iter().map(|&v| if v > 0.5 { '#' } else { '.' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() -> aiqn::Result<()> {
    let data = Bars::dataset(5_000, &mut Rng::new(21));
    let spec = ModelSpec::new(Bars::N).with_hidden(vec![128, 128]);
    let model = AiqnModel::new(spec, &mut Rng::new(22))?;
    let cfg = TrainConfig {
        steps: 4_000,
        learning_rate: 1e-3,
        polyak: 0.999,
        batch_size: 32,
        seed: 23,
        ..Default::default()
    };
    let (ckpt, _) = train(model, &data, None, &cfg)?;
    let model = ckpt.model()?;

    let mut rng = Rng::new(24);
    for _ in 0..2 {
        let img = Bars::draw(&mut rng);
        let top = Bars::top_column(&img);
        let modes = Bars::modes(top);
        let out = inpaint(&model, &InpaintRequest::new(img[..Bars::PREFIX].to_vec(), 50, rng.next_u64()))?;
        let mut counts = [0usize; 2];
        for r in 0..out.rows() {
            counts[nearest_mode(out.row(r), &modes)?] += 1;
        }
        println!("top bar in column {top}; completions per mode: {counts:?}");
        println!("{}\n", render(out.row(0)));
    }
    Ok(())
}
