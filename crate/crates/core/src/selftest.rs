//! Quick internal consistency checks, run by `mmvm selftest`.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::Percent;
use crate::model::Mask;
use crate::ocl::{contrastive_loss, masked_average_pool, ContrastiveBatch, FeatureMap, LossConfig, ObjectEmbedding};
use crate::render::render_prompts;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn emb(v: Vec<f64>, t: &str) -> ObjectEmbedding<f64> {
    ObjectEmbedding::new(v, "selftest", t)
}

fn loss_anchors() -> Check {
    let cfg = LossConfig::default();
    let mut worst = 0.0f64;
    for k in [1usize, 3, 7] {
        let b = ContrastiveBatch {
            anchor: emb(vec![1.0, 2.0], "q"),
            positive: emb(vec![2.0, 1.0], "q"),
            negatives: (0..k).map(|i| emb(vec![2.0, 1.0], &format!("n{i}"))).collect(),
        };
        let l = contrastive_loss(&b, &cfg).map(|o| o.loss).unwrap_or(f64::NAN);
        worst = worst.max((l - ((k + 1) as f64).ln()).abs());
    }
    check("loss-anchors", worst < 1e-10, format!("max |loss - log(K+1)| = {worst:.3e}"))
}

fn gradient_spot_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = LossConfig::with_temperature(0.5);
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let batch = ContrastiveBatch {
        anchor: emb(v(6), "q"),
        positive: emb(v(6), "q"),
        negatives: (0..3).map(|i| emb(v(6), &format!("n{i}"))).collect(),
    };
    let out = contrastive_loss(&batch, &cfg).expect("valid batch");
    let mut worst = 0.0f64;
    for i in 0..6 {
        let f = |d: f64| {
            let mut b = batch.clone();
            b.anchor.vector[i] += d;
            contrastive_loss(&b, &cfg).expect("valid batch").loss
        };
        let fd = (f(1e-5) - f(-1e-5)) / 2e-5;
        worst = worst.max((fd - out.grad_anchor[i]).abs() / fd.abs().max(out.grad_anchor[i].abs()).max(1e-8));
    }
    check("gradient", worst < 1e-4, format!("max relative error {worst:.3e}"))
}

fn pooling() -> Check {
    let fm = FeatureMap::<f64>::from_cells(&[vec![vec![1.0], vec![2.0]], vec![vec![3.0], vec![4.0]]]).expect("2x2 map");
    let top = masked_average_pool(&fm, &Mask::from_fn(2, 2, |_, y| y == 0)).ok();
    check("pooling", top == Some(vec![1.5]), format!("top-row mean {top:?}"))
}

fn rounding() -> Check {
    let a = Percent::from_ratio(644, 1510).to_string();
    let b = Percent::from_ratio(575, 1510).to_string();
    check("rounding", a == "42.65" && b == "38.08", format!("644/1510 -> {a}, 575/1510 -> {b}"))
}

fn empty_render() -> Check {
    let img = RgbImage::from_fn(17, 9, |x, y| Rgb([x as u8 * 13, y as u8 * 29, 7]));
    let out = render_prompts(&img, &[]);
    check("empty-render", out.as_ref() == Ok(&img), "render with no objects".to_string())
}

pub fn run_all() -> Vec<Check> {
    vec![loss_anchors(), gradient_spot_check(), pooling(), rounding(), empty_render()]
}
