use rand::Rng;
use rand_distr::StandardNormal;

use crate::{ChannelVector, C64};

/// Add circular complex Gaussian noise with `variance` per element.
pub fn add_noise_slice<R: Rng + ?Sized>(data: &mut [C64], variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    let sigma = (variance / 2.0).sqrt();
    for x in data {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *x += C64::new(sigma * re, sigma * im);
    }
}

pub fn add_noise<R: Rng + ?Sized>(v: &mut ChannelVector, variance: f64, rng: &mut R) {
    add_noise_slice(v.as_mut_slice(), variance, rng);
}
