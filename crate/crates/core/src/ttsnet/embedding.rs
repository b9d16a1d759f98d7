use ndarray::Array1;
use rand::Rng;

use super::layers::{swish, Linear};
use crate::error::{Error, Result};

/// Sinusoidal encoding of a diffusion step:
/// `e[2k] = sin(t / 10000^(2k/dim))`, `e[2k+1] = cos(t / 10000^(2k/dim))`.
pub fn step_embedding(t: usize, dim: usize) -> Result<Array1<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "step embedding dim must be even and > 0, got {dim}"
        )));
    }
    let t = t as f64;
    let mut e = Array1::zeros(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf(-((2 * k) as f64) / dim as f64);
        e[2 * k] = (t * freq).sin();
        e[2 * k + 1] = (t * freq).cos();
    }
    Ok(e)
}

/// Two affine layers, each followed by swish.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEncoder {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl StepEncoder {
    pub fn zeros(embed_dim: usize, hidden: usize, output: usize) -> Self {
        Self {
            fc1: Linear::zeros(embed_dim, hidden),
            fc2: Linear::zeros(hidden, output),
        }
    }

    pub fn random<R: Rng + ?Sized>(
        embed_dim: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            fc1: Linear::random(embed_dim, hidden, rng),
            fc2: Linear::random(hidden, output, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.fc2.output_dim()
    }

    pub fn forward(&self, e: &Array1<f64>) -> Result<Array1<f64>> {
        let h = self.fc1.forward_vec(e)?.mapv(swish);
        Ok(self.fc2.forward_vec(&h)?.mapv(swish))
    }

    pub fn num_params(&self) -> usize {
        self.fc1.num_params() + self.fc2.num_params()
    }
}

/// [`StepEncoder::forward`] as a free function.
pub fn step_encode(e: &Array1<f64>, encoder: &StepEncoder) -> Result<Array1<f64>> {
    encoder.forward(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn first_pair_is_sin_cos_of_t() {
        for t in [1, 17, 400] {
            let e = step_embedding(t, 128).unwrap();
            assert_eq!(e[0], (t as f64).sin());
            assert_eq!(e[1], (t as f64).cos());
            assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        assert!(step_embedding(3, 127).is_err());
        assert!(step_embedding(3, 0).is_err());
    }

    #[test]
    fn step_encoder_edge_cases() {
        let mut rng = SeedStream::new(8).rng();
        let zero = StepEncoder::zeros(128, 32, 16);
        let e = step_embedding(5, 128).unwrap();
        assert!(zero.forward(&e).unwrap().iter().all(|&v| v == 0.0));

        let mut enc = StepEncoder::random(128, 32, 16, &mut rng);
        enc.fc1.bias.fill(0.3);
        enc.fc2.bias.fill(-0.2);
        let out = enc.forward(&Array1::zeros(128)).unwrap();
        let h = Array1::from_elem(32, swish(0.3));
        let expect = (enc.fc2.weight.dot(&h) + &enc.fc2.bias).mapv(swish);
        assert_eq!(out, expect);

        assert_eq!(enc.forward(&e).unwrap(), enc.forward(&e).unwrap());
        assert!(enc.forward(&Array1::zeros(64)).is_err());
    }
}
