//! Differentiable channel models for the supervised baseline. The noise and
//! fading gain of a forward call are constants of that realization; the
//! backward pass is the exact Jacobian-transpose of the sampled map.

use num_complex::Complex64;

use super::{awgn_transmit, rayleigh_realize};
use crate::error::{dim_err, Result};
use crate::ndcore::RealTensor;
use crate::signal::{RngStream, SymbolBlock};

/// Realization-specific data kept by [`DifferentiableChannel::transmit_diff`].
#[derive(Debug, Clone)]
pub struct ChannelCache {
    batch: usize,
    n: usize,
    gains: Option<Vec<Complex64>>,
}

pub trait DifferentiableChannel: Send + Sync {
    fn transmit_diff(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<(SymbolBlock, ChannelCache)>;

    /// Gradient w.r.t. the channel input, stacked (re, im) layout.
    fn backward(&self, cache: &ChannelCache, upstream: &RealTensor) -> Result<RealTensor>;
}

fn check_upstream(cache: &ChannelCache, upstream: &RealTensor) -> Result<()> {
    let expected = [cache.batch, 2 * cache.n];
    if upstream.shape() != expected {
        return Err(dim_err("channel backward", format!("{expected:?}"), format!("{:?}", upstream.shape())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentiableAwgn {
    pub noise_variance: f64,
}

impl DifferentiableChannel for DifferentiableAwgn {
    fn transmit_diff(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<(SymbolBlock, ChannelCache)> {
        let y = awgn_transmit(x, self.noise_variance, rng)?;
        Ok((
            y,
            ChannelCache {
                batch: x.batch(),
                n: x.n(),
                gains: None,
            },
        ))
    }

    fn backward(&self, cache: &ChannelCache, upstream: &RealTensor) -> Result<RealTensor> {
        check_upstream(cache, upstream)?;
        Ok(upstream.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentiableRayleigh {
    noise_variance: f64,
    pinned_gain: Option<Complex64>,
}

impl DifferentiableRayleigh {
    pub fn new(noise_variance: f64) -> Self {
        Self {
            noise_variance,
            pinned_gain: None,
        }
    }

    #[cfg(any(test, feature = "test-seams"))]
    pub fn with_pinned_gain(noise_variance: f64, gain: Complex64) -> Self {
        Self {
            noise_variance,
            pinned_gain: Some(gain),
        }
    }
}

impl DifferentiableChannel for DifferentiableRayleigh {
    fn transmit_diff(&self, x: &SymbolBlock, rng: &mut RngStream) -> Result<(SymbolBlock, ChannelCache)> {
        let (y, gains) = rayleigh_realize(x, self.noise_variance, self.pinned_gain, rng)?;
        Ok((
            y,
            ChannelCache {
                batch: x.batch(),
                n: x.n(),
                gains: Some(gains),
            },
        ))
    }

    /// Per symbol, the 2×2 block of `y = h·x` is `[[a, −b], [b, a]]` for
    /// `h = a + ib`; its transpose maps the upstream gradient back.
    fn backward(&self, cache: &ChannelCache, upstream: &RealTensor) -> Result<RealTensor> {
        check_upstream(cache, upstream)?;
        let gains = cache.gains.as_ref().expect("fading cache carries gains");
        let mut d = upstream.clone();
        for (i, h) in gains.iter().enumerate() {
            for pair in d.row_mut(i).chunks_exact_mut(2) {
                let (g_re, g_im) = (pair[0], pair[1]);
                pair[0] = h.re * g_re + h.im * g_im;
                pair[1] = -h.im * g_re + h.re * g_im;
            }
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{BlackBoxChannel, RayleighBlockFading};
    use crate::ndcore::{compare_gradients, finite_diff_vec, GradTolerance};
    use crate::signal::{complex_to_real, real_to_complex};

    fn random_block(rng: &mut RngStream, batch: usize, n: usize) -> SymbolBlock {
        let data = (0..batch * n)
            .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
            .collect();
        SymbolBlock::new(batch, n, data).unwrap()
    }

    #[test]
    fn awgn_backward_is_identity() {
        let mut rng = RngStream::new(1);
        let x = random_block(&mut rng, 4, 3);
        let ch = DifferentiableAwgn { noise_variance: 0.2 };
        let (_, cache) = ch.transmit_diff(&x, &mut rng).unwrap();
        let up = complex_to_real(&random_block(&mut rng, 4, 3));
        assert_eq!(ch.backward(&cache, &up).unwrap(), up);
        assert!(ch.backward(&cache, &RealTensor::zeros(&[4, 5])).is_err());
    }

    #[test]
    fn adapters_realize_the_same_channel_as_the_black_box() {
        let x = random_block(&mut RngStream::new(2), 6, 4);
        let (a, _) = DifferentiableRayleigh::new(0.1)
            .transmit_diff(&x, &mut RngStream::new(7))
            .unwrap();
        let b = RayleighBlockFading::new(0.1).transmit(&x, &mut RngStream::new(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rayleigh_backward_matches_finite_differences_through_pinned_seed() {
        let mut rng = RngStream::new(3);
        let ch = DifferentiableRayleigh::new(0.05);
        for trial in 0..10 {
            let x = random_block(&mut rng, 3, 2);
            let up = complex_to_real(&random_block(&mut rng, 3, 2));
            let seed = 1000 + trial;
            let (_, cache) = ch.transmit_diff(&x, &mut RngStream::new(seed)).unwrap();
            let analytic = ch.backward(&cache, &up).unwrap();
            let x_flat = complex_to_real(&x);
            let f = |v: &[f64]| -> Result<f64> {
                let xs = real_to_complex(&RealTensor::new(x_flat.shape().to_vec(), v.to_vec())?)?;
                let (y, _) = ch.transmit_diff(&xs, &mut RngStream::new(seed))?;
                Ok(complex_to_real(&y).data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
            };
            let numeric = finite_diff_vec(f, x_flat.data(), 1e-6).unwrap();
            let tol = GradTolerance::with_rounding_floor(f(x_flat.data()).unwrap(), 1e-6);
            let report = compare_gradients(analytic.data(), &numeric, tol);
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn pinned_gain_scales_gradient() {
        let ch = DifferentiableRayleigh::with_pinned_gain(0.0, Complex64::new(0.0, 2.0));
        let x = SymbolBlock::new(1, 1, vec![Complex64::new(1.0, 0.0)]).unwrap();
        let (y, cache) = ch.transmit_diff(&x, &mut RngStream::new(0)).unwrap();
        assert_eq!(y.data()[0], Complex64::new(0.0, 2.0));
        let d = ch.backward(&cache, &RealTensor::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        // conj(h)·1 = −2i
        assert_eq!(d.data(), &[0.0, -2.0]);
    }
}
