use candle_core::{Tensor, D};
use rand::Rng;

use crate::params::ParamStore;
use crate::NnError;

/// `y = x Wᵀ + b` over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize, bias: bool, rng: &mut impl Rng) -> Result<Self, NnError> {
        let bound = 1.0 / (inp as f64).sqrt();
        let weight = store.uniform(&format!("{name}.weight"), &[out, inp], bound, rng)?;
        let bias = if bias { Some(store.uniform(&format!("{name}.bias"), &[out], bound, rng)?) } else { None };
        Ok(Self { weight, bias })
    }

    pub fn load(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        Ok(Self {
            weight: store.get(&format!("{name}.weight"))?,
            bias: store.get(&format!("{name}.bias")).ok(),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

/// Temporal convolution over `[batch, channels, frames]`, odd kernel, same-length output.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize, kernel: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        if kernel % 2 == 0 {
            return Err(NnError::Config(format!("{name}: kernel size must be odd, got {kernel}")));
        }
        let bound = 1.0 / ((inp * kernel) as f64).sqrt();
        Ok(Self {
            weight: store.uniform(&format!("{name}.weight"), &[out, inp, kernel], bound, rng)?,
            bias: store.uniform(&format!("{name}.bias"), &[out], bound, rng)?,
        })
    }

    pub fn load(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        Ok(Self { weight: store.get(&format!("{name}.weight"))?, bias: store.get(&format!("{name}.bias"))? })
    }

    /// Built from shifted windows and a matmul: the backend's native conv1d
    /// backward pass returns wrong weight gradients.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (out, inp, k) = self.weight.dims3()?;
        let (b, c, l) = x.dims3()?;
        if c != inp {
            return Err(NnError::Config(format!("conv expects {inp} input channels, got {c}")));
        }
        let pad = k / 2;
        let xp = if pad > 0 { x.pad_with_zeros(2, pad, pad)? } else { x.clone() };
        let windows = (0..k).map(|j| xp.narrow(2, j, l)).collect::<Result<Vec<_>, _>>()?;
        let cols = Tensor::stack(&windows, 2)?.reshape((b, c * k, l))?;
        let y = self.weight.reshape((out, c * k))?.broadcast_matmul(&cols)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1))?)?)
    }
}

/// Layer normalization over the last axis, built from differentiable primitives.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub shift: Tensor,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self, NnError> {
        Ok(Self {
            gain: store.constant(&format!("{name}.gain"), &[dim], 1.0)?,
            shift: store.constant(&format!("{name}.shift"), &[dim], 0.0)?,
        })
    }

    pub fn load(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        Ok(Self { gain: store.get(&format!("{name}.gain"))?, shift: store.get(&format!("{name}.shift"))? })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gain)?.broadcast_add(&self.shift)?)
    }
}

/// Halves the frame axis of `[batch, channels, frames]` by averaging adjacent pairs.
pub fn avg_pool2(x: &Tensor) -> Result<Tensor, NnError> {
    let (b, c, l) = x.dims3()?;
    if l % 2 != 0 {
        return Err(NnError::Config(format!("cannot pool odd length {l}")));
    }
    Ok(x.reshape((b, c, l / 2, 2))?.mean(3)?)
}

/// Doubles the frame axis by repeating every frame.
pub fn repeat2(x: &Tensor) -> Result<Tensor, NnError> {
    let (b, c, l) = x.dims3()?;
    Ok(x.unsqueeze(3)?.broadcast_as((b, c, l, 2))?.contiguous()?.reshape((b, c, 2 * l))?)
}

pub fn gelu(x: &Tensor) -> Result<Tensor, NnError> {
    Ok(x.gelu_erf()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pool_and_repeat_shapes() {
        let x = Tensor::arange(0f32, 8.0, &Device::Cpu).unwrap().reshape((1, 1, 8)).unwrap();
        let p = avg_pool2(&x).unwrap();
        assert_eq!(p.flatten_all().unwrap().to_vec1::<f32>().unwrap(), [0.5, 2.5, 4.5, 6.5]);
        let r = repeat2(&p).unwrap();
        assert_eq!(r.flatten_all().unwrap().to_vec1::<f32>().unwrap(), [0.5, 0.5, 2.5, 2.5, 4.5, 4.5, 6.5, 6.5]);
    }

    #[test]
    fn layer_norm_moments() {
        let mut store = ParamStore::new(DType::F64);
        let ln = LayerNorm::new(&mut store, "ln", 6).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 4.0, 5.0, 9.0]], &Device::Cpu).unwrap();
        let y = ln.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mean: f64 = y.iter().sum::<f64>() / 6.0;
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn conv_matches_direct_sum_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new(DType::F64);
        let c = Conv1d::new(&mut store, "c", 2, 3, 3, &mut rng).unwrap();
        let xs: Vec<f64> = (0..2 * 2 * 5).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let x = Tensor::from_vec(xs.clone(), (2, 2, 5), &Device::Cpu).unwrap();
        let w = c.weight.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let bias = c.bias.to_vec1::<f64>().unwrap();
        let direct = |w: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; 2 * 3 * 5];
            for b in 0..2 {
                for o in 0..3 {
                    for t in 0..5 {
                        let mut acc = bias[o];
                        for ci in 0..2 {
                            for j in 0..3 {
                                let src = t as isize + j as isize - 1;
                                if (0..5).contains(&src) {
                                    acc += w[(o * 2 + ci) * 3 + j] * xs[(b * 2 + ci) * 5 + src as usize];
                                }
                            }
                        }
                        y[(b * 3 + o) * 5 + t] = acc;
                    }
                }
            }
            y
        };
        let y = c.forward(&x).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in y.iter().zip(direct(&w)) {
            assert!((a - b).abs() < 1e-12);
        }
        let loss = |w: &[f64]| direct(w).iter().map(|v| v * v).sum::<f64>();
        let g = c.forward(&x).unwrap().sqr().unwrap().sum_all().unwrap().backward().unwrap();
        let gw = g.get(&c.weight).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for i in 0..w.len() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (loss(&up) - loss(&dn)) / 2e-6;
            assert!((fd - gw[i]).abs() <= 1e-6 * fd.abs().max(1.0), "weight {i}: {fd} vs {}", gw[i]);
        }
    }

    #[test]
    fn conv_keeps_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new(DType::F32);
        let c = Conv1d::new(&mut store, "c", 3, 5, 3, &mut rng).unwrap();
        let x = Tensor::zeros((2, 3, 7), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(c.forward(&x).unwrap().dims(), &[2, 5, 7]);
        assert!(Conv1d::new(&mut store, "d", 3, 5, 4, &mut rng).is_err());
    }
}
