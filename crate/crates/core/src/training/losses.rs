//! The four StarGAN-style loss terms. Each takes `(B, T, 80)` spectrogram
//! batches and `(B, 256)` embedding batches and returns the batch mean of
//! the per-item loss as a scalar tensor.

use candle_core::Tensor;

use crate::discriminator::Critic;
use crate::error::Result;
use crate::generator::Converter;

fn per_item(x: &Tensor) -> Result<Tensor> {
    let b = x.dim(0)?;
    Ok(x.reshape((b, ()))?.sum(1)?)
}

/// `|| G(x, s_src, s_src) - x ||_2`.
pub fn loss_identity(g: &dyn Converter, x_src: &Tensor, s_src: &Tensor) -> Result<Tensor> {
    let y = g.convert(x_src, s_src, s_src)?;
    identity_from_output(&y, x_src)
}

pub(crate) fn identity_from_output(y: &Tensor, x: &Tensor) -> Result<Tensor> {
    let sq = per_item(&(y - x)?.sqr()?)?;
    Ok(sq.sqrt()?.mean_all()?)
}

/// `( || x - G(G(x, s_src, s_trg), s_trg, s_src) ||_1 )^2`.
pub fn loss_cycle(g: &dyn Converter, x_src: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
    let fake = g.convert(x_src, s_src, s_trg)?;
    cycle_from_fake(g, &fake, x_src, s_src, s_trg)
}

pub(crate) fn cycle_from_fake(
    g: &dyn Converter,
    fake: &Tensor,
    x_src: &Tensor,
    s_src: &Tensor,
    s_trg: &Tensor,
) -> Result<Tensor> {
    let back = g.convert(fake, s_trg, s_src)?;
    let l1 = per_item(&(x_src - back)?.abs()?)?;
    Ok(l1.sqr()?.mean_all()?)
}

/// `(D(x_conv, s_src, s_trg) - a)^2`.
pub fn loss_g_adv(d: &dyn Critic, x_conv: &Tensor, s_src: &Tensor, s_trg: &Tensor, a: f64) -> Result<Tensor> {
    let score = d.score(x_conv, s_src, s_trg)?;
    Ok((score - a)?.sqr()?.mean_all()?)
}

/// `(D(x_conv, s_src, s_trg) - b)^2 + (D(x_real, s_trg, s_src) - a)^2`.
/// The real term uses the swapped embedding order.
pub fn loss_d_adv(
    d: &dyn Critic,
    x_conv: &Tensor,
    x_real: &Tensor,
    s_src: &Tensor,
    s_trg: &Tensor,
    a: f64,
    b: f64,
) -> Result<Tensor> {
    let fake = d.score(x_conv, s_src, s_trg)?;
    let real = d.score(x_real, s_trg, s_src)?;
    let lf = (fake - b)?.sqr()?.mean_all()?;
    let lr = (real - a)?.sqr()?.mean_all()?;
    Ok((lf + lr)?)
}

/// `lambda_id * L_id + lambda_cyc * L_cyc + L_G-adv`.
pub fn total_generator_loss(
    l_id: &Tensor,
    l_cyc: &Tensor,
    l_g_adv: &Tensor,
    lambda_id: f64,
    lambda_cyc: f64,
) -> Result<Tensor> {
    Ok(((l_id * lambda_id)? + (l_cyc * lambda_cyc)?)?.add(l_g_adv)?)
}

/// Scalar form of [`total_generator_loss`].
pub fn total_generator_value(l_id: f64, l_cyc: f64, l_g_adv: f64, lambda_id: f64, lambda_cyc: f64) -> f64 {
    lambda_id * l_id + lambda_cyc * l_cyc + l_g_adv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::IdentityConverter;
    use candle_core::{DType, Device, Var};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Adds a constant to its input.
    struct Shift(f64);

    impl Converter for Shift {
        fn convert(&self, x: &Tensor, _: &Tensor, _: &Tensor) -> Result<Tensor> {
            Ok((x + self.0)?)
        }
    }

    /// Scores every item with the same value.
    struct Fixed(f64);

    impl Critic for Fixed {
        fn score(&self, x: &Tensor, _: &Tensor, _: &Tensor) -> Result<Tensor> {
            Ok(Tensor::full(self.0, x.dim(0)?, x.device())?.to_dtype(x.dtype())?)
        }
    }

    /// Scores real inputs (mean above zero) and fakes differently.
    struct Split {
        fake: f64,
        real: f64,
    }

    impl Critic for Split {
        fn score(&self, x: &Tensor, _: &Tensor, _: &Tensor) -> Result<Tensor> {
            let m = x.mean_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            let v = if m > 0.0 { self.real } else { self.fake };
            Ok(Tensor::full(v, x.dim(0)?, x.device())?)
        }
    }

    fn v(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    fn batch(b: usize, t: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..b * t * 80).map(|_| rng.random_range(-10.0..0.0)).collect();
        let s: Vec<f64> = (0..b * 256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dev = Device::Cpu;
        (
            Tensor::from_vec(x, (b, t, 80), &dev).unwrap(),
            Tensor::from_vec(s.clone(), (b, 256), &dev).unwrap(),
            Tensor::from_vec(s.iter().rev().copied().collect::<Vec<_>>(), (b, 256), &dev).unwrap(),
        )
    }

    #[test]
    fn identity_generator_gives_zero_id_and_cycle() {
        let (x, s, t) = batch(2, 8, 0);
        assert_eq!(v(&loss_identity(&IdentityConverter, &x, &s).unwrap()), 0.0);
        assert_eq!(v(&loss_cycle(&IdentityConverter, &x, &s, &t).unwrap()), 0.0);
    }

    #[test]
    fn shift_by_one_gives_sqrt_n() {
        let (x, s, _) = batch(1, 4, 1);
        let n = (4 * 80) as f64;
        assert!((v(&loss_identity(&Shift(1.0), &x, &s).unwrap()) - n.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn cycle_is_squared_l1() {
        // Cycle output off by 0.5 in each of 4 entries: (4 * 0.5)^2 = 4.
        let x = Tensor::zeros((1, 1, 4), DType::F64, &Device::Cpu).unwrap();
        let s = Tensor::zeros((1, 256), DType::F64, &Device::Cpu).unwrap();
        assert!((v(&loss_cycle(&Shift(0.25), &x, &s, &s).unwrap()) - 4.0).abs() < 1e-12);
        let (x, s, t) = batch(1, 4, 2);
        let l1 = 2.0 * 0.3 * (4 * 80) as f64;
        assert!((v(&loss_cycle(&Shift(0.3), &x, &s, &t).unwrap()) - l1 * l1).abs() < 1e-6);
    }

    #[test]
    fn adversarial_values() {
        let (x, s, t) = batch(3, 4, 3);
        assert_eq!(v(&loss_g_adv(&Fixed(1.0), &x, &s, &t, 1.0).unwrap()), 0.0);
        assert_eq!(v(&loss_g_adv(&Fixed(0.0), &x, &s, &t, 1.0).unwrap()), 1.0);
        let real = (x.abs().unwrap() + 1.0).unwrap();
        let fake = x.clone();
        let optimum = Split { fake: 0.0, real: 1.0 };
        assert_eq!(v(&loss_d_adv(&optimum, &fake, &real, &s, &t, 1.0, 0.0).unwrap()), 0.0);
        let worst = Split { fake: 1.0, real: 0.0 };
        assert_eq!(v(&loss_d_adv(&worst, &fake, &real, &s, &t, 1.0, 0.0).unwrap()), 2.0);
    }

    #[test]
    fn real_term_swaps_the_embedding_order() {
        struct Order;
        impl Critic for Order {
            fn score(&self, x: &Tensor, s1: &Tensor, _: &Tensor) -> Result<Tensor> {
                let first = s1.narrow(1, 0, 1)?.squeeze(1)?;
                Ok(first.broadcast_mul(&Tensor::ones(x.dim(0)?, x.dtype(), x.device())?)?)
            }
        }
        let x = Tensor::zeros((1, 2, 80), DType::F64, &Device::Cpu).unwrap();
        let s_src = Tensor::full(0.0f64, (1, 256), &Device::Cpu).unwrap();
        let s_trg = Tensor::full(1.0f64, (1, 256), &Device::Cpu).unwrap();
        // Fake is scored with s_src first (0 -> (0-b)^2 = 0), real with s_trg
        // first (1 -> (1-a)^2 = 0).
        assert_eq!(v(&loss_d_adv(&Order, &x, &x, &s_src, &s_trg, 1.0, 0.0).unwrap()), 0.0);
    }

    #[test]
    fn generator_adversarial_gradient_points_toward_a() {
        // Score is the mean of the input; G's loss should pull it toward a.
        struct Mean;
        impl Critic for Mean {
            fn score(&self, x: &Tensor, _: &Tensor, _: &Tensor) -> Result<Tensor> {
                let b = x.dim(0)?;
                Ok(x.reshape((b, ()))?.mean(1)?)
            }
        }
        let x = Var::new(&[[[0.2f64; 80]; 2]], &Device::Cpu).unwrap();
        let s = Tensor::zeros((1, 256), DType::F64, &Device::Cpu).unwrap();
        let loss = loss_g_adv(&Mean, x.as_tensor(), &s, &s, 1.0).unwrap();
        let g = loss.backward().unwrap();
        let grad = g.get(x.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        // Descending the gradient increases the score toward a = 1.
        assert!(grad.iter().all(|&d| d < 0.0));
        let h = 1e-6;
        let f = |m: f64| (m - 1.0f64).powi(2);
        let fd = (f(0.2 + h) - f(0.2 - h)) / (2.0 * h);
        assert!(fd < 0.0);
        assert!((grad[0] * 160.0 - fd).abs() < 1e-6);
    }

    #[test]
    fn total_combination() {
        let t = |x: f64| Tensor::new(x, &Device::Cpu).unwrap();
        let l = total_generator_loss(&t(0.1), &t(0.2), &t(0.3), 5.0, 10.0).unwrap();
        assert!((v(&l) - 2.8).abs() < 1e-12);
        assert_eq!(v(&total_generator_loss(&t(0.0), &t(0.0), &t(0.0), 5.0, 10.0).unwrap()), 0.0);
        assert_eq!(v(&total_generator_loss(&t(7.0), &t(0.0), &t(0.0), 0.0, 10.0).unwrap()), 0.0);
    }

    proptest! {
        #[test]
        fn d_loss_symmetry(fake in -5.0f64..5.0, real in -5.0f64..5.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let x = Tensor::zeros((1, 1, 80), DType::F64, &Device::Cpu).unwrap();
            let r = (&x + 1.0).unwrap();
            let s = Tensor::zeros((1, 256), DType::F64, &Device::Cpu).unwrap();
            let l1 = v(&loss_d_adv(&Split { fake, real }, &x, &r, &s, &s, a, b).unwrap());
            let l2 = v(&loss_d_adv(&Split { fake: real, real: fake }, &x, &r, &s, &s, b, a).unwrap());
            prop_assert!((l1 - l2).abs() < 1e-9);
            prop_assert!(l1 >= 0.0);
        }

        #[test]
        fn cycle_equals_square_of_l1(seed in 0u64..1000, shift in -1.0f64..1.0) {
            let (x, s, t) = batch(1, 2, seed);
            let y = (&x + 2.0 * shift).unwrap();
            let l1 = v(&(x.clone() - y).unwrap().abs().unwrap().sum_all().unwrap());
            let got = v(&loss_cycle(&Shift(shift), &x, &s, &t).unwrap());
            prop_assert!((got - l1 * l1).abs() <= 1e-9 * (1.0 + l1 * l1));
        }

        #[test]
        fn total_matches_weighted_sum(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0, li in 0.0f64..10.0, lc in 0.0f64..20.0) {
            let t = |x: f64| Tensor::new(x, &Device::Cpu).unwrap();
            let l = v(&total_generator_loss(&t(a), &t(b), &t(c), li, lc).unwrap());
            prop_assert_eq!(l, total_generator_value(a, b, c, li, lc));
            prop_assert!(l >= 0.0);
        }
    }
}
