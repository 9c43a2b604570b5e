use rand::seq::index::sample;

use super::Tensor;
use crate::rng::substream;
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub epsilon: f64,
    /// Coordinates checked per parameter tensor; larger tensors are subsampled.
    pub max_coords_per_param: usize,
    /// Denominator floor of the relative error, so that coordinates whose
    /// true gradient is ~0 are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_coords_per_param: 64,
            floor: 1e-6,
            seed: 0,
        }
    }
}

/// Maximum relative error between `analytic` gradients and central
/// differences of `loss` around `params`.
///
/// The relative error of one coordinate is `|a − n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(
    mut loss: F,
    params: &[Tensor],
    analytic: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    assert!(
        (1e-7..=1e-3).contains(&opts.epsilon),
        "finite-difference step must lie in [1e-7, 1e-3]"
    );
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = if p.len() <= opts.max_coords_per_param {
            (0..p.len()).collect()
        } else {
            let mut rng = substream(opts.seed, "gradcheck", pi as u64, 0);
            let mut picked = sample(&mut rng, p.len(), opts.max_coords_per_param).into_vec();
            picked.sort_unstable();
            picked
        };
        for c in coords {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + opts.epsilon;
            let plus = loss(&work)?;
            work[pi].data_mut()[c] = orig - opts.epsilon;
            let minus = loss(&work)?;
            work[pi].data_mut()[c] = orig;

            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let a = analytic[pi].data()[c];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn constant_loss_has_zero_error() {
        let params = vec![Tensor::vector(vec![1.0, 2.0])];
        let err = grad_check(
            |_| Ok(3.0),
            &params,
            &[Tensor::zeros(&[2])],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let params = vec![Tensor::vector(vec![1.0, 2.0])];
        let f = |p: &[Tensor]| Ok(p[0].data().iter().map(|v| v * v).sum::<f64>());
        let good = grad_check(
            f,
            &params,
            &[Tensor::vector(vec![2.0, 4.0])],
            &GradCheckOptions::default(),
        )
        .unwrap();
        let bad = grad_check(
            f,
            &params,
            &[Tensor::vector(vec![2.0, 5.0])],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(good < 1e-8);
        assert!(bad > 0.1);
    }

    #[test]
    fn tape_matches_finite_differences_on_composite() {
        let x = Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, 0.5, 0.2, -0.4]).unwrap();
        let w0 =
            Tensor::matrix(3, 3, vec![0.1, -0.2, 0.3, 0.05, 0.4, -0.1, -0.3, 0.2, 0.15]).unwrap();
        let eval = |w: &Tensor, grad: bool| -> (f64, Option<Tensor>) {
            let mut tape = Tape::new();
            let wv = tape.param(w.clone());
            let xv = tape.constant(x.clone());
            let z = tape.matmul_nt(xv, wv).unwrap();
            let s = tape.sigmoid(z);
            let ls = tape.log_softmax_rows(s, 0.5);
            let total = tape.sum(ls);
            let v = tape.scalar(total);
            let g = grad.then(|| tape.backward(total).unwrap().get(wv).unwrap().clone());
            (v, g)
        };
        let (_, g) = eval(&w0, true);
        let err = grad_check(
            |p| Ok(eval(&p[0], false).0),
            std::slice::from_ref(&w0),
            &[g.unwrap()],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
