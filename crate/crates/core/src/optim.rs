use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Plain SGD: `p ← p − lr·∇p`, then the gradients are zeroed.
pub fn sgd_step<T: Real>(params: &mut [Tensor<T>], lr: T) -> Result<()> {
    if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
        return Err(Error::State(format!("parameter {i} has no gradient")));
    }
    for p in params.iter_mut() {
        let (data, grad) = p.parts_mut();
        let grad = grad.expect("checked above");
        for (v, g) in data.iter_mut().zip(grad.iter_mut()) {
            *v -= lr * *g;
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::new(vec![1], vec![v]).unwrap();
        t.set_grad(vec![g]).unwrap();
        t
    }

    #[test]
    fn single_step() {
        let mut ps = vec![param(1.0, 0.5)];
        sgd_step(&mut ps, 0.2).unwrap();
        assert!((ps[0].data()[0] - 0.9).abs() < 1e-15);
        assert_eq!(ps[0].grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut ps = vec![param(1.25, 3.0), param(-2.0, 1.0)];
        sgd_step(&mut ps, 0.0).unwrap();
        assert_eq!(ps[0].data()[0], 1.25);
        assert_eq!(ps[1].data()[0], -2.0);
    }

    #[test]
    fn quadratic_closed_form() {
        // d/dx (x-3)^2 = 2(x-3) = -6 at x = 0
        let mut ps = vec![param(0.0, 2.0 * (0.0 - 3.0))];
        sgd_step(&mut ps, 0.1).unwrap();
        assert!((ps[0].data()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut ps = vec![param(1.0, 0.5), Tensor::zeros(vec![2])];
        assert!(matches!(sgd_step(&mut ps, 0.1), Err(Error::State(_))));
        assert_eq!(ps[0].data()[0], 1.0);
    }
}
