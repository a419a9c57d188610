//! Central finite-difference verification of analytic gradients.
//!
//! The checker re-evaluates a loss closure at perturbed parameters and never
//! touches the tape internals, so it stays independent of the reverse-mode
//! path it validates.

use crate::autodiff::tensor::Tensor;

/// Central difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative error bound for a passing gradient.
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute floor below which differences are ignored.
pub const FD_ABS_FLOOR: f64 = 1e-7;

/// Largest relative error between `analytic` gradients and central finite
/// differences of `loss` over every element of `params`.
///
/// `loss` must be deterministic in its inputs (fix any sampling noise
/// outside the closure before calling).
pub fn max_relative_error(
    params: &[Tensor],
    analytic: &[Tensor],
    mut loss: impl FnMut(&[Tensor]) -> f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for ti in 0..params.len() {
        for i in 0..params[ti].numel() {
            let orig = params[ti].data()[i];
            let central = |h: f64, work: &mut Vec<Tensor>, loss: &mut dyn FnMut(&[Tensor]) -> f64| {
                work[ti].data_mut()[i] = orig + h;
                let up = loss(work);
                work[ti].data_mut()[i] = orig - h;
                let down = loss(work);
                work[ti].data_mut()[i] = orig;
                (up - down) / (2.0 * h)
            };
            let fd = central(FD_STEP, &mut work, &mut loss);
            let an = analytic[ti].data()[i];
            let rel = |fd: f64| {
                let denom = fd.abs().max(an.abs());
                let diff = (fd - an).abs();
                if diff > FD_ABS_FLOOR && denom > 0.0 {
                    diff / denom
                } else {
                    0.0
                }
            };
            let mut err = rel(fd);
            if err > FD_REL_TOL {
                // Distinguish a wrong gradient from a secant straddling a
                // kink (ReLU, clamp, min): a real error reproduces at a
                // smaller step, a kink crossing does not.
                let fd_small = central(FD_STEP / 16.0, &mut work, &mut loss);
                let agree = (fd_small - fd).abs() <= 0.05 * fd.abs().max(fd_small.abs()).max(1e-9);
                err = if agree { err.max(rel(fd_small)) } else { rel(fd_small) };
            }
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tape::Tape;

    #[test]
    fn fd_matches_tape_on_small_composite() {
        // loss = mean(tanh(x * x + x))
        let x = Tensor::vector(vec![0.3, -0.7, 1.2]).unwrap();

        let mut tape = Tape::new();
        let xv = tape.leaf_from(&x);
        let sq = tape.mul(xv, xv).unwrap();
        let s = tape.add(sq, xv).unwrap();
        let th = tape.tanh(s).unwrap();
        let loss = tape.mean(th).unwrap();
        tape.backward(loss).unwrap();
        let analytic = tape.grad_tensor(xv);

        let err = max_relative_error(&[x], &[analytic], |ps| {
            ps[0]
                .data()
                .iter()
                .map(|&v| (v * v + v).tanh())
                .sum::<f64>()
                / 3.0
        });
        assert!(err < FD_REL_TOL, "relative error {err}");
    }
}
