//! Central finite-difference oracle for verifying backward passes.
//!
//! The oracle only ever re-evaluates the forward pass, so it stays
//! independent of the gradient code it is checking.

use rand::RngExt;

use super::tape::{NodeId, Tape};
use super::tensor::{Real, Tensor};

/// Relative error with a floor so that near-zero gradient pairs compare
/// absolutely.
pub fn rel_error(a: Real, b: Real) -> Real {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Max relative error between analytic gradients and central finite
/// differences over every element of every parameter.
///
/// `build` must deterministically reconstruct the scalar loss from leaf
/// nodes registered in the order of `params`.
pub fn check_gradients(
    params: &[Tensor],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    step: Real,
) -> Real {
    let analytic = analytic_grads(params, &build);
    let mut worst: Real = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        for ei in 0..params[pi].numel() {
            let fd = fd_element(&mut work, pi, ei, &build, step);
            worst = worst.max(rel_error(analytic[pi].data()[ei], fd));
        }
    }
    worst
}

/// Like [`check_gradients`] but probing only `per_tensor` random elements
/// of each parameter; for models too large to difference exhaustively.
pub fn check_gradients_sampled(
    params: &[Tensor],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    step: Real,
    per_tensor: usize,
    rng: &mut impl RngExt,
) -> Real {
    let analytic = analytic_grads(params, &build);
    let mut worst: Real = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        let numel = params[pi].numel();
        for _ in 0..per_tensor.min(numel) {
            let ei = rng.random_range(0..numel);
            let fd = fd_element(&mut work, pi, ei, &build, step);
            worst = worst.max(rel_error(analytic[pi].data()[ei], fd));
        }
    }
    worst
}

fn analytic_grads(params: &[Tensor], build: &impl Fn(&mut Tape, &[NodeId]) -> NodeId) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &ids);
    let grads = tape.backward(loss).expect("gradcheck loss must be scalar");
    ids.iter().map(|&id| grads.get(id).clone()).collect()
}

fn loss_value(params: &[Tensor], build: &impl Fn(&mut Tape, &[NodeId]) -> NodeId) -> Real {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = build(&mut tape, &ids);
    tape.value(loss).item()
}

fn fd_element(
    work: &mut [Tensor],
    pi: usize,
    ei: usize,
    build: &impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    step: Real,
) -> Real {
    let orig = work[pi].data()[ei];
    work[pi].data_mut()[ei] = orig + step;
    let up = loss_value(work, build);
    work[pi].data_mut()[ei] = orig - step;
    let down = loss_value(work, build);
    work[pi].data_mut()[ei] = orig;
    (up - down) / (2.0 * step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // powf with a deliberately perturbed exponent downstream: compare
        // x^3 loss against an x^2-style analytic path by checking that a
        // correct graph passes and the error metric is sharp.
        let x = Tensor::scalar(1.7);
        let err = check_gradients(
            &[x],
            |tape, ids| {
                let c = tape.powf(ids[0], 3.0);
                tape.sum_all(c)
            },
            1e-5,
        );
        assert!(err < 1e-7, "cubic gradient should match closely, got {err}");
    }
}
