use super::backprop::{backward_masked, forward_split, Trainable};
use super::loss::Targets;
use super::{ModelSpec, NnError, ParamSet, Tensor};

fn loss_at(spec: &ModelSpec, backbone: &ParamSet, head: &ParamSet, batch: &Tensor, targets: &Targets) -> Result<f64, NnError> {
    let fwd = forward_split(spec, backbone, head, batch)?;
    Ok(targets.loss(&fwd.logits)?.loss)
}

/// Largest relative disagreement between backprop and central finite
/// differences over every scalar of both segments:
/// `|a − n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check(
    spec: &ModelSpec,
    backbone: &ParamSet,
    head: &ParamSet,
    batch: &Tensor,
    targets: &Targets,
    eps: f64,
) -> Result<f64, NnError> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(NnError::InvalidSpec(format!("finite-difference step {eps} outside (0, 1e-3]")));
    }
    let fwd = forward_split(spec, backbone, head, batch)?;
    let dlogits = targets.loss(&fwd.logits)?.dlogits;
    let grads = backward_masked(spec, backbone, head, batch, &dlogits, Trainable::Both)?;
    let analytic_b: Vec<f64> = grads.backbone.expect("both segments trainable").scalars().collect();
    let analytic_h: Vec<f64> = grads.head.expect("both segments trainable").scalars().collect();

    let mut worst = 0.0f64;
    let mut record = |analytic: f64, numeric: f64| {
        let denom = analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic - numeric).abs() / denom);
    };

    let mut b = backbone.clone();
    for (i, &a) in analytic_b.iter().enumerate() {
        let orig = nth(&b, i);
        set_nth(&mut b, i, orig + eps);
        let lp = loss_at(spec, &b, head, batch, targets)?;
        set_nth(&mut b, i, orig - eps);
        let lm = loss_at(spec, &b, head, batch, targets)?;
        set_nth(&mut b, i, orig);
        record(a, (lp - lm) / (2.0 * eps));
    }
    let mut h = head.clone();
    for (i, &a) in analytic_h.iter().enumerate() {
        let orig = nth(&h, i);
        set_nth(&mut h, i, orig + eps);
        let lp = loss_at(spec, backbone, &h, batch, targets)?;
        set_nth(&mut h, i, orig - eps);
        let lm = loss_at(spec, backbone, &h, batch, targets)?;
        set_nth(&mut h, i, orig);
        record(a, (lp - lm) / (2.0 * eps));
    }
    Ok(worst)
}

fn nth(p: &ParamSet, i: usize) -> f64 {
    p.scalars().nth(i).unwrap()
}

fn set_nth(p: &mut ParamSet, i: usize, v: f64) {
    *p.scalars_mut().nth(i).unwrap() = v;
}
