use super::Parameterized;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per parameter block, in block order.
    pub per_block: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

/// Compares an analytic gradient with central differences on every entry.
///
/// `loss` evaluates the scalar objective; `analytic` returns the gradient in
/// the same block layout as the parameters. Relative error is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<P, L, G>(params: &P, loss: L, analytic: G, eps: f64) -> GradCheckReport
where
    P: Parameterized + Clone,
    L: Fn(&P) -> f64,
    G: Fn(&P) -> P,
{
    let grads = analytic(params);
    let names: Vec<&'static str> = params.blocks().iter().map(|(n, _)| *n).collect();
    let sizes: Vec<usize> = params.blocks().iter().map(|(_, t)| t.len()).collect();
    let grad_data: Vec<Vec<f64>> = grads.blocks().iter().map(|(_, t)| t.data().to_vec()).collect();
    let mut per_block = Vec::with_capacity(names.len());
    let mut work = params.clone();
    for (b, name) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..sizes[b] {
            let orig = work.blocks()[b].1.data()[i];
            work.blocks_mut()[b].1.data_mut()[i] = orig + eps;
            let up = loss(&work);
            work.blocks_mut()[b].1.data_mut()[i] = orig - eps;
            let down = loss(&work);
            work.blocks_mut()[b].1.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad_data[b][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        per_block.push((name.to_string(), worst));
    }
    let max_rel_err = per_block.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    GradCheckReport {
        per_block,
        max_rel_err,
    }
}
