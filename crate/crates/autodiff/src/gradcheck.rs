use crate::error::AutodiffError;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `h`.
///
/// `f` builds the function on a fresh graph from the leaf holding `x`.
/// Returns the maximum over coordinates of
/// `|autodiff - central| / (|central| + 1e-12)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::new();
    let leaf = g.variable(x.clone());
    let out = f(&mut g, leaf)?;
    if g.value(out).len() != 1 {
        return Err(AutodiffError::Shape("grad_check needs a scalar function".into()));
    }
    let grads = g.backward_scalar(out)?;
    let analytic = grads.get_or_zeros(leaf, x);

    let eval = |xp: Tensor| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let leaf = g.constant(xp);
        let out = f(&mut g, leaf)?;
        Ok(g.value(out).item())
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let central = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (analytic.data()[i] - central).abs() / (central.abs() + 1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
