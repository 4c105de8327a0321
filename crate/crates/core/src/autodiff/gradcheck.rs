use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares the reverse-mode gradient of `f` at `point` with central
/// differences. Returns `max_i |a_i − n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn grad_check<F>(f: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |p: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(p.clone())?;
        let y = f(&mut g, x)?;
        Ok(g.scalar(y))
    };
    let mut g = Graph::new();
    let x = g.input(point.clone())?;
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let analytic = g
        .grad(x)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; point.len()]);
    if analytic.len() != point.len() {
        return Err(Error::shape("grad_check", "gradient length differs from point"));
    }
    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + epsilon;
        let up = eval(&probe)?;
        probe.data[i] = orig - epsilon;
        let down = eval(&probe)?;
        probe.data[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = (analytic[i].abs() + numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
