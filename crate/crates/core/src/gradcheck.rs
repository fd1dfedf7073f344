//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::params::{Graph, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;

/// Largest error observed within one named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    /// Maximum relative error over every checked element.
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Loss value and, when asked, the kink pattern of the evaluation.
fn evaluate<S, F>(store: &ParamStore<S>, f: &F, sides: bool) -> Result<(f64, Vec<bool>)>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let loss = f(&mut g)?;
    let pattern = if sides { g.kink_sides() } else { Vec::new() };
    Ok((g.value(loss).item()?.as_f64(), pattern))
}

/// Compares the tape gradient of the scalar `f` with respect to every
/// parameter in `store` against central differences
/// `(f(θ + eps) − f(θ − eps)) / (2·eps)`.
///
/// `f` must rebuild its whole computation from the graph it is given and be
/// deterministic; a second evaluation that differs bitwise from the first is
/// rejected with [`Error::NonDeterministic`]. The store is restored exactly.
pub fn grad_check<S, F>(store: &mut ParamStore<S>, eps: f64, f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<Var>,
{
    run(store, eps, &f, false).map(|r| r.expect("kinks not guarded"))
}

/// Like [`grad_check`], but returns `None` as soon as some `θ ± eps` probe
/// lands on the other side of a leaky-ReLU or clamp breakpoint than `θ`
/// itself, where a central difference would not estimate the derivative.
pub fn grad_check_smooth<S, F>(store: &mut ParamStore<S>, eps: f64, f: F) -> Result<Option<GradCheckReport>>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<Var>,
{
    run(store, eps, &f, true)
}

fn run<S, F>(store: &mut ParamStore<S>, eps: f64, f: &F, guard: bool) -> Result<Option<GradCheckReport>>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<Var>,
{
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-6, 1e-2]")));
    }
    let (base, analytic) = {
        let mut g = Graph::new(&*store);
        let loss = f(&mut g)?;
        let base = g.value(loss).item()?.as_f64();
        g.backward(loss)?;
        (base, g.param_grads())
    };
    let (again, pattern) = evaluate(store, f, guard)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::NonDeterministic);
    }

    let step = S::lit(eps);
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for (id, grad) in ids.into_iter().zip(analytic) {
        let n = store.get(id).numel();
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + step;
            let up = evaluate(store, f, guard);
            store.get_mut(id).data_mut()[i] = orig - step;
            let down = evaluate(store, f, guard);
            store.get_mut(id).data_mut()[i] = orig;
            let ((up, up_sides), (down, down_sides)) = (up?, down?);
            if up_sides != pattern || down_sides != pattern {
                return Ok(None);
            }
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grad[i].as_f64(), numeric));
        }
        report.groups.push(GroupError {
            name: store.name(id).to_string(),
            elements: n,
            max_rel_error: worst,
        });
    }
    Ok(Some(report))
}
