//! Central finite-difference gradient checks for [`Network`]s.

use crate::nn::{mae_loss, scce_loss, Network, NnError, Tensor4};

/// Scalar objective placed on top of the network for the check.
#[derive(Debug, Clone)]
pub enum Objective {
    /// `sum(r * y)` over the network output.
    Projection(Vec<f64>),
    /// MAE against a fixed target.
    Mae(Tensor4),
    /// SCCE on the logits (a trailing softmax is skipped).
    Scce(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Smallest magnitude used in the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn evaluate(net: &mut Network, x: &Tensor4, obj: &Objective) -> Result<(f64, Tensor4), NnError> {
    match obj {
        Objective::Projection(r) => {
            let y = net.forward(x)?;
            let loss = y.data().iter().zip(r).map(|(a, b)| a * b).sum();
            let g = Tensor4::from_vec(y.n(), y.shape(), r.clone())?;
            Ok((loss, g))
        }
        Objective::Mae(t) => mae_loss(&net.forward(x)?, t),
        Objective::Scce(labels) => scce_loss(&net.forward_logits(x)?, labels),
    }
}

/// Compares analytic parameter and input gradients against central
/// differences with step `eps`. Dropout masks are replayed by rewinding the
/// network's pass counter before every evaluation.
pub fn check(net: &mut Network, x: &Tensor4, obj: &Objective, eps: f64) -> Result<GradCheckReport, NnError> {
    let pass = net.pass_counter();
    net.zero_grads();
    let (_, g) = evaluate(net, x, obj)?;
    let dx = net.backward(&g)?;
    let analytic_params = net.grads().to_vec();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |what: String, a: f64, n: f64| {
        let e = relative_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst = format!("{what}: analytic {a:e}, numeric {n:e}");
        }
    };

    for i in 0..net.param_count() {
        let orig = net.params()[i];
        let side = |v: f64, net: &mut Network| -> Result<f64, NnError> {
            net.params_mut()[i] = v;
            net.set_pass_counter(pass);
            Ok(evaluate(net, x, obj)?.0)
        };
        let plus = side(orig + eps, net)?;
        let minus = side(orig - eps, net)?;
        net.params_mut()[i] = orig;
        record(format!("param {i}"), analytic_params[i], (plus - minus) / (2.0 * eps));
    }
    let mut xp = x.clone();
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        let mut side = |v: f64, xp: &mut Tensor4| -> Result<f64, NnError> {
            xp.data_mut()[i] = v;
            net.set_pass_counter(pass);
            Ok(evaluate(net, xp, obj)?.0)
        };
        let plus = side(orig + eps, &mut xp)?;
        let minus = side(orig - eps, &mut xp)?;
        xp.data_mut()[i] = orig;
        record(format!("input {i}"), dx.data()[i], (plus - minus) / (2.0 * eps));
    }
    net.set_pass_counter(pass + 1);
    Ok(report)
}
