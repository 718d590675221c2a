//! Autocorrelation-method linear prediction.

use super::ConcealError;

/// Biased autocorrelation `r[k] = (1/N) * sum_n x[n] x[n-k]` for `k = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                return 0.0;
            }
            let acc: f64 = x[k..].iter().zip(x).map(|(a, b)| a * b).sum();
            acc / n as f64
        })
        .collect()
}

/// Output of the Levinson-Durbin recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct LevinsonSolution {
    /// Predictor coefficients `a_1..a_p` with `x[n] ~ sum_i a_i x[n-i]`.
    pub coefficients: Vec<f64>,
    /// Reflection coefficients of the orders actually reached.
    pub reflection: Vec<f64>,
    /// Prediction-error variance at the last stable order.
    pub error: f64,
}

impl LevinsonSolution {
    /// Order at which the recursion stopped.
    pub fn stable_order(&self) -> usize {
        self.reflection.len()
    }
}

/// Solves the Yule-Walker equations for `order` coefficients from
/// autocorrelation lags `r[0..=order]`.
///
/// If an order would drive the prediction-error variance to zero or below,
/// the recursion stops at the previous order and the remaining coefficients
/// stay zero. A zero `r[0]` yields all-zero coefficients.
pub fn levinson_durbin(r: &[f64], order: usize) -> LevinsonSolution {
    assert!(r.len() > order, "need {} lags, got {}", order + 1, r.len());
    let mut a = vec![0.0; order];
    let mut scratch = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut error = r[0];
    if error.is_nan() || error <= 0.0 {
        return LevinsonSolution {
            coefficients: a,
            reflection,
            error: 0.0,
        };
    }
    for i in 0..order {
        let acc: f64 = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / error;
        let next_error = error * (1.0 - k * k);
        if next_error.is_nan() || next_error <= 0.0 || !k.is_finite() {
            break;
        }
        scratch[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = scratch[j] - k * scratch[i - 1 - j];
        }
        a[i] = k;
        reflection.push(k);
        error = next_error;
    }
    LevinsonSolution {
        coefficients: a,
        reflection,
        error,
    }
}

/// Fitted linear predictor together with the context it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub coefficients: Vec<f64>,
    pub context: Vec<f64>,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Free-running extrapolation of `horizon` samples past the end of `seed`.
    /// Samples before the start of `seed` are taken as zero.
    pub fn extrapolate(&self, seed: &[f64], horizon: usize) -> Vec<f64> {
        let p = self.order();
        let mut buf = vec![0.0; p + horizon];
        let keep = seed.len().min(p);
        buf[p - keep..p].copy_from_slice(&seed[seed.len() - keep..]);
        for n in p..p + horizon {
            // a_1 pairs with buf[n-1], a_p with buf[n-p]
            let past = &buf[n - p..n];
            buf[n] = self
                .coefficients
                .iter()
                .zip(past.iter().rev())
                .map(|(a, x)| a * x)
                .sum();
        }
        buf.split_off(p)
    }
}

/// Taper applied to the context before the autocorrelation is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalysisWindow {
    Rectangular,
    #[default]
    Hann,
}

impl AnalysisWindow {
    /// Symmetric window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Self::Rectangular => vec![1.0; len],
            Self::Hann if len < 2 => vec![1.0; len],
            Self::Hann => (0..len)
                .map(|n| {
                    let x = n as f64 / (len - 1) as f64;
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
                })
                .collect(),
        }
    }
}

/// Fits an order-`order` predictor on the Hann-windowed `context` with the
/// autocorrelation method. White-noise compensation scales `r[0]` by
/// `1 + noise_comp`.
pub fn fit_ar(context: &[f64], order: usize, noise_comp: f64) -> Result<ArModel, ConcealError> {
    fit_ar_windowed(context, order, noise_comp, AnalysisWindow::Hann)
}

pub fn fit_ar_windowed(
    context: &[f64],
    order: usize,
    noise_comp: f64,
    window: AnalysisWindow,
) -> Result<ArModel, ConcealError> {
    if order == 0 {
        return Err(ConcealError::InvalidConfig(
            "AR order must be at least 1".into(),
        ));
    }
    if context.len() < 2 * order {
        return Err(ConcealError::ContextTooShort {
            len: context.len(),
            order,
        });
    }
    if let Some(i) = context.iter().position(|s| !s.is_finite()) {
        return Err(ConcealError::NonFinite(i));
    }
    let tapered: Vec<f64> = match window {
        AnalysisWindow::Rectangular => context.to_vec(),
        _ => context
            .iter()
            .zip(window.coefficients(context.len()))
            .map(|(x, w)| x * w)
            .collect(),
    };
    let mut r = autocorrelation(&tapered, order);
    r[0] *= 1.0 + noise_comp;
    let solution = levinson_durbin(&r, order);
    Ok(ArModel {
        coefficients: solution.coefficients,
        context: context.to_vec(),
    })
}

/// Extrapolates `horizon` samples past the end of the model's context.
pub fn predict_packet(m: &ArModel, horizon: usize) -> Vec<f64> {
    m.extrapolate(&m.context, horizon)
}
