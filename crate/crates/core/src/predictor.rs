/// Anything that maps a full feature row `(x, z)` to a real output.
///
/// Classifiers return outcome probabilities. Implementations must be pure:
/// the same row always gives the same output.
pub trait Predictor: Sync {
    /// Width of the rows this predictor accepts.
    fn n_features(&self) -> usize;

    /// Output for `row`; `row.len()` must equal [`Predictor::n_features`].
    fn predict(&self, row: &[f64]) -> f64;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, row: &[f64]) -> f64 {
        (**self).predict(row)
    }
}

impl<P: Predictor + ?Sized + Send> Predictor for Box<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, row: &[f64]) -> f64 {
        (**self).predict(row)
    }
}

/// Wraps a closure as a [`Predictor`]. Mostly useful for analytic test models.
#[derive(Clone)]
pub struct FnPredictor<F> {
    dim: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.dim
    }

    fn predict(&self, row: &[f64]) -> f64 {
        (self.f)(row)
    }
}

impl<F> std::fmt::Debug for FnPredictor<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnPredictor").field("dim", &self.dim).finish()
    }
}

/// A model of the identity-link form `bias + weights · row`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearPredictor {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }
}

impl Predictor for LinearPredictor {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}
