use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;

use super::NnError;

/// Shape and initialization scale of one named parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub fan_in: usize,
}

/// Named matrices in a fixed insertion order.
///
/// Also used for gradients and optimizer moments, which mirror the parameter
/// names and shapes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Kaiming-style uniform init: weights `U(±√(6/fan_in))`, biases
    /// (single-row specs) `U(±1/√fan_in)`.
    pub fn init<R: Rng + ?Sized>(specs: &[ParamSpec], rng: &mut R) -> Self {
        let mut set = Self::new();
        for spec in specs {
            let fan_in = spec.fan_in.max(1) as f64;
            let bound = if spec.rows == 1 {
                1.0 / fan_in.sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            let value =
                Array2::from_shape_simple_fn((spec.rows, spec.cols), || rng.random_range(-bound..bound));
            set.insert(spec.name.clone(), value);
        }
        set
    }

    /// Zero-filled set with the given specs' shapes.
    pub fn zeros(specs: &[ParamSpec]) -> Self {
        let mut set = Self::new();
        for spec in specs {
            set.insert(spec.name.clone(), Array2::zeros((spec.rows, spec.cols)));
        }
        set
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
            index: self.index.clone(),
        }
    }

    /// Inserts or replaces a parameter; new names go to the end.
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.values[i] = value,
            None => {
                self.index.insert(name.clone(), self.names.len());
                self.names.push(name);
                self.values.push(value);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn require(&self, name: &str) -> Result<&Array2<f64>, NnError> {
        self.get(name)
            .ok_or_else(|| NnError::MissingParameter(name.to_string()))
    }

    pub fn require_mut(&mut self, name: &str) -> Result<&mut Array2<f64>, NnError> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.values[i]),
            None => Err(NnError::MissingParameter(name.to_string())),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter_mut())
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// `self += other`, matched by position; both sets must share layout.
    pub fn add_assign(&mut self, other: &ParameterSet) {
        debug_assert_eq!(self.names, other.names);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            v.mapv_inplace(|x| x * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec {
                name: "w".into(),
                rows: 4,
                cols: 3,
                fan_in: 4,
            },
            ParamSpec {
                name: "b".into(),
                rows: 1,
                cols: 3,
                fan_in: 4,
            },
        ]
    }

    #[test]
    fn init_respects_bounds_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ParameterSet::init(&specs(), &mut rng);
        assert_eq!(p.names(), ["w", "b"]);
        let wb = (6.0f64 / 4.0).sqrt();
        assert!(p.get("w").unwrap().iter().all(|v| v.abs() < wb));
        assert!(p.get("b").unwrap().iter().all(|v| v.abs() < 0.5));
        assert_eq!(p.num_scalars(), 15);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ParameterSet::init(&specs(), &mut ChaCha8Rng::seed_from_u64(5));
        let b = ParameterSet::init(&specs(), &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn accumulate_and_scale() {
        let mut a = ParameterSet::zeros(&specs());
        let mut b = a.zeros_like();
        b.get_mut("w").unwrap().fill(2.0);
        a.add_assign(&b);
        a.add_assign(&b);
        a.scale(0.25);
        assert!(a.get("w").unwrap().iter().all(|v| *v == 1.0));
        assert!(a.require("missing").is_err());
    }
}
