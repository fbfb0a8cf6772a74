//! Stationary kernels on the input space. Every family here has the two
//! hyperparameters `[v², ℓ]` and depends on inputs only through the squared
//! distance `r²`.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::params::Transform;

use super::json::ObjectReader;

pub const DATA_PARAM_COUNT: usize = 2;

pub trait DataKernel: Send + Sync + Debug {
    fn family(&self) -> &'static str;

    /// `k(r²)` with `theta = [v², ℓ]`.
    fn eval(&self, theta: &[f64], r2: f64) -> f64;

    /// `[∂k/∂v², ∂k/∂ℓ]` at `r²`.
    fn grad(&self, theta: &[f64], r2: f64) -> [f64; 2];

    /// Extra structural fields for the JSON form (e.g. `nu`).
    fn options_json(&self, _out: &mut Map<String, Value>) {}

    fn transforms(&self) -> [Transform; 2] {
        [Transform::LogPositive, Transform::LogPositive]
    }

    fn param_names(&self) -> [&'static str; 2] {
        ["v2", "ell"]
    }
}

/// `v²·exp(−r²/(2ℓ))`. The length scale enters unsquared.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredExponential;

impl DataKernel for SquaredExponential {
    fn family(&self) -> &'static str {
        "se"
    }

    fn eval(&self, theta: &[f64], r2: f64) -> f64 {
        theta[0] * (-r2 / (2.0 * theta[1])).exp()
    }

    fn grad(&self, theta: &[f64], r2: f64) -> [f64; 2] {
        let (v2, ell) = (theta[0], theta[1]);
        let e = (-r2 / (2.0 * ell)).exp();
        [e, v2 * e * r2 / (2.0 * ell * ell)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternOrder {
    pub fn nu(&self) -> f64 {
        match self {
            MaternOrder::Half => 0.5,
            MaternOrder::ThreeHalves => 1.5,
            MaternOrder::FiveHalves => 2.5,
        }
    }

    pub fn from_nu(nu: f64) -> Option<Self> {
        match nu {
            x if x == 0.5 => Some(MaternOrder::Half),
            x if x == 1.5 => Some(MaternOrder::ThreeHalves),
            x if x == 2.5 => Some(MaternOrder::FiveHalves),
            _ => None,
        }
    }
}

/// Half-integer Matérn closed forms.
#[derive(Debug, Clone, Copy)]
pub struct Matern {
    pub order: MaternOrder,
}

impl DataKernel for Matern {
    fn family(&self) -> &'static str {
        "matern"
    }

    fn eval(&self, theta: &[f64], r2: f64) -> f64 {
        let (v2, ell) = (theta[0], theta[1]);
        let r = r2.sqrt();
        match self.order {
            MaternOrder::Half => v2 * (-r / ell).exp(),
            MaternOrder::ThreeHalves => {
                let a = 3f64.sqrt() * r / ell;
                v2 * (1.0 + a) * (-a).exp()
            }
            MaternOrder::FiveHalves => {
                let a = 5f64.sqrt() * r / ell;
                v2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    fn grad(&self, theta: &[f64], r2: f64) -> [f64; 2] {
        let (v2, ell) = (theta[0], theta[1]);
        let r = r2.sqrt();
        match self.order {
            MaternOrder::Half => {
                let e = (-r / ell).exp();
                [e, v2 * e * r / (ell * ell)]
            }
            MaternOrder::ThreeHalves => {
                let a = 3f64.sqrt() * r / ell;
                let e = (-a).exp();
                [(1.0 + a) * e, v2 * a * a * e / ell]
            }
            MaternOrder::FiveHalves => {
                let a = 5f64.sqrt() * r / ell;
                let e = (-a).exp();
                [(1.0 + a + a * a / 3.0) * e, v2 * (a * a / 3.0) * (1.0 + a) * e / ell]
            }
        }
    }

    fn options_json(&self, out: &mut Map<String, Value>) {
        out.insert("nu".into(), Value::from(self.order.nu()));
    }
}

/// A data-kernel strategy plus its `[v², ℓ]` values, when given.
#[derive(Clone, Debug)]
pub struct DataKernelSpec {
    pub kernel: Arc<dyn DataKernel>,
    pub params: Option<[f64; 2]>,
}

impl DataKernelSpec {
    pub fn new(kernel: Arc<dyn DataKernel>, v2: f64, ell: f64) -> Self {
        DataKernelSpec { kernel, params: Some([v2, ell]) }
    }

    pub fn se(v2: f64, ell: f64) -> Self {
        Self::new(Arc::new(SquaredExponential), v2, ell)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        data_registry().parse(value)
    }

    pub fn to_json(&self) -> Value {
        data_kernel_json(self.kernel.as_ref(), self.params.as_ref().map(|p| &p[..]))
    }

    /// Evaluates `k(x, x')`; both values must be set.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        if x.len() != x_prime.len() {
            return Err(Error::DimensionMismatch(format!("inputs of length {} and {}", x.len(), x_prime.len())));
        }
        let theta = self.params.ok_or_else(|| Error::InvalidSpec("data kernel hyperparameters not set".into()))?;
        let r2: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.kernel.eval(&theta, r2))
    }
}

pub type DataKernelFactory = fn(&mut ObjectReader) -> Result<Arc<dyn DataKernel>>;

/// Name → constructor table for data kernels.
pub struct DataKernelRegistry {
    factories: BTreeMap<&'static str, DataKernelFactory>,
}

impl DataKernelRegistry {
    pub fn empty() -> Self {
        DataKernelRegistry { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("se", |_| Ok(Arc::new(SquaredExponential)));
        r.register("matern", |obj| {
            let nu = obj.take_f64("nu")?.unwrap_or(1.5);
            let order = MaternOrder::from_nu(nu)
                .ok_or_else(|| Error::InvalidSpec(format!("matern nu must be 0.5, 1.5 or 2.5, got {nu}")))?;
            Ok(Arc::new(Matern { order }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: DataKernelFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn parse(&self, value: &Value) -> Result<DataKernelSpec> {
        let mut obj = ObjectReader::new(value, "data kernel")?;
        let family = obj.take_string("family")?.ok_or_else(|| Error::InvalidSpec("data kernel needs `family`".into()))?;
        let factory = self
            .factories
            .get(family.as_str())
            .ok_or(Error::UnknownFamily { kind: "data kernel", name: family.clone() })?;
        let kernel = factory(&mut obj)?;
        let v2 = obj.take_f64("v2")?;
        let ell = obj.take_f64("ell")?;
        obj.finish()?;
        let values = match (v2, ell) {
            (Some(v2), Some(ell)) => {
                if !(v2 > 0.0 && ell > 0.0) {
                    return Err(Error::InvalidSpec(format!("data kernel needs v2 > 0 and ell > 0, got {v2}, {ell}")));
                }
                Some([v2, ell])
            }
            (None, None) => None,
            _ => return Err(Error::InvalidSpec("data kernel must give both `v2` and `ell` or neither".into())),
        };
        Ok(DataKernelSpec { kernel, params: values })
    }
}

pub fn data_registry() -> &'static DataKernelRegistry {
    static REGISTRY: OnceLock<DataKernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(DataKernelRegistry::builtin)
}

pub fn data_kernel_json(kernel: &dyn DataKernel, theta: Option<&[f64]>) -> Value {
    let mut out = Map::new();
    out.insert("family".into(), Value::from(kernel.family()));
    kernel.options_json(&mut out);
    if let Some(theta) = theta {
        out.insert("v2".into(), Value::from(theta[0]));
        out.insert("ell".into(), Value::from(theta[1]));
    }
    Value::Object(out)
}
