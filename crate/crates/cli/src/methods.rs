//! Named kernel configurations used by the experiment suites.

use std::path::Path;

use graphmogp::KernelSpec;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::io::read_json;

#[derive(Clone, Debug)]
pub struct Method {
    pub name: String,
    /// Kernel JSON as declared (before training).
    pub kernel_json: Value,
    pub kernel: KernelSpec,
}

impl Method {
    pub fn new(name: impl Into<String>, kernel_json: Value) -> Result<Self, CliError> {
        let name = name.into();
        let kernel = KernelSpec::from_json(&kernel_json).map_err(|e| CliError::Input(format!("method `{name}`: {e}")))?;
        Ok(Method { name, kernel_json, kernel })
    }
}

fn se() -> Value {
    json!({"family": "se"})
}

fn separable(graph: Value) -> Value {
    json!({"variant": "separable", "data": se(), "graph": graph})
}

fn sos(terms: &[(Value, Value)]) -> Value {
    let terms: Vec<Value> = terms.iter().map(|(d, g)| json!({"data": d, "graph": g})).collect();
    json!({"variant": "sos", "terms": terms})
}

fn graph_matern(nu: u32) -> Value {
    json!({"family": "graph_matern", "nu": nu, "laplacian": "unnormalized"})
}

/// Kernel JSON for a built-in method name.
pub fn builtin(name: &str) -> Option<Value> {
    let ou = json!({"family": "matern", "nu": 0.5});
    let v = match name {
        "sogp" => json!({"variant": "sogp", "data": se()}),
        "icm" => separable(json!({"family": "icm"})),
        "laplacian" => separable(json!({"family": "laplacian"})),
        "global_filtering" => separable(json!({"family": "global_filtering"})),
        "local_averaging" => separable(json!({"family": "local_averaging"})),
        "regularized_laplacian" => separable(json!({"family": "regularized_laplacian"})),
        "diffusion" => separable(json!({"family": "diffusion"})),
        "random_walk_1" => separable(json!({"family": "random_walk", "p": 1})),
        "random_walk_3" => separable(json!({"family": "random_walk", "p": 3})),
        "cosine" => separable(json!({"family": "cosine"})),
        "graph_matern_2" => separable(graph_matern(2)),
        "graph_matern_3" => separable(graph_matern(3)),
        "polynomial_2" => separable(json!({"family": "polynomial", "order": 2})),
        "polynomial_3" => separable(json!({"family": "polynomial", "order": 3})),
        "sos_reglap_diffusion" => sos(&[
            (se(), json!({"family": "regularized_laplacian"})),
            (se(), json!({"family": "diffusion"})),
        ]),
        "sos_gf_gm2" => sos(&[(se(), json!({"family": "global_filtering"})), (se(), graph_matern(2))]),
        "sos_se_ou_gm3_poly3" => sos(&[(se(), graph_matern(3)), (ou, json!({"family": "polynomial", "order": 3}))]),
        "sos_diffusion_poly3" => sos(&[
            (se(), json!({"family": "diffusion"})),
            (se(), json!({"family": "polynomial", "order": 3})),
        ]),
        "sos_se_ou_diffusion_poly3" => sos(&[
            (se(), json!({"family": "diffusion"})),
            (ou, json!({"family": "polynomial", "order": 3})),
        ]),
        "graph_pc_gf_gm2" => json!({"variant": "graph_pc", "graph1": {"family": "global_filtering"}, "graph2": graph_matern(2)}),
        "graph_pc_diffusion_gm2" => json!({"variant": "graph_pc", "graph1": {"family": "diffusion"}, "graph2": graph_matern(2)}),
        _ => return None,
    };
    Some(v)
}

pub const BUILTIN_NAMES: &[&str] = &[
    "sogp",
    "icm",
    "laplacian",
    "global_filtering",
    "local_averaging",
    "regularized_laplacian",
    "diffusion",
    "random_walk_1",
    "random_walk_3",
    "cosine",
    "graph_matern_2",
    "graph_matern_3",
    "polynomial_2",
    "polynomial_3",
    "sos_reglap_diffusion",
    "sos_gf_gm2",
    "sos_se_ou_gm3_poly3",
    "sos_diffusion_poly3",
    "sos_se_ou_diffusion_poly3",
    "graph_pc_gf_gm2",
    "graph_pc_diffusion_gm2",
];

pub fn default_names(suite: &str) -> &'static [&'static str] {
    match suite {
        "regular" => &["sogp", "icm", "local_averaging"],
        "subgraph" => &[
            "sogp",
            "icm",
            "laplacian",
            "global_filtering",
            "local_averaging",
            "regularized_laplacian",
            "diffusion",
            "random_walk_1",
            "random_walk_3",
            "cosine",
            "graph_matern_2",
            "graph_matern_3",
            "sos_reglap_diffusion",
            "graph_pc_gf_gm2",
        ],
        _ => &[
            "sogp",
            "icm",
            "laplacian",
            "global_filtering",
            "local_averaging",
            "regularized_laplacian",
            "diffusion",
            "random_walk_1",
            "random_walk_3",
            "cosine",
            "graph_matern_2",
            "graph_matern_3",
            "polynomial_2",
            "polynomial_3",
            "sos_gf_gm2",
            "sos_se_ou_gm3_poly3",
            "sos_diffusion_poly3",
            "sos_se_ou_diffusion_poly3",
            "graph_pc_diffusion_gm2",
        ],
    }
}

pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Vec<Method>, CliError> {
    names
        .iter()
        .map(|n| {
            let n = n.as_ref().trim();
            let kernel = builtin(n).ok_or_else(|| {
                CliError::Input(format!("unknown method `{n}`; built-in methods: {}", BUILTIN_NAMES.join(", ")))
            })?;
            Method::new(n, kernel)
        })
        .collect()
}

/// `--methods` argument: a JSON file (array of `{"name", "kernel"}` or of
/// bare kernel objects) or a comma-separated list of built-in names.
pub fn parse_methods_arg(arg: &str) -> Result<Vec<Method>, CliError> {
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        let items = match read_json(path)? {
            Value::Array(items) => items,
            _ => return Err(CliError::Input(format!("{arg}: expected a JSON array of methods"))),
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.into_iter().enumerate() {
            match item {
                Value::Object(mut obj) if obj.contains_key("kernel") => {
                    let name = match obj.remove("name") {
                        Some(Value::String(s)) => s,
                        None => format!("method{i}"),
                        Some(other) => return Err(CliError::Input(format!("{arg}: method name must be a string, got {other}"))),
                    };
                    let kernel = obj.remove("kernel").expect("checked above");
                    if let Some(key) = obj.keys().next() {
                        return Err(CliError::Input(format!("{arg}: unknown method field `{key}`")));
                    }
                    out.push(Method::new(name, kernel)?);
                }
                other => out.push(Method::new(format!("method{i}"), other)?),
            }
        }
        if out.is_empty() {
            return Err(CliError::Input(format!("{arg}: no methods listed")));
        }
        Ok(out)
    } else {
        let names: Vec<&str> = arg.split(',').filter(|s| !s.trim().is_empty()).collect();
        if names.is_empty() {
            return Err(CliError::Input("--methods is empty".into()));
        }
        from_names(&names)
    }
}
