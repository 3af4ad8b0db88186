//! Structural validation of the JSON configuration. Every violation is
//! reported with the dotted path of the offending value.

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Any,
    Positive,
    NonNegative,
    /// `[0, 1]`
    Unit,
}

#[derive(Debug)]
pub enum Ty {
    Number(Bound),
    Integer {
        min: u64,
    },
    Boolean,
    Str,
    Enum(&'static [&'static str]),
    Object(&'static [Field]),
    /// Object discriminated by its `kind` key.
    Tagged(&'static [Variant]),
    Array {
        item: &'static Ty,
        min_len: usize,
    },
    Pair(&'static Ty),
}

#[derive(Debug)]
pub struct Field {
    pub name: &'static str,
    pub ty: &'static Ty,
    pub required: bool,
}

#[derive(Debug)]
pub struct Variant {
    pub tag: &'static str,
    pub fields: &'static [Field],
}

const fn req(name: &'static str, ty: &'static Ty) -> Field {
    Field {
        name,
        ty,
        required: true,
    }
}

const fn opt(name: &'static str, ty: &'static Ty) -> Field {
    Field {
        name,
        ty,
        required: false,
    }
}

static NUMBER: Ty = Ty::Number(Bound::Any);
static POSITIVE: Ty = Ty::Number(Bound::Positive);
static NON_NEGATIVE: Ty = Ty::Number(Bound::NonNegative);
static UNIT: Ty = Ty::Number(Bound::Unit);
static COUNT: Ty = Ty::Integer { min: 1 };
static BOOLEAN: Ty = Ty::Boolean;
static STRING: Ty = Ty::Str;
static NUMBERS: Ty = Ty::Array {
    item: &NUMBER,
    min_len: 2,
};

static TABLE: Ty = Ty::Object(&[req("xs", &NUMBERS), req("values", &NUMBERS)]);
const TABULATED: Variant = Variant {
    tag: "tabulated",
    fields: &[opt("csv", &STRING), opt("table", &TABLE)],
};

static GRID: Ty = Ty::Object(&[
    req("x_min", &NUMBER),
    req("x_max", &NUMBER),
    req("n_cells", &Ty::Integer { min: 4 }),
    req("boundary", &Ty::Enum(&["periodic", "no-flux"])),
]);

static PROFILE: Ty = Ty::Tagged(&[
    Variant {
        tag: "zero",
        fields: &[],
    },
    Variant {
        tag: "linear",
        fields: &[req("slope", &NUMBER)],
    },
    Variant {
        tag: "quadratic",
        fields: &[req("coeff", &NUMBER)],
    },
    TABULATED,
]);

static GROWTH_FN: Ty = Ty::Tagged(&[
    Variant {
        tag: "zero",
        fields: &[],
    },
    Variant {
        tag: "logistic",
        fields: &[req("rate", &NUMBER), req("cap", &POSITIVE)],
    },
    TABULATED,
]);

static KERNEL_SHAPE: Ty = Ty::Tagged(&[
    Variant {
        tag: "gaussian",
        fields: &[req("sigma", &POSITIVE), opt("cutoff", &POSITIVE)],
    },
    TABULATED,
]);

static KERNEL: Ty = Ty::Object(&[req("amplitude", &NUMBER), req("shape", &KERNEL_SHAPE)]);

static MODEL: Ty = Ty::Object(&[
    opt(
        "preset",
        &Ty::Enum(&["demo", "heat", "porous-medium", "confined", "growth"]),
    ),
    opt("epsilon", &NON_NEGATIVE),
    opt(
        "pressure",
        &Ty::Object(&[
            req("alpha", &POSITIVE),
            opt("c_u", &POSITIVE),
            opt("c_v", &POSITIVE),
        ]),
    ),
    opt(
        "velocity",
        &Ty::Object(&[opt("v1", &PROFILE), opt("v2", &PROFILE)]),
    ),
    opt(
        "kernels",
        &Ty::Object(&[
            opt("k11", &KERNEL),
            opt("k12", &KERNEL),
            opt("k21", &KERNEL),
            opt("k22", &KERNEL),
        ]),
    ),
    opt(
        "growth",
        &Ty::Object(&[opt("g1", &GROWTH_FN), opt("g2", &GROWTH_FN)]),
    ),
]);

static INITIAL: Ty = Ty::Tagged(&[
    Variant {
        tag: "zero",
        fields: &[],
    },
    Variant {
        tag: "constant",
        fields: &[req("u", &NON_NEGATIVE), req("v", &NON_NEGATIVE)],
    },
    Variant {
        tag: "box",
        fields: &[
            req("center", &NUMBER),
            req("half_width", &POSITIVE),
            req("height", &NON_NEGATIVE),
            opt("fraction_u", &UNIT),
        ],
    },
    Variant {
        tag: "gaussian",
        fields: &[
            req("center", &NUMBER),
            req("width", &POSITIVE),
            req("mass", &NON_NEGATIVE),
            opt("fraction_u", &UNIT),
        ],
    },
    Variant {
        tag: "barenblatt",
        fields: &[
            req("alpha", &POSITIVE),
            req("mass", &POSITIVE),
            req("t", &POSITIVE),
            opt("fraction_u", &UNIT),
        ],
    },
    Variant {
        tag: "two-bump-mixed",
        fields: &[
            req("separation", &NUMBER),
            req("width", &POSITIVE),
            req("height", &NON_NEGATIVE),
            req("mix", &UNIT),
        ],
    },
    Variant {
        tag: "csv",
        fields: &[req("path", &STRING)],
    },
]);

static SOLVER: Ty = Ty::Object(&[
    req("t_end", &POSITIVE),
    opt("cfl", &POSITIVE),
    opt("allow_unstable_cfl", &BOOLEAN),
    opt("output_every", &COUNT),
    opt("snapshot_interval", &POSITIVE),
    opt("max_steps", &COUNT),
    opt("positivity_floor", &NON_NEGATIVE),
]);

static OUTPUTS: Ty = Ty::Object(&[
    opt(
        "formats",
        &Ty::Array {
            item: &Ty::Enum(&["csv", "json", "svg"]),
            min_len: 0,
        },
    ),
    opt("csv_layout", &Ty::Enum(&["long", "per-snapshot"])),
]);

static SWEEP: Ty = Ty::Object(&[
    req(
        "eps_ladder",
        &Ty::Array {
            item: &POSITIVE,
            min_len: 3,
        },
    ),
    opt(
        "grid_ladder",
        &Ty::Array {
            item: &Ty::Integer { min: 4 },
            min_len: 1,
        },
    ),
    opt("coarse_cell", &Ty::Pair(&POSITIVE)),
    opt("snapshots", &COUNT),
]);

pub const LAW_NAMES: &[&str] = &[
    "entropy",
    "ratio-squared",
    "ratio-theta",
    "weak-form-u",
    "weak-form-v",
    "energy-identity",
];

static DIAGNOSE: Ty = Ty::Object(&[
    opt(
        "laws",
        &Ty::Array {
            item: &Ty::Enum(LAW_NAMES),
            min_len: 0,
        },
    ),
    opt("theta", &POSITIVE),
    opt("entropy_slack", &NON_NEGATIVE),
]);

static ORACLE: Ty = Ty::Tagged(&[
    Variant {
        tag: "gaussian-heat",
        fields: &[
            req("diffusivity", &POSITIVE),
            req("mass", &NON_NEGATIVE),
            req("center", &NUMBER),
            req("t_offset", &NON_NEGATIVE),
        ],
    },
    Variant {
        tag: "barenblatt",
        fields: &[
            req("alpha", &POSITIVE),
            req("mass", &POSITIVE),
            req("t_offset", &NON_NEGATIVE),
        ],
    },
    Variant {
        tag: "confined-steady-state",
        fields: &[
            req("alpha", &POSITIVE),
            req("potential", &PROFILE),
            req("mass", &POSITIVE),
            req("window", &Ty::Pair(&NUMBER)),
        ],
    },
]);

pub static CONFIG: Ty = Ty::Object(&[
    req("grid", &GRID),
    req("model", &MODEL),
    req("initial", &INITIAL),
    req("solver", &SOLVER),
    opt("outputs", &OUTPUTS),
    opt("sweep", &SWEEP),
    opt("diagnose", &DIAGNOSE),
    opt("oracle", &ORACLE),
]);

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn describe(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn check_fields(
    map: &Map<String, Value>,
    fields: &[Field],
    skip: Option<&str>,
    path: &str,
    errors: &mut Vec<String>,
) {
    for key in map.keys() {
        if Some(key.as_str()) == skip {
            continue;
        }
        if !fields.iter().any(|f| f.name == key) {
            let allowed: Vec<&str> = fields.iter().map(|f| f.name).collect();
            errors.push(format!(
                "{}: unknown key (allowed: {})",
                join(path, key),
                allowed.join(", ")
            ));
        }
    }
    for f in fields {
        match map.get(f.name) {
            Some(v) => check(v, f.ty, &join(path, f.name), errors),
            None if f.required => {
                errors.push(format!("{}: missing required field", join(path, f.name)))
            }
            None => {}
        }
    }
}

/// Appends every violation of `ty` found in `value` to `errors`.
pub fn check(value: &Value, ty: &Ty, path: &str, errors: &mut Vec<String>) {
    match ty {
        Ty::Number(bound) => {
            let Some(x) = value.as_f64() else {
                errors.push(format!(
                    "{path}: expected a number, found {}",
                    describe(value)
                ));
                return;
            };
            let ok = match bound {
                Bound::Any => x.is_finite(),
                Bound::Positive => x > 0.0,
                Bound::NonNegative => x >= 0.0,
                Bound::Unit => (0.0..=1.0).contains(&x),
            };
            if !ok {
                let rule = match bound {
                    Bound::Any => "be finite",
                    Bound::Positive => "be > 0",
                    Bound::NonNegative => "be >= 0",
                    Bound::Unit => "lie in [0, 1]",
                };
                errors.push(format!("{path}: must {rule}, got {x}"));
            }
        }
        Ty::Integer { min } => match value.as_u64() {
            Some(n) if n >= *min => {}
            Some(n) => errors.push(format!("{path}: must be >= {min}, got {n}")),
            None => errors.push(format!(
                "{path}: expected a non-negative integer, found {value}"
            )),
        },
        Ty::Boolean => {
            if !value.is_boolean() {
                errors.push(format!(
                    "{path}: expected a boolean, found {}",
                    describe(value)
                ));
            }
        }
        Ty::Str => {
            if !value.is_string() {
                errors.push(format!(
                    "{path}: expected a string, found {}",
                    describe(value)
                ));
            }
        }
        Ty::Enum(options) => match value.as_str() {
            Some(s) if options.contains(&s) => {}
            _ => errors.push(format!(
                "{path}: expected one of {}, found {value}",
                options.join(", ")
            )),
        },
        Ty::Object(fields) => match value.as_object() {
            Some(map) => check_fields(map, fields, None, path, errors),
            None => errors.push(format!(
                "{path}: expected an object, found {}",
                describe(value)
            )),
        },
        Ty::Tagged(variants) => {
            let Some(map) = value.as_object() else {
                errors.push(format!(
                    "{path}: expected an object, found {}",
                    describe(value)
                ));
                return;
            };
            let tags: Vec<&str> = variants.iter().map(|v| v.tag).collect();
            match map.get("kind").and_then(Value::as_str) {
                Some(tag) => match variants.iter().find(|v| v.tag == tag) {
                    Some(var) => check_fields(map, var.fields, Some("kind"), path, errors),
                    None => errors.push(format!(
                        "{}: expected one of {}, found \"{tag}\"",
                        join(path, "kind"),
                        tags.join(", ")
                    )),
                },
                None => errors.push(format!(
                    "{}: missing or non-string (one of {})",
                    join(path, "kind"),
                    tags.join(", ")
                )),
            }
        }
        Ty::Array { item, min_len } => match value.as_array() {
            Some(items) => {
                if items.len() < *min_len {
                    errors.push(format!(
                        "{path}: needs at least {min_len} entries, got {}",
                        items.len()
                    ));
                }
                for (i, v) in items.iter().enumerate() {
                    check(v, item, &format!("{path}[{i}]"), errors);
                }
            }
            None => errors.push(format!(
                "{path}: expected an array, found {}",
                describe(value)
            )),
        },
        Ty::Pair(item) => match value.as_array() {
            Some(items) if items.len() == 2 => {
                for (i, v) in items.iter().enumerate() {
                    check(v, item, &format!("{path}[{i}]"), errors);
                }
            }
            _ => errors.push(format!("{path}: expected a two-element array")),
        },
    }
}
