use serde::{Deserialize, Serialize};

/// One scalar entry of a dictionary.
///
/// Indices refer to coordinates of the evaluation point: state coordinates
/// first, then (for input-augmented dictionaries) input coordinates. Every
/// kind has a closed-form value and gradient at the origin, which is what the
/// small-nonlinearity hypothesis and the Taylor-remainder transform need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFunction {
    /// Product of coordinates raised to the given exponents.
    Monomial {
        exponents: Vec<u32>,
    },
    Sine {
        index: usize,
    },
    Cosine {
        index: usize,
    },
    /// sin(x_i) - x_i
    SineRemainder {
        index: usize,
    },
    /// (cos(x_i) - 1) * x_j
    CosineRemainderProduct {
        cos_index: usize,
        factor_index: usize,
    },
    /// coefficient * product of factors
    ScaledProduct {
        coefficient: f64,
        factors: Vec<BasisFunction>,
    },
}

impl BasisFunction {
    pub fn monomial(exponents: &[u32]) -> Self {
        BasisFunction::Monomial {
            exponents: exponents.to_vec(),
        }
    }

    /// The single coordinate `x_index` as a monomial in `dim` variables.
    pub fn coordinate(index: usize, dim: usize) -> Self {
        let mut exponents = vec![0; dim];
        exponents[index] = 1;
        BasisFunction::Monomial { exponents }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            BasisFunction::Monomial { exponents } => exponents
                .iter()
                .zip(x)
                .filter(|(e, _)| **e > 0)
                .map(|(e, v)| v.powi(*e as i32))
                .product(),
            BasisFunction::Sine { index } => x[*index].sin(),
            BasisFunction::Cosine { index } => x[*index].cos(),
            BasisFunction::SineRemainder { index } => x[*index].sin() - x[*index],
            BasisFunction::CosineRemainderProduct {
                cos_index,
                factor_index,
            } => (x[*cos_index].cos() - 1.0) * x[*factor_index],
            BasisFunction::ScaledProduct {
                coefficient,
                factors,
            } => coefficient * factors.iter().map(|f| f.eval(x)).product::<f64>(),
        }
    }

    pub fn value_at_origin(&self) -> f64 {
        match self {
            BasisFunction::Monomial { exponents } => {
                if exponents.iter().all(|&e| e == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            BasisFunction::Cosine { .. } => 1.0,
            BasisFunction::Sine { .. }
            | BasisFunction::SineRemainder { .. }
            | BasisFunction::CosineRemainderProduct { .. } => 0.0,
            BasisFunction::ScaledProduct {
                coefficient,
                factors,
            } => {
                coefficient
                    * factors
                        .iter()
                        .map(BasisFunction::value_at_origin)
                        .product::<f64>()
            }
        }
    }

    /// Exact gradient at the origin in `dim` coordinates.
    pub fn gradient_at_origin(&self, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; dim];
        match self {
            BasisFunction::Monomial { exponents } => {
                let degree: u32 = exponents.iter().sum();
                if degree == 1 {
                    if let Some(i) = exponents.iter().position(|&e| e == 1) {
                        g[i] = 1.0;
                    }
                }
            }
            BasisFunction::Sine { index } => g[*index] = 1.0,
            BasisFunction::Cosine { .. }
            | BasisFunction::SineRemainder { .. }
            | BasisFunction::CosineRemainderProduct { .. } => {}
            BasisFunction::ScaledProduct {
                coefficient,
                factors,
            } => {
                // product rule: sum_k grad f_k(0) * prod_{j != k} f_j(0)
                let values: Vec<f64> = factors.iter().map(|f| f.value_at_origin()).collect();
                for (k, f) in factors.iter().enumerate() {
                    let others: f64 = values
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .map(|(_, v)| v)
                        .product();
                    if others == 0.0 {
                        continue;
                    }
                    for (gi, fi) in g.iter_mut().zip(f.gradient_at_origin(dim)) {
                        *gi += coefficient * others * fi;
                    }
                }
            }
        }
        g
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            BasisFunction::Monomial { exponents } => exponents.iter().rposition(|&e| e > 0),
            BasisFunction::Sine { index }
            | BasisFunction::Cosine { index }
            | BasisFunction::SineRemainder { index } => Some(*index),
            BasisFunction::CosineRemainderProduct {
                cos_index,
                factor_index,
            } => Some((*cos_index).max(*factor_index)),
            BasisFunction::ScaledProduct { factors, .. } => {
                factors.iter().filter_map(BasisFunction::max_index).max()
            }
        }
    }

    /// Monomial exponent vectors must match the coordinate dimension.
    pub(crate) fn check_dim(&self, dim: usize) -> Result<(), String> {
        match self {
            BasisFunction::Monomial { exponents } if exponents.len() != dim => Err(format!(
                "monomial has {} exponents, expected {dim}",
                exponents.len()
            )),
            BasisFunction::ScaledProduct { factors, .. } => {
                factors.iter().try_for_each(|f| f.check_dim(dim))
            }
            _ => match self.max_index() {
                Some(i) if i >= dim => Err(format!("coordinate index {i} out of range {dim}")),
                _ => Ok(()),
            },
        }
    }

    /// Affine in the coordinates (degree <= 1 monomial, possibly scaled).
    pub fn is_affine(&self) -> bool {
        match self {
            BasisFunction::Monomial { exponents } => exponents.iter().sum::<u32>() <= 1,
            BasisFunction::ScaledProduct { factors, .. } => {
                let mut degree = 0u32;
                for f in factors {
                    match f {
                        BasisFunction::Monomial { exponents } => {
                            degree += exponents.iter().sum::<u32>()
                        }
                        _ => return false,
                    }
                }
                degree <= 1
            }
            _ => false,
        }
    }

    /// Human-readable label given coordinate names.
    pub fn label(&self, names: &[String]) -> String {
        let name = |i: usize| {
            names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("c{}", i + 1))
        };
        match self {
            BasisFunction::Monomial { exponents } => {
                let parts: Vec<String> = exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| {
                        if e == 1 {
                            name(i)
                        } else {
                            format!("{}^{e}", name(i))
                        }
                    })
                    .collect();
                if parts.is_empty() {
                    "1".into()
                } else {
                    parts.join("*")
                }
            }
            BasisFunction::Sine { index } => format!("sin({})", name(*index)),
            BasisFunction::Cosine { index } => format!("cos({})", name(*index)),
            BasisFunction::SineRemainder { index } => {
                format!("sin({0})-{0}", name(*index))
            }
            BasisFunction::CosineRemainderProduct {
                cos_index,
                factor_index,
            } => format!("(cos({})-1)*{}", name(*cos_index), name(*factor_index)),
            BasisFunction::ScaledProduct {
                coefficient,
                factors,
            } => {
                let body: Vec<String> = factors.iter().map(|f| f.label(names)).collect();
                if *coefficient == 1.0 {
                    body.join("*")
                } else {
                    format!("{coefficient}*{}", body.join("*"))
                }
            }
        }
    }

    /// Remainder form `f(x) - grad f(0) x` expressed in the closed kind
    /// vocabulary, or `None` when no such form exists.
    pub(crate) fn remainder(&self, dim: usize) -> Option<BasisFunction> {
        if self.gradient_at_origin(dim).iter().all(|&g| g == 0.0) {
            return Some(self.clone());
        }
        match self {
            BasisFunction::Sine { index } => Some(BasisFunction::SineRemainder { index: *index }),
            BasisFunction::ScaledProduct {
                coefficient,
                factors,
            } => {
                let inner = match factors.as_slice() {
                    [BasisFunction::Sine { index }] => {
                        BasisFunction::SineRemainder { index: *index }
                    }
                    [BasisFunction::Cosine { index: c }, m @ BasisFunction::Monomial { .. }]
                    | [m @ BasisFunction::Monomial { .. }, BasisFunction::Cosine { index: c }] => {
                        let j = single_coordinate(m)?;
                        BasisFunction::CosineRemainderProduct {
                            cos_index: *c,
                            factor_index: j,
                        }
                    }
                    _ => return None,
                };
                if *coefficient == 1.0 {
                    Some(inner)
                } else {
                    Some(BasisFunction::ScaledProduct {
                        coefficient: *coefficient,
                        factors: vec![inner],
                    })
                }
            }
            _ => None,
        }
    }
}

fn single_coordinate(f: &BasisFunction) -> Option<usize> {
    match f {
        BasisFunction::Monomial { exponents } if exponents.iter().sum::<u32>() == 1 => {
            exponents.iter().position(|&e| e == 1)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_times_x3() -> BasisFunction {
        BasisFunction::ScaledProduct {
            coefficient: 1.0,
            factors: vec![
                BasisFunction::Cosine { index: 0 },
                BasisFunction::coordinate(2, 3),
            ],
        }
    }

    #[test]
    fn monomial_eval_and_gradient() {
        let f = BasisFunction::monomial(&[1, 2]);
        assert_eq!(f.eval(&[2.0, 3.0]), 18.0);
        assert_eq!(f.gradient_at_origin(2), vec![0.0, 0.0]);
        assert_eq!(
            BasisFunction::coordinate(1, 2).gradient_at_origin(2),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn product_rule_at_origin() {
        assert_eq!(cos_times_x3().gradient_at_origin(3), vec![0.0, 0.0, 1.0]);
        assert_eq!(cos_times_x3().value_at_origin(), 0.0);
        let ss = BasisFunction::ScaledProduct {
            coefficient: 2.0,
            factors: vec![
                BasisFunction::Sine { index: 0 },
                BasisFunction::Sine { index: 1 },
            ],
        };
        assert_eq!(ss.gradient_at_origin(2), vec![0.0, 0.0]);
    }

    #[test]
    fn remainders() {
        assert_eq!(
            BasisFunction::Sine { index: 0 }.remainder(2),
            Some(BasisFunction::SineRemainder { index: 0 })
        );
        assert_eq!(
            cos_times_x3().remainder(3),
            Some(BasisFunction::CosineRemainderProduct {
                cos_index: 0,
                factor_index: 2
            })
        );
        let mixed = BasisFunction::ScaledProduct {
            coefficient: 1.0,
            factors: vec![
                BasisFunction::Sine { index: 0 },
                BasisFunction::Cosine { index: 1 },
            ],
        };
        assert_eq!(mixed.remainder(2), None);
    }

    #[test]
    fn labels() {
        let names: Vec<String> = ["x1", "x2", "u1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(BasisFunction::monomial(&[2, 1, 0]).label(&names), "x1^2*x2");
        assert_eq!(cos_times_x3().label(&names), "cos(x1)*u1");
        assert_eq!(
            BasisFunction::SineRemainder { index: 0 }.label(&names),
            "sin(x1)-x1"
        );
    }

    #[test]
    fn serde_tagging() {
        let json = serde_json::to_string(&BasisFunction::Sine { index: 0 }).unwrap();
        assert_eq!(json, r#"{"kind":"sine","index":0}"#);
        let back: BasisFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, BasisFunction::Sine { index: 0 });
    }
}
