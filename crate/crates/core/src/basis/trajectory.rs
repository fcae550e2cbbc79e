use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Raw experiment record.
///
/// `states` holds x(0..=T) as columns, `inputs` holds u(0..T). Optional
/// channels: derivative samples at x(0..T) for continuous-time data, the
/// disturbance actually applied (known only to a simulator), and a scalar
/// output sequence which may run past the last state sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    pub derivatives: Option<DMatrix<f64>>,
    pub disturbances: Option<DMatrix<f64>>,
    pub outputs: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(states: DMatrix<f64>, inputs: DMatrix<f64>) -> Result<Self> {
        let t = Self {
            states,
            inputs,
            derivatives: None,
            disturbances: None,
            outputs: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// Number of transitions T.
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if self.states.ncols() != t + 1 {
            return Err(Error::input(format!(
                "{} state samples for {t} inputs, expected {}",
                self.states.ncols(),
                t + 1
            )));
        }
        if let Some(d) = &self.derivatives {
            if d.nrows() != self.state_dim() || d.ncols() != t {
                return Err(Error::input("derivative samples must be n x T"));
            }
        }
        if let Some(d) = &self.disturbances {
            if d.ncols() != t {
                return Err(Error::input("disturbance samples must have T columns"));
            }
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        let all_finite = finite(&self.states)
            && finite(&self.inputs)
            && self.derivatives.as_ref().is_none_or(finite)
            && self.disturbances.as_ref().is_none_or(finite)
            && self
                .outputs
                .as_ref()
                .is_none_or(|y| y.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::input("trajectory contains non-finite entries"));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        let s = self.disturbances.as_ref().map_or(0, |d| d.nrows());
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        if self.derivatives.is_some() {
            header.extend((1..=n).map(|i| format!("xdot{i}")));
        }
        header.extend((1..=s).map(|i| format!("d{i}")));
        if self.outputs.is_some() {
            header.push("y".into());
        }
        let rows = (self.len() + 1).max(self.outputs.as_ref().map_or(0, Vec::len));
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&header)?;
        let cell = |m: &DMatrix<f64>, i: usize, k: usize| {
            if k < m.ncols() {
                m[(i, k)].to_string()
            } else {
                String::new()
            }
        };
        for k in 0..rows {
            let mut rec = vec![k.to_string()];
            rec.extend((0..n).map(|i| cell(&self.states, i, k)));
            rec.extend((0..m).map(|i| cell(&self.inputs, i, k)));
            if let Some(d) = &self.derivatives {
                rec.extend((0..n).map(|i| cell(d, i, k)));
            }
            if let Some(d) = &self.disturbances {
                rec.extend((0..s).map(|i| cell(d, i, k)));
            }
            if let Some(y) = &self.outputs {
                rec.push(y.get(k).map(f64::to_string).unwrap_or_default());
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let cols = |prefix: &str| -> Vec<usize> {
            let mut found: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(c, h)| {
                    h.strip_prefix(prefix)
                        .and_then(|rest| rest.parse::<usize>().ok())
                        .map(|i| (i, c))
                })
                .collect();
            found.sort();
            found.into_iter().map(|(_, c)| c).collect()
        };
        let xc = cols("x");
        let uc = cols("u");
        let xdc = cols("xdot");
        let dc = cols("d");
        let yc = header.iter().position(|h| h == "y");
        if xc.is_empty() {
            return Err(Error::Parse("trajectory CSV has no state columns".into()));
        }

        let mut table: Vec<Vec<Option<f64>>> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    let f = f.trim();
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>()
                            .map(Some)
                            .map_err(|e| Error::Parse(format!("bad number {f:?}: {e}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(row);
        }

        let block = |cols: &[usize]| -> Result<DMatrix<f64>> {
            let len = table
                .iter()
                .take_while(|row| {
                    cols.iter()
                        .all(|&c| row.get(c).copied().flatten().is_some())
                })
                .count();
            if table[len..].iter().any(|row| {
                cols.iter()
                    .any(|&c| row.get(c).copied().flatten().is_some())
            }) {
                return Err(Error::Parse("gap inside a trajectory channel".into()));
            }
            Ok(DMatrix::from_fn(cols.len(), len, |i, k| {
                table[k][cols[i]].unwrap_or_default()
            }))
        };

        let states = block(&xc)?;
        let inputs = if uc.is_empty() {
            DMatrix::zeros(0, states.ncols().saturating_sub(1))
        } else {
            block(&uc)?
        };
        let derivatives = if xdc.is_empty() {
            None
        } else {
            Some(block(&xdc)?)
        };
        let disturbances = if dc.is_empty() {
            None
        } else {
            Some(block(&dc)?)
        };
        let outputs = match yc {
            Some(c) => Some(block(&[c])?.row(0).iter().copied().collect()),
            None => None,
        };
        let t = Self {
            states,
            inputs,
            derivatives,
            disturbances,
            outputs,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_all_channels() {
        let mut t = Trajectory::new(
            DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, -1.0, 1e-17, 2.5]),
            DMatrix::from_row_slice(1, 2, &[0.5, -0.25]),
        )
        .unwrap();
        t.derivatives = Some(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        t.disturbances = Some(DMatrix::from_row_slice(1, 2, &[0.001, -0.002]));
        t.outputs = Some(vec![1.0, 2.0, 3.0, 4.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,x1,x2,u1,xdot1,xdot2,d1,y\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        let r = Trajectory::new(DMatrix::zeros(2, 3), DMatrix::zeros(1, 3));
        assert!(r.is_err());
        let nan = Trajectory::new(DMatrix::from_element(1, 2, f64::NAN), DMatrix::zeros(1, 1));
        assert!(nan.is_err());
    }
}
