use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Elu,
    Relu,
    Tanh,
    Log,
    Negate,
    Exp,
    Sqrt,
    Square,
    /// tanh approximation
    Gelu,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x < 0.0 {
        x.exp_m1()
    } else {
        x
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu_inner(x: f64) -> f64 {
    GELU_C * (x + 0.044715 * x * x * x)
}

impl UnaryOp {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Elu => elu(x),
            UnaryOp::Relu => x.max(0.0),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Log => x.ln(),
            UnaryOp::Negate => -x,
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Square => x * x,
            UnaryOp::Gelu => 0.5 * x * (1.0 + gelu_inner(x).tanh()),
        }
    }

    /// d(out)/d(in) given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Sigmoid => y * (1.0 - y),
            UnaryOp::Elu => {
                if x < 0.0 {
                    y + 1.0
                } else {
                    1.0
                }
            }
            UnaryOp::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Tanh => 1.0 - y * y,
            UnaryOp::Log => 1.0 / x,
            UnaryOp::Negate => -1.0,
            UnaryOp::Exp => y,
            UnaryOp::Sqrt => 0.5 / y,
            UnaryOp::Square => 2.0 * x,
            UnaryOp::Gelu => {
                let t = gelu_inner(x).tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
        }
    }
}

impl Tensor {
    pub fn elementwise(&self, op: UnaryOp) -> Result<Tensor> {
        match op {
            UnaryOp::Log => {
                if let Some(v) = self.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain(format!("log of non-positive value {v}")));
                }
            }
            UnaryOp::Sqrt => {
                if let Some(v) = self.data().iter().find(|&&v| v < 0.0) {
                    return Err(Error::Domain(format!("sqrt of negative value {v}")));
                }
            }
            _ => {}
        }
        Ok(self.map_unary(op))
    }

    fn map_unary(&self, op: UnaryOp) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| op.apply(x)).collect();
        let input = self.clone();
        let out = data.clone();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g| {
            let dx = input
                .data()
                .iter()
                .zip(&out)
                .zip(g)
                .map(|((&x, &y), &g)| g * op.derivative(x, y))
                .collect();
            vec![Some(dx)]
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map_unary(UnaryOp::Sigmoid)
    }

    pub fn elu(&self) -> Tensor {
        self.map_unary(UnaryOp::Elu)
    }

    pub fn relu(&self) -> Tensor {
        self.map_unary(UnaryOp::Relu)
    }

    pub fn tanh(&self) -> Tensor {
        self.map_unary(UnaryOp::Tanh)
    }

    pub fn neg(&self) -> Tensor {
        self.map_unary(UnaryOp::Negate)
    }

    pub fn exp(&self) -> Tensor {
        self.map_unary(UnaryOp::Exp)
    }

    pub fn gelu(&self) -> Tensor {
        self.map_unary(UnaryOp::Gelu)
    }

    pub fn square(&self) -> Tensor {
        self.map_unary(UnaryOp::Square)
    }

    pub fn log(&self) -> Result<Tensor> {
        self.elementwise(UnaryOp::Log)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.elementwise(UnaryOp::Sqrt)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g| {
            vec![Some(g.iter().map(|&g| g * c).collect())]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g| {
            vec![Some(g.to_vec())]
        })
    }
}
