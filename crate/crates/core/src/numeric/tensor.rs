use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::fixed::{CValue, Scalar};
use super::NumericError;

/// Element type of an operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Real,
    Complex,
}

impl DType {
    pub fn is_complex(self) -> bool {
        self == DType::Complex
    }

    /// SRAM words per element: complex values occupy a (re, im) pair.
    pub fn words(self) -> u8 {
        match self {
            DType::Real => 1,
            DType::Complex => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::Real => "real",
            DType::Complex => "complex",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DType {
    type Err = NumericError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "r" => Ok(DType::Real),
            "complex" | "c" => Ok(DType::Complex),
            other => Err(NumericError::Parse(format!("unknown dtype `{other}`"))),
        }
    }
}

/// Row-major 2-D array of fixed-point values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    kind: DType,
    data: Vec<CValue>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, kind: DType, data: Vec<CValue>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::Shape(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        if kind == DType::Real && data.iter().any(|v| !v.is_real()) {
            return Err(NumericError::Shape("real tensor with nonzero imaginary part".into()));
        }
        Ok(Tensor { rows, cols, kind, data })
    }

    pub fn zeros(rows: usize, cols: usize, kind: DType) -> Self {
        Tensor { rows, cols, kind, data: vec![CValue::ZERO; rows * cols] }
    }

    pub fn from_fn<F>(rows: usize, cols: usize, kind: DType, mut f: F) -> Result<Self, NumericError>
    where
        F: FnMut(usize, usize) -> Result<CValue, NumericError>,
    {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c)?);
            }
        }
        Tensor::new(rows, cols, kind, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn kind(&self) -> DType {
        self.kind
    }

    pub fn data(&self) -> &[CValue] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> CValue {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: CValue) -> Result<(), NumericError> {
        if self.kind == DType::Real && !v.is_real() {
            return Err(NumericError::Shape("complex value stored in real tensor".into()));
        }
        self.data[r * self.cols + c] = v;
        Ok(())
    }

    pub fn transpose(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Tensor { rows: self.cols, cols: self.rows, kind: self.kind, data }
    }

    pub fn column(&self, c: usize) -> Tensor {
        let data = (0..self.rows).map(|r| self.get(r, c)).collect();
        Tensor { rows: self.rows, cols: 1, kind: self.kind, data }
    }

    /// Writes the CSV layout: a `rows,cols,kind` header line, then one
    /// `re,im` line of raw Q1.15 integers per cell in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},{},{}", self.rows, self.cols, self.kind)?;
        for v in &self.data {
            writeln!(w, "{},{}", v.re.raw(), v.im.raw())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, NumericError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| NumericError::Parse("empty tensor file".into()))?
            .map_err(|e| NumericError::Parse(e.to_string()))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(NumericError::Parse(format!("bad header `{header}`")));
        }
        let rows: usize = fields[0].parse().map_err(|_| NumericError::Parse("rows".into()))?;
        let cols: usize = fields[1].parse().map_err(|_| NumericError::Parse("cols".into()))?;
        let kind: DType = fields[2].parse()?;
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line.map_err(|e| NumericError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (re, im) = line
                .split_once(',')
                .ok_or_else(|| NumericError::Parse(format!("bad cell `{line}`")))?;
            let re: i64 = re.trim().parse().map_err(|_| NumericError::Parse(format!("bad cell `{line}`")))?;
            let im: i64 = im.trim().parse().map_err(|_| NumericError::Parse(format!("bad cell `{line}`")))?;
            data.push(CValue::new(Scalar::try_from_raw(re)?, Scalar::try_from_raw(im)?));
        }
        Tensor::new(rows, cols, kind, data)
    }
}

/// Row-major real matrix for the floating-point kernels (triangular solve
/// and Cholesky).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(FMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = FMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        FMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> FMatrix {
        FMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &FMatrix) -> FMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        FMatrix::from_fn(self.rows, other.cols, |r, c| {
            (0..self.cols).map(|k| self.get(r, k) * other.get(k, c)).sum()
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max-abs norm of `self - other`.
    pub fn max_abs_diff(&self, other: &FMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},{},float", self.rows, self.cols)?;
        for v in &self.data {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_tensor_rejects_imaginary() {
        let v = CValue::from_raw(1, 1);
        assert!(Tensor::new(1, 1, DType::Real, vec![v]).is_err());
        assert!(Tensor::new(1, 1, DType::Complex, vec![v]).is_ok());
        assert!(Tensor::new(2, 1, DType::Complex, vec![v]).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = Tensor::new(1, 2, DType::Complex, vec![CValue::from_raw(3, -4), CValue::from_raw(0, 7)]).unwrap();
        let s = t.to_csv_string();
        assert_eq!(s, "1,2,complex\n3,-4\n0,7\n");
        let back = Tensor::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(Tensor::read_csv("2,1,real\n1,0\n".as_bytes()).is_err());
        assert!(Tensor::read_csv("1,1,quaternion\n1,0\n".as_bytes()).is_err());
        assert!(Tensor::read_csv("1,1,real\n99999,0\n".as_bytes()).is_err());
    }

    #[test]
    fn transpose_twice() {
        let t = Tensor::from_fn(2, 3, DType::Real, |r, c| Ok(CValue::from_raw((r * 3 + c) as i16, 0))).unwrap();
        assert_eq!(t.transpose().get(2, 1), t.get(1, 2));
        assert_eq!(t.transpose().transpose(), t);
    }
}
