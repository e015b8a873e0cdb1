use num_complex::Complex64;

use crate::error::{Axis, Error, Result};

fn check_dims(width: usize, height: usize, len: usize, pitch: f64) -> Result<()> {
    if width == 0 {
        return Err(Error::Dimension {
            axis: Axis::Width,
            value: width,
        });
    }
    if height == 0 {
        return Err(Error::Dimension {
            axis: Axis::Height,
            value: height,
        });
    }
    if len != width * height {
        return Err(Error::Shape(format!(
            "data length {len} != {width}x{height}"
        )));
    }
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(Error::Parameter(format!("pitch must be > 0, got {pitch}")));
    }
    Ok(())
}

/// Sampled complex field on a uniform raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    width: usize,
    height: usize,
    pitch: f64,
    data: Vec<Complex64>,
}

/// Sampled real field (intensity, autocorrelation, ...) on a uniform raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    width: usize,
    height: usize,
    pitch: f64,
    data: Vec<f64>,
}

macro_rules! grid_common {
    ($ty:ident, $elem:ty, $zero:expr) => {
        impl $ty {
            pub fn new(width: usize, height: usize, pitch: f64, data: Vec<$elem>) -> Result<Self> {
                check_dims(width, height, data.len(), pitch)?;
                Ok(Self {
                    width,
                    height,
                    pitch,
                    data,
                })
            }

            pub fn filled(width: usize, height: usize, pitch: f64, value: $elem) -> Result<Self> {
                Self::new(width, height, pitch, vec![value; width * height])
            }

            pub fn zeros(width: usize, height: usize, pitch: f64) -> Result<Self> {
                Self::filled(width, height, pitch, $zero)
            }

            /// Builds a grid from `f(x, y)`.
            pub fn from_fn(
                width: usize,
                height: usize,
                pitch: f64,
                mut f: impl FnMut(usize, usize) -> $elem,
            ) -> Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::new(width, height, pitch, data)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn pitch(&self) -> f64 {
                self.pitch
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            pub fn get(&self, x: usize, y: usize) -> $elem {
                self.data[y * self.width + x]
            }

            pub fn set(&mut self, x: usize, y: usize, value: $elem) {
                self.data[y * self.width + x] = value;
            }

            pub fn same_shape<T: GridShape>(&self, other: &T) -> bool {
                self.width == other.shape().0
                    && self.height == other.shape().1
                    && self.pitch == other.shape().2
            }

            pub fn ensure_same_shape<T: GridShape>(&self, other: &T) -> Result<()> {
                if self.same_shape(other) {
                    Ok(())
                } else {
                    let (w, h, p) = other.shape();
                    Err(Error::Shape(format!(
                        "{}x{} @ {} m vs {}x{} @ {} m",
                        self.width, self.height, self.pitch, w, h, p
                    )))
                }
            }
        }

        impl GridShape for $ty {
            fn shape(&self) -> (usize, usize, f64) {
                (self.width, self.height, self.pitch)
            }
        }
    };
}

/// Width, height and pitch of any grid.
pub trait GridShape {
    fn shape(&self) -> (usize, usize, f64);
}

grid_common!(ComplexGrid, Complex64, Complex64::new(0.0, 0.0));
grid_common!(RealGrid, f64, 0.0);

impl ComplexGrid {
    pub fn from_real(g: &RealGrid) -> Self {
        Self {
            width: g.width,
            height: g.height,
            pitch: g.pitch,
            data: g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn re(&self) -> RealGrid {
        self.map_real(|c| c.re)
    }

    pub fn map_real(&self, f: impl Fn(Complex64) -> f64) -> RealGrid {
        RealGrid {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

impl RealGrid {
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64;
        var.sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        RealGrid {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Signed circular lag of index `i` on an axis of length `n`:
/// `0..=n/2` map to themselves, the rest wrap to negative lags.
pub fn signed_lag(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Lag radius (pixels) of cell `(x, y)` with zero lag at `(0, 0)`.
pub fn lag_radius(x: usize, y: usize, width: usize, height: usize) -> f64 {
    let dx = signed_lag(x, width) as f64;
    let dy = signed_lag(y, height) as f64;
    dx.hypot(dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            RealGrid::new(0, 4, 1.0, vec![]),
            Err(Error::Dimension {
                axis: Axis::Width,
                ..
            })
        ));
        assert!(matches!(
            RealGrid::new(4, 0, 1.0, vec![]),
            Err(Error::Dimension {
                axis: Axis::Height,
                ..
            })
        ));
        assert!(matches!(RealGrid::new(2, 2, 1.0, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(RealGrid::new(2, 2, 0.0, vec![0.0; 4]), Err(Error::Parameter(_))));
    }

    #[test]
    fn lags_wrap() {
        assert_eq!(signed_lag(0, 8), 0);
        assert_eq!(signed_lag(4, 8), 4);
        assert_eq!(signed_lag(5, 8), -3);
        assert_eq!(signed_lag(7, 8), -1);
        assert_eq!(lag_radius(7, 1, 8, 8), 2f64.sqrt());
    }
}
