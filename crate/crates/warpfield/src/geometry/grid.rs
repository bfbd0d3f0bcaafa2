use super::point::Point3;
use super::GeometryError;

/// Regular scalar grid with values stored x-fastest:
/// `values[x + nx * (y + ny * z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    nx: usize,
    ny: usize,
    nz: usize,
    pub origin: Point3,
    pub voxel_size: f64,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(
        resolution: (usize, usize, usize),
        origin: Point3,
        voxel_size: f64,
        values: Vec<f64>,
    ) -> Result<ScalarGrid, GeometryError> {
        let (nx, ny, nz) = resolution;
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(GeometryError::InvalidGrid(format!(
                "resolution components must be >= 2, got {nx}x{ny}x{nz}"
            )));
        }
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(GeometryError::InvalidGrid(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if values.len() != nx * ny * nz {
            return Err(GeometryError::InvalidGrid(format!(
                "expected {} values for {nx}x{ny}x{nz}, got {}",
                nx * ny * nz,
                values.len()
            )));
        }
        if !origin.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(ScalarGrid { nx, ny, nz, origin, voxel_size, values })
    }

    /// Evaluate `f` at every grid position.
    pub fn from_fn(
        resolution: (usize, usize, usize),
        origin: Point3,
        voxel_size: f64,
        f: impl Fn(Point3) -> f64,
    ) -> Result<ScalarGrid, GeometryError> {
        let (nx, ny, nz) = resolution;
        let mut values = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = origin
                        + Point3::new(x as f64, y as f64, z as f64) * voxel_size;
                    values.push(f(p));
                }
            }
        }
        ScalarGrid::new(resolution, origin, voxel_size, values)
    }

    pub fn resolution(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        self.values[x + self.nx * (y + self.ny * z)]
    }

    #[inline]
    pub fn position(&self, x: usize, y: usize, z: usize) -> Point3 {
        self.origin + Point3::new(x as f64, y as f64, z as f64) * self.voxel_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
