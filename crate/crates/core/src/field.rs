use crate::Vec3;

/// A vector field that can be sampled at arbitrary points.
pub trait VectorField: Sync {
    fn sample(&self, x: &Vec3) -> Vec3;
}

impl<F> VectorField for F
where
    F: Fn(&Vec3) -> Vec3 + Sync,
{
    fn sample(&self, x: &Vec3) -> Vec3 {
        self(x)
    }
}

/// Rotation of a field: `x -> R f(R^T x)`.
pub struct Rotated<'a, F: ?Sized> {
    pub field: &'a F,
    pub rotation: nalgebra::Rotation3<f64>,
}

impl<F: VectorField + ?Sized> VectorField for Rotated<'_, F> {
    fn sample(&self, x: &Vec3) -> Vec3 {
        self.rotation * self.field.sample(&(self.rotation.inverse() * x))
    }
}
