//! Spatial multiplexing geometry: how far apart two emitters must be so that
//! their images through the condenser lens land on different shutter pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid optical setup: {0}")]
    InvalidSetup(String),
}

/// Lens, shutter and emitter-plane geometry. All lengths are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalSetup {
    /// Center-to-center pixel pitch (side length of a square pixel).
    pub d: f64,
    /// Emitter-to-lens distance.
    pub s1: f64,
    /// Lens-to-shutter distance. Recorded for completeness; no formula uses it.
    pub s2: f64,
    /// Back focal length of the condenser lens.
    pub bfl: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl OpticalSetup {
    /// The 1x2 laboratory prototype: d = 3.6 cm, S1 = 15.5 cm, S2 = 8.2 cm, BFL = 3.75 cm.
    pub fn prototype() -> Self {
        OpticalSetup { d: 0.036, s1: 0.155, s2: 0.082, bfl: 0.0375, grid_rows: 1, grid_cols: 2 }
    }

    pub fn grid_pixels(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidSetup(msg.to_string()));
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad("pixel pitch d must be positive");
        }
        if !(self.s1 > 0.0 && self.s1.is_finite()) {
            return bad("emitter distance S1 must be positive");
        }
        if !(self.bfl > 0.0 && self.bfl.is_finite()) {
            return bad("back focal length must be positive");
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("shutter grid needs at least one row and one column");
        }
        if self.s1 <= self.bfl {
            return bad("emitter must sit beyond the focal length (S1 > BFL)");
        }
        Ok(())
    }

    /// Lateral magnification from the emitter plane to the shutter plane.
    pub fn magnification(&self) -> f64 {
        self.bfl / self.s1
    }
}

/// Emitter positions `(x, y)` in the plane at distance S1 from the lens, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterPlacement {
    pub positions: Vec<(f64, f64)>,
}

impl EmitterPlacement {
    /// Places `n` emitters on the x axis, centered on the optical axis, `spacing` apart.
    pub fn row(n: usize, spacing: f64) -> Self {
        let offset = (n as f64 - 1.0) / 2.0;
        EmitterPlacement { positions: (0..n).map(|i| ((i as f64 - offset) * spacing, 0.0)).collect() }
    }
}

/// Why a placement cannot be spatially multiplexed on the given shutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasible {
    /// Two emitter images fall inside the same pixel.
    SamePixel { first: usize, second: usize, pixel: usize },
    /// Images land on different pixels but the emitters are closer than the
    /// minimum separation along both axes, so their spots overlap a boundary.
    TooClose { first: usize, second: usize },
    /// An image falls outside the shutter grid.
    OutsideGrid { emitter: usize },
}

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasible::SamePixel { first, second, pixel } => {
                write!(f, "emitters {first} and {second} both image onto pixel {pixel}")
            }
            Infeasible::TooClose { first, second } => {
                write!(f, "emitters {first} and {second} are closer than the minimum separation")
            }
            Infeasible::OutsideGrid { emitter } => {
                write!(f, "emitter {emitter} images outside the shutter grid")
            }
        }
    }
}

/// Minimum emitter separation `h = d * S1 / BFL` in meters.
pub fn min_separation(setup: &OpticalSetup) -> Result<f64, GeometryError> {
    setup.validate()?;
    Ok(setup.d * setup.s1 / setup.bfl)
}

/// Minimum angular separation `2 * atan(h / (2 * S1))` in degrees.
pub fn min_angle(setup: &OpticalSetup) -> Result<f64, GeometryError> {
    let h = min_separation(setup)?;
    Ok((2.0 * (h / (2.0 * setup.s1)).atan()).to_degrees())
}

/// Pixel index containing an image point, or `None` if it is off the grid.
///
/// The grid is centered on the optical axis; each axis uses half-open cells
/// `[k*d, (k+1)*d)`, so a point on a boundary belongs to the higher index.
/// Pixels are numbered row-major.
pub fn pixel_at(setup: &OpticalSetup, x: f64, y: f64) -> Option<usize> {
    let cell = |coord: f64, count: usize| -> Option<usize> {
        let rel = coord + count as f64 * setup.d / 2.0;
        let k = (rel / setup.d).floor();
        (k >= 0.0 && k < count as f64).then_some(k as usize)
    };
    let col = cell(x, setup.grid_cols)?;
    let row = cell(y, setup.grid_rows)?;
    Some(row * setup.grid_cols + col)
}

/// Assigns every emitter to the pixel its image falls on.
///
/// The outer `Result` reports an invalid setup; the inner one reports an
/// infeasible placement.
pub fn map_emitters_to_pixels(
    setup: &OpticalSetup,
    placement: &EmitterPlacement,
) -> Result<Result<Vec<usize>, Infeasible>, GeometryError> {
    let h = min_separation(setup)?;
    let m = setup.magnification();

    let mut pixels = Vec::with_capacity(placement.positions.len());
    for (i, &(x, y)) in placement.positions.iter().enumerate() {
        match pixel_at(setup, x * m, y * m) {
            Some(p) => {
                if let Some(first) = pixels.iter().position(|&q| q == p) {
                    return Ok(Err(Infeasible::SamePixel { first, second: i, pixel: p }));
                }
                pixels.push(p);
            }
            None => return Ok(Err(Infeasible::OutsideGrid { emitter: i })),
        }
    }

    // Separations of exactly h must pass despite rounding in the position arithmetic.
    let tol = h * 1e-9;
    let pos = &placement.positions;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let dx = (pos[i].0 - pos[j].0).abs();
            let dy = (pos[i].1 - pos[j].1).abs();
            if dx.max(dy) + tol < h {
                return Ok(Err(Infeasible::TooClose { first: i, second: j }));
            }
        }
    }
    Ok(Ok(pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(d: f64, s1: f64, bfl: f64) -> OpticalSetup {
        OpticalSetup { d, s1, s2: 0.082, bfl, grid_rows: 1, grid_cols: 2 }
    }

    #[test]
    fn prototype_separation() {
        let h = min_separation(&OpticalSetup::prototype()).unwrap();
        assert!((h - 0.1488).abs() < 1e-12, "h = {h}");
    }

    #[test]
    fn prototype_angle() {
        let a = min_angle(&OpticalSetup::prototype()).unwrap();
        assert!((a - 51.2).abs() <= 0.1, "alpha = {a}");
    }

    #[test]
    fn ten_meter_range() {
        let h = min_separation(&setup(0.036, 10.0, 0.0375)).unwrap();
        assert!((h - 9.6).abs() < 1e-12);
    }

    #[test]
    fn vanishing_pitch() {
        let s = setup(1e-15, 0.155, 0.0375);
        assert!(min_separation(&s).unwrap() < 1e-12);
        assert!(min_angle(&s).unwrap() < 1e-9);
    }

    #[test]
    fn right_angle_when_h_is_twice_s1() {
        // d = 2 * BFL gives h = 2 * S1.
        let a = min_angle(&setup(0.075, 0.155, 0.0375)).unwrap();
        assert!((a - 90.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_setups() {
        assert!(min_separation(&setup(0.0, 0.155, 0.0375)).is_err());
        assert!(min_separation(&setup(0.036, 0.02, 0.0375)).is_err());
        assert!(min_separation(&setup(0.036, 0.155, -1.0)).is_err());
        let mut s = OpticalSetup::prototype();
        s.grid_cols = 0;
        assert!(min_angle(&s).is_err());
    }

    #[test]
    fn exact_separation_maps_to_both_pixels() {
        let s = OpticalSetup::prototype();
        let h = min_separation(&s).unwrap();
        let mapping = map_emitters_to_pixels(&s, &EmitterPlacement::row(2, h)).unwrap();
        assert_eq!(mapping, Ok(vec![0, 1]));
    }

    #[test]
    fn coincident_emitters_share_a_pixel() {
        let s = OpticalSetup::prototype();
        let placement = EmitterPlacement { positions: vec![(0.01, 0.0), (0.01, 0.0)] };
        let mapping = map_emitters_to_pixels(&s, &placement).unwrap();
        assert!(matches!(mapping, Err(Infeasible::SamePixel { first: 0, second: 1, .. })));
    }

    #[test]
    fn half_separation_shares_a_pixel() {
        let s = OpticalSetup::prototype();
        let h = min_separation(&s).unwrap();
        let placement = EmitterPlacement { positions: vec![(0.0, 0.0), (h / 2.0, 0.0)] };
        let mapping = map_emitters_to_pixels(&s, &placement).unwrap();
        assert!(matches!(mapping, Err(Infeasible::SamePixel { pixel: 1, .. })));
    }

    #[test]
    fn straddling_a_boundary_is_still_too_close() {
        let s = OpticalSetup::prototype();
        let h = min_separation(&s).unwrap();
        let mapping = map_emitters_to_pixels(&s, &EmitterPlacement::row(2, h / 2.0)).unwrap();
        assert_eq!(mapping, Err(Infeasible::TooClose { first: 0, second: 1 }));
    }

    #[test]
    fn off_grid_image() {
        let s = OpticalSetup::prototype();
        let placement = EmitterPlacement { positions: vec![(1.0, 0.0)] };
        let mapping = map_emitters_to_pixels(&s, &placement).unwrap();
        assert_eq!(mapping, Err(Infeasible::OutsideGrid { emitter: 0 }));
    }

    #[test]
    fn boundary_goes_to_higher_index() {
        let s = OpticalSetup::prototype();
        assert_eq!(pixel_at(&s, 0.0, 0.0), Some(1));
        assert_eq!(pixel_at(&s, -s.d, 0.0), Some(0));
        assert_eq!(pixel_at(&s, s.d, 0.0), None);
        let square = OpticalSetup { grid_rows: 2, grid_cols: 2, ..s };
        assert_eq!(pixel_at(&square, -0.01, -0.01), Some(0));
        assert_eq!(pixel_at(&square, 0.01, 0.01), Some(3));
    }

    proptest! {
        #[test]
        fn separation_is_homogeneous(
            d in 0.001f64..0.1, s1 in 0.2f64..20.0, bfl in 0.01f64..0.15, k in 0.1f64..10.0
        ) {
            let base = min_separation(&setup(d, s1, bfl)).unwrap();
            let by_d = min_separation(&setup(d * k, s1, bfl)).unwrap();
            prop_assert!((by_d - k * base).abs() <= 1e-9 * by_d.abs().max(1.0));
            let by_s1 = min_separation(&setup(d, s1 * k.max(1.0), bfl)).unwrap();
            prop_assert!((by_s1 - k.max(1.0) * base).abs() <= 1e-9 * by_s1.abs().max(1.0));
            let by_bfl = min_separation(&setup(d, s1, bfl / k.max(1.0))).unwrap();
            prop_assert!((by_bfl - k.max(1.0) * base).abs() <= 1e-9 * by_bfl.abs().max(1.0));
        }

        #[test]
        fn angle_increases_with_pitch(d in 0.001f64..0.1, delta in 1e-4f64..0.05) {
            let a = min_angle(&setup(d, 0.155, 0.0375)).unwrap();
            let b = min_angle(&setup(d + delta, 0.155, 0.0375)).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn wide_enough_grid_maps_injectively(n in 1usize..8, extra in 1.0f64..1.9) {
            let s = OpticalSetup { grid_cols: 2 * n, ..OpticalSetup::prototype() };
            let h = min_separation(&s).unwrap();
            let mapping = map_emitters_to_pixels(&s, &EmitterPlacement::row(n, h * extra)).unwrap();
            let pixels = mapping.unwrap();
            let mut sorted = pixels.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), n);
        }

        #[test]
        fn sub_minimum_pairs_are_infeasible(frac in 0.0f64..0.999, x0 in -0.05f64..0.05) {
            let s = OpticalSetup { grid_cols: 8, ..OpticalSetup::prototype() };
            let h = min_separation(&s).unwrap();
            let placement = EmitterPlacement { positions: vec![(x0, 0.0), (x0 + frac * h, 0.0)] };
            prop_assert!(map_emitters_to_pixels(&s, &placement).unwrap().is_err());
        }
    }
}
