//! Synthetic vehicular scene generation.
//!
//! A base station with a camera and a phased array (fields of view aligned)
//! watches a vehicle driving along a straight road segment. Each sample
//! carries the vehicle's camera-plane bounding-box features, a noisy GPS
//! observation of its position, and the ground-truth beam powers computed
//! from the LOS channel geometry.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::phy::{self, ArrayGeometry};
use crate::scalar::Real;

const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Nominal vehicle dimensions used for the projected bounding box (meters).
const VEHICLE_LENGTH_M: f64 = 4.5;
const VEHICLE_HEIGHT_M: f64 = 1.8;

/// Camera intrinsics. The horizontal field of view is shared with the
/// antenna array sector by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "F: crate::scalar::Real"))]
pub struct CameraConfig<F = f64> {
    pub width_px: u32,
    pub height_px: u32,
    pub channels: u32,
    pub horizontal_fov: F,
    pub mount_height: F,
}

impl<F: Real> Default for CameraConfig<F> {
    fn default() -> Self {
        Self {
            width_px: 1280,
            height_px: 720,
            channels: 3,
            horizontal_fov: F::of(110f64.to_radians()),
            mount_height: F::of(5.0),
        }
    }
}

/// Scene layout: base-station pose, road segment, GPS noise model, and the
/// geographic anchor for meter/degree conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "F: crate::scalar::Real"))]
pub struct SceneConfig<F = f64> {
    pub bs_position: [F; 3],
    pub bs_boresight_azimuth: F,
    pub road_start: [F; 2],
    pub road_end: [F; 2],
    pub camera: CameraConfig<F>,
    pub gps_noise_std: F,
    /// Std of the Gaussian detector jitter added to each bounding-box
    /// component of detected vehicles, in normalized image units.
    pub bbox_noise_std: F,
    /// Half-width of the uniform lateral jitter applied to trajectory
    /// points, meters.
    pub lateral_jitter: F,
    /// Reference (latitude, longitude) in degrees for the local
    /// equirectangular conversion.
    pub geo_anchor: [F; 2],
    pub rng_seed: u64,
}

impl<F: Real> Default for SceneConfig<F> {
    fn default() -> Self {
        Self {
            bs_position: [F::zero(), F::zero(), F::of(5.0)],
            bs_boresight_azimuth: F::of(PI / 2.0),
            road_start: [F::of(-14.0), F::of(10.0)],
            road_end: [F::of(14.0), F::of(10.0)],
            camera: CameraConfig::default(),
            gps_noise_std: F::of(2.0),
            bbox_noise_std: F::of(0.01),
            lateral_jitter: F::of(0.5),
            geo_anchor: [F::of(33.42), F::of(-111.93)],
            rng_seed: 0,
        }
    }
}

impl<F: Real> SceneConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.road_start == self.road_end {
            return Err(Error::Config("road segment endpoints coincide".into()));
        }
        if self.gps_noise_std < F::zero() {
            return Err(Error::Config("gps_noise_std must be >= 0".into()));
        }
        if self.bbox_noise_std < F::zero() {
            return Err(Error::Config("bbox_noise_std must be >= 0".into()));
        }
        let fov = self.camera.horizontal_fov;
        if fov <= F::zero() || fov >= F::of(PI) {
            return Err(Error::Config("horizontal_fov must be in (0, pi)".into()));
        }
        if self.camera.width_px < 1 || self.camera.height_px < 1 {
            return Err(Error::Config("camera resolution must be >= 1 px".into()));
        }
        Ok(())
    }
}

/// Vehicle appearance in the camera plane, normalized image coordinates.
/// All fields are zero when the vehicle is outside the field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualFeatures<F = f64> {
    pub bbox_center_x: F,
    pub bbox_center_y: F,
    pub bbox_width: F,
    pub bbox_height: F,
    pub detected: bool,
}

impl<F: Real> VisualFeatures<F> {
    pub fn none() -> Self {
        Self {
            bbox_center_x: F::zero(),
            bbox_center_y: F::zero(),
            bbox_width: F::zero(),
            bbox_height: F::zero(),
            detected: false,
        }
    }

    /// Flattens into the 5-element model input vector.
    pub fn to_vector(&self) -> Vec<F> {
        vec![
            self.bbox_center_x,
            self.bbox_center_y,
            self.bbox_width,
            self.bbox_height,
            if self.detected { F::one() } else { F::zero() },
        ]
    }
}

/// Geographic position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position<F = f64> {
    pub latitude: F,
    pub longitude: F,
}

/// Physical-layer configuration for dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "F: crate::scalar::Real"))]
pub struct PhyConfig<F = f64> {
    pub num_elements: usize,
    pub element_spacing: F,
    pub num_beams: usize,
    pub ref_gain_at_1m: F,
    pub wavelength_m: F,
}

impl<F: Real> Default for PhyConfig<F> {
    fn default() -> Self {
        Self {
            num_elements: 16,
            element_spacing: F::of(0.5),
            num_beams: 64,
            ref_gain_at_1m: F::one(),
            // 60 GHz carrier
            wavelength_m: F::of(0.005),
        }
    }
}

impl<F: Real> PhyConfig<F> {
    pub fn geometry(&self, boresight_azimuth: F) -> Result<ArrayGeometry<F>> {
        ArrayGeometry::new(self.num_elements, self.element_spacing, boresight_azimuth)
    }
}

/// Samples `num_points` positions uniformly along the road segment with
/// uniform lateral jitter of half-width `config.lateral_jitter`.
pub fn sample_trajectory<F: Real>(
    config: &SceneConfig<F>,
    num_points: usize,
    rng: &mut impl Rng,
) -> Vec<[F; 2]> {
    (0..num_points).map(|_| trajectory_point(config, rng)).collect()
}

fn trajectory_point<F: Real>(config: &SceneConfig<F>, rng: &mut impl Rng) -> [F; 2] {
    let t = F::of(rng.gen::<f64>());
    let dx = config.road_end[0] - config.road_start[0];
    let dy = config.road_end[1] - config.road_start[1];
    let len = (dx * dx + dy * dy).sqrt();
    // unit normal to the segment
    let (nx, ny) = ((-dy) / len, dx / len);
    let j = F::of(rng.gen_range(-1.0..1.0)) * config.lateral_jitter;
    [
        config.road_start[0] + dx * t + nx * j,
        config.road_start[1] + dy * t + ny * j,
    ]
}

/// Pinhole projection of the vehicle center into normalized image
/// coordinates; `detected = false` outside the horizontal field of view.
pub fn project_to_camera<F: Real>(user_xyz: [F; 3], config: &SceneConfig<F>) -> VisualFeatures<F> {
    let cam = config.camera.clone();
    let az = config.bs_boresight_azimuth;
    let rel_x = user_xyz[0] - config.bs_position[0];
    let rel_y = user_xyz[1] - config.bs_position[1];
    // camera frame: depth along boresight, lateral positive toward
    // increasing azimuth (image x grows with azimuth)
    let depth = rel_x * az.cos() + rel_y * az.sin();
    let lateral = -rel_x * az.sin() + rel_y * az.cos();
    if depth <= F::zero() {
        return VisualFeatures::none();
    }
    let half = F::of(0.5);
    let tan_h = (cam.horizontal_fov * half).tan();
    let ratio = lateral / depth;
    if ratio.abs() > tan_h {
        return VisualFeatures::none();
    }
    let tan_v = tan_h * F::of(cam.height_px as f64) / F::of(cam.width_px as f64);
    let vertical = cam.mount_height - (user_xyz[2] + F::of(VEHICLE_HEIGHT_M / 2.0));
    let two = F::of(2.0);
    let cx = half + ratio / (two * tan_h);
    let cy = clamp01(half + vertical / depth / (two * tan_v));
    let w = clamp01(F::of(VEHICLE_LENGTH_M) / (depth * two * tan_h));
    let h = clamp01(F::of(VEHICLE_HEIGHT_M) / (depth * two * tan_v));
    VisualFeatures {
        bbox_center_x: cx,
        bbox_center_y: cy,
        bbox_width: w,
        bbox_height: h,
        detected: true,
    }
}

fn clamp01<F: Real>(x: F) -> F {
    x.max(F::zero()).min(F::one())
}

/// Adds detector jitter to a detected bounding box, clamped to the image.
/// Undetected vehicles stay all-zero and consume no rng draws.
pub fn jitter_bbox<F: Real>(features: &mut VisualFeatures<F>, std: F, rng: &mut impl Rng) {
    if !features.detected || std <= F::zero() {
        return;
    }
    for v in [
        &mut features.bbox_center_x,
        &mut features.bbox_center_y,
        &mut features.bbox_width,
        &mut features.bbox_height,
    ] {
        let z: f64 = StandardNormal.sample(rng);
        *v = clamp01(*v + F::of(z) * std);
    }
}

/// Converts a local east/north offset in meters to latitude/longitude
/// degrees via the equirectangular approximation around the anchor.
pub fn meters_to_latlon<F: Real>(xy: [F; 2], anchor: [F; 2]) -> Position<F> {
    let deg_per_rad = F::of(180.0 / PI);
    let r = F::of(EARTH_RADIUS_M);
    let lat = anchor[0] + xy[1] / r * deg_per_rad;
    let lon = anchor[1] + xy[0] / (r * (anchor[0] / deg_per_rad).cos()) * deg_per_rad;
    Position {
        latitude: lat,
        longitude: lon,
    }
}

/// Inverse of [`meters_to_latlon`].
pub fn latlon_to_meters<F: Real>(pos: Position<F>, anchor: [F; 2]) -> [F; 2] {
    let deg_per_rad = F::of(180.0 / PI);
    let r = F::of(EARTH_RADIUS_M);
    let y = (pos.latitude - anchor[0]) / deg_per_rad * r;
    let x = (pos.longitude - anchor[1]) / deg_per_rad * r * (anchor[0] / deg_per_rad).cos();
    [x, y]
}

/// Adds isotropic Gaussian noise (std `gps_noise_std`, meters) to the true
/// position, then converts to degrees around the scene's geo anchor.
pub fn gps_observe<F: Real>(
    true_xy_meters: [F; 2],
    config: &SceneConfig<F>,
    rng: &mut impl Rng,
) -> Position<F> {
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    let noisy = [
        true_xy_meters[0] + F::of(nx) * config.gps_noise_std,
        true_xy_meters[1] + F::of(ny) * config.gps_noise_std,
    ];
    meters_to_latlon(noisy, config.geo_anchor)
}

/// Generates a labeled dataset: for each trajectory point, the LOS channel
/// is synthesized, the 64-beam power vector and optimal index computed, and
/// the GPS observation and camera features attached.
///
/// Each sample uses an rng stream derived from `(rng_seed, index)`, so the
/// output is independent of how the index range is partitioned.
pub fn generate_dataset<F: Real>(
    scene: &SceneConfig<F>,
    phy_config: &PhyConfig<F>,
    num_samples: usize,
) -> Result<Dataset<F>> {
    scene.validate()?;
    let geometry = phy_config.geometry(scene.bs_boresight_azimuth)?;
    let codebook = phy::dft_codebook(&geometry, phy_config.num_beams);
    let mut samples = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
        rng.set_stream(i as u64 + 1);
        let xy = trajectory_point(scene, &mut rng);
        let user_xyz = [xy[0], xy[1], F::zero()];
        let channel = phy::channel_from_geometry(
            user_xyz,
            scene.bs_position,
            &geometry,
            phy_config.ref_gain_at_1m,
            phy_config.wavelength_m,
        )?;
        let (label, power) = phy::optimal_beam(&channel, &codebook)?;
        let mut visual = project_to_camera(user_xyz, scene);
        jitter_bbox(&mut visual, scene.bbox_noise_std, &mut rng);
        let features = visual.to_vector();
        let position = gps_observe(xy, scene, &mut rng);
        samples.push(Sample {
            features,
            position,
            power,
            label,
            true_xy: xy,
        });
    }
    Ok(Dataset {
        samples,
        normalization: None,
        codebook_size: phy_config.num_beams,
    })
}
