//! Brown-ring band selection.
//!
//! The occupied column in the tube is split into five equal layers along the
//! tube axis and the fourth from the bottom is the band. Only particles in
//! that layer lying close to the glass are coloured.

use super::reaction::RingBand;
use crate::ids::ParticleId;
use crate::sim::geometry::{Pose, Vec3, VesselProfile};

pub const LAYERS: f64 = 5.0;
pub const BAND_LAYER: f64 = 4.0;

/// Returns `None` for fewer than five particles or a column of zero height.
///
/// `delta` is the wall proximity: a particle qualifies when its distance
/// from the axis is at least `inner_radius(h) - delta`.
pub fn compute_ring_band(
    particles: &[(ParticleId, Vec3)],
    profile: &VesselProfile,
    pose: &Pose,
    delta: f64,
) -> Option<RingBand> {
    if particles.len() < LAYERS as usize {
        return None;
    }
    let local: Vec<(ParticleId, Vec3)> = particles
        .iter()
        .map(|(id, p)| (*id, pose.to_local(p)))
        .collect();
    let h_min = local.iter().map(|(_, p)| p.y).fold(f64::INFINITY, f64::min);
    let h_max = local
        .iter()
        .map(|(_, p)| p.y)
        .fold(f64::NEG_INFINITY, f64::max);
    let height = h_max - h_min;
    if !(height > 0.0) {
        return None;
    }
    let z_lo = h_min + (BAND_LAYER - 1.0) * height / LAYERS;
    let z_hi = h_min + BAND_LAYER * height / LAYERS;
    let mut ring_ids: Vec<ParticleId> = local
        .iter()
        .filter(|(_, p)| p.y >= z_lo && p.y < z_hi)
        .filter(|(_, p)| {
            let rho = (p.x * p.x + p.z * p.z).sqrt();
            rho >= profile.radius_at(p.y) - delta
        })
        .map(|(id, _)| *id)
        .collect();
    ring_ids.sort();
    Some(RingBand {
        lo: (BAND_LAYER - 1.0) / LAYERS,
        hi: BAND_LAYER / LAYERS,
        z_lo,
        z_hi,
        ring_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::geometry::VesselKind;

    fn tube() -> VesselProfile {
        VesselProfile::cylinder(VesselKind::TestTube, 0.01, 0.15).unwrap()
    }

    #[test]
    fn empty_and_flat_columns_have_no_band() {
        let t = tube();
        assert!(compute_ring_band(&[], &t, &Pose::default(), 0.005).is_none());
        let flat: Vec<_> = (0..10)
            .map(|i| (ParticleId(i), Vec3::new(0.001 * i as f64 - 0.005, 0.01, 0.0)))
            .collect();
        assert!(compute_ring_band(&flat, &t, &Pose::default(), 0.005).is_none());
        let four: Vec<_> = (0..4)
            .map(|i| (ParticleId(i), Vec3::new(0.0, 0.01 * i as f64, 0.0)))
            .collect();
        assert!(compute_ring_band(&four, &t, &Pose::default(), 0.005).is_none());
    }

    #[test]
    fn uniform_column_band_matches_brute_force() {
        // 50 particles evenly spaced in height, alternating wall / axis
        let t = tube();
        let pose = Pose::at(Vec3::new(0.2, 0.05, -0.1));
        let delta = 0.005;
        let local: Vec<(ParticleId, Vec3)> = (0..50)
            .map(|i| {
                let h = 0.003 + 0.0015 * i as f64;
                let rho = if i % 2 == 0 { 0.0074 } else { 0.001 };
                (ParticleId(i), Vec3::new(rho, h, 0.0))
            })
            .collect();
        let world: Vec<_> = local.iter().map(|(id, p)| (*id, pose.to_world(p))).collect();
        let band = compute_ring_band(&world, &t, &pose, delta).unwrap();

        let h_min = 0.003;
        let big_h = 0.0015 * 49.0;
        let oracle: Vec<ParticleId> = local
            .iter()
            .filter(|(_, p)| {
                let frac = (p.y - h_min) / big_h;
                (0.6..0.8).contains(&frac) && p.x >= 0.01 - delta
            })
            .map(|(id, _)| *id)
            .collect();
        assert_eq!(band.ring_ids, oracle);
        assert_eq!((band.lo, band.hi), (0.6, 0.8));
        assert!(((band.z_lo + band.z_hi) / 2.0 - h_min - 0.7 * big_h).abs() < 1e-9);
        assert!((band.z_lo - (h_min + 0.6 * big_h)).abs() < 1e-12);
    }
}
