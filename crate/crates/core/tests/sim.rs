use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use virtlab::chemistry::{Role, SpeciesRegistry};
use virtlab::containment::replay_parents;
use virtlab::dsl::{parse_script, run_script};
use virtlab::scene;
use virtlab::sim::{tilt_angle, world_digest, Pose, Quat, SimError, Vec3, World, WorldConfig};

fn empty_world(config: WorldConfig) -> (World, virtlab::SpeciesId) {
    let registry = Arc::new(SpeciesRegistry::stock());
    let acid = registry.by_role(Role::SulfuricAcid).unwrap().id;
    (World::new(config, registry, 1), acid)
}

fn tube_world() -> (World, virtlab::VesselId, virtlab::SpeciesId) {
    let (mut w, acid) = empty_world(WorldConfig::default());
    let tube = w.add_vessel(
        "tube",
        scene::tube_profile().unwrap(),
        Pose::at(Vec3::new(0.0, scene::TUBE_FLOOR, 0.0)),
    );
    (w, tube, acid)
}

#[test]
fn free_particle_takes_one_euler_step() {
    let mut config = WorldConfig::default();
    config.sim.dt = 0.01;
    config.sim.substeps = 1;
    let (mut w, acid) = empty_world(config);
    let start = Vec3::new(0.0, 1.0, 0.0);
    let id = w.add_particle(start, acid, None);
    w.step().unwrap();
    let p = w.particle(id).unwrap();
    assert!((p.velocity - Vec3::new(0.0, -0.0981, 0.0)).norm() < 1e-12);
    assert!((p.position - (start + p.velocity * 0.01)).norm() < 1e-12);
    assert_eq!(w.tick, 1);
}

#[test]
fn resting_particle_stays_out_of_the_wall() {
    let (mut w, tube, acid) = tube_world();
    let floor = scene::TUBE_FLOOR + w.vessel(tube).unwrap().profile.floor_z();
    let r = w.config.sim.particle_radius;
    w.add_particle(Vec3::new(0.0, floor + r, 0.0), acid, Some(tube));
    for _ in 0..1000 {
        w.step().unwrap();
    }
    assert!(w.stats.max_wall_penetration <= 0.1, "{:?}", w.stats);
    assert!(w.particles[0].contained);
}

#[test]
fn overlapping_pair_is_separated_in_one_step() {
    let (mut w, acid) = empty_world(WorldConfig::default());
    let r = w.config.sim.particle_radius;
    let a = w.add_particle(Vec3::new(0.0, 0.5, 0.0), acid, None);
    let b = w.add_particle(Vec3::new(1.5 * r, 0.5, 0.0), acid, None);
    w.step().unwrap();
    let d = (w.particle(a).unwrap().position - w.particle(b).unwrap().position).norm();
    assert!(d >= 2.0 * r - 1e-9 * r, "distance {d}");
}

#[test]
fn nudging_one_particle_changes_the_digest() {
    let w = scene::build("single_bottle", 4).unwrap();
    let mut moved = w.clone();
    moved.particles[7].position.x += 1e-6;
    assert_eq!(world_digest(&w), world_digest(&w.clone()));
    assert_ne!(world_digest(&w), world_digest(&moved));
}

#[test]
fn non_finite_state_halts() {
    let (mut w, acid) = empty_world(WorldConfig::default());
    let id = w.add_particle(Vec3::new(0.0, 1.0, 0.0), acid, None);
    w.particles[0].velocity.x = f64::NAN;
    assert_eq!(
        w.step(),
        Err(SimError::NonFinite {
            particle: id,
            tick: 0
        })
    );
}

#[test]
fn bad_timestep_is_refused() {
    let mut config = WorldConfig::default();
    config.sim.dt = 0.0;
    let (mut w, _) = empty_world(config);
    assert_eq!(w.step(), Err(SimError::BadTimestep(0.0)));
}

#[test]
fn tilt_angle_examples() {
    assert_eq!(tilt_angle(&Pose::default()), 0.0);
    let flip = Pose {
        position: Vec3::zeros(),
        orientation: Quat::from_axis_angle(&Vec3::x_axis(), PI),
    };
    assert!((tilt_angle(&flip) - PI).abs() < 1e-12);
    let side = Pose {
        position: Vec3::zeros(),
        orientation: Quat::from_axis_angle(&Vec3::z_axis(), PI / 2.0),
    };
    assert!((tilt_angle(&side) - PI / 2.0).abs() < 1e-12);
}

fn unit_quat() -> impl Strategy<Value = Quat> {
    (
        -1.0f64..1.0,
        -1.0f64..1.0,
        -1.0f64..1.0,
        0.0f64..2.0 * PI,
    )
        .prop_filter_map("axis too short", |(x, y, z, a)| {
            let axis = Vec3::new(x, y, z);
            (axis.norm() > 1e-3).then(|| {
                Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), a)
            })
        })
}

/// Mechanical energy per unit mass: kinetic plus gravitational.
fn mechanical_energy(w: &World) -> f64 {
    let g = -w.config.sim.gravity.y;
    w.kinetic_energy() + w.particles.iter().map(|p| g * p.position.y).sum::<f64>()
}

/// A short random bench routine on the single-bottle scene with vessel
/// speed at most 0.6 m/s and angular speed at most 2.4 rad/s.
fn routine() -> impl Strategy<Value = String> {
    let step = prop_oneof![
        (0.04f64..0.12, 0.002f64..0.1, -0.03f64..0.03, 30u32..80)
            .prop_map(|(x, y, z, t)| format!("move bottle {x:.4} {y:.4} {z:.4} over {t}")),
        (-45.0f64..45.0, 80u32..120).prop_map(|(d, t)| format!("tilt bottle {d:.2} over {t}")),
        (1u32..60).prop_map(|t| format!("wait {t}")),
    ];
    prop::collection::vec(step, 1..5).prop_map(|steps| {
        let mut s = String::from("grab bottle\nmove bottle 0.08 0.05 0 over 40\n");
        for line in steps {
            s.push_str(&line);
            s.push('\n');
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tilt_ignores_turns_about_up(q in unit_quat(), yaw in 0.0f64..2.0 * PI) {
        let turn = Quat::from_axis_angle(&Vec3::y_axis(), yaw);
        let a = tilt_angle(&Pose { position: Vec3::zeros(), orientation: q });
        let b = tilt_angle(&Pose { position: Vec3::zeros(), orientation: turn * q });
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        prop_assert!((0.0..=PI).contains(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_history(script in routine(), seed in 0u64..1000) {
        let s = parse_script(&script).unwrap();
        let mut a = scene::build("single_bottle", seed).unwrap();
        let mut b = scene::build("single_bottle", seed).unwrap();
        let ra = run_script(&s, &mut a, "single_bottle").unwrap();
        let rb = run_script(&s, &mut b, "single_bottle").unwrap();
        prop_assert_eq!(&ra.digest, &rb.digest);
        prop_assert_eq!(ra.events, rb.events);
    }

    #[test]
    fn gentle_handling_keeps_everything_inside(script in routine(), seed in 0u64..1000) {
        let s = parse_script(&script).unwrap();
        let mut w = scene::build("single_bottle", seed).unwrap();
        let report = run_script(&s, &mut w, "single_bottle").unwrap();
        prop_assert_eq!(report.spills, 0);
        prop_assert!(report.max_wall_penetration <= 0.1, "{}", report.max_wall_penetration);
    }

    #[test]
    fn transfer_events_rebuild_parents(script in routine(), seed in 0u64..1000) {
        let mut w = scene::build("single_bottle", seed).unwrap();
        let initial: BTreeMap<_, _> = w.particles.iter().map(|p| (p.id, p.parent)).collect();
        let n = w.particles.len();
        let registry = w.registry.clone();
        let total = |w: &World| -> f64 {
            let acid = registry.by_role(Role::SulfuricAcid).unwrap().id;
            let in_vessels: f64 = w.vessels.iter().map(|v| v.mixture.amount(acid)).sum();
            let carried: f64 = w
                .particles
                .iter()
                .flat_map(|p| p.payload.iter())
                .filter(|(s, _)| *s == acid)
                .map(|(_, g)| g)
                .sum();
            in_vessels + carried
        };
        let before = total(&w);
        // tip the bottle hard over the tube so particles really move around
        let full = format!(
            "{script}move bottle 0.02 0.2 0 over 60\ntilt bottle -120 over 120\nwait 60\n"
        );
        let report = run_script(&parse_script(&full).unwrap(), &mut w, "single_bottle").unwrap();
        let fin: BTreeMap<_, _> = w.particles.iter().map(|p| (p.id, p.parent)).collect();
        prop_assert_eq!(replay_parents(&initial, &report.events), fin);
        prop_assert_eq!(w.particles.len(), n);
        prop_assert!(report.events.iter().all(|e| e.from != e.to));
        prop_assert!(!report.events.is_empty());
        prop_assert!((total(&w) - before).abs() <= 1e-9 * before);
    }

    #[test]
    fn lone_particle_loses_energy_against_static_walls(
        x in -0.008f64..0.008,
        y in 0.01f64..0.14,
        z in -0.008f64..0.008,
        vx in -0.5f64..0.5,
        vy in -0.5f64..0.5,
        vz in -0.5f64..0.5,
    ) {
        let (mut w, tube, acid) = tube_world();
        w.add_particle(Vec3::new(x, scene::TUBE_FLOOR + y, z), acid, Some(tube));
        w.particles[0].velocity = Vec3::new(vx, vy, vz);
        let mut energy = vec![mechanical_energy(&w)];
        for _ in 0..400 {
            w.step().unwrap();
            energy.push(mechanical_energy(&w));
        }
        for t in 0..energy.len() - 100 {
            prop_assert!(
                energy[t + 100] <= energy[t] + 1e-12,
                "tick {t}: {} -> {}", energy[t], energy[t + 100]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn settled_benches_do_not_gain_kinetic_energy(seed in 0u64..10_000) {
        for name in scene::SCENES {
            let mut w = scene::build(name, seed).unwrap();
            let mut energy = vec![w.kinetic_energy()];
            for _ in 0..300 {
                w.step().unwrap();
                energy.push(w.kinetic_energy());
            }
            for t in 0..energy.len() - 100 {
                prop_assert!(energy[t + 100] <= energy[t], "{name} tick {t}");
            }
        }
    }

    #[test]
    fn settled_bench_keeps_pairs_apart(seed in 0u64..10_000) {
        let mut w = scene::build("brown_ring", seed).unwrap();
        w.reset_stats();
        w.advance_by(120).unwrap();
        prop_assert!(w.stats.max_pair_penetration <= 0.05, "{:?}", w.stats);
        prop_assert!(w.stats.max_wall_penetration <= 0.1, "{:?}", w.stats);
    }
}
