//! Generators for bench procedures written in the lab script language.
//!
//! The brown-ring procedure is three blocks (pour iron sulfate, pour the
//! nitrate sample, drop acid down the side of the tube) followed by the
//! checks. Reordering the blocks gives the ordering variants; the shake
//! script is the containment stress run.

use std::fmt::Write as _;

/// One of the three reagent additions of the procedure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    IronSulfate,
    Nitrate,
    Acid,
}

pub const CANONICAL: [Step; 3] = [Step::IronSulfate, Step::Nitrate, Step::Acid];

impl Step {
    pub fn as_str(self) -> &'static str {
        match self {
            Step::IronSulfate => "iron_sulfate",
            Step::Nitrate => "nitrate",
            Step::Acid => "acid",
        }
    }

    pub fn block(self) -> String {
        match self {
            Step::IronSulfate => pour_block("bottle_feso4", 0.08, 40),
            Step::Nitrate => pour_block("bottle_nitrate", 0.16, 50),
            Step::Acid => dropper_block(),
        }
    }
}

/// Lifts a bottle from its spot at `home_x`, pours it into the tube and
/// puts it back. `reach` is the duration of the long horizontal moves.
pub fn pour_block(bottle: &str, home_x: f64, reach: u32) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "grab {bottle}");
    let _ = writeln!(s, "move {bottle} {home_x} 0.125 0 over 40");
    let _ = writeln!(s, "move {bottle} 0.018 0.11 0 over {reach}");
    let _ = writeln!(s, "tilt {bottle} -115 over 120");
    let _ = writeln!(s, "wait 150");
    let _ = writeln!(s, "tilt {bottle} 0 over 60");
    let _ = writeln!(s, "move {bottle} {home_x} 0.125 0 over {reach}");
    let _ = writeln!(s, "move {bottle} {home_x} 0.002 0 over 40");
    s.push_str("release_hand\n");
    s
}

/// Fills the dropper from the acid bottle and lets it run down the inside
/// wall of the tube.
pub fn dropper_block() -> String {
    "grab dropper
move dropper -0.08 0.26 0 over 20
move dropper 0.24 0.26 0 over 80
move dropper 0.24 0.089 0 over 60
pipette_press
wait 90
assert pipette_contents == 8
assert mouth closed
move dropper 0.24 0.26 0 over 60
move dropper 0.008 0.26 0 over 80
pipette_release tube
wait 180
move dropper -0.08 0.2 0 over 60
release_hand
wait 60
"
    .to_string()
}

/// The three additions in `order`, then the ring checks.
pub fn procedure(order: &[Step]) -> String {
    let mut s = String::new();
    for step in order {
        s.push_str(&step.block());
        s.push('\n');
    }
    s.push_str("assert logged tube h2so4 dropper_side\n");
    s.push_str("assert verdict brown_ring\n");
    s.push_str("assert ring_particles >= 1\n");
    s
}

/// The five orders of the three additions other than the canonical one.
pub fn non_canonical_orders() -> Vec<[Step; 3]> {
    let [a, b, c] = CANONICAL;
    [
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ]
    .to_vec()
}

/// Bounds for [`shake_script`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShakeParams {
    pub total_ticks: u64,
    /// Half-amplitude of the side-to-side stroke, metres.
    pub stroke: f64,
    /// Ticks per stroke.
    pub stroke_ticks: u32,
    /// Peak tilt, degrees either side.
    pub tilt_degrees: f64,
    /// Ticks per full swing from one side to the other.
    pub swing_ticks: u32,
}

impl Default for ShakeParams {
    fn default() -> Self {
        // at 120 ticks/s: 0.06 m per 5 ticks is 1.44 m/s and 40 degrees
        // per 27 ticks is 3.1 rad/s
        ShakeParams {
            total_ticks: 10_000,
            stroke: 0.03,
            stroke_ticks: 5,
            tilt_degrees: 20.0,
            swing_ticks: 27,
        }
    }
}

/// Lifts `bottle` (resting at `home_x`) and shakes it: sideways strokes,
/// vertical bobs and side-to-side tilts, cycling until `total_ticks` have
/// elapsed, then sets it back down.
pub fn shake_script(bottle: &str, home_x: f64, p: &ShakeParams) -> String {
    let lift = 0.1;
    let (lo, hi) = (home_x - p.stroke, home_x + p.stroke);
    let half = p.stroke_ticks.div_ceil(2);
    let half_swing = p.swing_ticks.div_ceil(2);
    let a = p.tilt_degrees;

    let mut cycle: Vec<(String, u32)> = vec![(format!("move {bottle} {hi} {lift} 0 over {half}"), half)];
    for _ in 0..4 {
        cycle.push((format!("move {bottle} {lo} {lift} 0 over {}", p.stroke_ticks), p.stroke_ticks));
        cycle.push((format!("move {bottle} {hi} {lift} 0 over {}", p.stroke_ticks), p.stroke_ticks));
    }
    cycle.push((format!("move {bottle} {home_x} {lift} 0 over {half}"), half));
    cycle.push((format!("move {bottle} {home_x} {} 0 over {half}", lift + p.stroke), half));
    cycle.push((format!("move {bottle} {home_x} {lift} 0 over {half}"), half));
    cycle.push((format!("tilt {bottle} {a} over {half_swing}"), half_swing));
    cycle.push((format!("tilt {bottle} {} over {}", -a, p.swing_ticks), p.swing_ticks));
    cycle.push((format!("tilt {bottle} 0 over {half_swing}"), half_swing));
    let cycle_ticks: u64 = cycle.iter().map(|(_, t)| u64::from(*t)).sum();

    let mut s = String::new();
    let _ = writeln!(s, "grab {bottle}");
    let _ = writeln!(s, "move {bottle} {home_x} {lift} 0 over 40");
    let mut t: u64 = 40;
    // keep 40 ticks for setting the bottle back down
    while t + cycle_ticks + 40 <= p.total_ticks {
        for (text, _) in &cycle {
            s.push_str(text);
            s.push('\n');
        }
        t += cycle_ticks;
    }
    let _ = writeln!(s, "move {bottle} {home_x} 0.002 0 over 40");
    s.push_str("release_hand\n");
    t += 40;
    if t < p.total_ticks {
        let _ = writeln!(s, "wait {}", p.total_ticks - t);
    }
    s.push_str("assert spills == 0\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_script;

    #[test]
    fn generated_scripts_parse() {
        parse_script(&procedure(&CANONICAL)).unwrap();
        for order in non_canonical_orders() {
            parse_script(&procedure(&order)).unwrap();
        }
        parse_script(&shake_script("bottle_acid", 0.24, &ShakeParams::default())).unwrap();
    }

    #[test]
    fn five_distinct_reorderings() {
        let orders = non_canonical_orders();
        assert_eq!(orders.len(), 5);
        for (i, a) in orders.iter().enumerate() {
            assert_ne!(*a, CANONICAL);
            let mut sorted = a.map(|s| s as u8);
            sorted.sort_unstable();
            assert_eq!(sorted, [0, 1, 2]);
            assert!(orders[i + 1..].iter().all(|b| b != a));
        }
    }

    #[test]
    fn shake_lasts_the_requested_ticks() {
        let p = ShakeParams::default();
        let script = parse_script(&shake_script("bottle_acid", 0.24, &p)).unwrap();
        let total: u64 = script.statements.iter().map(|s| s.duration()).sum();
        assert_eq!(total, p.total_ticks);
    }
}
