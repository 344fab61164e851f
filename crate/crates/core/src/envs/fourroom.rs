//! Four-room wall geometry.
//!
//! Two zero-thickness walls lie along `x = 0` and `y = 0` across the whole
//! arena. Each of the four half-walls has one door of width 1 centred at
//! ±2.5 along the wall; the door is the open interval `(2, 3)` (or
//! `(-3, -2)`), so its jambs block.

/// Motion stops this far (along the motion segment) before the first wall hit.
pub const COLLISION_MARGIN: f64 = 1e-3;
pub const DOOR_CENTER: f64 = 2.5;
pub const DOOR_HALF_WIDTH: f64 = 0.5;

/// Whether a crossing at `along` (the coordinate parallel to the wall) passes a door.
pub fn in_door(along: f64) -> bool {
    let a = along.abs();
    a > DOOR_CENTER - DOOR_HALF_WIDTH && a < DOOR_CENTER + DOOR_HALF_WIDTH
}

/// True when `p` sits on a wall line outside every door.
pub fn in_wall(p: [f64; 2]) -> bool {
    (p[0] == 0.0 && !in_door(p[1])) || (p[1] == 0.0 && !in_door(p[0]))
}

/// True when `p` is within the collision margin of a solid wall segment.
pub fn near_wall(p: [f64; 2]) -> bool {
    (p[0].abs() < COLLISION_MARGIN && !in_door(p[1]))
        || (p[1].abs() < COLLISION_MARGIN && !in_door(p[0]))
}

fn side(v: f64) -> i8 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

/// Segment parameter in `[0, 1]` where the move `start → end` first hits a
/// solid wall, if it does.
fn first_hit(start: [f64; 2], end: [f64; 2]) -> Option<f64> {
    let mut hit: Option<f64> = None;
    for axis in 0..2 {
        let other = 1 - axis;
        if side(start[axis]) == side(end[axis]) {
            continue;
        }
        let t = (0.0 - start[axis]) / (end[axis] - start[axis]);
        let along = start[other] + t * (end[other] - start[other]);
        if !in_door(along) {
            hit = Some(hit.map_or(t, |h: f64| h.min(t)));
        }
    }
    hit
}

/// Moves from `start` towards `end` (already inside the arena), stopping
/// short of the first solid wall crossed.
pub fn resolve_move(start: [f64; 2], end: [f64; 2]) -> [f64; 2] {
    let delta = [end[0] - start[0], end[1] - start[1]];
    let length = delta[0].hypot(delta[1]);
    let result = match first_hit(start, end) {
        None => end,
        Some(t) => {
            let stop = (t - COLLISION_MARGIN / length).max(0.0);
            [start[0] + stop * delta[0], start[1] + stop * delta[1]]
        }
    };
    if in_wall(result) {
        start
    } else {
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_by_solid_vertical_wall() {
        let p = resolve_move([-0.5, 2.0], [0.5, 2.0]);
        assert!((p[0] - (-COLLISION_MARGIN)).abs() < 1e-12, "{p:?}");
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn passes_through_door() {
        assert_eq!(resolve_move([-0.5, 2.5], [0.5, 2.5]), [0.5, 2.5]);
        assert_eq!(resolve_move([-2.5, 0.4], [-2.5, -0.6]), [-2.5, -0.6]);
    }

    #[test]
    fn door_jamb_blocks() {
        let p = resolve_move([0.5, 3.0], [-0.5, 3.0]);
        assert!((p[0] - COLLISION_MARGIN).abs() < 1e-12);
    }

    #[test]
    fn diagonal_hits_nearest_wall_first() {
        // Crosses y = 0 at x = 0.5 (solid) before reaching x = 0.
        let p = resolve_move([1.0, 0.5], [-1.0, -0.5]);
        assert!(p[1] > 0.0 && p[0] > 0.0, "{p:?}");
        assert!((p[1] - 0.0).abs() < 2.0 * COLLISION_MARGIN);
    }

    #[test]
    fn resting_at_wall_face_stays() {
        let start = [-COLLISION_MARGIN, 1.0];
        assert_eq!(resolve_move(start, [0.8, 1.0]), start);
    }

    #[test]
    fn no_crossing_moves_freely() {
        assert_eq!(resolve_move([1.0, 1.0], [1.7, 1.9]), [1.7, 1.9]);
    }
}
