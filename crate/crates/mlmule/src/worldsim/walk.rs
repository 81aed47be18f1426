//! Random-walk mobility with a per-step crossing probability.

use rand::Rng;

use super::{Position, Rect, World};
use crate::rng::SimRng;

const MAX_RESAMPLES: usize = 64;

/// Advances a mobile device by one time step.
///
/// Inside a space the device rolls `p_cross` once: on a cross it heads
/// for the nearest point outside the space (through an interior face —
/// area walls are not exits), otherwise it takes a uniform step
/// resampled to stay inside the space. In open space it wanders freely.
/// Steps are uniform per axis in `[-step_length, +step_length]` and
/// devices reflect off area walls, so a device never leaves its area.
pub fn step_random_walk(world: &World, pos: Position, p_cross: f64, rng: &mut SimRng) -> Position {
    let Some(area) = world.area_containing(pos) else {
        return pos;
    };
    let step = world.step_length;

    match world.locate(pos) {
        Some(sid) => {
            if p_cross > 0.0 && rng.gen::<f64>() < p_cross {
                let space = world.space(sid);
                match exit_target(&space.bounds, &area.bounds, pos, step) {
                    Some(target) => {
                        let next = Position::new(
                            pos.x + (target.x - pos.x).clamp(-step, step),
                            pos.y + (target.y - pos.y).clamp(-step, step),
                        );
                        reflect_into(&area.bounds, next)
                    }
                    None => pos, // space has no interior face; stay put
                }
            } else {
                // Confined step: resample until the device stays in its
                // current space, else hold position.
                for _ in 0..MAX_RESAMPLES {
                    let cand = Position::new(
                        pos.x + rng.gen_range(-step..=step),
                        pos.y + rng.gen_range(-step..=step),
                    );
                    if world.locate(cand) == Some(sid) {
                        return cand;
                    }
                }
                pos
            }
        }
        None => {
            let cand = Position::new(
                pos.x + rng.gen_range(-step..=step),
                pos.y + rng.gen_range(-step..=step),
            );
            reflect_into(&area.bounds, cand)
        }
    }
}

/// Nearest point outside the space, restricted to faces that do not sit
/// flush with an area wall (those cannot be crossed). The target is
/// pushed one step beyond the face so the final approach step actually
/// exits.
fn exit_target(space: &Rect, area: &Rect, pos: Position, step: f64) -> Option<Position> {
    let eps = 1e-9;
    let mut best: Option<(f64, Position)> = None;
    // (is interior face, candidate target)
    let faces = [
        (
            space.min_x - area.min_x > eps,
            Position::new(space.min_x - step, pos.y),
        ),
        (
            area.max_x() - space.max_x() > eps,
            Position::new(space.max_x() + step, pos.y),
        ),
        (
            space.min_y - area.min_y > eps,
            Position::new(pos.x, space.min_y - step),
        ),
        (
            area.max_y() - space.max_y() > eps,
            Position::new(pos.x, space.max_y() + step),
        ),
    ];
    for (interior, target) in faces {
        if !interior {
            continue;
        }
        let d = pos.euclidean(&target);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, target));
        }
    }
    best.map(|(_, t)| t)
}

fn reflect_into(bounds: &Rect, p: Position) -> Position {
    let reflect = |v: f64, lo: f64, hi: f64| -> f64 {
        let r = if v < lo {
            lo + (lo - v)
        } else if v > hi {
            hi - (v - hi)
        } else {
            v
        };
        r.clamp(lo, hi)
    };
    Position::new(
        reflect(p.x, bounds.min_x, bounds.max_x()),
        reflect(p.y, bounds.min_y, bounds.max_y()),
    )
}
