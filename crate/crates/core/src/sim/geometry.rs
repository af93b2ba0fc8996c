use super::{Pose, Rect, World};

pub fn disk_hits_rect(x: f64, y: f64, r: f64, rect: &Rect) -> bool {
    let cx = x.clamp(rect.min_x, rect.max_x);
    let cy = y.clamp(rect.min_y, rect.max_y);
    let (dx, dy) = (x - cx, y - cy);
    dx * dx + dy * dy < r * r
}

/// Entry distance of a ray into a rectangle (slab test); 0 if the origin is inside.
fn ray_rect(ox: f64, oy: f64, dx: f64, dy: f64, rect: &Rect) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (o, d, lo, hi) in [(ox, dx, rect.min_x, rect.max_x), (oy, dy, rect.min_y, rect.max_y)] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            t_enter = t_enter.max(a.min(b));
            t_exit = t_exit.min(a.max(b));
        }
    }
    if t_exit < t_enter.max(0.0) {
        None
    } else {
        Some(t_enter.max(0.0))
    }
}

/// Distance to the arena boundary from inside along the ray.
fn ray_exit(ox: f64, oy: f64, dx: f64, dy: f64, arena: &Rect) -> f64 {
    if !arena.contains(ox, oy) {
        return 0.0;
    }
    let axis = |o: f64, d: f64, lo: f64, hi: f64| {
        if d > 0.0 {
            (hi - o) / d
        } else if d < 0.0 {
            (lo - o) / d
        } else {
            f64::INFINITY
        }
    };
    axis(ox, dx, arena.min_x, arena.max_x).min(axis(oy, dy, arena.min_y, arena.max_y))
}

/// Range along a single world-frame direction, clipped to `max_range`.
pub fn raycast_beam(world: &World, x: f64, y: f64, angle: f64, max_range: f64) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let mut best = ray_exit(x, y, dx, dy, &world.arena);
    for ob in &world.obstacles {
        if let Some(t) = ray_rect(x, y, dx, dy, ob) {
            best = best.min(t);
        }
    }
    best.clamp(0.0, max_range)
}

/// Ranges for beams given relative to the robot heading.
pub fn raycast(world: &World, pose: &Pose, beam_angles: &[f64], max_range: f64) -> Vec<f64> {
    beam_angles
        .iter()
        .map(|a| raycast_beam(world, pose.x, pose.y, pose.heading + a, max_range))
        .collect()
}
