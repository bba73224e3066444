//! SVG route drawings.

use std::fmt::Write as _;

use thiserror::Error;

use crate::gridworld::{apply_action, AgentPose, GridMap};
use crate::policy::EpisodeTrace;

const CELL: i32 = 16;
const ROOM_COLORS: [&str; 8] = [
    "#dfe9f3", "#f3e6d8", "#e3f1df", "#efe0ef", "#f5f1d6", "#dcefee", "#eadfd6", "#e4e4f4",
];

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("step {step}: pose ({x}, {y}) is not an open cell of the map")]
    Mismatch { step: usize, x: i32, y: i32 },
}

fn center(p: &AgentPose) -> (i32, i32) {
    (p.x * CELL + CELL / 2, p.y * CELL + CELL / 2)
}

/// Route vertices: the start, then the pose after every step.
pub fn route_vertices(map: &GridMap, trace: &EpisodeTrace) -> Result<Vec<AgentPose>, RenderError> {
    let bad = |step: usize, p: &AgentPose| RenderError::Mismatch {
        step,
        x: p.x,
        y: p.y,
    };
    let mut out = vec![trace.start];
    if !map.is_accessible(trace.start.x, trace.start.y) {
        return Err(bad(0, &trace.start));
    }
    for (i, s) in trace.steps.iter().enumerate() {
        let next = apply_action(map, s.pose, s.action).map_err(|_| bad(i, &s.pose))?;
        out.push(next.pose);
    }
    Ok(out)
}

/// Draw the map, the route (white polyline), the start (red), the end
/// (green) and the target cell (outlined).
pub fn render_route(map: &GridMap, trace: &EpisodeTrace, target: Option<(i32, i32)>) -> Result<String, RenderError> {
    let vertices = route_vertices(map, trace)?;
    let (w, h) = (map.width as i32 * CELL, map.height as i32 * CELL);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r##"<rect width="{w}" height="{h}" fill="#3a3a3a"/>"##);
    for y in 0..map.height as i32 {
        for x in 0..map.width as i32 {
            if !map.is_accessible(x, y) {
                continue;
            }
            let fill = map
                .room_at(x, y)
                .and_then(|r| map.room_type(r))
                .map_or("#ffffff", |t| ROOM_COLORS[t as usize % ROOM_COLORS.len()]);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}"/>"#,
                x * CELL,
                y * CELL
            );
        }
    }
    for o in &map.objects {
        let _ = writeln!(
            svg,
            r##"<circle cx="{}" cy="{}" r="3" fill="#777777"/>"##,
            o.x * CELL + CELL / 2,
            o.y * CELL + CELL / 2
        );
    }
    if let Some((tx, ty)) = target {
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#e0a800" stroke-width="3"/>"##,
            tx * CELL + 1,
            ty * CELL + 1,
            CELL - 2,
            CELL - 2
        );
    }
    if vertices.len() > 1 {
        let points: Vec<String> = vertices
            .iter()
            .map(|p| {
                let (cx, cy) = center(p);
                format!("{cx},{cy}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#ffffff" stroke-width="3" stroke-linejoin="round"/>"##,
            points.join(" ")
        );
    }
    let (sx, sy) = center(&vertices[0]);
    let _ = writeln!(svg, r##"<circle class="start" cx="{sx}" cy="{sy}" r="5" fill="#d62728"/>"##);
    if vertices.len() > 1 {
        let (ex, ey) = center(vertices.last().unwrap());
        let _ = writeln!(svg, r##"<circle class="end" cx="{ex}" cy="{ey}" r="5" fill="#2ca02c"/>"##);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
