//! SVG trajectory plots.

use gpc_core::episode::EpisodeTrace;
use gpc_core::geometry::Pose;
use gpc_core::tasks::{Task, TaskConfig};
use gpc_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Steps between drawn block snapshots.
pub const DEFAULT_SNAPSHOT_INTERVAL: usize = 100;

/// An episode with the task it ran on, as written by `eval --trace-dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub method: String,
    pub seed: u64,
    pub task: TaskConfig,
    pub trace: EpisodeTrace,
}

pub fn snapshot_count(n_states: usize, interval: usize) -> usize {
    n_states.div_ceil(interval.max(1))
}

fn polygon_points(task: &Task, pose: &Pose) -> Vec<String> {
    task.parts()
        .iter()
        .map(|p| {
            p.vertices()
                .iter()
                .map(|v| {
                    let w = pose.apply(*v);
                    format!("{:.2},{:.2}", w.x, w.y)
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

/// SVG document for `trace` on `task`.
pub fn render_svg(task: &Task, trace: &EpisodeTrace, interval: usize) -> Result<String> {
    if trace.states.is_empty() {
        return Err(Error::InvalidInput("cannot render an empty trace".into()));
    }
    let ws = task.config().workspace;
    let (w, h) = (ws.max[0] - ws.min[0], ws.max[1] - ws.min[1]);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="{:.0}" height="{:.0}">"#,
        ws.min[0], ws.min[1], w, h, w, h
    );
    // world y points up
    let _ = writeln!(s, r#"<g transform="translate(0 {}) scale(1 -1)">"#, ws.min[1] + ws.max[1]);
    let _ = writeln!(s, r#"<rect id="workspace" x="{}" y="{}" width="{w}" height="{h}" fill="white" stroke="black"/>"#, ws.min[0], ws.min[1]);
    for pts in polygon_points(task, &task.config().goal_pose) {
        let _ = writeln!(s, r##"<polygon class="goal" points="{pts}" fill="#b8e0b8" stroke="#2a7a2a" stroke-dasharray="4 2"/>"##);
    }
    let interval = interval.max(1);
    let n = snapshot_count(trace.states.len(), interval);
    for k in 0..n {
        let st = &trace.states[k * interval];
        let opacity = 0.25 + 0.75 * (k + 1) as f64 / n as f64;
        let _ = writeln!(s, r#"<g class="block" opacity="{opacity:.3}">"#);
        for pts in polygon_points(task, &task.object_pose(st)) {
            let _ = writeln!(s, r##"<polygon points="{pts}" fill="#8aa4d6" stroke="#203c74"/>"##);
        }
        s.push_str("</g>\n");
    }
    let path: Vec<String> = trace.states.iter().map(|st| format!("{:.2},{:.2}", st.robot_pos[0], st.robot_pos[1])).collect();
    let _ = writeln!(s, r##"<polyline id="robot-path" points="{}" fill="none" stroke="#c03030" stroke-width="1.5"/>"##, path.join(" "));
    let last = trace.states.last().unwrap();
    let _ = writeln!(
        s,
        r##"<circle id="robot" cx="{:.2}" cy="{:.2}" r="{}" fill="#c03030" fill-opacity="0.5"/>"##,
        last.robot_pos[0],
        last.robot_pos[1],
        task.config().robot_radius
    );
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn render_trajectory(task: &Task, trace: &EpisodeTrace, path: &Path, interval: usize) -> Result<()> {
    std::fs::write(path, render_svg(task, trace, interval)?)?;
    Ok(())
}
