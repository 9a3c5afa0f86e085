//! Trajectory file format: structured text with a type tag, keypoints, and
//! optional nullspace coordinates. Floats are written with the shortest
//! round-trip representation, so write → read → write is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::math::Vec3;

use super::{Keypoints, Lissajous, SplineTrajectory, Trajectory, TrajectoryFamily, ZigZag};

/// Serialize a trajectory together with its family tag.
pub fn trajectory_to_string(traj: &Trajectory, family: TrajectoryFamily) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "type = {}", family.tag());
    match traj {
        Trajectory::Spline(spline) => {
            let kp = spline.keypoints();
            let _ = writeln!(s, "degree = {}", spline.degree());
            let _ = writeln!(s, "keypoints = {}", kp.len());
            for (p, t) in kp.positions.iter().zip(&kp.times) {
                let _ = writeln!(s, "kp = {:?} {:?} {:?} {:?}", p.x, p.y, p.z, t);
            }
            if spline.phi().iter().any(|v| *v != 0.0) {
                let mut line = String::from("phi =");
                for v in spline.phi().iter() {
                    let _ = write!(line, " {:?}", v);
                }
                let _ = writeln!(s, "{line}");
            }
        }
        Trajectory::ZigZag(z) => {
            let kp = &z.keypoints;
            let _ = writeln!(s, "keypoints = {}", kp.len());
            for (p, t) in kp.positions.iter().zip(&kp.times) {
                let _ = writeln!(s, "kp = {:?} {:?} {:?} {:?}", p.x, p.y, p.z, t);
            }
        }
        Trajectory::Lissajous(l) => {
            let v3 = |v: Vec3| format!("{:?} {:?} {:?}", v.x, v.y, v.z);
            let _ = writeln!(s, "amplitude = {}", v3(l.amplitude));
            let _ = writeln!(s, "frequency = {}", v3(l.frequency));
            let _ = writeln!(s, "phase = {}", v3(l.phase));
            let _ = writeln!(s, "center = {}", v3(l.center));
            let _ = writeln!(s, "duration = {:?}", l.duration);
        }
    }
    s
}

pub fn write_trajectory(
    path: impl AsRef<Path>,
    traj: &Trajectory,
    family: TrajectoryFamily,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trajectory_to_string(traj, family)).map_err(|e| Error::io(path, e))
}

pub fn trajectory_from_string(text: &str) -> std::result::Result<(Trajectory, TrajectoryFamily), String> {
    let mut family = None;
    let mut expected_kp = None;
    let mut positions = Vec::new();
    let mut times = Vec::new();
    let mut phi: Option<Vec<f64>> = None;
    let mut amplitude = None;
    let mut frequency = None;
    let mut phase = None;
    let mut center = None;
    let mut duration = None;
    let mut degree = 7usize;

    let parse_f64 = |v: &str, line: usize| -> std::result::Result<f64, String> {
        v.parse::<f64>()
            .map_err(|_| format!("line {}: bad number `{v}`", line + 1))
    };
    let parse_vec3 = |v: &str, line: usize| -> std::result::Result<Vec3, String> {
        let parts: Vec<&str> = v.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format!("line {}: expected 3 numbers", line + 1));
        }
        Ok(Vec3::new(
            parse_f64(parts[0], line)?,
            parse_f64(parts[1], line)?,
            parse_f64(parts[2], line)?,
        ))
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "type" => {
                family = Some(
                    TrajectoryFamily::from_tag(value)
                        .ok_or_else(|| format!("line {}: unknown type `{value}`", lineno + 1))?,
                )
            }
            "degree" => {
                degree = value
                    .parse()
                    .map_err(|_| format!("line {}: bad degree", lineno + 1))?
            }
            "keypoints" => {
                expected_kp = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| format!("line {}: bad keypoint count", lineno + 1))?,
                )
            }
            "kp" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(format!("line {}: kp needs `x y z t`", lineno + 1));
                }
                positions.push(Vec3::new(
                    parse_f64(parts[0], lineno)?,
                    parse_f64(parts[1], lineno)?,
                    parse_f64(parts[2], lineno)?,
                ));
                times.push(parse_f64(parts[3], lineno)?);
            }
            "phi" => {
                let vals: std::result::Result<Vec<f64>, String> = value
                    .split_whitespace()
                    .map(|v| parse_f64(v, lineno))
                    .collect();
                phi = Some(vals?);
            }
            "amplitude" => amplitude = Some(parse_vec3(value, lineno)?),
            "frequency" => frequency = Some(parse_vec3(value, lineno)?),
            "phase" => phase = Some(parse_vec3(value, lineno)?),
            "center" => center = Some(parse_vec3(value, lineno)?),
            "duration" => duration = Some(parse_f64(value, lineno)?),
            other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
        }
    }

    let family = family.ok_or("missing `type`")?;
    if let Some(n) = expected_kp {
        if positions.len() != n {
            return Err(format!("declared {} keypoints, found {}", n, positions.len()));
        }
    }

    let traj = match family {
        TrajectoryFamily::Lissajous => Trajectory::Lissajous(Lissajous {
            amplitude: amplitude.ok_or("missing `amplitude`")?,
            frequency: frequency.ok_or("missing `frequency`")?,
            phase: phase.ok_or("missing `phase`")?,
            center: center.ok_or("missing `center`")?,
            duration: duration.ok_or("missing `duration`")?,
        }),
        TrajectoryFamily::ZigZag => {
            let kp = Keypoints::new(positions, times).map_err(|e| e.to_string())?;
            Trajectory::ZigZag(ZigZag::new(kp))
        }
        _ => {
            let kp = Keypoints::new(positions, times).map_err(|e| e.to_string())?;
            let spline = SplineTrajectory::minsnap(kp, degree).map_err(|e| e.to_string())?;
            let spline = match phi {
                Some(v) => spline
                    .with_phi(DVector::from_vec(v))
                    .map_err(|e| e.to_string())?,
                None => spline,
            };
            Trajectory::Spline(spline)
        }
    };
    Ok((traj, family))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, TrajectoryFamily)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    trajectory_from_string(&text).map_err(|detail| Error::format(path, detail))
}
