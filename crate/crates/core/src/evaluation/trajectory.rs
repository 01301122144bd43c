use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dynamics::PedestrianState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Crossing,
    Sidewalk,
    #[default]
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Crossing => "crossing",
            Label::Sidewalk => "sidewalk",
            Label::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crossing" => Some(Label::Crossing),
            "sidewalk" => Some(Label::Sidewalk),
            "unknown" | "" => Some(Label::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub label: Label,
    /// Strictly increasing in `t`.
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Positions linearly interpolated at `t0 + k t_s` for every `k` with
    /// the time inside the recorded span.
    pub fn resample(&self, t_s: f64) -> Vec<[f64; 2]> {
        let Some(first) = self.samples.first() else {
            return Vec::new();
        };
        let n = (self.duration() / t_s + 1e-9).floor() as usize + 1;
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        for k in 0..n {
            let t = first.t + k as f64 * t_s;
            while j + 2 < self.samples.len() && self.samples[j + 1].t <= t {
                j += 1;
            }
            let a = self.samples[j];
            let Some(&b) = self.samples.get(j + 1) else {
                out.push([a.x, a.y]);
                continue;
            };
            let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            out.push([a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)]);
        }
        out
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    x: f64,
    y: f64,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

/// Parse a `t,x,y[,id,label]` table. Rows of one id need not be contiguous
/// but their times must increase strictly in file order. Trajectories come
/// out in order of first appearance.
pub fn parse_trajectories(reader: impl Read) -> Result<Vec<Trajectory>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let row = rec.map_err(|e| EvalError::MalformedRow {
            line: e.position().map_or(line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !(row.t.is_finite() && row.x.is_finite() && row.y.is_finite()) {
            return Err(EvalError::MalformedRow {
                line,
                message: "non-finite value".into(),
            });
        }
        let id = row.id.filter(|s| !s.is_empty()).unwrap_or_else(|| "0".into());
        let label = match row.label.as_deref() {
            None => Label::Unknown,
            Some(s) => Label::parse(s).ok_or_else(|| EvalError::MalformedRow {
                line,
                message: format!("unknown label {s:?}"),
            })?,
        };
        let traj = match out.iter_mut().position(|t| t.id == id) {
            Some(k) => &mut out[k],
            None => {
                out.push(Trajectory {
                    id: id.clone(),
                    label,
                    samples: Vec::new(),
                });
                out.last_mut().unwrap()
            }
        };
        if traj.samples.last().is_some_and(|s| s.t >= row.t) {
            return Err(EvalError::NonMonotoneTime { id, line });
        }
        if label != Label::Unknown {
            traj.label = label;
        }
        traj.samples.push(Sample {
            t: row.t,
            x: row.x,
            y: row.y,
        });
    }
    Ok(out)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, EvalError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectories(file)
}

pub fn write_trajectories(writer: impl Write, trajectories: &[Trajectory]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x", "y", "id", "label"])?;
    for traj in trajectories {
        for s in &traj.samples {
            w.write_record([
                s.t.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                traj.id.clone(),
                traj.label.as_str().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|source| EvalError::Io {
        path: "<writer>".into(),
        source,
    })
}

pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

/// Below this speed (m/s) the heading estimate is held.
pub const STATIONARY_SPEED: f64 = 1e-6;

/// A trajectory resampled at `t_s` with estimated full states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTrack {
    pub id: String,
    pub label: Label,
    pub t0: f64,
    pub t_s: f64,
    /// Resampled (unsmoothed) positions; these are the measurements.
    pub positions: Vec<[f64; 2]>,
    pub states: Vec<PedestrianState>,
}

impl StateTrack {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Centered moving average whose window shrinks symmetrically near the ends.
fn smooth(points: &[[f64; 2]], window: usize) -> Vec<[f64; 2]> {
    let half = window / 2;
    let n = points.len();
    (0..n)
        .map(|k| {
            let h = half.min(k).min(n - 1 - k);
            let span = &points[k - h..=k + h];
            let m = span.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
            [m[0] / span.len() as f64, m[1] / span.len() as f64]
        })
        .collect()
}

pub fn estimate_states(traj: &Trajectory, t_s: f64) -> Result<StateTrack, EvalError> {
    estimate_states_with(traj, t_s, DEFAULT_SMOOTHING_WINDOW)
}

/// Resample to `t_s`, smooth positions, and take speed and heading from
/// central differences (one-sided at the ends). Headings are unwrapped;
/// while stationary the last heading is held (0 before any motion).
pub fn estimate_states_with(traj: &Trajectory, t_s: f64, window: usize) -> Result<StateTrack, EvalError> {
    let positions = traj.resample(t_s);
    if traj.samples.len() < 3 || positions.len() < 3 {
        return Err(EvalError::TooShort {
            id: traj.id.clone(),
            samples: positions.len().min(traj.samples.len()),
        });
    }
    let sm = smooth(&positions, window.max(1));
    let n = sm.len();
    let mut states = Vec::with_capacity(n);
    let mut heading: Option<f64> = None;
    for k in 0..n {
        let (a, b, dt) = match k {
            0 => (sm[0], sm[1], t_s),
            k if k == n - 1 => (sm[n - 2], sm[n - 1], t_s),
            k => (sm[k - 1], sm[k + 1], 2.0 * t_s),
        };
        let vel = [(b[0] - a[0]) / dt, (b[1] - a[1]) / dt];
        let v = vel[0].hypot(vel[1]);
        if v > STATIONARY_SPEED {
            let raw = vel[1].atan2(vel[0]);
            heading = Some(match heading {
                None => raw,
                Some(prev) => prev + crate::dynamics::wrap_angle(raw - prev),
            });
        }
        states.push(PedestrianState {
            x: positions[k][0],
            y: positions[k][1],
            v: if v > STATIONARY_SPEED { v } else { 0.0 },
            theta: heading.unwrap_or(0.0),
        });
    }
    Ok(StateTrack {
        id: traj.id.clone(),
        label: traj.label,
        t0: traj.samples[0].t,
        t_s,
        positions,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(f: impl Fn(f64) -> [f64; 2], rate: f64, duration: f64) -> Trajectory {
        let n = (duration * rate).round() as usize;
        Trajectory {
            id: "a".into(),
            label: Label::Unknown,
            samples: (0..=n)
                .map(|i| {
                    let t = i as f64 / rate;
                    let p = f(t);
                    Sample { t, x: p[0], y: p[1] }
                })
                .collect(),
        }
    }

    #[test]
    fn parses_minimal_file() {
        let trajs = parse_trajectories("t,x,y\n0,0,0\n0.1,0.1,0\n0.2,0.2,0\n".as_bytes()).unwrap();
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].samples.len(), 3);
    }

    #[test]
    fn rejects_duplicate_time_and_bad_rows() {
        let err = parse_trajectories("t,x,y\n0,0,0\n0,1,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EvalError::NonMonotoneTime { line: 3, .. }));
        let err = parse_trajectories("t,x,y\n0,zero,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, EvalError::MalformedRow { .. }));
    }

    #[test]
    fn round_trips_with_ids_and_labels() {
        let mut a = track(|t| [t, 2.0 * t], 52.0, 1.0);
        a.label = Label::Crossing;
        let mut b = track(|t| [-t, 0.5], 52.0, 0.5);
        b.id = "b".into();
        b.label = Label::Sidewalk;
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(parse_trajectories(buf.as_slice()).unwrap(), vec![a, b]);
    }

    #[test]
    fn resamples_52hz_to_10hz() {
        let traj = track(|t| [t, 0.0], 52.0, 3.0);
        let pos = traj.resample(0.1);
        assert_eq!(pos.len(), 31);
        for (k, p) in pos.iter().enumerate() {
            assert!((p[0] - k as f64 * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_line_speed_and_heading() {
        let traj = track(|t| [t, 0.0], 52.0, 5.0);
        let st = estimate_states(&traj, 0.1).unwrap();
        for s in &st.states {
            assert!((s.v - 1.0).abs() < 1e-6);
            assert!(s.theta.abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_track_holds_zero() {
        let traj = track(|_| [1.0, 2.0], 52.0, 2.0);
        let st = estimate_states(&traj, 0.1).unwrap();
        assert!(st.states.iter().all(|s| s.v == 0.0 && s.theta == 0.0));
    }

    #[test]
    fn quarter_circle_heading_sweeps() {
        // Radius 5 m at 1 m/s: heading is t / 5 + 0 starting eastward at (0, -5).
        let r = 5.0;
        let dur = r * std::f64::consts::FRAC_PI_2;
        let traj = track(|t| [r * (t / r).sin(), -r * (t / r).cos()], 52.0, dur);
        let st = estimate_states(&traj, 0.1).unwrap();
        let n = st.len();
        for k in 2..n - 2 {
            let t = k as f64 * 0.1;
            assert!((st.states[k].theta - t / r).abs() < 0.05);
            assert!(st.states[k].theta >= st.states[k - 1].theta);
        }
    }

    #[test]
    fn too_short() {
        let traj = track(|t| [t, 0.0], 10.0, 0.1);
        assert!(matches!(estimate_states(&traj, 0.1), Err(EvalError::TooShort { .. })));
    }
}
