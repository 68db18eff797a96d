//! Joint-trajectory CSV: comma-separated, decimal point '.', UTF-8.
//! First line is a header of `<joint>_x,<joint>_y,<joint>_z` triples; an
//! optional leading comment `# frame_rate=<Hz>` carries the rate.

use super::{MotionIoError, MotionSequence, Provenance};
use crate::math::Vec3;

/// Column map for [`parse_joint_csv`].
#[derive(Debug, Clone)]
pub struct JointCsvSpec {
    /// Canonical joint order for the output. Empty = take the header's order.
    pub joints: Vec<String>,
    /// Overrides the file's `# frame_rate=` comment when set.
    pub frame_rate: Option<f64>,
    pub provenance: Provenance,
    pub activity_label: Option<String>,
    pub subject_id: Option<String>,
}

impl JointCsvSpec {
    pub fn new(provenance: Provenance) -> Self {
        JointCsvSpec {
            joints: Vec::new(),
            frame_rate: None,
            provenance,
            activity_label: None,
            subject_id: None,
        }
    }
}

fn parse_rate_comment(line: &str) -> Option<f64> {
    let rest = line.strip_prefix('#')?.trim();
    let value = rest.strip_prefix("frame_rate=")?.trim();
    value.parse().ok()
}

/// Parse a joint-trajectory CSV into a motion sequence with joints ordered
/// per `spec.joints` (or the header order when the spec leaves it empty).
pub fn parse_joint_csv(text: &str, spec: &JointCsvSpec) -> Result<MotionSequence, MotionIoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();

    let mut file_rate = None;
    while let Some((_, line)) = lines.peek() {
        if line.starts_with('#') {
            if let Some(rate) = parse_rate_comment(line) {
                file_rate = Some(rate);
            }
            lines.next();
        } else {
            break;
        }
    }

    let (header_line_no, header) = lines
        .next()
        .ok_or_else(|| MotionIoError::at(1, "empty file: missing header row"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    // Joint order: either the caller's canonical order, or first-appearance
    // order of `<joint>_x` columns in the header.
    let joints: Vec<String> = if spec.joints.is_empty() {
        let mut seen = Vec::new();
        for c in &columns {
            if let Some(stem) = c.strip_suffix("_x") {
                if !seen.iter().any(|s: &String| s == stem) {
                    seen.push(stem.to_string());
                }
            }
        }
        if seen.is_empty() {
            return Err(MotionIoError::at(header_line_no, "header declares no <joint>_x columns"));
        }
        seen
    } else {
        spec.joints.clone()
    };

    let mut column_triples = Vec::with_capacity(joints.len());
    for joint in &joints {
        let mut triple = [0usize; 3];
        for (k, suffix) in ["_x", "_y", "_z"].iter().enumerate() {
            let name = format!("{joint}{suffix}");
            let idx = columns.iter().position(|c| *c == name).ok_or_else(|| {
                MotionIoError::at(header_line_no, format!("missing column '{name}'"))
            })?;
            triple[k] = idx;
        }
        column_triples.push(triple);
    }

    let frame_rate = spec.frame_rate.or(file_rate).ok_or_else(|| {
        MotionIoError::at(
            header_line_no,
            "frame rate not provided: add a '# frame_rate=<Hz>' comment or set it in the spec",
        )
    })?;

    let mut positions = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(MotionIoError::at(
                line_no,
                format!("row has {} cells, header has {}", cells.len(), columns.len()),
            ));
        }
        let mut frame = Vec::with_capacity(joints.len());
        for (joint, triple) in joints.iter().zip(&column_triples) {
            let mut coords = [0.0f64; 3];
            for (k, &ci) in triple.iter().enumerate() {
                coords[k] = cells[ci].parse().map_err(|_| {
                    MotionIoError::at(
                        line_no,
                        format!("non-numeric cell '{}' in column for joint '{joint}'", cells[ci]),
                    )
                })?;
            }
            frame.push(Vec3::from(coords));
        }
        positions.push(frame);
    }

    let mut motion = MotionSequence::new(frame_rate, positions, spec.provenance)?;
    motion.activity_label = spec.activity_label.clone();
    motion.subject_id = spec.subject_id.clone();
    Ok(motion)
}

/// Serialize a motion sequence as a joint-trajectory CSV. Inverse of
/// [`parse_joint_csv`] up to exact float round-tripping.
pub fn write_joint_csv(motion: &MotionSequence, joint_names: &[String]) -> String {
    assert_eq!(
        joint_names.len(),
        motion.joint_count(),
        "joint name count must match motion joint count"
    );
    let mut out = String::new();
    out.push_str(&format!("# frame_rate={}\n", motion.frame_rate));
    let header: Vec<String> = joint_names
        .iter()
        .flat_map(|j| [format!("{j}_x"), format!("{j}_y"), format!("{j}_z")])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for frame in &motion.positions {
        let row: Vec<String> = frame
            .iter()
            .flat_map(|p| [p.x.to_string(), p.y.to_string(), p.z.to_string()])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
