//! BVH subset parser and writer.
//!
//! Supported grammar: a HIERARCHY block of ROOT/JOINT/OFFSET/CHANNELS/End Site
//! (no SCALE channels, single root), then a MOTION block with `Frames:` and
//! `Frame Time:` lines followed by one whitespace-separated row per frame.
//! Every parse error carries the 1-based source line.

use super::{ChannelPose, MotionIoError, RotationOrder, Skeleton};
use crate::math::{Axis3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Channel {
    Position(Axis3),
    Rotation(Axis3),
}

fn channel_from_token(tok: &str) -> Option<Channel> {
    match tok {
        "Xposition" => Some(Channel::Position(Axis3::X)),
        "Yposition" => Some(Channel::Position(Axis3::Y)),
        "Zposition" => Some(Channel::Position(Axis3::Z)),
        "Xrotation" => Some(Channel::Rotation(Axis3::X)),
        "Yrotation" => Some(Channel::Rotation(Axis3::Y)),
        "Zrotation" => Some(Channel::Rotation(Axis3::Z)),
        _ => None,
    }
}

struct Token<'a> {
    line: usize,
    text: &'a str,
}

/// Whitespace tokenizer that remembers line numbers and can hand back the
/// untokenized remainder for frame-row parsing.
struct Cursor<'a> {
    lines: Vec<(usize, &'a str)>,
    line_idx: usize,
    tokens: std::collections::VecDeque<Token<'a>>,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .collect();
        Cursor { lines, line_idx: 0, tokens: Default::default() }
    }

    fn refill(&mut self) {
        while self.tokens.is_empty() && self.line_idx < self.lines.len() {
            let (no, line) = self.lines[self.line_idx];
            self.line_idx += 1;
            for text in line.split_whitespace() {
                self.tokens.push_back(Token { line: no, text });
            }
        }
    }

    fn next(&mut self) -> Result<Token<'a>, MotionIoError> {
        self.refill();
        self.tokens.pop_front().ok_or_else(|| {
            MotionIoError::at(self.lines.last().map_or(0, |l| l.0), "unexpected end of file")
        })
    }

    fn expect(&mut self, keyword: &str) -> Result<usize, MotionIoError> {
        let tok = self.next()?;
        if tok.text == keyword {
            Ok(tok.line)
        } else {
            Err(MotionIoError::at(
                tok.line,
                format!("expected '{keyword}', found '{}'", tok.text),
            ))
        }
    }

    fn next_f64(&mut self, what: &str) -> Result<f64, MotionIoError> {
        let tok = self.next()?;
        tok.text.parse::<f64>().map_err(|_| {
            MotionIoError::at(tok.line, format!("expected {what}, found '{}'", tok.text))
        })
    }

    fn next_usize(&mut self, what: &str) -> Result<usize, MotionIoError> {
        let tok = self.next()?;
        tok.text.parse::<usize>().map_err(|_| {
            MotionIoError::at(tok.line, format!("expected {what}, found '{}'", tok.text))
        })
    }

    /// Remaining input as (line number, text) rows, for frame-row parsing.
    /// Tokens left over from a partially consumed line are rejoined into a
    /// synthetic row for that line.
    fn remaining_lines(&mut self) -> Vec<(usize, String)> {
        let mut out: Vec<(usize, String)> = Vec::new();
        while let Some(tok) = self.tokens.pop_front() {
            match out.last_mut() {
                Some((line, text)) if *line == tok.line => {
                    text.push(' ');
                    text.push_str(tok.text);
                }
                _ => out.push((tok.line, tok.text.to_string())),
            }
        }
        out.extend(self.lines[self.line_idx..].iter().map(|(n, l)| (*n, (*l).to_string())));
        self.line_idx = self.lines.len();
        out
    }
}

#[derive(Default)]
struct Joints {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    channels: Vec<Vec<Channel>>,
    orders: Vec<RotationOrder>,
}

fn parse_offset(cur: &mut Cursor) -> Result<Vec3, MotionIoError> {
    cur.expect("OFFSET")?;
    Ok(Vec3::new(
        cur.next_f64("offset x")?,
        cur.next_f64("offset y")?,
        cur.next_f64("offset z")?,
    ))
}

fn parse_channels(cur: &mut Cursor) -> Result<(Vec<Channel>, RotationOrder), MotionIoError> {
    let line = cur.expect("CHANNELS")?;
    let count = cur.next_usize("channel count")?;
    let mut channels = Vec::with_capacity(count);
    let mut rot_axes = Vec::new();
    for _ in 0..count {
        let tok = cur.next()?;
        let ch = channel_from_token(tok.text).ok_or_else(|| {
            MotionIoError::at(tok.line, format!("unknown channel token '{}'", tok.text))
        })?;
        if let Channel::Rotation(axis) = ch {
            rot_axes.push(axis);
        }
        channels.push(ch);
    }
    let order = match rot_axes.len() {
        0 => RotationOrder::XYZ,
        3 => {
            if rot_axes[0] == rot_axes[1] || rot_axes[1] == rot_axes[2] || rot_axes[0] == rot_axes[2]
            {
                return Err(MotionIoError::at(line, "repeated rotation axis in CHANNELS"));
            }
            RotationOrder([rot_axes[0], rot_axes[1], rot_axes[2]])
        }
        n => {
            return Err(MotionIoError::at(
                line,
                format!("expected 0 or 3 rotation channels per joint, found {n}"),
            ))
        }
    };
    Ok((channels, order))
}

fn parse_joint(
    cur: &mut Cursor,
    joints: &mut Joints,
    parent: Option<usize>,
    name: String,
) -> Result<(), MotionIoError> {
    cur.expect("{")?;
    let offset = parse_offset(cur)?;
    let (channels, order) = parse_channels(cur)?;
    let index = joints.names.len();
    joints.names.push(name);
    joints.parents.push(parent);
    joints.offsets.push(offset);
    joints.channels.push(channels);
    joints.orders.push(order);

    loop {
        let tok = cur.next()?;
        match tok.text {
            "JOINT" => {
                let child = cur.next()?.text.to_string();
                parse_joint(cur, joints, Some(index), child)?;
            }
            "End" => {
                let site = cur.next()?;
                if site.text != "Site" {
                    return Err(MotionIoError::at(site.line, "expected 'Site' after 'End'"));
                }
                cur.expect("{")?;
                parse_offset(cur)?;
                cur.expect("}")?;
            }
            "}" => return Ok(()),
            other => {
                return Err(MotionIoError::at(
                    tok.line,
                    format!("expected JOINT, End Site or '}}', found '{other}'"),
                ))
            }
        }
    }
}

/// Parse a BVH document into a skeleton and its channel pose.
pub fn parse_bvh(text: &str) -> Result<(Skeleton, ChannelPose), MotionIoError> {
    let mut cur = Cursor::new(text);
    cur.expect("HIERARCHY")?;
    cur.expect("ROOT")?;
    let root_name = cur.next()?.text.to_string();
    let mut joints = Joints::default();
    parse_joint(&mut cur, &mut joints, None, root_name)?;

    cur.expect("MOTION")?;
    cur.expect("Frames:")?;
    let declared_frames = cur.next_usize("frame count")?;
    cur.expect("Frame")?;
    let time_line = cur.expect("Time:")?;
    let frame_time = cur.next_f64("frame time")?;
    if !(frame_time > 0.0) {
        return Err(MotionIoError::at(time_line, format!("frame time must be positive, got {frame_time}")));
    }

    let total_channels: usize = joints.channels.iter().map(Vec::len).sum();
    let joint_count = joints.names.len();
    let mut root_translation = Vec::with_capacity(declared_frames);
    let mut rotations_deg = Vec::with_capacity(declared_frames);
    let mut last_line = time_line;

    for (line_no, line) in cur.remaining_lines() {
        if line.trim().is_empty() {
            continue;
        }
        last_line = line_no;
        let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|_| MotionIoError::at(line_no, "non-numeric channel value"))?;
        if values.len() != total_channels {
            return Err(MotionIoError::at(
                line_no,
                format!(
                    "channel-count mismatch: row has {} values, hierarchy declares {total_channels}",
                    values.len()
                ),
            ));
        }
        if root_translation.len() == declared_frames {
            return Err(MotionIoError::at(
                line_no,
                format!("frame count disagreement: more rows than the declared {declared_frames}"),
            ));
        }
        let mut it = values.into_iter();
        let mut translation = Vec3::ZERO;
        let mut frame_rot = vec![[0.0f64; 3]; joint_count];
        for (j, channels) in joints.channels.iter().enumerate() {
            let mut rot_slot = 0;
            for ch in channels {
                let v = it.next().expect("length checked above");
                match ch {
                    Channel::Position(axis) => {
                        // Translation channels are honored on the root only.
                        if j == 0 {
                            match axis {
                                Axis3::X => translation.x = v,
                                Axis3::Y => translation.y = v,
                                Axis3::Z => translation.z = v,
                            }
                        }
                    }
                    Channel::Rotation(_) => {
                        frame_rot[j][rot_slot] = v;
                        rot_slot += 1;
                    }
                }
            }
        }
        root_translation.push(translation);
        rotations_deg.push(frame_rot);
    }

    if root_translation.len() != declared_frames {
        return Err(MotionIoError::at(
            last_line,
            format!(
                "frame count disagreement: declared {declared_frames}, found {}",
                root_translation.len()
            ),
        ));
    }

    let skeleton = Skeleton::new(joints.names, joints.parents, joints.offsets)?;
    let pose = ChannelPose {
        frame_rate: 1.0 / frame_time,
        root_translation,
        rotations_deg,
        orders: joints.orders,
    };
    Ok((skeleton, pose))
}

/// Serialize a skeleton + channel pose back to BVH text. Floats use the
/// shortest representation that parses back to the identical value.
pub fn write_bvh(skeleton: &Skeleton, pose: &ChannelPose) -> String {
    fn axis_rot_token(axis: Axis3) -> &'static str {
        match axis {
            Axis3::X => "Xrotation",
            Axis3::Y => "Yrotation",
            Axis3::Z => "Zrotation",
        }
    }

    fn write_joint(out: &mut String, skeleton: &Skeleton, pose: &ChannelPose, j: usize, depth: usize) {
        let inner = "  ".repeat(depth + 1);
        let off = skeleton.rest_offset(j);
        out.push_str(&format!("{inner}OFFSET {} {} {}\n", off.x, off.y, off.z));
        let order = pose.orders[j];
        if skeleton.parent(j).is_none() {
            out.push_str(&format!(
                "{inner}CHANNELS 6 Xposition Yposition Zposition {} {} {}\n",
                axis_rot_token(order.0[0]),
                axis_rot_token(order.0[1]),
                axis_rot_token(order.0[2])
            ));
        } else {
            out.push_str(&format!(
                "{inner}CHANNELS 3 {} {} {}\n",
                axis_rot_token(order.0[0]),
                axis_rot_token(order.0[1]),
                axis_rot_token(order.0[2])
            ));
        }
        let children = skeleton.children(j);
        if children.is_empty() {
            out.push_str(&format!("{inner}End Site\n{inner}{{\n{inner}  OFFSET 0 0 0\n{inner}}}\n"));
        } else {
            for c in children {
                out.push_str(&format!("{inner}JOINT {}\n{inner}{{\n", skeleton.joint_names()[c]));
                write_joint(out, skeleton, pose, c, depth + 1);
                out.push_str(&format!("{inner}}}\n"));
            }
        }
    }

    let root = skeleton.root_index();
    let mut out = String::new();
    out.push_str("HIERARCHY\n");
    out.push_str(&format!("ROOT {}\n{{\n", skeleton.joint_names()[root]));
    write_joint(&mut out, skeleton, pose, root, 0);
    out.push_str("}\n");
    out.push_str("MOTION\n");
    out.push_str(&format!("Frames: {}\n", pose.frame_count()));
    out.push_str(&format!("Frame Time: {}\n", 1.0 / pose.frame_rate));
    for f in 0..pose.frame_count() {
        let t = pose.root_translation[f];
        let mut row = vec![t.x.to_string(), t.y.to_string(), t.z.to_string()];
        for j in 0..pose.joint_count() {
            for k in 0..3 {
                row.push(pose.rotations_deg[f][j][k].to_string());
            }
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_io::forward_kinematics;

    const MINIMAL: &str = "\
HIERARCHY
ROOT pelvis
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT spine
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 1 0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.05
0 0 0 0 0 0 0 0 0
0 0 0 0 0 0 0 0 0
";

    #[test]
    fn minimal_two_joint_file() {
        let (skeleton, pose) = parse_bvh(MINIMAL).unwrap();
        assert_eq!(skeleton.joint_count(), 2);
        assert_eq!(skeleton.joint_names(), &["pelvis".to_string(), "spine".to_string()]);
        assert_eq!(pose.frame_count(), 2);
        // Frame Time 0.05 -> 20 Hz.
        assert!((pose.frame_rate - 20.0).abs() < 1e-12);
        // All-zero channels: FK leaves every joint at its rest offset.
        let motion = forward_kinematics(&skeleton, &pose).unwrap();
        for frame in &motion.positions {
            assert_eq!(frame[0], Vec3::ZERO);
            assert_eq!(frame[1], Vec3::new(0.0, 1.0, 0.0));
        }
    }

    const THREE_JOINT: &str = "\
HIERARCHY
ROOT hip
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT knee
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    JOINT ankle
    {
      OFFSET 0.5 0.5 0
      CHANNELS 3 Zrotation Xrotation Yrotation
      End Site
      {
        OFFSET 0 1 0
      }
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.1
0 0 0 0 0 0 0 0 0 0 0 0
0 0 0 90 0 0 0 0 0 0 0 0
";

    #[test]
    fn root_z_rotation_against_hand_rotation_matrix() {
        // Hand-authored three-joint file; frame 1 rotates the root by 90
        // degrees about z. Expected positions follow from applying the
        // hand-built matrix [[0,-1,0],[1,0,0],[0,0,1]] to the rest offsets.
        let (skeleton, pose) = parse_bvh(THREE_JOINT).unwrap();
        assert_eq!(skeleton.joint_count(), 3);
        let motion = forward_kinematics(&skeleton, &pose).unwrap();
        let rot90 = |v: Vec3| Vec3::new(-v.y, v.x, v.z);
        let knee_rest = Vec3::new(0.0, 1.0, 0.0);
        let ankle_rest = Vec3::new(0.5, 1.5, 0.0); // cumulative offsets
        assert!((motion.positions[0][1] - knee_rest).norm() < 1e-12);
        assert!((motion.positions[0][2] - ankle_rest).norm() < 1e-12);
        assert!((motion.positions[1][1] - rot90(knee_rest)).norm() < 1e-12);
        assert!((motion.positions[1][2] - rot90(ankle_rest)).norm() < 1e-12);
    }

    #[test]
    fn channel_count_mismatch_reports_line() {
        let text = MINIMAL.replace("0 0 0 0 0 0 0 0 0\n0 0 0 0 0 0 0 0 0", "0 0 0 0 0 0 0 0 0\n0 0 0 0 0");
        let err = parse_bvh(&text).unwrap_err();
        match err {
            MotionIoError::Parse { line, message } => {
                assert_eq!(line, 20);
                assert!(message.contains("channel-count mismatch"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_channel_token_reports_line() {
        let text = MINIMAL.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Zrotation Xrotation Wobble");
        let err = parse_bvh(&text).unwrap_err();
        match err {
            MotionIoError::Parse { line, message } => {
                assert_eq!(line, 9);
                assert!(message.contains("unknown channel token 'Wobble'"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn frame_count_disagreement_reports_line() {
        let text = MINIMAL.replace("Frames: 2", "Frames: 3");
        let err = parse_bvh(&text).unwrap_err();
        match err {
            MotionIoError::Parse { line, message } => {
                assert_eq!(line, 20);
                assert!(message.contains("frame count disagreement"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_header_reports_line() {
        let err = parse_bvh("NOT_A_BVH\n").unwrap_err();
        match err {
            MotionIoError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn scale_channel_rejected() {
        let text = MINIMAL.replace(
            "CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation",
            "CHANNELS 6 Xscale Yposition Zposition Zrotation Xrotation Yrotation",
        );
        assert!(parse_bvh(&text).is_err());
    }

    #[test]
    fn write_parse_round_trip_is_exact() {
        let (skeleton, mut pose) = parse_bvh(MINIMAL).unwrap();
        pose.rotations_deg[1][0] = [33.25, -12.5, 7.125];
        pose.root_translation[1] = Vec3::new(0.1, 0.25, -0.3);
        let text = write_bvh(&skeleton, &pose);
        let (skeleton2, pose2) = parse_bvh(&text).unwrap();
        assert_eq!(skeleton, skeleton2);
        assert_eq!(pose, pose2);
    }

    mod fuzz {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Parsing is total: arbitrary input either parses or returns a
            // located error, never panics.
            #[test]
            fn arbitrary_text_never_panics(text in "\\PC*") {
                let _ = parse_bvh(&text);
            }

            // Mutations of a valid file: truncations, splices, corrupted
            // bytes. Same totality requirement.
            #[test]
            fn mutated_valid_file_never_panics(
                cut in 0usize..400,
                splice in "[ -~]{0,16}",
                at in 0usize..400,
            ) {
                let mut text = THREE_JOINT.to_string();
                let at = at.min(text.len());
                text.insert_str(at, &splice);
                text.truncate(cut.min(text.len()));
                let _ = parse_bvh(&text);
            }
        }
    }
}
