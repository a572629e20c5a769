//! Forward kinematics for a serial 7-joint arm described by modified
//! Denavit–Hartenberg parameters.

use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_JOINTS: usize = 7;

const PANDA_TOML: &str = include_str!("../data/panda.toml");

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

/// Joint angles in radians, one per joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVector(pub [f64; N_JOINTS]);

impl JointVector {
    pub fn angles(&self) -> &[f64; N_JOINTS] {
        &self.0
    }
}

/// One row of the modified DH table. `link_length` and `link_twist` belong to
/// the link preceding the joint; `link_offset` and `joint_offset` to the joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub link_length: f64,
    pub link_twist: f64,
    pub link_offset: f64,
    pub joint_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn contains(&self, angle: f64) -> bool {
        self.lower <= angle && angle <= self.upper
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.lower, self.upper)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Geometry and joint limits of the arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub links: [DhRow; N_JOINTS],
    pub limits: [JointLimit; N_JOINTS],
    pub tool_offset: Vec3,
}

impl ArmModel {
    /// The bundled Franka Emika Panda model.
    pub fn panda() -> Self {
        Self::from_toml_str(PANDA_TOML).expect("bundled panda model is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Parses the plain-text model document (`dh`, `limits`, `tool_offset`).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::parse("<document>", e.message().to_string()))?;

        let dh = numeric_rows(&table, "dh", N_JOINTS, 4)?;
        let limits = numeric_rows(&table, "limits", N_JOINTS, 2)?;
        let tool = numeric_rows(&table, "tool_offset", 1, 3)?;

        let links = std::array::from_fn(|i| DhRow {
            link_length: dh[i][0],
            link_twist: dh[i][1],
            link_offset: dh[i][2],
            joint_offset: dh[i][3],
        });
        let limits = std::array::from_fn(|i| JointLimit {
            lower: limits[i][0],
            upper: limits[i][1],
        });
        let model = ArmModel {
            links,
            limits,
            tool_offset: Vec3::new(tool[0][0], tool[0][1], tool[0][2]),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, lim) in self.limits.iter().enumerate() {
            if !(lim.lower < lim.upper) {
                return Err(Error::parse(
                    "limits",
                    format!("row {i}: lower {} is not below upper {}", lim.lower, lim.upper),
                ));
            }
        }
        Ok(())
    }

    /// Mid-range of every joint interval.
    pub fn home(&self) -> JointVector {
        JointVector(std::array::from_fn(|i| self.limits[i].midpoint()))
    }

    pub fn check_limits(&self, joints: &JointVector) -> Result<()> {
        for (i, (&q, lim)) in joints.0.iter().zip(&self.limits).enumerate() {
            if !q.is_finite() || !lim.contains(q) {
                return Err(Error::Domain(format!(
                    "joint {} angle {q} outside [{}, {}]",
                    i + 1,
                    lim.lower,
                    lim.upper
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, joints: &mut JointVector) {
        for (q, lim) in joints.0.iter_mut().zip(&self.limits) {
            *q = lim.clamp(*q);
        }
    }
}

/// Reads `field` as a `rows × cols` array of numbers. A one-row request
/// accepts a flat array.
fn numeric_rows(table: &toml::Table, field: &str, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    let value = table.get(field).ok_or_else(|| Error::parse(field, "missing field"))?;
    let outer = value
        .as_array()
        .ok_or_else(|| Error::parse(field, "expected an array"))?;

    let number = |v: &toml::Value, at: String| -> Result<f64> {
        let x = match v {
            toml::Value::Float(f) => *f,
            toml::Value::Integer(i) => *i as f64,
            _ => return Err(Error::parse(field, format!("{at}: expected a number"))),
        };
        if !x.is_finite() {
            return Err(Error::parse(field, format!("{at}: value is not finite")));
        }
        Ok(x)
    };

    if rows == 1 && outer.iter().all(|v| !v.is_array()) {
        if outer.len() != cols {
            return Err(Error::parse(
                field,
                format!("expected {cols} entries, found {}", outer.len()),
            ));
        }
        let row = outer
            .iter()
            .enumerate()
            .map(|(j, v)| number(v, format!("entry {j}")))
            .collect::<Result<_>>()?;
        return Ok(vec![row]);
    }

    if outer.len() != rows {
        return Err(Error::parse(
            field,
            format!("expected {rows} rows, found {}", outer.len()),
        ));
    }
    outer
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row
                .as_array()
                .ok_or_else(|| Error::parse(field, format!("row {i}: expected an array")))?;
            if row.len() != cols {
                return Err(Error::parse(
                    field,
                    format!("row {i}: expected {cols} entries, found {}", row.len()),
                ));
            }
            row.iter()
                .enumerate()
                .map(|(j, v)| number(v, format!("row {i} entry {j}")))
                .collect()
        })
        .collect()
}

/// Position of the tool point in the base frame.
pub fn forward_kinematics(model: &ArmModel, joints: &JointVector) -> Result<Vec3> {
    model.check_limits(joints)?;
    Ok(tool_position(model, joints))
}

/// Unchecked kinematic chain; callers guarantee `joints` are within limits.
pub(crate) fn tool_position(model: &ArmModel, joints: &JointVector) -> Vec3 {
    let x_axis = Vector3::x_axis();
    let z_axis = Vector3::z_axis();
    let mut frame = Isometry3::identity();
    for (link, &q) in model.links.iter().zip(&joints.0) {
        // Rx(alpha) · Tx(a) · Rz(theta) · Tz(d)
        let twist = Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&x_axis, link.link_twist),
        );
        let along_x = Isometry3::translation(link.link_length, 0.0, 0.0);
        let joint = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, link.link_offset),
            UnitQuaternion::from_axis_angle(&z_axis, q + link.joint_offset),
        );
        frame = frame * twist * along_x * joint;
    }
    let t = model.tool_offset;
    let p = frame.transform_point(&Point3::new(t.x, t.y, t.z));
    Vec3::new(p.x, p.y, p.z)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference positions from a standalone numpy chain of 4x4 modified-DH
    // matrices over the bundled table.
    const HOME_EE: [f64; 3] = [0.6121690801319257, -4.2089891424874234e-17, 0.5560199087903737];
    const ZERO_EE: [f64; 3] = [0.088, -2.576656865406031e-17, 0.8225999999999999];
    const MIXED_Q: [f64; 7] = [0.3, -0.5, 0.7, -1.2, 0.4, 2.0, -1.0];
    const MIXED_EE: [f64; 3] = [0.021954313602900462, 0.47197939844441256, 0.9447781056887373];

    fn close(a: Vec3, b: [f64; 3], tol: f64) -> bool {
        a.distance(&Vec3::from(b)) <= tol
    }

    #[test]
    fn bundled_model_matches_reference_positions() {
        let model = ArmModel::panda();
        let home = model.home();
        assert!(close(forward_kinematics(&model, &home).unwrap(), HOME_EE, 1e-12));
        assert!(close(
            forward_kinematics(&model, &JointVector(MIXED_Q)).unwrap(),
            MIXED_EE,
            1e-12
        ));
    }

    #[test]
    fn zero_pose_needs_relaxed_limits() {
        let mut model = ArmModel::panda();
        let zero = JointVector([0.0; 7]);
        // joint 4 of the real arm never reaches zero
        assert!(matches!(forward_kinematics(&model, &zero), Err(Error::Domain(_))));
        for lim in &mut model.limits {
            *lim = JointLimit {
                lower: -4.0,
                upper: 4.0,
            };
        }
        assert!(close(forward_kinematics(&model, &zero).unwrap(), ZERO_EE, 1e-12));
    }

    #[test]
    fn wrist_roll_does_not_move_tool_point() {
        let model = ArmModel::panda();
        let mut q = model.home();
        let before = forward_kinematics(&model, &q).unwrap();
        q.0[6] = 1.3;
        let after = forward_kinematics(&model, &q).unwrap();
        assert!(before.distance(&after) < 1e-12);
    }

    #[test]
    fn repeated_evaluation_is_bitwise_identical() {
        let model = ArmModel::panda();
        let q = JointVector(MIXED_Q);
        let a = forward_kinematics(&model, &q).unwrap();
        let b = forward_kinematics(&model, &q).unwrap();
        assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
    }

    #[test]
    fn out_of_limit_joint_is_a_domain_error() {
        let model = ArmModel::panda();
        let mut q = model.home();
        q.0[1] = 2.0;
        let err = forward_kinematics(&model, &q).unwrap_err();
        assert!(err.to_string().contains("joint 2"));
    }

    #[test]
    fn parse_errors_name_the_field() {
        let text = PANDA_TOML.replace("tool_offset = [0.0, 0.0, 0.2104]", "tool_offset = [0.0, 0.2104]");
        let err = ArmModel::from_toml_str(&text).unwrap_err();
        assert!(
            matches!(&err, Error::Parse { field, .. } if field == "tool_offset"),
            "{err}"
        );

        let text = PANDA_TOML.replace("[-1.7628, 1.7628]", "[1.7628, -1.7628]");
        let err = ArmModel::from_toml_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "limits"), "{err}");

        let text = PANDA_TOML.replace("dh = [", "links = [");
        let err = ArmModel::from_toml_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "dh"), "{err}");

        let text = PANDA_TOML.replace("[0.0,     0.0,                 0.333, 0.0],", "[0.0, 0.0, 0.333],");
        let err = ArmModel::from_toml_str(&text).unwrap_err();
        assert!(
            err.to_string().contains("`dh`") && err.to_string().contains("row 0"),
            "{err}"
        );
    }

    #[test]
    fn model_file_round_trips_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("arm.toml");
        std::fs::write(&path, PANDA_TOML).unwrap();
        assert_eq!(ArmModel::from_path(&path).unwrap(), ArmModel::panda());
        assert!(matches!(
            ArmModel::from_path(dir.path().join("missing.toml")),
            Err(Error::Io { .. })
        ));
    }
}
