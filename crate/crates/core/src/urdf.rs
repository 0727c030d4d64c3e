//! Serial-chain robot models parsed from a subset of URDF.
//!
//! Supported: `robot`, `link` (only `inertial` is read), `joint` of type `revolute`,
//! `prismatic` or `fixed` with `parent`, `child`, `origin`, `axis` and `limit`.
//! Visual and collision elements are skipped. Anything that would make the
//! structure a tree rather than a chain is rejected.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::geometry::{Pose, Rotation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UrdfError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("link `{0}` has more than one child joint")]
    BranchingChain(String),
    #[error("link `{0}` is moved by a joint but has no inertial block")]
    MissingInertial(String),
    #[error("joint `{name}` has unsupported type `{kind}`")]
    UnsupportedJointType { name: String, kind: String },
    #[error("joint `{name}`: {reason}")]
    LimitViolation { name: String, reason: String },
    #[error("joint `{0}` lacks a complete <limit> element")]
    MissingLimit(String),
    #[error("link `{link}` has invalid inertial parameters: {reason}")]
    InvalidInertia { link: String, reason: String },
    #[error("joint `{0}` has a zero or non-finite axis")]
    InvalidAxis(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("link `{tip}` is not a descendant of `{base}`")]
    NotADescendant { base: String, tip: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

impl JointKind {
    pub fn is_movable(self) -> bool {
        !matches!(self, JointKind::Fixed)
    }

    fn as_str(self) -> &'static str {
        match self {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
    pub effort: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    /// Joint frame in the parent link frame.
    pub origin: Pose,
    /// The roll-pitch-yaw triple `origin.rotation` was built from; kept for serialization.
    pub origin_rpy: Vector3<f64>,
    /// `None` only for fixed joints.
    pub limits: Option<JointLimits>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InertiaSpec {
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Inertia about the center of mass, in link-frame axes.
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub inertial: Option<InertiaSpec>,
}

/// A validated serial chain. `joints[i]` connects `links[i]` to `links[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<JointSpec>,
    pub base_link: String,
    pub tip_link: String,
    pub dof: usize,
    /// Gravity in the base frame, m/s².
    pub gravity: Vector3<f64>,
}

pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

impl RobotModel {
    /// Movable joints in chain order.
    pub fn movable_joints(&self) -> impl Iterator<Item = &JointSpec> {
        self.joints.iter().filter(|j| j.kind.is_movable())
    }

    pub fn joint_limits(&self) -> Vec<JointLimits> {
        self.movable_joints().filter_map(|j| j.limits).collect()
    }

    pub fn effort_limits(&self) -> Vec<f64> {
        self.joint_limits().iter().map(|l| l.effort).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.links
            .iter()
            .filter_map(|l| l.inertial.as_ref())
            .map(|i| i.mass)
            .sum()
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    /// Sub-chain from `base` to `tip`. Links before `base` and after `tip` are dropped.
    pub fn extract_chain(&self, base: &str, tip: &str) -> Result<RobotModel, UrdfError> {
        let index = |name: &str| {
            self.links
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| UrdfError::UnknownLink(name.to_owned()))
        };
        let (b, t) = (index(base)?, index(tip)?);
        if t < b {
            return Err(UrdfError::NotADescendant {
                base: base.to_owned(),
                tip: tip.to_owned(),
            });
        }
        let joints = self.joints[b..t].to_vec();
        Ok(RobotModel {
            name: self.name.clone(),
            links: self.links[b..=t].to_vec(),
            dof: joints.iter().filter(|j| j.kind.is_movable()).count(),
            joints,
            base_link: base.to_owned(),
            tip_link: tip.to_owned(),
            gravity: self.gravity,
        })
    }

    /// Writes the model back out as URDF. Parsing the result yields an equal model.
    pub fn to_urdf(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "<?xml version=\"1.0\"?>");
        let _ = writeln!(out, "<robot name=\"{}\">", self.name);
        for link in &self.links {
            match &link.inertial {
                None => {
                    let _ = writeln!(out, "  <link name=\"{}\"/>", link.name);
                }
                Some(i) => {
                    let m = &i.inertia;
                    let _ = writeln!(out, "  <link name=\"{}\">", link.name);
                    let _ = writeln!(out, "    <inertial>");
                    let _ = writeln!(out, "      <origin xyz=\"{} {} {}\" rpy=\"0 0 0\"/>", i.com.x, i.com.y, i.com.z);
                    let _ = writeln!(out, "      <mass value=\"{}\"/>", i.mass);
                    let _ = writeln!(
                        out,
                        "      <inertia ixx=\"{}\" ixy=\"{}\" ixz=\"{}\" iyy=\"{}\" iyz=\"{}\" izz=\"{}\"/>",
                        m[(0, 0)],
                        m[(0, 1)],
                        m[(0, 2)],
                        m[(1, 1)],
                        m[(1, 2)],
                        m[(2, 2)]
                    );
                    let _ = writeln!(out, "    </inertial>");
                    let _ = writeln!(out, "  </link>");
                }
            }
        }
        for j in &self.joints {
            let p = &j.origin.position;
            let r = &j.origin_rpy;
            let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", j.name, j.kind.as_str());
            let _ = writeln!(out, "    <parent link=\"{}\"/>", j.parent);
            let _ = writeln!(out, "    <child link=\"{}\"/>", j.child);
            let _ = writeln!(out, "    <origin xyz=\"{} {} {}\" rpy=\"{} {} {}\"/>", p.x, p.y, p.z, r.x, r.y, r.z);
            let _ = writeln!(out, "    <axis xyz=\"{} {} {}\"/>", j.axis.x, j.axis.y, j.axis.z);
            if let Some(l) = &j.limits {
                let _ = writeln!(
                    out,
                    "    <limit lower=\"{}\" upper=\"{}\" effort=\"{}\" velocity=\"{}\"/>",
                    l.lower, l.upper, l.effort, l.velocity
                );
            }
            let _ = writeln!(out, "  </joint>");
        }
        let _ = writeln!(out, "</robot>");
        out
    }
}

fn parse_floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N], UrdfError> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| UrdfError::MalformedXml(format!("{what}: {e}")))?;
    let arr: [f64; N] = values
        .try_into()
        .map_err(|_| UrdfError::MalformedXml(format!("{what}: expected {N} numbers in `{text}`")))?;
    if arr.iter().any(|v| !v.is_finite()) {
        return Err(UrdfError::MalformedXml(format!("{what}: non-finite value")));
    }
    Ok(arr)
}

fn attr_f64(node: roxmltree::Node, name: &str, what: &str) -> Result<Option<f64>, UrdfError> {
    node.attribute(name)
        .map(|v| parse_floats::<1>(v, &format!("{what}@{name}")).map(|a| a[0]))
        .transpose()
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

/// `(xyz, rpy)` of an `origin` element; both default to zero.
fn parse_origin(node: Option<roxmltree::Node>, what: &str) -> Result<(Vector3<f64>, Vector3<f64>), UrdfError> {
    let Some(node) = node else {
        return Ok((Vector3::zeros(), Vector3::zeros()));
    };
    let xyz = node.attribute("xyz").map(|t| parse_floats::<3>(t, what)).transpose()?.unwrap_or([0.0; 3]);
    let rpy = node.attribute("rpy").map(|t| parse_floats::<3>(t, what)).transpose()?.unwrap_or([0.0; 3]);
    Ok((Vector3::from(xyz), Vector3::from(rpy)))
}

fn parse_inertial(link: &str, node: roxmltree::Node) -> Result<InertiaSpec, UrdfError> {
    let bad = |reason: &str| UrdfError::InvalidInertia {
        link: link.to_owned(),
        reason: reason.to_owned(),
    };
    let (com, rpy) = parse_origin(child(node, "origin"), "inertial origin")?;
    let mass = child(node, "mass")
        .map(|m| attr_f64(m, "value", "mass"))
        .transpose()?
        .flatten()
        .ok_or_else(|| bad("missing mass"))?;
    let inertia_node = child(node, "inertia").ok_or_else(|| bad("missing inertia"))?;
    let mut vals = [0.0; 6];
    for (slot, key) in vals.iter_mut().zip(["ixx", "ixy", "ixz", "iyy", "iyz", "izz"]) {
        *slot = attr_f64(inertia_node, key, "inertia")?.ok_or_else(|| bad(&format!("missing {key}")))?;
    }
    let [ixx, ixy, ixz, iyy, iyz, izz] = vals;
    let local = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
    let inertia = if rpy == Vector3::zeros() {
        local
    } else {
        let r = *Rotation::from_rpy(rpy.x, rpy.y, rpy.z).matrix();
        let rotated = r * local * r.transpose();
        (rotated + rotated.transpose()) * 0.5
    };
    let spec = InertiaSpec { mass, com, inertia };
    validate_inertia(link, &spec)?;
    Ok(spec)
}

fn validate_inertia(link: &str, spec: &InertiaSpec) -> Result<(), UrdfError> {
    let bad = |reason: String| UrdfError::InvalidInertia {
        link: link.to_owned(),
        reason,
    };
    if !(spec.mass > 0.0) {
        return Err(bad(format!("mass must be positive, got {}", spec.mass)));
    }
    let asym = (spec.inertia - spec.inertia.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(bad(format!("inertia not symmetric ({asym:e})")));
    }
    let ev = SymmetricEigen::new(spec.inertia).eigenvalues;
    let (a, b, c) = (ev[0], ev[1], ev[2]);
    if ev.iter().any(|&e| e < -1e-9) {
        return Err(bad("negative principal moment".into()));
    }
    if a + b < c - 1e-9 || a + c < b - 1e-9 || b + c < a - 1e-9 {
        return Err(bad(format!("principal moments ({a}, {b}, {c}) violate the triangle inequality")));
    }
    Ok(())
}

fn parse_joint(node: roxmltree::Node) -> Result<JointSpec, UrdfError> {
    let name = node
        .attribute("name")
        .ok_or_else(|| UrdfError::MalformedXml("joint without name".into()))?
        .to_owned();
    let kind_str = node.attribute("type").unwrap_or("");
    let kind = match kind_str {
        "revolute" => JointKind::Revolute,
        "prismatic" => JointKind::Prismatic,
        "fixed" => JointKind::Fixed,
        other => {
            return Err(UrdfError::UnsupportedJointType {
                name,
                kind: other.to_owned(),
            })
        }
    };
    let link_ref = |tag: &str| {
        child(node, tag)
            .and_then(|c| c.attribute("link"))
            .map(str::to_owned)
            .ok_or_else(|| UrdfError::MalformedXml(format!("joint `{name}` lacks <{tag} link=...>")))
    };
    let parent = link_ref("parent")?;
    let child_link = link_ref("child")?;
    let (xyz, rpy) = parse_origin(child(node, "origin"), "joint origin")?;

    let mut axis = match child(node, "axis").and_then(|a| a.attribute("xyz")) {
        Some(t) => Vector3::from(parse_floats::<3>(t, "axis")?),
        None => Vector3::x(),
    };
    let norm = axis.norm();
    if !(norm > 1e-12) {
        return Err(UrdfError::InvalidAxis(name));
    }
    // Leave already-normalized axes untouched so serialization round-trips exactly.
    if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
        axis /= norm;
    }

    let limits = if kind.is_movable() {
        let l = child(node, "limit").ok_or_else(|| UrdfError::MissingLimit(name.clone()))?;
        let get = |key: &str| attr_f64(l, key, "limit")?.ok_or_else(|| UrdfError::MissingLimit(name.clone()));
        let limits = JointLimits {
            lower: get("lower")?,
            upper: get("upper")?,
            effort: get("effort")?,
            velocity: get("velocity")?,
        };
        let violation = |reason: String| UrdfError::LimitViolation {
            name: name.clone(),
            reason,
        };
        if limits.lower >= limits.upper {
            return Err(violation(format!("lower {} >= upper {}", limits.lower, limits.upper)));
        }
        if !(limits.effort > 0.0) || !(limits.velocity > 0.0) {
            return Err(violation("effort and velocity limits must be positive".into()));
        }
        Some(limits)
    } else {
        None
    };

    Ok(JointSpec {
        name,
        kind,
        parent,
        child: child_link,
        axis,
        origin: Pose::new(xyz, Rotation::from_rpy(rpy.x, rpy.y, rpy.z)),
        origin_rpy: rpy,
        limits,
    })
}

/// Parses and validates a URDF document into a serial chain.
pub fn parse_urdf(text: &str) -> Result<RobotModel, UrdfError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| UrdfError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("robot") {
        return Err(UrdfError::MalformedXml(format!(
            "root element is <{}>, expected <robot>",
            root.tag_name().name()
        )));
    }
    let name = root.attribute("name").unwrap_or("robot").to_owned();

    let mut links: HashMap<String, Option<InertiaSpec>> = HashMap::new();
    for node in root.children().filter(|n| n.has_tag_name("link")) {
        let lname = node
            .attribute("name")
            .ok_or_else(|| UrdfError::MalformedXml("link without name".into()))?;
        let inertial = child(node, "inertial").map(|i| parse_inertial(lname, i)).transpose()?;
        if links.insert(lname.to_owned(), inertial).is_some() {
            return Err(UrdfError::InvalidStructure(format!("duplicate link `{lname}`")));
        }
    }
    let joints: Vec<JointSpec> = root
        .children()
        .filter(|n| n.has_tag_name("joint"))
        .map(parse_joint)
        .collect::<Result<_, _>>()?;

    let mut child_joint_of: HashMap<&str, usize> = HashMap::new();
    let mut parent_joint_of: HashMap<&str, usize> = HashMap::new();
    for (i, j) in joints.iter().enumerate() {
        for l in [&j.parent, &j.child] {
            if !links.contains_key(l) {
                return Err(UrdfError::UnknownLink(l.clone()));
            }
        }
        if child_joint_of.insert(j.parent.as_str(), i).is_some() {
            return Err(UrdfError::BranchingChain(j.parent.clone()));
        }
        if parent_joint_of.insert(j.child.as_str(), i).is_some() {
            return Err(UrdfError::InvalidStructure(format!("link `{}` has two parent joints", j.child)));
        }
    }

    let mut roots = links.keys().filter(|l| !parent_joint_of.contains_key(l.as_str()));
    let base = roots
        .next()
        .ok_or_else(|| UrdfError::InvalidStructure("no root link (cycle?)".into()))?
        .clone();
    if let Some(other) = roots.next() {
        return Err(UrdfError::InvalidStructure(format!(
            "disconnected: both `{base}` and `{other}` are roots"
        )));
    }

    let mut ordered_links = vec![base.clone()];
    let mut ordered_joints = Vec::with_capacity(joints.len());
    let mut current = base.as_str();
    while let Some(&ji) = child_joint_of.get(current) {
        ordered_joints.push(joints[ji].clone());
        current = joints[ji].child.as_str();
        ordered_links.push(current.to_owned());
    }
    if ordered_links.len() != links.len() {
        return Err(UrdfError::InvalidStructure("not all links reachable from the root".into()));
    }

    let mut chain_links = Vec::with_capacity(ordered_links.len());
    for (i, lname) in ordered_links.iter().enumerate() {
        // A link is dynamic if the joint directly above it moves.
        let dynamic = i > 0 && ordered_joints[i - 1].kind.is_movable();
        let inertial = links.remove(lname).flatten();
        if dynamic && inertial.is_none() {
            return Err(UrdfError::MissingInertial(lname.clone()));
        }
        chain_links.push(Link {
            name: lname.clone(),
            inertial,
        });
    }
    let tip = ordered_links.last().cloned().unwrap_or_else(|| base.clone());
    Ok(RobotModel {
        name,
        dof: ordered_joints.iter().filter(|j| j.kind.is_movable()).count(),
        links: chain_links,
        joints: ordered_joints,
        base_link: base,
        tip_link: tip,
        gravity: Vector3::from(DEFAULT_GRAVITY),
    })
}
