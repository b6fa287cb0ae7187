//! Feature extraction: root normalization, derived kinematics, smoothing and
//! min/max scaling of raw motion channels.
//!
//! Raw channels consumed by the catalog:
//!
//! | channel           | width | content                                      |
//! |-------------------|-------|----------------------------------------------|
//! | `root_pos`        | 3     | root position x, y, z (m)                    |
//! | `root_rot`        | 3     | root roll, pitch, yaw (rad)                  |
//! | `joint_pos`       | any   | joint angles (rad)                           |
//! | `extremities_pos` | 12    | left hand, right hand, left foot, right foot |
//! | `marker_pos`      | 3·N   | marker positions                             |
//! | `com_pos`         | 3     | used only when no segment block is present   |
//! | `angular_momentum`| 3     | used only when no segment block is present   |
//!
//! At yaw zero the subject faces the +y axis; normalization rotates every
//! position into the frame of the first root pose.

use std::collections::HashSet;
use std::fmt;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{MotionRecord, SegmentBlock};
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// A T×D matrix of frames sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub data: Array2<f64>,
    pub dt: f64,
}

impl ObservationSequence {
    pub fn new(data: Array2<f64>, dt: f64) -> Self {
        ObservationSequence { data, dt }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Source {
    Joint,
    Root,
    RootRot,
    Extremities,
    Com,
    AngularMomentum,
    Marker,
}

impl Source {
    fn channel(self) -> &'static str {
        match self {
            Source::Joint => "joint_pos",
            Source::Root => "root_pos",
            Source::RootRot => "root_rot",
            Source::Extremities => "extremities_pos",
            Source::Com => "com_pos",
            Source::AngularMomentum => "angular_momentum",
            Source::Marker => "marker_pos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reduce {
    Keep,
    /// Norm over the full width.
    Norm,
    /// Norm over consecutive groups of this width.
    GroupNorm(usize),
}

macro_rules! catalog {
    ($($variant:ident => $name:literal, $width:expr, $source:ident, $order:literal, $reduce:expr;)*) => {
        /// The feature catalog.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum Feature { $($variant,)* }

        impl Feature {
            pub const ALL: &'static [Feature] = &[$(Feature::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $(Feature::$variant => $name,)* }
            }

            /// Width on the reference body model (40 joints, 56 markers).
            pub fn nominal_width(self) -> usize {
                match self { $(Feature::$variant => $width,)* }
            }

            fn source(self) -> Source {
                match self { $(Feature::$variant => Source::$source,)* }
            }

            /// 0 = position, 1 = velocity, 2 = acceleration.
            fn order(self) -> usize {
                match self { $(Feature::$variant => $order,)* }
            }

            fn reduce(self) -> Reduce {
                match self { $(Feature::$variant => $reduce,)* }
            }
        }
    };
}

catalog! {
    JointPos => "joint_pos", 40, Joint, 0, Reduce::Keep;
    JointVel => "joint_vel", 40, Joint, 1, Reduce::Keep;
    JointVelNorm => "joint_vel_norm", 1, Joint, 1, Reduce::Norm;
    JointAcc => "joint_acc", 40, Joint, 2, Reduce::Keep;
    JointAccNorm => "joint_acc_norm", 1, Joint, 2, Reduce::Norm;
    RootPos => "root_pos", 3, Root, 0, Reduce::Keep;
    RootVel => "root_vel", 3, Root, 1, Reduce::Keep;
    RootVelNorm => "root_vel_norm", 1, Root, 1, Reduce::Norm;
    RootAcc => "root_acc", 3, Root, 2, Reduce::Keep;
    RootAccNorm => "root_acc_norm", 1, Root, 2, Reduce::Norm;
    RootRot => "root_rot", 3, RootRot, 0, Reduce::Keep;
    RootRotNorm => "root_rot_norm", 1, RootRot, 0, Reduce::Norm;
    ExtremitiesPos => "extremities_pos", 12, Extremities, 0, Reduce::Keep;
    ExtremitiesVel => "extremities_vel", 12, Extremities, 1, Reduce::Keep;
    ExtremitiesVelNorm => "extremities_vel_norm", 4, Extremities, 1, Reduce::GroupNorm(3);
    ExtremitiesAcc => "extremities_acc", 12, Extremities, 2, Reduce::Keep;
    ExtremitiesAccNorm => "extremities_acc_norm", 4, Extremities, 2, Reduce::GroupNorm(3);
    ComPos => "com_pos", 3, Com, 0, Reduce::Keep;
    ComVel => "com_vel", 3, Com, 1, Reduce::Keep;
    ComVelNorm => "com_vel_norm", 1, Com, 1, Reduce::Norm;
    ComAcc => "com_acc", 3, Com, 2, Reduce::Keep;
    ComAccNorm => "com_acc_norm", 1, Com, 2, Reduce::Norm;
    AngularMomentum => "angular_momentum", 3, AngularMomentum, 0, Reduce::Keep;
    AngularMomentumNorm => "angular_momentum_norm", 1, AngularMomentum, 0, Reduce::Norm;
    MarkerPos => "marker_pos", 168, Marker, 0, Reduce::Keep;
    MarkerVel => "marker_vel", 168, Marker, 1, Reduce::Keep;
    MarkerVelNorm => "marker_vel_norm", 1, Marker, 1, Reduce::Norm;
    MarkerAcc => "marker_acc", 168, Marker, 2, Reduce::Keep;
    MarkerAccNorm => "marker_acc_norm", 1, Marker, 2, Reduce::Norm;
}

impl Feature {
    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Output width given the width of the raw source channel.
    pub fn width_for_source(self, source_width: usize) -> usize {
        match self.reduce() {
            Reduce::Keep => source_width,
            Reduce::Norm => 1,
            Reduce::GroupNorm(g) => source_width / g,
        }
    }

    /// Output width for a concrete record, if the record can supply the feature.
    pub fn width_in(self, record: &MotionRecord) -> Option<usize> {
        let w = match self.source() {
            Source::Com | Source::AngularMomentum if record.segments.is_some() => 3,
            src => record.channels.iter().find(|c| c.name == src.channel())?.width,
        };
        Some(self.width_for_source(w))
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which features to extract and which processing stages to apply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub features: Vec<String>,
    pub normalized: bool,
    pub smoothed: bool,
    pub window: usize,
    pub scaled: bool,
}

impl FeatureSpec {
    pub fn new<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            features: features.into_iter().map(Into::into).collect(),
            normalized: true,
            smoothed: true,
            window: 3,
            scaled: true,
        }
    }

    pub fn raw<S: Into<String>>(features: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            normalized: false,
            smoothed: false,
            scaled: false,
            ..FeatureSpec::new(features)
        }
    }

    pub fn resolve(&self) -> Result<Vec<Feature>> {
        if self.window == 0 {
            return Err(Error::Validation("smoothing window must be at least 1".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Validation("feature list is empty".into()));
        }
        let mut seen = HashSet::new();
        self.features
            .iter()
            .map(|n| {
                let f = Feature::from_name(n).ok_or_else(|| Error::Validation(format!("unknown feature `{n}`")))?;
                if !seen.insert(f) {
                    return Err(Error::Validation(format!("feature `{n}` listed twice")));
                }
                Ok(f)
            })
            .collect()
    }

    pub fn without(&self, feature: &str) -> FeatureSpec {
        FeatureSpec {
            features: self.features.iter().filter(|f| *f != feature).cloned().collect(),
            ..self.clone()
        }
    }

    /// Output dimension for records shaped like `record`.
    pub fn dimension(&self, record: &MotionRecord) -> Result<usize> {
        let mut d = 0;
        for f in self.resolve()? {
            d += f.width_in(record).ok_or_else(|| missing(f, f.source().channel()))?;
        }
        Ok(d)
    }
}

fn missing(feature: Feature, channel: &str) -> Error {
    Error::MissingChannel {
        feature: feature.name().to_string(),
        channel: channel.to_string(),
    }
}

/// Roll-pitch-yaw rotation `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn rotation_matrix(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    let (sa, ca) = yaw.sin_cos();
    let (sb, cb) = pitch.sin_cos();
    let (sg, cg) = roll.sin_cos();
    [
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ]
}

pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPose {
    pub position: [f64; 3],
    /// roll, pitch, yaw (rad), unwrapped
    pub rotation: [f64; 3],
}

/// Removes jumps larger than π between consecutive samples by shifting all
/// following samples by multiples of 2π.
pub fn unwrap_angles(series: ArrayView2<'_, f64>) -> Array2<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = series.to_owned();
    for c in 0..out.ncols() {
        let mut correction = 0.0;
        for t in 1..out.nrows() {
            let d = series[[t, c]] - series[[t - 1, c]];
            if d.abs() > PI {
                let mut wrapped = (d + PI).rem_euclid(TAU) - PI;
                if wrapped == -PI && d > 0.0 {
                    wrapped = PI;
                }
                correction += wrapped - d;
            }
            out[[t, c]] = series[[t, c]] + correction;
        }
    }
    out
}

/// Translates positions so frame 0 is the origin, rotates them into the
/// frame-0 heading (roll and pitch ignored) and makes rotations relative to
/// frame 0.
pub fn normalize_root(poses: &[RootPose]) -> Vec<RootPose> {
    let Some(first) = poses.first() else {
        return Vec::new();
    };
    let rot = Array2::from_shape_fn((poses.len(), 3), |(t, c)| poses[t].rotation[c]);
    let rot = unwrap_angles(rot.view());
    let frame = HeadingFrame::new(first.position, first.rotation[2]);
    poses
        .iter()
        .enumerate()
        .map(|(t, p)| RootPose {
            position: frame.apply(p.position),
            rotation: [
                rot[[t, 0]] - rot[[0, 0]],
                rot[[t, 1]] - rot[[0, 1]],
                rot[[t, 2]] - rot[[0, 2]],
            ],
        })
        .collect()
}

/// Origin and inverse heading rotation of the first root pose.
#[derive(Debug, Clone, Copy)]
struct HeadingFrame {
    origin: [f64; 3],
    inverse: Mat3,
}

impl HeadingFrame {
    fn new(origin: [f64; 3], yaw: f64) -> Self {
        HeadingFrame {
            origin,
            inverse: transpose(&rotation_matrix(0.0, 0.0, yaw)),
        }
    }

    fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        self.rotate([p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]])
    }

    fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.inverse, v)
    }

    /// Applies the transform to every consecutive xyz triple of each row.
    fn apply_rows(&self, m: &Array2<f64>, translate: bool) -> Array2<f64> {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            for k in 0..row.len() / 3 {
                let p = [row[3 * k], row[3 * k + 1], row[3 * k + 2]];
                let q = if translate { self.apply(p) } else { self.rotate(p) };
                row[3 * k] = q[0];
                row[3 * k + 1] = q[1];
                row[3 * k + 2] = q[2];
            }
        }
        out
    }
}

/// Central differences inside, one-sided differences at both ends.
pub fn derivative(series: ArrayView2<'_, f64>, dt: f64) -> Array2<f64> {
    let t = series.nrows();
    let mut out = Array2::zeros(series.raw_dim());
    if t < 2 {
        return out;
    }
    for i in 0..t {
        let (lo, hi, span) = if i == 0 {
            (0, 1, dt)
        } else if i == t - 1 {
            (t - 2, t - 1, dt)
        } else {
            (i - 1, i + 1, 2.0 * dt)
        };
        for c in 0..series.ncols() {
            out[[i, c]] = (series[[hi, c]] - series[[lo, c]]) / span;
        }
    }
    out
}

/// Per-frame L2 norm of each consecutive group of `group_width` columns.
pub fn euclidean_norm_feature(series: ArrayView2<'_, f64>, group_width: usize) -> Result<Array2<f64>> {
    if group_width == 0 || !series.ncols().is_multiple_of(group_width) {
        return Err(Error::DimensionMismatch {
            expected: group_width,
            found: series.ncols(),
        });
    }
    let groups = series.ncols() / group_width;
    Ok(Array2::from_shape_fn((series.nrows(), groups), |(t, g)| {
        series
            .slice(s![t, g * group_width..(g + 1) * group_width])
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }))
}

fn mass_weighted(
    segments: &SegmentBlock,
    pick: impl Fn(&crate::dataset::SegmentState) -> [f64; 3],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((segments.frames.len(), 3));
    for (t, row) in segments.frames.iter().enumerate() {
        let total: f64 = row.iter().map(|s| s.mass).sum();
        if !(total > 0.0) {
            return Err(Error::Validation(format!("total segment mass is zero at frame {t}")));
        }
        for s in row {
            let v = pick(s);
            for c in 0..3 {
                out[[t, c]] += s.mass * v[c] / total;
            }
        }
    }
    Ok(out)
}

/// Whole-body centre of mass: mass-weighted mean of segment CoMs.
pub fn center_of_mass(segments: &SegmentBlock) -> Result<Array2<f64>> {
    mass_weighted(segments, |s| s.com)
}

/// Whole-body CoM velocity: mass-weighted mean of segment CoM velocities.
pub fn center_of_mass_velocity(segments: &SegmentBlock) -> Result<Array2<f64>> {
    mass_weighted(segments, |s| s.com_vel)
}

/// Whole-body angular momentum about the CoM: orbital terms of every segment
/// relative to the body CoM plus segment spin `I·ω`.
pub fn angular_momentum(
    segments: &SegmentBlock,
    com: ArrayView2<'_, f64>,
    com_vel: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    let t = segments.frames.len();
    if com.nrows() != t || com_vel.nrows() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: com.nrows().min(com_vel.nrows()),
        });
    }
    let mut out = Array2::zeros((t, 3));
    for (i, row) in segments.frames.iter().enumerate() {
        let mut l = [0.0; 3];
        for s in row {
            let r = [s.com[0] - com[[i, 0]], s.com[1] - com[[i, 1]], s.com[2] - com[[i, 2]]];
            let v = [
                s.com_vel[0] - com_vel[[i, 0]],
                s.com_vel[1] - com_vel[[i, 1]],
                s.com_vel[2] - com_vel[[i, 2]],
            ];
            let orbital = cross(r, v);
            let spin = mat_vec(&s.inertia, s.ang_vel);
            for c in 0..3 {
                l[c] += s.mass * orbital[c] + spin[c];
            }
        }
        for c in 0..3 {
            out[[i, c]] = l[c];
        }
    }
    Ok(out)
}

/// Centered moving average over `2·⌊W/2⌋ + 1` frames; windows shrink at the
/// sequence ends and are normalized by the number of frames they cover.
pub fn smooth(series: ArrayView2<'_, f64>, window: usize) -> Array2<f64> {
    let half = window / 2;
    let t = series.nrows();
    let mut out = Array2::zeros(series.raw_dim());
    for i in 0..t {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(t.saturating_sub(1));
        let n = (hi - lo + 1) as f64;
        for c in 0..series.ncols() {
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += series[[j, c]];
            }
            out[[i, c]] = acc / n;
        }
    }
    out
}

/// Per-feature `(min, max)` over training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalerParams {
    pub ranges: Vec<(f64, f64)>,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }
}

pub fn fit_scaler(training: &[ObservationSequence]) -> Result<ScalerParams> {
    let first = training
        .first()
        .ok_or_else(|| Error::InvalidArgument("scaler needs at least one sequence".into()))?;
    let d = first.dim();
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for seq in training {
        if seq.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: seq.dim(),
            });
        }
        for row in seq.data.rows() {
            for (r, v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(*v);
                r.1 = r.1.max(*v);
            }
        }
    }
    Ok(ScalerParams { ranges })
}

/// Maps the training range of each feature onto `[-1, 1]`; constant features map to 0.
pub fn apply_scaler(series: ArrayView2<'_, f64>, params: &ScalerParams) -> Result<Array2<f64>> {
    if series.ncols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: series.ncols(),
        });
    }
    let mut out = series.to_owned();
    for (mut col, (lo, hi)) in out.columns_mut().into_iter().zip(&params.ranges) {
        let span = hi - lo;
        col.mapv_inplace(|x| if span > 0.0 { 2.0 * (x - lo) / span - 1.0 } else { 0.0 });
    }
    Ok(out)
}

fn channel_owned(record: &MotionRecord, feature: Feature, name: &str) -> Result<Array2<f64>> {
    record
        .channel(name)
        .map(|v| v.to_owned())
        .ok_or_else(|| missing(feature, name))
}

fn heading_frame(record: &MotionRecord, feature: Feature) -> Result<HeadingFrame> {
    let pos = channel_owned(record, feature, "root_pos")?;
    let rot = channel_owned(record, feature, "root_rot")?;
    Ok(HeadingFrame::new([pos[[0, 0]], pos[[0, 1]], pos[[0, 2]]], rot[[0, 2]]))
}

fn source_series(record: &MotionRecord, feature: Feature, normalized: bool) -> Result<Array2<f64>> {
    let src = feature.source();
    match src {
        Source::Joint => channel_owned(record, feature, src.channel()),
        Source::RootRot => {
            let rot = channel_owned(record, feature, "root_rot")?;
            if !normalized {
                return Ok(rot);
            }
            let mut u = unwrap_angles(rot.view());
            let first = u.row(0).to_owned();
            for mut row in u.rows_mut() {
                row -= &first;
            }
            Ok(u)
        }
        Source::Root | Source::Extremities | Source::Marker => {
            let raw = channel_owned(record, feature, src.channel())?;
            if raw.ncols() % 3 != 0 {
                return Err(Error::Validation(format!(
                    "channel `{}` width {} is not a multiple of 3",
                    src.channel(),
                    raw.ncols()
                )));
            }
            if !normalized {
                return Ok(raw);
            }
            Ok(heading_frame(record, feature)?.apply_rows(&raw, true))
        }
        Source::Com => {
            let com = match &record.segments {
                Some(seg) => center_of_mass(seg)?,
                None => channel_owned(record, feature, "com_pos")?,
            };
            if !normalized {
                return Ok(com);
            }
            let mut frame = heading_frame(record, feature)?;
            frame.origin = [com[[0, 0]], com[[0, 1]], com[[0, 2]]];
            Ok(frame.apply_rows(&com, true))
        }
        Source::AngularMomentum => {
            let l = match &record.segments {
                Some(seg) => {
                    let com = center_of_mass(seg)?;
                    let vel = center_of_mass_velocity(seg)?;
                    angular_momentum(seg, com.view(), vel.view())?
                }
                None => channel_owned(record, feature, "angular_momentum")?,
            };
            if !normalized {
                return Ok(l);
            }
            Ok(heading_frame(record, feature)?.apply_rows(&l, false))
        }
    }
}

/// Runs the full pipeline (normalize, derive, smooth, scale) for one record.
/// Columns appear in the order the spec lists the features.
pub fn build_observation(
    record: &MotionRecord,
    spec: &FeatureSpec,
    scaler: Option<&ScalerParams>,
) -> Result<ObservationSequence> {
    let features = spec.resolve()?;
    let dt = record.dt();
    let mut blocks = Vec::with_capacity(features.len());
    for f in features {
        let mut m = source_series(record, f, spec.normalized)?;
        for _ in 0..f.order() {
            m = derivative(m.view(), dt);
        }
        m = match f.reduce() {
            Reduce::Keep => m,
            Reduce::Norm => euclidean_norm_feature(m.view(), m.ncols())?,
            Reduce::GroupNorm(g) => euclidean_norm_feature(m.view(), g)?,
        };
        blocks.push(m);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let mut data = concatenate(Axis(1), &views).expect("blocks share the frame count");
    if spec.smoothed {
        data = smooth(data.view(), spec.window);
    }
    if spec.scaled {
        if let Some(params) = scaler {
            data = apply_scaler(data.view(), params)?;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "motion `{}` produced non-finite features",
            record.id
        )));
    }
    Ok(ObservationSequence::new(data, dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Channel, SegmentState};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn catalog_has_29_entries_totalling_702() {
        assert_eq!(Feature::ALL.len(), 29);
        assert_eq!(Feature::ALL.iter().map(|f| f.nominal_width()).sum::<usize>(), 702);
        for f in Feature::ALL {
            assert_eq!(Feature::from_name(f.name()), Some(*f));
        }
    }

    #[test]
    fn rotation_identity_and_quarter_turn() {
        let r = rotation_matrix(0.0, 0.0, 0.0);
        assert_eq!(r, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let q = mat_vec(&rotation_matrix(0.0, 0.0, FRAC_PI_2), [1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unwrap_examples() {
        let x = array![[3.1], [-3.1]];
        let u = unwrap_angles(x.view());
        assert_eq!(u[[0, 0]], 3.1);
        assert_abs_diff_eq!(u[[1, 0]], -3.1 + 2.0 * PI, epsilon = 1e-15);
        let c = Array2::from_elem((5, 3), 0.7);
        assert_eq!(unwrap_angles(c.view()), c);
        let big = array![[0.0], [7.0], [-7.0]];
        let u = unwrap_angles(big.view());
        for t in 1..3 {
            assert!((u[[t, 0]] - u[[t - 1, 0]]).abs() <= PI);
        }
        assert_eq!(unwrap_angles(u.view()), u);
    }

    #[test]
    fn normalize_root_identity_and_heading() {
        let poses: Vec<RootPose> = (0..4)
            .map(|t| RootPose {
                position: [0.0, t as f64, 0.0],
                rotation: [0.0, 0.0, 0.0],
            })
            .collect();
        assert_eq!(normalize_root(&poses), poses);

        // Facing +y at yaw 0, so walking along (1,1) means yaw = -45°.
        let poses: Vec<RootPose> = (0..10)
            .map(|t| RootPose {
                position: [3.0 + t as f64, -2.0 + t as f64, 1.0],
                rotation: [0.0, 0.0, -FRAC_PI_4],
            })
            .collect();
        for p in normalize_root(&poses) {
            assert_abs_diff_eq!(p.position[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.position[2], 0.0, epsilon = 1e-12);
            assert!(p.position[1] >= 0.0);
        }
    }

    #[test]
    fn derivative_examples() {
        let dt = 0.01;
        let c = 0.3;
        let lin = Array2::from_shape_fn((6, 1), |(t, _)| c * t as f64);
        for v in derivative(lin.view(), dt) {
            assert_abs_diff_eq!(v, c / dt, epsilon = 1e-9);
        }
        let k = Array2::from_elem((4, 2), 5.0);
        assert!(derivative(k.view(), dt).iter().all(|v| *v == 0.0));
        let quad = Array2::from_shape_fn((8, 1), |(t, _)| (t * t) as f64);
        let acc = derivative(derivative(quad.view(), dt).view(), dt);
        for t in 2..6 {
            assert_abs_diff_eq!(acc[[t, 0]], 2.0 / (dt * dt), epsilon = 1e-6);
        }
    }

    #[test]
    fn norm_feature_examples() {
        let m = array![[3.0, 4.0]];
        assert_eq!(euclidean_norm_feature(m.view(), 2).unwrap(), array![[5.0]]);
        let z = Array2::zeros((3, 6));
        assert_eq!(
            euclidean_norm_feature(z.view(), 3).unwrap(),
            Array2::<f64>::zeros((3, 2))
        );
        let ext = Array2::ones((2, 12));
        assert_eq!(euclidean_norm_feature(ext.view(), 3).unwrap().ncols(), 4);
        assert!(euclidean_norm_feature(ext.view(), 5).is_err());
    }

    fn seg(mass: f64, com: [f64; 3], vel: [f64; 3], inertia: Mat3, w: [f64; 3]) -> SegmentState {
        SegmentState {
            mass,
            com,
            com_vel: vel,
            inertia,
            ang_vel: w,
        }
    }

    const ZERO3: Mat3 = [[0.0; 3]; 3];
    const EYE3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn center_of_mass_examples() {
        let block = SegmentBlock {
            names: vec!["a".into(), "b".into()],
            frames: vec![vec![
                seg(1.0, [0.0; 3], [0.0; 3], EYE3, [0.0; 3]),
                seg(1.0, [2.0, 0.0, 0.0], [0.0; 3], EYE3, [0.0; 3]),
            ]],
        };
        assert_eq!(center_of_mass(&block).unwrap(), array![[1.0, 0.0, 0.0]]);
        let block = SegmentBlock {
            names: vec!["a".into(), "b".into()],
            frames: vec![vec![
                seg(1.0, [0.0; 3], [0.0; 3], EYE3, [0.0; 3]),
                seg(3.0, [4.0, 0.0, 0.0], [0.0; 3], EYE3, [0.0; 3]),
            ]],
        };
        assert_eq!(center_of_mass(&block).unwrap(), array![[3.0, 0.0, 0.0]]);
        let single = SegmentBlock {
            names: vec!["a".into()],
            frames: vec![vec![seg(2.0, [1.0, 2.0, 3.0], [0.0; 3], EYE3, [0.0; 3])]],
        };
        assert_eq!(center_of_mass(&single).unwrap(), array![[1.0, 2.0, 3.0]]);
        let massless = SegmentBlock {
            names: vec!["a".into()],
            frames: vec![vec![seg(0.0, [1.0, 2.0, 3.0], [0.0; 3], EYE3, [0.0; 3])]],
        };
        assert!(center_of_mass(&massless).is_err());
    }

    #[test]
    fn angular_momentum_examples() {
        let still = SegmentBlock {
            names: vec!["a".into(), "b".into()],
            frames: vec![vec![
                seg(1.0, [1.0, 0.0, 0.0], [0.0; 3], EYE3, [0.0; 3]),
                seg(2.0, [0.0, 1.0, 0.0], [0.0; 3], EYE3, [0.0; 3]),
            ]],
        };
        let com = center_of_mass(&still).unwrap();
        let vel = center_of_mass_velocity(&still).unwrap();
        assert_eq!(
            angular_momentum(&still, com.view(), vel.view()).unwrap(),
            array![[0.0, 0.0, 0.0]]
        );

        // one segment relative to a body CoM at the origin moving at rest
        let one = SegmentBlock {
            names: vec!["a".into()],
            frames: vec![vec![seg(2.0, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], ZERO3, [0.0; 3])]],
        };
        let l = angular_momentum(&one, array![[0.0, 0.0, 0.0]].view(), array![[0.0, 0.0, 0.0]].view()).unwrap();
        assert_eq!(l, array![[0.0, 0.0, 2.0]]);

        let spin = SegmentBlock {
            names: vec!["a".into()],
            frames: vec![vec![seg(1.0, [0.0; 3], [0.0; 3], EYE3, [0.0, 0.0, 3.0])]],
        };
        let com = center_of_mass(&spin).unwrap();
        let vel = center_of_mass_velocity(&spin).unwrap();
        assert_eq!(
            angular_momentum(&spin, com.view(), vel.view()).unwrap(),
            array![[0.0, 0.0, 3.0]]
        );
    }

    #[test]
    fn smoothing_examples() {
        let c = Array2::from_elem((6, 2), 1.5);
        for w in 1..6 {
            assert_eq!(smooth(c.view(), w), c);
        }
        let x = array![[0.0], [3.0], [0.0]];
        assert_eq!(smooth(x.view(), 3)[[1, 0]], 1.0);
        let imp = array![[0.0], [0.0], [6.0], [0.0], [0.0]];
        assert_eq!(smooth(imp.view(), 3), array![[0.0], [2.0], [2.0], [2.0], [0.0]]);
        // even window: W + 1 points at interior frames
        let imp5 = array![[0.0], [0.0], [0.0], [10.0], [0.0], [0.0], [0.0]];
        assert_eq!(smooth(imp5.view(), 4)[[3, 0]], 2.0);
        assert_eq!(smooth(imp.view(), 1), imp);
    }

    #[test]
    fn scaler_examples() {
        let a = ObservationSequence::new(array![[2.0, 0.0], [6.0, 1.0], [4.0, 0.5]], 0.01);
        let p = fit_scaler(std::slice::from_ref(&a)).unwrap();
        assert_eq!(p.ranges[0], (2.0, 6.0));
        let b = ObservationSequence::new(array![[3.0, -3.0], [3.0, 5.0]], 0.01);
        let p2 = fit_scaler(&[a.clone(), b]).unwrap();
        assert_eq!(p2.ranges[1], (-3.0, 5.0));
        let k = ObservationSequence::new(array![[1.0], [1.0]], 0.01);
        let pk = fit_scaler(&[k]).unwrap();
        assert_eq!(pk.ranges[0].0, pk.ranges[0].1);
        assert_eq!(
            apply_scaler(array![[1.0], [7.0]].view(), &pk).unwrap(),
            array![[0.0], [0.0]]
        );

        let s = apply_scaler(array![[2.0, 0.0], [6.0, 1.0], [4.0, 0.5], [5.0, 2.0]].view(), &p).unwrap();
        assert_eq!(s.column(0).to_vec(), vec![-1.0, 1.0, 0.0, 0.5]);
        assert_eq!(s[[3, 1]], 3.0);
        assert!(apply_scaler(array![[1.0]].view(), &p).is_err());
    }

    fn root_record(t: usize) -> MotionRecord {
        let frames = Array2::from_shape_fn((t, 6), |(i, c)| (i as f64 * 0.1 + c as f64).sin());
        MotionRecord::new(
            "r",
            100.0,
            vec![Channel::new("root_pos", 3), Channel::new("root_rot", 3)],
            frames,
            None,
        )
        .unwrap()
    }

    #[test]
    fn build_shapes_and_missing_channels() {
        let rec = root_record(100);
        let obs = build_observation(&rec, &FeatureSpec::raw(["root_pos"]), None).unwrap();
        assert_eq!(obs.data.dim(), (100, 3));
        let spec = FeatureSpec::new(["root_pos", "root_vel", "root_rot", "root_rot_norm", "root_acc_norm"]);
        assert_eq!(build_observation(&rec, &spec, None).unwrap().dim(), 3 + 3 + 3 + 1 + 1);
        assert_eq!(spec.dimension(&rec).unwrap(), 11);

        let no_root = MotionRecord::new(
            "j",
            100.0,
            vec![Channel::new("joint_pos", 2)],
            Array2::zeros((5, 2)),
            None,
        )
        .unwrap();
        let err = build_observation(&no_root, &FeatureSpec::raw(["root_vel"]), None).unwrap_err();
        assert!(matches!(err, Error::MissingChannel { ref channel, .. } if channel == "root_pos"));
    }

    #[test]
    fn spec_validation() {
        assert!(FeatureSpec::raw(["bogus"]).resolve().is_err());
        assert!(FeatureSpec::raw(["root_pos", "root_pos"]).resolve().is_err());
        let mut s = FeatureSpec::raw(["root_pos"]);
        s.window = 0;
        assert!(s.resolve().is_err());
        let json = serde_json::to_string(&FeatureSpec::new(["root_pos"])).unwrap();
        assert_eq!(
            json,
            r#"{"features":["root_pos"],"normalized":true,"smoothed":true,"window":3,"scaled":true}"#
        );
    }
}
