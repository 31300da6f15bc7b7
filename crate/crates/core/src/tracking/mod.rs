//! Two-frame tracking by assignment.
//!
//! Detections in a left and a right frame are linked by candidate events
//! (move, divide, appear, disappear). A joint assignment realizes a subset of
//! events such that every detection has exactly one fate (left) and exactly
//! one history (right). At the sizes used here the constrained binary
//! program is solved exactly by enumerating all feasible assignments.
//!
//! Scores are maximized: an energy-minimizing tracker corresponds to the
//! negated score.

mod generate;

use std::fmt;
use std::sync::OnceLock;

pub use generate::{generate_instance, planted_tracking_weights, TrackingGenConfig};

use crate::error::{Error, Result};
use crate::problem::{augmented_value, DeltaSign, InferenceProblem, Scored, Space};
use crate::vector::{FeatureVector, Weights};

/// Local features per event: `[bias, distance, log size mismatch]`.
pub const EVENT_FEATURES: usize = 3;
pub const EVENT_KINDS: usize = 4;
pub const TRACKING_FEATURE_DIM: usize = EVENT_FEATURES * EVENT_KINDS;
pub const DEFAULT_DETECTION_CAP: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub position: [f64; 2],
    pub size: f64,
}

impl Detection {
    pub fn new(x: f64, y: f64, size: f64) -> Self {
        Detection { position: [x, y], size }
    }

    pub fn distance(&self, other: &Detection) -> f64 {
        distance(self.position, other.position)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Move {
        from: usize,
        to: usize,
    },
    /// `to.0 < to.1`
    Divide {
        from: usize,
        to: (usize, usize),
    },
    Appear {
        to: usize,
    },
    Disappear {
        from: usize,
    },
}

impl EventKind {
    /// Index of the parameter block shared by every event of this kind.
    pub fn block(&self) -> usize {
        match self {
            EventKind::Move { .. } => 0,
            EventKind::Divide { .. } => 1,
            EventKind::Appear { .. } => 2,
            EventKind::Disappear { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Move { .. } => "move",
            EventKind::Divide { .. } => "divide",
            EventKind::Appear { .. } => "appear",
            EventKind::Disappear { .. } => "disappear",
        }
    }

    pub fn left(&self) -> Option<usize> {
        match *self {
            EventKind::Move { from, .. } | EventKind::Divide { from, .. } | EventKind::Disappear { from } => Some(from),
            EventKind::Appear { .. } => None,
        }
    }

    pub fn rights(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            EventKind::Move { to, .. } | EventKind::Appear { to } => (Some(to), None),
            EventKind::Divide { to, .. } => (Some(to.0), Some(to.1)),
            EventKind::Disappear { .. } => (None, None),
        };
        a.into_iter().chain(b)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Move { from, to } => write!(f, "M{from}>{to}"),
            EventKind::Divide { from, to } => write!(f, "D{from}>{}+{}", to.0, to.1),
            EventKind::Appear { to } => write!(f, "A{to}"),
            EventKind::Disappear { from } => write!(f, "X{from}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub features: [f64; EVENT_FEATURES],
}

/// A joint assignment as indicator vector over the candidate events.
/// Ordering is lexicographic on the indicators.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment {
    indicators: Vec<bool>,
}

impl Assignment {
    pub fn from_realized(event_count: usize, realized: impl IntoIterator<Item = usize>) -> Self {
        let mut indicators = vec![false; event_count];
        for e in realized {
            indicators[e] = true;
        }
        Assignment { indicators }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn contains(&self, event: usize) -> bool {
        self.indicators.get(event).copied().unwrap_or(false)
    }

    pub fn realized(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicators
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
    }

    pub fn realized_count(&self) -> usize {
        self.indicators.iter().filter(|&&on| on).count()
    }
}

#[derive(Clone, Debug)]
pub struct TrackingInstance {
    left: Vec<Detection>,
    right: Vec<Detection>,
    events: Vec<Event>,
    annotated: Vec<usize>,
    delta_scale: f64,
    detection_cap: usize,
    feasible: OnceLock<Vec<Assignment>>,
}

impl PartialEq for TrackingInstance {
    fn eq(&self, other: &Self) -> bool {
        self.left == other.left
            && self.right == other.right
            && self.events == other.events
            && self.annotated == other.annotated
            && self.delta_scale == other.delta_scale
            && self.detection_cap == other.detection_cap
    }
}

/// Every move, division and appear/disappear event allowed by a distance
/// gate, in canonical order (moves, divisions, appearances, disappearances).
pub fn candidate_events(left: &[Detection], right: &[Detection], gate_radius: f64) -> Vec<EventKind> {
    let mut out = Vec::new();
    for (l, ld) in left.iter().enumerate() {
        for (r, rd) in right.iter().enumerate() {
            if ld.distance(rd) <= gate_radius {
                out.push(EventKind::Move { from: l, to: r });
            }
        }
    }
    for (l, ld) in left.iter().enumerate() {
        for r1 in 0..right.len() {
            for r2 in r1 + 1..right.len() {
                if ld.distance(&right[r1]) <= gate_radius && ld.distance(&right[r2]) <= gate_radius {
                    out.push(EventKind::Divide { from: l, to: (r1, r2) });
                }
            }
        }
    }
    out.extend((0..right.len()).map(|to| EventKind::Appear { to }));
    out.extend((0..left.len()).map(|from| EventKind::Disappear { from }));
    out
}

fn event_features(kind: &EventKind, left: &[Detection], right: &[Detection]) -> [f64; EVENT_FEATURES] {
    match *kind {
        EventKind::Move { from, to } => {
            let (l, r) = (&left[from], &right[to]);
            [1.0, l.distance(r), (r.size / l.size).ln().abs()]
        }
        EventKind::Divide { from, to } => {
            let (l, a, b) = (&left[from], &right[to.0], &right[to.1]);
            let mid = [
                0.5 * (a.position[0] + b.position[0]),
                0.5 * (a.position[1] + b.position[1]),
            ];
            [1.0, distance(l.position, mid), ((a.size + b.size) / l.size).ln().abs()]
        }
        EventKind::Appear { to } => [1.0, nearest(&right[to], left), 0.0],
        EventKind::Disappear { from } => [1.0, nearest(&left[from], right), 0.0],
    }
}

/// Distance to the closest detection of the other frame, capped at 1.
fn nearest(d: &Detection, others: &[Detection]) -> f64 {
    others
        .iter()
        .map(|o| d.distance(o))
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

impl TrackingInstance {
    pub fn new(
        left: Vec<Detection>,
        right: Vec<Detection>,
        kinds: Vec<EventKind>,
        annotated: Vec<usize>,
        delta_scale: f64,
    ) -> Result<Self> {
        for d in left.iter().chain(&right) {
            if !(d.position.iter().all(|v| v.is_finite()) && d.size > 0.0 && d.size.is_finite()) {
                return Err(Error::InvalidInstance(format!("invalid detection {d:?}")));
            }
        }
        if !(delta_scale > 0.0 && delta_scale.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "delta_scale must be positive, got {delta_scale}"
            )));
        }
        for (i, kind) in kinds.iter().enumerate() {
            let bad_left = kind.left().is_some_and(|l| l >= left.len());
            let bad_right = kind.rights().any(|r| r >= right.len());
            let bad_divide = matches!(kind, EventKind::Divide { to, .. } if to.0 >= to.1);
            if bad_left || bad_right || bad_divide {
                return Err(Error::InvalidInstance(format!("event {i} ({kind}) is malformed")));
            }
            if kinds[..i].contains(kind) {
                return Err(Error::InvalidInstance(format!("event {kind} listed twice")));
            }
        }
        let mut sorted = annotated.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != annotated.len() || sorted.last().is_some_and(|&e| e >= kinds.len()) {
            return Err(Error::InvalidInstance(
                "annotated events must be distinct valid event indices".into(),
            ));
        }
        let mut left_used = vec![false; left.len()];
        let mut right_used = vec![false; right.len()];
        let conflict = || Error::InvalidInstance("annotated events share a detection".into());
        for &e in &sorted {
            let kind = &kinds[e];
            if let Some(l) = kind.left() {
                if std::mem::replace(&mut left_used[l], true) {
                    return Err(conflict());
                }
            }
            for r in kind.rights() {
                if std::mem::replace(&mut right_used[r], true) {
                    return Err(conflict());
                }
            }
        }
        let events = kinds
            .into_iter()
            .map(|kind| Event {
                features: event_features(&kind, &left, &right),
                kind,
            })
            .collect();
        Ok(TrackingInstance {
            left,
            right,
            events,
            annotated: sorted,
            delta_scale,
            detection_cap: DEFAULT_DETECTION_CAP,
            feasible: OnceLock::new(),
        })
    }

    pub fn with_annotation(&self, annotated: Vec<usize>) -> Result<Self> {
        let mut out = TrackingInstance::new(
            self.left.clone(),
            self.right.clone(),
            self.event_kinds(),
            annotated,
            self.delta_scale,
        )?;
        out.detection_cap = self.detection_cap;
        if let Some(cached) = self.feasible.get() {
            let _ = out.feasible.set(cached.clone());
        }
        Ok(out)
    }

    pub fn with_detection_cap(mut self, cap: usize) -> Self {
        self.detection_cap = cap;
        self.feasible = OnceLock::new();
        self
    }

    pub fn left(&self) -> &[Detection] {
        &self.left
    }

    pub fn right(&self) -> &[Detection] {
        &self.right
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event_kinds(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }

    pub fn annotated(&self) -> &[usize] {
        &self.annotated
    }

    pub fn detection_count(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn feasible(&self) -> Result<&[Assignment]> {
        if self.detection_count() > self.detection_cap {
            return Err(Error::EnumerationCap {
                size: self.detection_count() as f64,
                cap: self.detection_cap,
            });
        }
        Ok(self.feasible.get_or_init(|| enumerate_assignments(self)))
    }
}

/// All assignments satisfying both conservation families, sorted.
pub fn enumerate_feasible(instance: &TrackingInstance) -> Result<Vec<Assignment>> {
    instance.feasible().map(<[Assignment]>::to_vec)
}

fn enumerate_assignments(inst: &TrackingInstance) -> Vec<Assignment> {
    let mut fates: Vec<Vec<usize>> = vec![Vec::new(); inst.left.len()];
    let mut appear = vec![None; inst.right.len()];
    for (e, ev) in inst.events.iter().enumerate() {
        match ev.kind.left() {
            Some(l) => fates[l].push(e),
            None => {
                if let EventKind::Appear { to } = ev.kind {
                    appear[to] = Some(e);
                }
            }
        }
    }

    struct Walk<'a> {
        inst: &'a TrackingInstance,
        fates: &'a [Vec<usize>],
        appear: &'a [Option<usize>],
        right_used: Vec<bool>,
        chosen: Vec<usize>,
        out: Vec<Assignment>,
    }

    impl Walk<'_> {
        fn visit(&mut self, l: usize) {
            if l == self.fates.len() {
                // every unclaimed right detection must appear
                let mut extra = Vec::new();
                for (r, used) in self.right_used.iter().enumerate() {
                    if !used {
                        match self.appear[r] {
                            Some(e) => extra.push(e),
                            None => return,
                        }
                    }
                }
                let all = self.chosen.iter().chain(&extra).copied();
                self.out.push(Assignment::from_realized(self.inst.events.len(), all));
                return;
            }
            for &e in &self.fates[l] {
                let kind = self.inst.events[e].kind;
                if kind.rights().any(|r| self.right_used[r]) {
                    continue;
                }
                kind.rights().for_each(|r| self.right_used[r] = true);
                self.chosen.push(e);
                self.visit(l + 1);
                self.chosen.pop();
                kind.rights().for_each(|r| self.right_used[r] = false);
            }
        }
    }

    let mut walk = Walk {
        inst,
        fates: &fates,
        appear: &appear,
        right_used: vec![false; inst.right.len()],
        chosen: Vec::new(),
        out: Vec::new(),
    };
    walk.visit(0);
    let mut out = walk.out;
    out.sort();
    out
}

/// Exact loss-augmented argmax by scanning the feasible assignments.
pub fn tracking_argmax(
    instance: &TrackingInstance,
    w: &Weights,
    space: Space,
    sign: DeltaSign,
) -> Result<Scored<Assignment>> {
    w.check_dim(TRACKING_FEATURE_DIM)?;
    let mut best: Option<(&Assignment, f64)> = None;
    // sorted ascending, so keeping the first maximum is the lexicographic tie-break
    for y in instance.feasible()? {
        if !space.admits(instance.is_compatible(y)) {
            continue;
        }
        let value = augmented_value(instance, y, w, sign);
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((y, value));
        }
    }
    let (output, value) = best.ok_or_else(|| Error::DegenerateSample {
        space,
        reason: "no feasible assignment in this subspace".into(),
    })?;
    Ok(Scored {
        output: output.clone(),
        value,
    })
}

impl InferenceProblem for TrackingInstance {
    type Output = Assignment;

    fn feature_dim(&self) -> usize {
        TRACKING_FEATURE_DIM
    }

    fn features(&self, y: &Assignment) -> FeatureVector {
        let mut phi = FeatureVector::zeros(TRACKING_FEATURE_DIM);
        let out = phi.as_mut_slice();
        for e in y.realized() {
            let ev = &self.events[e];
            let off = ev.kind.block() * EVENT_FEATURES;
            for (slot, x) in out[off..off + EVENT_FEATURES].iter_mut().zip(&ev.features) {
                *slot += x;
            }
        }
        phi
    }

    fn delta_scale(&self) -> f64 {
        self.delta_scale
    }

    fn violations(&self, y: &Assignment) -> usize {
        self.annotated.iter().filter(|&&e| !y.contains(e)).count()
    }

    fn annotated_count(&self) -> usize {
        self.annotated.len()
    }

    fn argmax_augmented(&self, w: &Weights, space: Space, sign: DeltaSign) -> Result<Scored<Assignment>> {
        tracking_argmax(self, w, space, sign)
    }

    fn enumerate(&self, space: Space) -> Option<Result<Vec<Assignment>>> {
        Some(self.feasible().map(|all| {
            all.iter()
                .filter(|y| space.admits(self.is_compatible(y)))
                .cloned()
                .collect()
        }))
    }
}
