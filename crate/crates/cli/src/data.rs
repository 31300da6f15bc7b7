//! Synthetic datasets, stratified partial annotation, evaluation and the
//! line-oriented dataset file format.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, ensure, Context, Result};
use bridgelearn_core::chain::{ChainInstance, ChainModel};
use bridgelearn_core::tracking::{generate_instance, planted_tracking_weights, Detection, EventKind, TrackingInstance};
use bridgelearn_core::{Dataset, DeltaSign, InferenceProblem, Space, Weights};
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ProblemKind};
use crate::seed_stream;

/// Fully annotated training and test data plus the generator's weights.
#[derive(Clone, Debug)]
pub struct Synth<P> {
    pub train: Dataset<P>,
    pub test: Dataset<P>,
    pub planted: Weights,
}

/// A problem whose ground truth can be partially revealed and stored.
pub trait Annotatable: InferenceProblem + Clone + Send + Sized {
    const KIND: ProblemKind;

    /// Every annotated component.
    fn annotated_components(&self) -> Vec<usize>;

    /// The annotated components that may be revealed, as (component, stratum).
    fn sampling_pool(&self) -> Result<Vec<(usize, usize)>>;

    /// The same instance annotated only at `components`.
    fn reveal(&self, components: &[usize]) -> Result<Self>;

    fn synth(config: &ExperimentConfig, seed: u64) -> Result<Synth<Self>>;

    fn write_line(&self, out: &mut String);

    fn parse_line(line: &str, delta_scale: f64) -> Result<Self>;
}

impl Annotatable for ChainInstance {
    const KIND: ProblemKind = ProblemKind::Chain;

    fn annotated_components(&self) -> Vec<usize> {
        self.annotated_positions().map(|(i, _)| i).collect()
    }

    /// Every annotated position, stratified by its label.
    fn sampling_pool(&self) -> Result<Vec<(usize, usize)>> {
        Ok(self.annotated_positions().collect())
    }

    fn reveal(&self, components: &[usize]) -> Result<Self> {
        let mut annotation = vec![None; self.len()];
        for &i in components {
            annotation[i] = self.annotation()[i];
        }
        Ok(self.with_annotation(annotation)?)
    }

    fn synth(config: &ExperimentConfig, seed: u64) -> Result<Synth<Self>> {
        let model = ChainModel::sample(&config.chain, seed_stream(seed, 0))?;
        let strip = |pairs: Vec<(ChainInstance, _)>| Dataset::new(pairs.into_iter().map(|(i, _)| i).collect());
        let train = strip(model.sample_instances(config.train_size, seed_stream(seed, 1))?)?;
        let test_model = model.shifted(config.test_shift, seed_stream(seed, 2))?;
        let test = strip(test_model.sample_instances(config.test_size, seed_stream(seed, 3))?)?;
        Ok(Synth {
            train,
            test,
            planted: model.planted_weights(),
        })
    }

    fn write_line(&self, out: &mut String) {
        use std::fmt::Write;
        let _ = write!(out, "chain {} {} {}", self.len(), self.label_count(), self.obs_dim());
        for i in 0..self.len() {
            for x in self.observation(i) {
                let _ = write!(out, " {}", fmt_f64(*x));
            }
        }
        for a in self.annotation() {
            match a {
                Some(y) => {
                    let _ = write!(out, " {y}");
                }
                None => out.push_str(" -"),
            }
        }
    }

    fn parse_line(line: &str, delta_scale: f64) -> Result<Self> {
        let mut t = Tokens::new(line, "chain")?;
        let len: usize = t.parse()?;
        let k: usize = t.parse()?;
        let dim: usize = t.parse()?;
        let observations = (0..len)
            .map(|_| (0..dim).map(|_| t.parse()).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let annotation = (0..len)
            .map(|_| match t.word()? {
                "-" => Ok(None),
                y => Ok(Some(y.parse()?)),
            })
            .collect::<Result<Vec<_>>>()?;
        t.finish()?;
        Ok(ChainInstance::new(k, observations, annotation, delta_scale)?)
    }
}

impl Annotatable for TrackingInstance {
    const KIND: ProblemKind = ProblemKind::Tracking;

    fn annotated_components(&self) -> Vec<usize> {
        self.annotated().to_vec()
    }

    /// Annotated events that are absent from at least one feasible
    /// assignment, stratified by event kind. Events present in every
    /// assignment cannot be violated and are left out.
    fn sampling_pool(&self) -> Result<Vec<(usize, usize)>> {
        let feasible = self.feasible()?;
        Ok(self
            .annotated()
            .iter()
            .filter(|&&e| !feasible.iter().all(|y| y.contains(e)))
            .map(|&e| (e, self.events()[e].kind.block()))
            .collect())
    }

    fn reveal(&self, components: &[usize]) -> Result<Self> {
        Ok(self.with_annotation(components.to_vec())?)
    }

    fn synth(config: &ExperimentConfig, seed: u64) -> Result<Synth<Self>> {
        let draw = |gen, n, stream| -> Result<Dataset<TrackingInstance>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_stream(seed, stream));
            let instances = (0..n)
                .map(|_| Ok(generate_instance(gen, rng.next_u64())?.0))
                .collect::<Result<Vec<_>>>()?;
            Ok(Dataset::new(instances)?)
        };
        let mut shifted = config.tracking.clone();
        shifted.step_sigma *= 1.0 + config.test_shift;
        Ok(Synth {
            train: draw(&config.tracking, config.train_size, 1)?,
            test: draw(&shifted, config.test_size, 3)?,
            planted: planted_tracking_weights(),
        })
    }

    fn write_line(&self, out: &mut String) {
        use std::fmt::Write;
        out.push_str("tracking");
        for (tag, side) in [("L", self.left()), ("R", self.right())] {
            let _ = write!(out, " {tag} {}", side.len());
            for d in side {
                let _ = write!(
                    out,
                    " {} {} {}",
                    fmt_f64(d.position[0]),
                    fmt_f64(d.position[1]),
                    fmt_f64(d.size)
                );
            }
        }
        let _ = write!(out, " E {}", self.events().len());
        for e in self.events() {
            let _ = match e.kind {
                EventKind::Move { from, to } => write!(out, " m{from}:{to}"),
                EventKind::Divide { from, to } => write!(out, " d{from}:{}:{}", to.0, to.1),
                EventKind::Appear { to } => write!(out, " a{to}"),
                EventKind::Disappear { from } => write!(out, " x{from}"),
            };
        }
        let _ = write!(out, " A {}", self.annotated().len());
        for e in self.annotated() {
            let _ = write!(out, " {e}");
        }
    }

    fn parse_line(line: &str, delta_scale: f64) -> Result<Self> {
        let mut t = Tokens::new(line, "tracking")?;
        let mut sides = Vec::new();
        for tag in ["L", "R"] {
            let n = t.section(tag)?;
            let side = (0..n)
                .map(|_| Ok(Detection::new(t.parse()?, t.parse()?, t.parse()?)))
                .collect::<Result<Vec<_>>>()?;
            sides.push(side);
        }
        let n_events = t.section("E")?;
        let kinds = (0..n_events)
            .map(|_| parse_event(t.word()?))
            .collect::<Result<Vec<_>>>()?;
        let n_annotated = t.section("A")?;
        let annotated = (0..n_annotated).map(|_| t.parse()).collect::<Result<Vec<usize>>>()?;
        t.finish()?;
        let right = sides.pop().expect("two sides");
        let left = sides.pop().expect("two sides");
        Ok(TrackingInstance::new(left, right, kinds, annotated, delta_scale)?)
    }
}

struct Tokens<'a> {
    inner: std::str::SplitWhitespace<'a>,
    record: &'static str,
}

impl<'a> Tokens<'a> {
    fn new(line: &'a str, record: &'static str) -> Result<Self> {
        let mut inner = line.split_whitespace();
        ensure!(inner.next() == Some(record), "expected a {record} record");
        Ok(Tokens { inner, record })
    }

    fn word(&mut self) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| anyhow!("truncated {} record", self.record))
    }

    fn parse<T>(&mut self) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::error::Error + Send + Sync + 'static,
    {
        Ok(self.word()?.parse()?)
    }

    /// A `tag count` pair.
    fn section(&mut self, tag: &str) -> Result<usize> {
        ensure!(self.word()? == tag, "expected section `{tag}`");
        self.parse()
    }

    fn finish(mut self) -> Result<()> {
        ensure!(self.inner.next().is_none(), "trailing tokens in {} record", self.record);
        Ok(())
    }
}

fn parse_event(token: &str) -> Result<EventKind> {
    let (tag, rest) = token.split_at(1);
    let ids = rest
        .split(':')
        .map(str::parse)
        .collect::<std::result::Result<Vec<usize>, _>>()?;
    Ok(match (tag, ids.as_slice()) {
        ("m", &[from, to]) => EventKind::Move { from, to },
        ("d", &[from, a, b]) => EventKind::Divide { from, to: (a, b) },
        ("a", &[to]) => EventKind::Appear { to },
        ("x", &[from]) => EventKind::Disappear { from },
        _ => bail!("malformed event `{token}`"),
    })
}

/// 17 significant digits, enough to restore the exact bits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Per-instance revealed components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationMask {
    pub revealed: Vec<Vec<usize>>,
}

impl AnnotationMask {
    pub fn total(&self) -> usize {
        self.revealed.iter().map(Vec::len).sum()
    }

    /// Revealed component counts per stratum of `truth`.
    pub fn stratum_counts<P: Annotatable>(&self, truth: &Dataset<P>) -> Result<BTreeMap<usize, usize>> {
        let mut counts = BTreeMap::new();
        for (inst, revealed) in truth.iter().zip(&self.revealed) {
            let strata: BTreeMap<usize, usize> = inst.sampling_pool()?.into_iter().collect();
            for c in revealed {
                *counts.entry(strata[c]).or_insert(0) += 1;
            }
        }
        Ok(counts)
    }

    /// The partially annotated training set; instances without any revealed
    /// component are dropped.
    pub fn apply<P: Annotatable>(&self, truth: &Dataset<P>) -> Result<Dataset<P>> {
        let instances = truth
            .iter()
            .zip(&self.revealed)
            .filter(|(_, r)| !r.is_empty())
            .map(|(inst, r)| inst.reveal(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(instances)?)
    }
}

/// Splits `total` into per-stratum quotas proportional to `sizes`, giving
/// every nonempty stratum at least one component when `total` allows and
/// handing out the rest by largest remainder (ties to the lower stratum).
pub fn stratified_quotas(sizes: &[usize], total: usize) -> Vec<usize> {
    let population: usize = sizes.iter().sum();
    assert!(total <= population);
    let nonempty = sizes.iter().filter(|&&n| n > 0).count();
    let share = |i: usize| total as f64 * sizes[i] as f64 / population as f64;
    let mut quotas: Vec<usize> = (0..sizes.len()).map(|i| share(i).floor() as usize).collect();
    if total >= nonempty {
        for (q, &n) in quotas.iter_mut().zip(sizes) {
            if n > 0 && *q == 0 {
                *q = 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = share(a) - quotas[a] as f64;
        let rb = share(b) - quotas[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = quotas.iter().sum();
    while assigned < total {
        let i = *order.iter().find(|&&i| quotas[i] < sizes[i]).expect("capacity remains");
        quotas[i] += 1;
        assigned += 1;
        order.retain(|&j| j != i);
        order.push(i);
    }
    // the minimum-one rule can overshoot; take back from the largest quotas
    while assigned > total {
        let i = (0..sizes.len())
            .filter(|&i| quotas[i] > 1)
            .max_by(|&a, &b| quotas[a].cmp(&quotas[b]).then(b.cmp(&a)))
            .expect("an oversized stratum");
        quotas[i] -= 1;
        assigned -= 1;
    }
    quotas
}

/// Reveals `round(fraction × total)` ground-truth components pooled over the
/// whole dataset, stratified by label (chains) or event kind (tracking).
///
/// A fraction of 1 reveals the complete annotation, including tracking events
/// that the sampler would otherwise skip.
pub fn stratified_sample_annotations<P: Annotatable>(
    truth: &Dataset<P>,
    fraction: f64,
    seed: u64,
) -> Result<AnnotationMask> {
    ensure!(
        fraction > 0.0 && fraction <= 1.0,
        "fraction must lie in (0, 1], got {fraction}"
    );
    if fraction == 1.0 {
        return Ok(AnnotationMask {
            revealed: truth.iter().map(P::annotated_components).collect(),
        });
    }
    let mut by_stratum: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (n, inst) in truth.iter().enumerate() {
        for (component, stratum) in inst.sampling_pool()? {
            by_stratum.entry(stratum).or_default().push((n, component));
        }
    }
    let population: usize = by_stratum.values().map(Vec::len).sum();
    let total = (fraction * population as f64).round() as usize;
    if total == 0 {
        bail!("fraction {fraction} of {population} annotatable components rounds to zero");
    }
    let sizes: Vec<usize> = by_stratum.values().map(Vec::len).collect();
    let quotas = stratified_quotas(&sizes, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut revealed = vec![Vec::new(); truth.len()];
    for (members, quota) in by_stratum.values().zip(quotas) {
        for i in index::sample(&mut rng, members.len(), quota).into_vec() {
            let (n, component) = members[i];
            revealed[n].push(component);
        }
    }
    revealed.iter_mut().for_each(|r| r.sort_unstable());
    Ok(AnnotationMask { revealed })
}

/// Mean per-instance Hamming loss of the unconstrained prediction, in
/// percent of the annotated components.
pub fn evaluate_test_loss<P: InferenceProblem>(w: &Weights, test: &Dataset<P>) -> Result<f64> {
    let mut total = 0.0;
    for inst in test {
        let components = inst.annotated_count();
        ensure!(components > 0, "test instances must be annotated");
        let prediction = inst.argmax_augmented(w, Space::Full, DeltaSign::Zero)?;
        total += inst.violations(&prediction.output) as f64 / components as f64;
    }
    Ok(100.0 * total / test.len() as f64)
}

/// Writes a header line (`kind dim delta_scale count`) and one record per
/// instance.
pub fn write_dataset<P: Annotatable, W: Write>(dataset: &Dataset<P>, mut out: W) -> Result<()> {
    let delta_scale = dataset.instances()[0].delta_scale();
    ensure!(
        dataset.iter().all(|i| i.delta_scale() == delta_scale),
        "instances must share one delta_scale"
    );
    writeln!(
        out,
        "bridgelearn-dataset {} {} {} {}",
        P::KIND,
        dataset.feature_dim(),
        fmt_f64(delta_scale),
        dataset.len()
    )?;
    let mut line = String::new();
    for inst in dataset {
        line.clear();
        inst.write_line(&mut line);
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<P: Annotatable, R: BufRead>(input: R) -> Result<Dataset<P>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty dataset file"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    ensure!(
        fields.len() == 5 && fields[0] == "bridgelearn-dataset",
        "malformed dataset header `{header}`"
    );
    let kind: ProblemKind = fields[1].parse()?;
    ensure!(kind == P::KIND, "dataset holds {kind} instances, expected {}", P::KIND);
    let dim: usize = fields[2].parse()?;
    let delta_scale: f64 = fields[3].parse()?;
    let count: usize = fields[4].parse()?;
    let mut instances = Vec::with_capacity(count);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        instances.push(P::parse_line(&line, delta_scale).with_context(|| format!("record {}", n + 1))?);
    }
    ensure!(
        instances.len() == count,
        "header promises {count} records, found {}",
        instances.len()
    );
    let dataset = Dataset::new(instances)?;
    ensure!(
        dataset.feature_dim() == dim,
        "header dimension {dim} does not match the records"
    );
    Ok(dataset)
}
