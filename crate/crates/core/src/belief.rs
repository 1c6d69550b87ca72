//! Per-(vertex, class) vulnerability beliefs and their Bayesian updates.
//!
//! Static analyzers (CodeQL, KASAN, KCSAN, patch mining) emit alerts with a
//! class-specific true-positive rate `rho` and false-positive rate `alpha`.
//! Fuzzing crashes with probability `1 - (1 - rho_fuzz)^(tau / tau0)` on a
//! vulnerable cell. Any run may time out; timeouts carry no information
//! about the hypothesis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack_graph::AttackGraph;
use crate::error::BeliefError;
use crate::game_model::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsKind {
    Alert,
    Clean,
    Crash,
    Timeout,
}

impl ObsKind {
    pub const ALL: [ObsKind; 4] = [ObsKind::Alert, ObsKind::Clean, ObsKind::Crash, ObsKind::Timeout];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub vertex: usize,
    pub class: usize,
    pub method: Method,
    pub tau: f64,
    pub kind: ObsKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticRate {
    pub rho: f64,
    pub alpha: f64,
}

/// Observation model file: `{method: {class label: {rho, alpha}}}` for the
/// static methods plus the fuzzing and timeout scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationModelFile {
    pub codeql: BTreeMap<String, StaticRate>,
    pub kasan: BTreeMap<String, StaticRate>,
    pub kcsan: BTreeMap<String, StaticRate>,
    pub patchmine: BTreeMap<String, StaticRate>,
    pub rho_fuzz: f64,
    pub tau0: f64,
    pub timeout_rate: f64,
    pub crash_fp_rate: f64,
    /// Class labels fuzzing can trigger.
    pub fuzz_classes: Vec<String>,
}

impl Default for ObservationModelFile {
    fn default() -> Self {
        let table = |rows: &[(&str, f64, f64)]| -> BTreeMap<String, StaticRate> {
            rows.iter()
                .map(|&(l, rho, alpha)| (l.to_string(), StaticRate { rho, alpha }))
                .collect()
        };
        Self {
            codeql: table(&[("CWE-787", 0.8, 0.2), ("CWE-416", 0.7, 0.25), ("CWE-362", 0.6, 0.3)]),
            kasan: table(&[("CWE-787", 0.9, 0.05), ("CWE-416", 0.9, 0.05)]),
            kcsan: table(&[("CWE-362", 0.85, 0.1)]),
            patchmine: table(&[("CWE-787", 0.5, 0.15), ("CWE-416", 0.5, 0.15), ("CWE-362", 0.5, 0.15)]),
            rho_fuzz: 0.3,
            tau0: 1.0,
            timeout_rate: 0.0,
            crash_fp_rate: 0.02,
            fuzz_classes: vec!["CWE-787".into(), "CWE-416".into()],
        }
    }
}

impl ObservationModelFile {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    fn table(&self, m: Method) -> Option<&BTreeMap<String, StaticRate>> {
        match m {
            Method::CodeQl => Some(&self.codeql),
            Method::Kasan => Some(&self.kasan),
            Method::Kcsan => Some(&self.kcsan),
            Method::PatchMine => Some(&self.patchmine),
            Method::Fuzz | Method::Verify => None,
        }
    }

    /// Resolves class labels against `graph`. Labels the graph does not
    /// define are ignored.
    pub fn resolve(&self, graph: &AttackGraph) -> Result<ObservationModel, BeliefError> {
        let k = graph.num_classes();
        let index = |label: &str| graph.classes.iter().position(|c| c.label == label);
        let mut static_rates = BTreeMap::new();
        for m in [Method::CodeQl, Method::Kasan, Method::Kcsan, Method::PatchMine] {
            let mut row = vec![None; k];
            for (label, rate) in self.table(m).into_iter().flatten() {
                if let Some(c) = index(label) {
                    row[c] = Some(*rate);
                }
            }
            static_rates.insert(m, row);
        }
        let mut fuzz_classes = vec![false; k];
        for label in &self.fuzz_classes {
            if let Some(c) = index(label) {
                fuzz_classes[c] = true;
            }
        }
        let model = ObservationModel {
            static_rates,
            rho_fuzz: self.rho_fuzz,
            tau0: self.tau0,
            timeout_rate: self.timeout_rate,
            crash_fp_rate: self.crash_fp_rate,
            fuzz_classes,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Observation model resolved to class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    /// Static-method rates per class id; `None` where the method cannot
    /// detect the class.
    pub static_rates: BTreeMap<Method, Vec<Option<StaticRate>>>,
    pub rho_fuzz: f64,
    pub tau0: f64,
    pub timeout_rate: f64,
    pub crash_fp_rate: f64,
    pub fuzz_classes: Vec<bool>,
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ObservationModel {
    pub fn validate(&self) -> Result<(), BeliefError> {
        for (m, row) in &self.static_rates {
            for (c, r) in row.iter().enumerate() {
                if let Some(r) = r {
                    if !unit(r.rho) || !unit(r.alpha) {
                        return Err(BeliefError::InvalidModel(format!("{m:?} class {c}: rates outside [0,1]")));
                    }
                    if r.rho < r.alpha {
                        return Err(BeliefError::InvalidModel(format!(
                            "{m:?} class {c}: rho {} below alpha {}",
                            r.rho, r.alpha
                        )));
                    }
                }
            }
        }
        if !unit(self.rho_fuzz) || !unit(self.timeout_rate) || !unit(self.crash_fp_rate) {
            return Err(BeliefError::InvalidModel("fuzz and timeout rates must lie in [0,1]".into()));
        }
        if !(self.tau0 > 0.0) {
            return Err(BeliefError::InvalidModel("tau0 must be positive".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.fuzz_classes.len()
    }

    /// Whether `method` produces observations about `class`.
    pub fn detects(&self, method: Method, class: usize) -> bool {
        match method {
            Method::Fuzz => self.fuzz_classes.get(class).copied().unwrap_or(false),
            Method::Verify => false,
            m => self
                .static_rates
                .get(&m)
                .and_then(|row| row.get(class))
                .is_some_and(|r| r.is_some()),
        }
    }

    /// Classes `method` can detect, ascending.
    pub fn detectable(&self, method: Method) -> Vec<usize> {
        (0..self.num_classes()).filter(|&c| self.detects(method, c)).collect()
    }

    /// `(rho, alpha)` of `method` on `class`, fuzzing evaluated at one quantum.
    pub fn rates(&self, method: Method, class: usize) -> Option<(f64, f64)> {
        if !self.detects(method, class) {
            return None;
        }
        match method {
            Method::Fuzz => Some((self.rho_fuzz, self.crash_fp_rate)),
            m => self.static_rates[&m][class].map(|r| (r.rho, r.alpha)),
        }
    }

    fn static_rate(&self, method: Method, class: usize) -> Result<StaticRate, BeliefError> {
        let row = self
            .static_rates
            .get(&method)
            .ok_or(BeliefError::UnknownMethod(method))?;
        row.get(class)
            .copied()
            .flatten()
            .ok_or(BeliefError::UnknownClass { method, class })
    }
}

/// Probability of observing `kind` from a `method` run of budget `tau` on
/// (`class`) under the given hypothesis.
///
/// Static runs need a full quantum `tau0` to complete; a run funded with a
/// fraction `k = tau / tau0 < 1` completes with probability `k` and otherwise
/// times out, independently of the hypothesis. Fuzzing's false-crash rate is
/// per quantum, like its detection rate.
pub fn observation_likelihood(
    model: &ObservationModel,
    kind: ObsKind,
    vulnerable: bool,
    method: Method,
    class: usize,
    tau: f64,
) -> Result<f64, BeliefError> {
    if tau < 0.0 || tau.is_nan() {
        return Err(BeliefError::NegativeTau(tau));
    }
    let t = model.timeout_rate;
    match method {
        Method::Fuzz => {
            if !model.detects(Method::Fuzz, class) {
                return Err(BeliefError::UnknownClass { method, class });
            }
            let quanta = tau / model.tau0;
            let rate = if vulnerable { model.rho_fuzz } else { model.crash_fp_rate };
            let crash = 1.0 - (1.0 - rate).powf(quanta);
            Ok(match kind {
                ObsKind::Timeout => t,
                ObsKind::Crash => (1.0 - t) * crash,
                ObsKind::Clean => (1.0 - t) * (1.0 - crash),
                ObsKind::Alert => 0.0,
            })
        }
        Method::Verify => Err(BeliefError::UnknownMethod(method)),
        _ => {
            let r = model.static_rate(method, class)?;
            let done = (1.0 - t) * (tau / model.tau0).min(1.0);
            let alert = if vulnerable { r.rho } else { r.alpha };
            Ok(match kind {
                ObsKind::Timeout => 1.0 - done,
                ObsKind::Alert => done * alert,
                ObsKind::Clean => done * (1.0 - alert),
                ObsKind::Crash => 0.0,
            })
        }
    }
}

/// Draws an observation kind from the likelihood under `vulnerable`.
pub fn sample_kind<R: Rng + ?Sized>(
    model: &ObservationModel,
    vulnerable: bool,
    method: Method,
    class: usize,
    tau: f64,
    rng: &mut R,
) -> Result<ObsKind, BeliefError> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = ObsKind::Timeout;
    for kind in ObsKind::ALL {
        let p = observation_likelihood(model, kind, vulnerable, method, class, tau)?;
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = kind;
        if u < acc {
            return Ok(kind);
        }
    }
    Ok(last)
}

/// Posterior vulnerability probability after `obs`, starting from `b`.
pub fn bayes_update(b: f64, obs: &Observation, model: &ObservationModel) -> f64 {
    let lik = |v| observation_likelihood(model, obs.kind, v, obs.method, obs.class, obs.tau);
    let (l1, l0) = match (lik(true), lik(false)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            warn!("ignoring observation {obs:?}: {e}");
            return b;
        }
    };
    let den = l1 * b + l0 * (1.0 - b);
    if den <= 0.0 {
        warn!("observation {obs:?} has zero probability under both hypotheses; belief kept");
        return b;
    }
    (l1 * b / den).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    /// `b[vertex][class]`.
    pub b: Vec<Vec<f64>>,
    pub round: usize,
}

fn canonical(a: &Observation, b: &Observation) -> std::cmp::Ordering {
    (a.vertex, a.class, a.method)
        .cmp(&(b.vertex, b.class, b.method))
        .then(a.tau.total_cmp(&b.tau))
        .then(a.kind.cmp(&b.kind))
}

impl BeliefState {
    /// Beliefs initialized to the graph's class priors.
    pub fn from_priors(graph: &AttackGraph) -> Self {
        Self {
            b: graph.vertices.iter().map(|v| v.phi.clone()).collect(),
            round: 0,
        }
    }

    pub fn get(&self, vertex: usize, class: usize) -> f64 {
        self.b[vertex][class]
    }

    /// Highest class belief at `vertex`.
    pub fn max_class(&self, vertex: usize) -> f64 {
        self.b[vertex].iter().copied().fold(0.0, f64::max)
    }

    /// Applies every observation in canonical (vertex, class, method) order
    /// and advances the round counter.
    pub fn update_all(&self, observations: &[Observation], model: &ObservationModel) -> BeliefState {
        let mut next = self.clone();
        let mut sorted = observations.to_vec();
        sorted.sort_by(canonical);
        for obs in &sorted {
            match next.b.get_mut(obs.vertex).and_then(|row| row.get_mut(obs.class)) {
                Some(cell) => *cell = bayes_update(*cell, obs, model),
                None => warn!("observation for unknown cell ({}, {})", obs.vertex, obs.class),
            }
        }
        next.round += 1;
        next
    }

    /// `vertex,class,belief` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,class,belief\n");
        for (v, row) in self.b.iter().enumerate() {
            for (c, b) in row.iter().enumerate() {
                let _ = writeln!(out, "{v},{c},{b}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn model(rho: f64, alpha: f64, timeout: f64) -> ObservationModel {
        let mut m = ObservationModel {
            static_rates: BTreeMap::new(),
            rho_fuzz: 0.5,
            tau0: 1.0,
            timeout_rate: timeout,
            crash_fp_rate: 0.02,
            fuzz_classes: vec![true, true],
        };
        for method in [Method::CodeQl, Method::Kasan, Method::Kcsan, Method::PatchMine] {
            m.static_rates.insert(method, vec![Some(StaticRate { rho, alpha }); 2]);
        }
        m
    }

    fn obs(vertex: usize, class: usize, method: Method, kind: ObsKind) -> Observation {
        Observation { vertex, class, method, tau: 1.0, kind }
    }

    #[test]
    fn fuzz_crash_probability() {
        let m = model(0.9, 0.1, 0.0);
        let at = |tau| observation_likelihood(&m, ObsKind::Crash, true, Method::Fuzz, 0, tau).unwrap();
        assert_eq!(at(0.0), 0.0);
        assert_eq!(at(2.0), 0.75);
        let prev = (0..50).map(|i| at(i as f64 * 0.5)).collect::<Vec<_>>();
        assert!(prev.windows(2).all(|w| w[1] >= w[0]));
        assert!(at(200.0) > 1.0 - 1e-12);
    }

    #[test]
    fn likelihoods_normalize() {
        let m = model(0.7, 0.2, 0.1);
        for method in Method::DETECTORS {
            for v in [true, false] {
                for tau in [0.0, 0.3, 1.0, 2.5] {
                    let s: f64 = ObsKind::ALL
                        .iter()
                        .map(|&k| observation_likelihood(&m, k, v, method, 1, tau).unwrap())
                        .sum();
                    assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn likelihood_errors() {
        let mut m = model(0.7, 0.2, 0.0);
        assert_eq!(
            observation_likelihood(&m, ObsKind::Alert, true, Method::CodeQl, 0, -1.0),
            Err(BeliefError::NegativeTau(-1.0))
        );
        assert_eq!(
            observation_likelihood(&m, ObsKind::Alert, true, Method::Verify, 0, 1.0),
            Err(BeliefError::UnknownMethod(Method::Verify))
        );
        m.static_rates.get_mut(&Method::Kcsan).unwrap()[1] = None;
        assert!(matches!(
            observation_likelihood(&m, ObsKind::Alert, true, Method::Kcsan, 1, 1.0),
            Err(BeliefError::UnknownClass { .. })
        ));
        assert!(observation_likelihood(&m, ObsKind::Alert, true, Method::CodeQl, 5, 1.0).is_err());
    }

    #[test]
    fn posterior_examples() {
        let m = model(0.9, 0.1, 0.0);
        let o = obs(0, 0, Method::CodeQl, ObsKind::Alert);
        // 0.27 / (0.27 + 0.07)
        assert_abs_diff_eq!(bayes_update(0.3, &o, &m), 0.27 / 0.34, epsilon = 1e-12);
        assert!((bayes_update(0.3, &o, &m) - 0.7941).abs() < 1e-4);
        for kind in ObsKind::ALL {
            for b in [0.0, 1.0] {
                assert_eq!(bayes_update(b, &obs(0, 0, Method::CodeQl, kind), &m), b);
            }
        }
        let m = model(0.9, 0.1, 0.2);
        let t = obs(0, 0, Method::Fuzz, ObsKind::Timeout);
        assert_abs_diff_eq!(bayes_update(0.3, &t, &m), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn impossible_observation_keeps_belief() {
        let m = model(0.9, 0.1, 0.0);
        // fuzzing never alerts
        assert_eq!(bayes_update(0.4, &obs(0, 0, Method::Fuzz, ObsKind::Alert), &m), 0.4);
        assert_eq!(bayes_update(0.4, &obs(0, 0, Method::Verify, ObsKind::Alert), &m), 0.4);
    }

    #[test]
    fn update_all_examples() {
        let m = model(0.9, 0.1, 0.0);
        let s = BeliefState { b: vec![vec![0.3, 0.6], vec![0.2, 0.5]], round: 4 };
        let same = s.update_all(&[], &m);
        assert_eq!(same.b, s.b);
        assert_eq!(same.round, 5);

        let a = obs(0, 1, Method::CodeQl, ObsKind::Alert);
        let c = obs(1, 0, Method::Kasan, ObsKind::Clean);
        let both = s.update_all(&[a, c], &m);
        assert_eq!(both.b[0][1], bayes_update(0.6, &a, &m));
        assert_eq!(both.b[1][0], bayes_update(0.2, &c, &m));
        assert_eq!(both.b[0][0], 0.3);

        let a2 = obs(0, 1, Method::Kasan, ObsKind::Alert);
        let seq1 = bayes_update(bayes_update(0.6, &a, &m), &a2, &m);
        let seq2 = bayes_update(bayes_update(0.6, &a2, &m), &a, &m);
        let batch = s.update_all(&[a2, a], &m).b[0][1];
        assert!((batch - seq1).abs() < 1e-12 && (batch - seq2).abs() < 1e-12);
    }

    #[test]
    fn repeated_sampling_converges_to_truth() {
        let m = model(0.9, 0.1, 0.0);
        let runs = 50;
        let mut mean = 0.0;
        for r in 0..runs {
            let mut rng = crate::rng::stream(11, "test.converge", &[r]);
            let mut b = 0.3;
            for _ in 0..1000 {
                let kind = sample_kind(&m, true, Method::CodeQl, 0, 1.0, &mut rng).unwrap();
                b = bayes_update(b, &obs(0, 0, Method::CodeQl, kind), &m);
            }
            mean += b / runs as f64;
        }
        assert!(mean >= 0.99, "mean posterior {mean}");
    }

    #[test]
    fn file_round_trip_and_resolution() {
        let f = ObservationModelFile::default();
        let json = serde_json::to_string_pretty(&f).unwrap();
        assert_eq!(ObservationModelFile::from_json(&json).unwrap(), f);
        assert!(ObservationModelFile::from_json(r#"{"codeql": {}, "bogus": 1}"#).is_err());
        let g = crate::attack_graph::generate_synthetic_graph(&Default::default()).unwrap();
        let m = f.resolve(&g).unwrap();
        assert!(m.detects(Method::Kcsan, 2));
        assert!(!m.detects(Method::Kcsan, 0));
        assert_eq!(m.detectable(Method::Fuzz), vec![0, 1]);
        let mut bad = f.clone();
        bad.codeql.get_mut("CWE-787").unwrap().alpha = 0.95;
        assert!(matches!(bad.resolve(&g), Err(BeliefError::InvalidModel(_))));
    }

    #[test]
    fn partial_static_budget_adds_timeouts() {
        let m = model(0.9, 0.1, 0.0);
        let t = observation_likelihood(&m, ObsKind::Timeout, true, Method::CodeQl, 0, 0.25).unwrap();
        assert_abs_diff_eq!(t, 0.75, epsilon = 1e-12);
        let a = observation_likelihood(&m, ObsKind::Alert, true, Method::CodeQl, 0, 0.25).unwrap();
        assert_abs_diff_eq!(a, 0.25 * 0.9, epsilon = 1e-12);
    }

    #[test]
    fn csv_export() {
        let s = BeliefState { b: vec![vec![0.25], vec![0.5]], round: 0 };
        assert_eq!(s.to_csv(), "vertex,class,belief\n0,0,0.25\n1,0,0.5\n");
    }

    proptest! {
        #[test]
        fn posterior_in_unit_interval(
            b in 0.0f64..=1.0, rho in 0.0f64..=1.0, alpha in 0.0f64..=1.0,
            tau in 0.0f64..5.0, k in 0usize..4, mi in 0usize..5
        ) {
            let m = model(rho.max(alpha), alpha.min(rho), 0.1);
            let o = Observation { vertex: 0, class: 0, method: Method::DETECTORS[mi], tau, kind: ObsKind::ALL[k] };
            let p = bayes_update(b, &o, &m);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn informative_tools_move_beliefs(b in 0.01f64..0.99, alpha in 0.0f64..0.8, gap in 0.05f64..0.2) {
            let m = model(alpha + gap, alpha, 0.0);
            let up = bayes_update(b, &obs(0, 0, Method::CodeQl, ObsKind::Alert), &m);
            let down = bayes_update(b, &obs(0, 0, Method::CodeQl, ObsKind::Clean), &m);
            prop_assert!(up > b);
            prop_assert!(down < b);
        }

        #[test]
        fn batch_order_does_not_matter(
            kinds in proptest::collection::vec(0usize..2, 1..12), seed in 0u64..1000
        ) {
            use rand::seq::SliceRandom;
            let m = model(0.8, 0.2, 0.0);
            let batch: Vec<Observation> = kinds
                .iter()
                .enumerate()
                .map(|(i, &k)| Observation {
                    vertex: 0,
                    class: 0,
                    method: Method::DETECTORS[i % 5],
                    tau: 0.5 + i as f64,
                    kind: if Method::DETECTORS[i % 5] == Method::Fuzz {
                        [ObsKind::Crash, ObsKind::Clean][k]
                    } else {
                        [ObsKind::Alert, ObsKind::Clean][k]
                    },
                })
                .collect();
            let mut shuffled = batch.clone();
            shuffled.shuffle(&mut crate::rng::stream(seed, "test.shuffle", &[]));
            let s = BeliefState { b: vec![vec![0.4]], round: 0 };
            let a = s.update_all(&batch, &m).b[0][0];
            // sequential application of the shuffled batch, without sorting
            let mut seq = 0.4;
            for o in &shuffled {
                seq = bayes_update(seq, o, &m);
            }
            prop_assert!((a - seq).abs() < 1e-12);
        }
    }
}
