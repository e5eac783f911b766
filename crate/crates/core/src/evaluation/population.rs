//! Seeded synthetic population with a known latent influence per user.
//!
//! Every user draws a log-normal latent influence `L`. On each network they
//! join they get an audience whose size is proportional to `L`, and their
//! posts draw a Poisson number of reactions from that audience with mean
//! proportional to `L`. Profile attributes track audience size, graph
//! networks get one follow edge per audience member, and pairwise labels
//! favour the higher-`L` user.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Days};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::Deserialize;

use super::EvalError;
use crate::codec::{is_skippable, Record};
use crate::event::{
    GraphEdge, InteractionEvent, NetworkName, PairwiseLabel, ProfileSnapshot, UserId, UserIdentity,
    BATCH_WINDOW_DAYS, SECONDS_PER_DAY,
};
use crate::registry::{FeatureRegistry, NetworkSpec};

const AUDIENCE_SALT: u64 = 0x6175_6469_656e_6365;
const EVENT_SALT: u64 = 0x6576_656e_7473;
const PROFILE_SALT: u64 = 0x0070_726f_6669_6c65;
const LABEL_SALT: u64 = 0x6c61_6265_6c73;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationParams {
    pub users: usize,
    /// Log-normal parameters of the latent influence.
    pub latent_mu: f64,
    pub latent_sigma: f64,
    /// Expected reactions per user, summed over networks.
    pub mean_reactions: f64,
    /// Audience size on one network for a user of mean latent influence.
    pub audience_scale: f64,
    /// Probability of joining each network. Users who draw no network are
    /// placed on one at random.
    pub membership: f64,
    /// Labelled pairs per network.
    pub label_pairs: usize,
    /// Probability that a label names the lower-influence user as winner.
    pub flip_rate: f64,
    /// Extra 3-2 judgements per network, as a fraction of `label_pairs`.
    pub ambiguous_rate: f64,
    /// Log-normal sigma of the noise on numeric profile attributes.
    pub attr_noise: f64,
    /// Networks to populate; all registry networks when empty.
    pub networks: Vec<String>,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams {
            users: 1000,
            latent_mu: 0.0,
            latent_sigma: 1.0,
            mean_reactions: 50.0,
            audience_scale: 20.0,
            membership: 0.7,
            label_pairs: 600,
            flip_rate: 0.1,
            ambiguous_rate: 0.1,
            attr_noise: 0.3,
            networks: Vec::new(),
        }
    }
}

impl PopulationParams {
    /// Every user on every network, exact attributes, no label flips and no
    /// ambiguous judgements. Reaction counts stay Poisson.
    pub fn noise_free(users: usize) -> Self {
        PopulationParams {
            users,
            membership: 1.0,
            flip_rate: 0.0,
            ambiguous_rate: 0.0,
            attr_noise: 0.0,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let checks = [
            (self.users >= 2, "users must be at least 2"),
            (self.latent_mu.is_finite(), "latent_mu must be finite"),
            (
                self.latent_sigma.is_finite() && self.latent_sigma >= 0.0,
                "latent_sigma must be >= 0",
            ),
            (
                self.mean_reactions.is_finite() && self.mean_reactions >= 0.0,
                "mean_reactions must be >= 0",
            ),
            (
                self.audience_scale.is_finite() && self.audience_scale > 0.0,
                "audience_scale must be > 0",
            ),
            (
                unit(self.membership) && self.membership > 0.0,
                "membership must be in (0, 1]",
            ),
            (unit(self.flip_rate), "flip_rate must be in [0, 1]"),
            (
                self.ambiguous_rate.is_finite() && self.ambiguous_rate >= 0.0,
                "ambiguous_rate must be >= 0",
            ),
            (
                self.attr_noise.is_finite() && self.attr_noise >= 0.0,
                "attr_noise must be >= 0",
            ),
        ];
        match checks.iter().find(|c| !c.0) {
            Some((_, msg)) => Err(EvalError::BadParams(msg.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub id: UserId,
    pub latent: f64,
    /// Audience size on each network the user belongs to.
    pub audience: BTreeMap<NetworkName, usize>,
}

impl SyntheticUser {
    pub fn total_audience(&self) -> usize {
        self.audience.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub users: Vec<SyntheticUser>,
}

impl SyntheticPopulation {
    pub fn latent(&self) -> BTreeMap<UserId, f64> {
        self.users
            .iter()
            .map(|u| (u.id.clone(), u.latent))
            .collect()
    }

    pub fn get(&self, id: &UserId) -> Option<&SyntheticUser> {
        self.users
            .binary_search_by(|u| u.id.cmp(id))
            .ok()
            .map(|i| &self.users[i])
    }
}

/// `user=..\tlatent=..` followed by `audience.<network>=<size>`.
pub fn write_population(pop: &SyntheticPopulation) -> String {
    let mut out = String::new();
    for u in &pop.users {
        let mut r = Record::new().with("user", &u.id).with("latent", u.latent);
        for (n, a) in &u.audience {
            r.push(format!("audience.{n}"), a);
        }
        writeln!(out, "{r}").unwrap();
    }
    out
}

pub fn parse_population(text: &str) -> Result<SyntheticPopulation, EvalError> {
    let mut users = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !is_skippable(l)) {
        let bad = |msg: String| EvalError::Population { line: i + 1, msg };
        let r = Record::parse(line).map_err(|e| bad(e.to_string()))?;
        r.expect_only(&["user", "latent"], &["audience."])
            .map_err(|e| bad(e.to_string()))?;
        let id = UserId::new(r.require("user").map_err(|e| bad(e.to_string()))?)
            .map_err(|e| bad(e.to_string()))?;
        let latent: f64 = r.parse_field("latent").map_err(|e| bad(e.to_string()))?;
        if !(latent.is_finite() && latent > 0.0) {
            return Err(bad(format!("latent {latent} must be positive")));
        }
        let mut audience = BTreeMap::new();
        for (k, v) in r.fields() {
            if let Some(n) = k.strip_prefix("audience.") {
                let net = NetworkName::new(n).map_err(|e| bad(e.to_string()))?;
                let size = v
                    .parse()
                    .map_err(|_| bad(format!("invalid audience size {v:?}")))?;
                audience.insert(net, size);
            }
        }
        users.push(SyntheticUser {
            id,
            latent,
            audience,
        });
    }
    users.sort_by(|a, b| a.id.cmp(&b.id));
    if users.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(EvalError::Population {
            line: 0,
            msg: "duplicate user".into(),
        });
    }
    Ok(SyntheticPopulation { users })
}

/// A full input set plus the ground truth it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub population: SyntheticPopulation,
    pub events: Vec<InteractionEvent>,
    pub profiles: Vec<ProfileSnapshot>,
    pub edges: Vec<GraphEdge>,
    pub labels: Vec<PairwiseLabel>,
    pub identities: Vec<UserIdentity>,
}

impl GeneratedData {
    /// File name and contents for each input kind and the population file.
    pub fn render(&self) -> Vec<(&'static str, String)> {
        fn lines<T>(items: &[T], f: impl Fn(&T) -> Record) -> String {
            let mut out = String::new();
            for i in items {
                writeln!(out, "{}", f(i)).unwrap();
            }
            out
        }
        vec![
            (
                "events.txt",
                lines(&self.events, InteractionEvent::to_record),
            ),
            (
                "profiles.txt",
                lines(&self.profiles, ProfileSnapshot::to_record),
            ),
            ("edges.txt", lines(&self.edges, GraphEdge::to_record)),
            ("labels.txt", lines(&self.labels, PairwiseLabel::to_record)),
            (
                "identities.txt",
                lines(&self.identities, UserIdentity::to_record),
            ),
            ("population.txt", write_population(&self.population)),
        ]
    }
}

pub(crate) fn user_rng(seed: u64, salt: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(index as u64);
    rng
}

/// Draws a population and its inputs. Output depends only on `params`,
/// `registry`, `reference_time` and `seed`.
pub fn generate_population(
    params: &PopulationParams,
    registry: &FeatureRegistry,
    reference_time: i64,
    seed: u64,
) -> Result<GeneratedData, EvalError> {
    params.validate()?;
    let as_of = DateTime::from_timestamp(reference_time, 0)
        .and_then(|t| t.date_naive().checked_sub_days(Days::new(1)))
        .ok_or_else(|| {
            EvalError::BadParams(format!("reference time {reference_time} out of range"))
        })?;
    let networks: Vec<&NetworkSpec> = if params.networks.is_empty() {
        registry.networks().iter().collect()
    } else {
        params
            .networks
            .iter()
            .map(|n| {
                NetworkName::new(n)
                    .ok()
                    .and_then(|name| registry.network(&name))
                    .ok_or_else(|| EvalError::BadParams(format!("unknown network {n:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    if networks.is_empty() {
        return Err(EvalError::BadParams("no networks to populate".into()));
    }
    let n_users = params.users;
    let width = n_users.to_string().len().max(5);
    let ids: Vec<UserId> = (0..n_users)
        .map(|i| UserId::new(format!("u{i:0width$}")).unwrap())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent_dist = LogNormal::new(params.latent_mu, params.latent_sigma)
        .map_err(|e| EvalError::BadParams(e.to_string()))?;
    let latent: Vec<f64> = (0..n_users).map(|_| latent_dist.sample(&mut rng)).collect();
    let mut member = vec![vec![false; networks.len()]; n_users];
    for row in member.iter_mut() {
        for slot in row.iter_mut() {
            *slot = rng.random_bool(params.membership);
        }
        if !row.iter().any(|&m| m) {
            row[rng.random_range(0..networks.len())] = true;
        }
    }
    let members: Vec<Vec<usize>> = (0..networks.len())
        .map(|j| (0..n_users).filter(|&i| member[i][j]).collect())
        .collect();

    let mean_latent = (params.latent_mu + params.latent_sigma.powi(2) / 2.0).exp();
    // audience[i][j]: sorted member indices reacting to user i on network j
    let audiences: Vec<Vec<Option<Vec<usize>>>> = (0..n_users)
        .into_par_iter()
        .map(|i| {
            let mut rng = user_rng(seed, AUDIENCE_SALT, i);
            (0..networks.len())
                .map(|j| {
                    if !member[i][j] || members[j].len() < 2 {
                        return member[i][j].then(Vec::new);
                    }
                    let pool = members[j].len() - 1;
                    let size = ((params.audience_scale * latent[i] / mean_latent).round() as usize)
                        .clamp(1, pool);
                    let own = members[j].binary_search(&i).unwrap();
                    let mut picked: Vec<usize> = sample(&mut rng, pool, size)
                        .into_iter()
                        .map(|k| members[j][if k >= own { k + 1 } else { k }])
                        .collect();
                    picked.sort_unstable();
                    Some(picked)
                })
                .collect()
        })
        .collect();

    let population = SyntheticPopulation {
        users: (0..n_users)
            .map(|i| SyntheticUser {
                id: ids[i].clone(),
                latent: latent[i],
                audience: networks
                    .iter()
                    .enumerate()
                    .filter_map(|(j, n)| {
                        audiences[i][j].as_ref().map(|a| (n.name.clone(), a.len()))
                    })
                    .collect(),
            })
            .collect(),
    };

    // Reaction rate per (user, dynamic network) so the expected total is
    // mean_reactions * users.
    let dynamic: Vec<bool> = networks.iter().map(|n| n.is_dynamic()).collect();
    let weight_sum: f64 = (0..n_users)
        .map(|i| {
            latent[i]
                * (0..networks.len())
                    .filter(|&j| dynamic[j] && member[i][j])
                    .count() as f64
        })
        .sum();
    let rate = if weight_sum > 0.0 {
        params.mean_reactions * n_users as f64 / weight_sum
    } else {
        0.0
    };
    let span = i64::from(BATCH_WINDOW_DAYS) * SECONDS_PER_DAY;
    let events: Vec<InteractionEvent> = (0..n_users)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = user_rng(seed, EVENT_SALT, i);
            let mut out = Vec::new();
            for (j, spec) in networks.iter().enumerate() {
                let Some(aud) = audiences[i][j]
                    .as_ref()
                    .filter(|a| dynamic[j] && !a.is_empty())
                else {
                    continue;
                };
                let lambda = rate * latent[i];
                let count = if lambda > 0.0 {
                    Poisson::new(lambda).map_or(0.0, |p| p.sample(&mut rng)) as usize
                } else {
                    0
                };
                for _ in 0..count {
                    let actor = aud[rng.random_range(0..aud.len())];
                    out.push(InteractionEvent {
                        actor: ids[actor].clone(),
                        author: ids[i].clone(),
                        network: spec.name.clone(),
                        content_type: spec.content_types
                            [rng.random_range(0..spec.content_types.len())]
                        .clone(),
                        action: spec.actions[rng.random_range(0..spec.actions.len())].clone(),
                        timestamp: reference_time - 1 - rng.random_range(0..span - 1),
                    });
                }
            }
            out
        })
        .collect();

    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut profiles = Vec::new();
    for i in 0..n_users {
        let mut rng = user_rng(seed, PROFILE_SALT, i);
        for (j, spec) in networks.iter().enumerate() {
            let Some(aud) = &audiences[i][j] else {
                continue;
            };
            if spec.numeric_attrs.is_empty() && spec.categorical_attrs.is_empty() {
                continue;
            }
            let mut numeric = BTreeMap::new();
            for a in &spec.numeric_attrs {
                let noise = (params.attr_noise * norm.sample(&mut rng)).exp();
                numeric.insert(a.clone(), (aud.len() as f64 * noise).round());
            }
            let mut categorical = BTreeMap::new();
            for a in &spec.categorical_attrs {
                let Some(levels) = registry.ordinal_map(a) else {
                    continue;
                };
                let z = if params.latent_sigma > 0.0 {
                    (latent[i].ln() - params.latent_mu) / params.latent_sigma
                } else {
                    0.0
                } + params.attr_noise * norm.sample(&mut rng);
                let q = statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2) / 2.0;
                let idx = ((q * levels.len() as f64) as usize).min(levels.len() - 1);
                categorical.insert(a.clone(), levels[idx].clone());
            }
            profiles.push(ProfileSnapshot {
                user: ids[i].clone(),
                network: spec.name.clone(),
                as_of,
                numeric_attrs: numeric,
                categorical_attrs: categorical,
            });
        }
    }

    let mut edges = Vec::new();
    for (j, spec) in networks.iter().enumerate().filter(|(_, s)| s.graph) {
        for i in 0..n_users {
            for &v in audiences[i][j].iter().flatten() {
                edges.push(GraphEdge {
                    from: ids[v].clone(),
                    to: ids[i].clone(),
                    network: spec.name.clone(),
                });
            }
        }
    }

    let mut labels = Vec::new();
    for (j, spec) in networks.iter().enumerate() {
        let pool = &members[j];
        if pool.len() < 2 {
            continue;
        }
        let mut rng = user_rng(seed, LABEL_SALT, j);
        let ambiguous = (params.label_pairs as f64 * params.ambiguous_rate).round() as usize;
        for k in 0..params.label_pairs + ambiguous {
            let picked = sample(&mut rng, pool.len(), 2);
            let (a, b) = (pool[picked.index(0)], pool[picked.index(1)]);
            let (hi, lo) = if (latent[a], a) > (latent[b], b) {
                (a, b)
            } else {
                (b, a)
            };
            let (win_votes, lose_votes) = if k >= params.label_pairs {
                (3, 2)
            } else if rng.random_bool(0.5) {
                (5, 0)
            } else {
                (4, 1)
            };
            let (winner, loser) = if k < params.label_pairs && rng.random_bool(params.flip_rate) {
                (lo, hi)
            } else {
                (hi, lo)
            };
            let (user_a, user_b, votes_a, votes_b) = if rng.random_bool(0.5) {
                (winner, loser, win_votes, lose_votes)
            } else {
                (loser, winner, lose_votes, win_votes)
            };
            labels.push(PairwiseLabel {
                network: spec.name.clone(),
                user_a: ids[user_a].clone(),
                user_b: ids[user_b].clone(),
                votes_a,
                votes_b,
            });
        }
    }

    let identities = (0..n_users)
        .map(|i| UserIdentity {
            profile_id: ids[i].clone(),
            network_ids: networks
                .iter()
                .enumerate()
                .filter(|&(j, _)| member[i][j])
                .map(|(_, n)| (n.name.clone(), ids[i].to_string()))
                .collect(),
        })
        .collect();

    Ok(GeneratedData {
        population,
        events,
        profiles,
        edges,
        labels,
        identities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::preprocess_labels;

    const REF: i64 = 1_717_200_000;

    fn gen(params: &PopulationParams, seed: u64) -> GeneratedData {
        generate_population(params, &FeatureRegistry::default_config(), REF, seed).unwrap()
    }

    #[test]
    fn deterministic_under_seed() {
        let p = PopulationParams {
            users: 200,
            ..Default::default()
        };
        assert_eq!(gen(&p, 9).render(), gen(&p, 9).render());
        assert_ne!(gen(&p, 9).render(), gen(&p, 10).render());
    }

    #[test]
    fn event_volume_matches_expectation() {
        let d = gen(&PopulationParams::default(), 1);
        let n = d.events.len() as f64;
        assert!((n - 50_000.0).abs() < 2_500.0, "{n}");
        let window = i64::from(BATCH_WINDOW_DAYS) * SECONDS_PER_DAY;
        assert!(d
            .events
            .iter()
            .all(|e| e.actor != e.author && e.timestamp < REF && e.timestamp > REF - window));
    }

    #[test]
    fn noise_free_labels_follow_latent() {
        let d = gen(&PopulationParams::noise_free(300), 4);
        let latent = d.population.latent();
        let pairs = preprocess_labels(&d.labels);
        assert!(!pairs.is_empty());
        assert!(pairs.iter().all(|p| latent[&p.winner] > latent[&p.loser]));
        assert!(d.population.users.iter().all(|u| u.audience.len() == 10));
    }

    #[test]
    fn audiences_exclude_self_and_scale_with_latent() {
        let d = gen(&PopulationParams::noise_free(400), 2);
        let tw = NetworkName::new("tw").unwrap();
        for e in d.edges.iter().filter(|e| e.network == tw) {
            assert_ne!(e.from, e.to);
        }
        let mut users = d.population.users.clone();
        users.sort_by(|a, b| a.latent.total_cmp(&b.latent));
        let low: usize = users[..50].iter().map(|u| u.audience[&tw]).sum();
        let high: usize = users[350..].iter().map(|u| u.audience[&tw]).sum();
        assert!(high > 5 * low);
    }

    #[test]
    fn population_file_round_trip() {
        let d = gen(
            &PopulationParams {
                users: 50,
                ..Default::default()
            },
            3,
        );
        let text = write_population(&d.population);
        assert_eq!(parse_population(&text).unwrap(), d.population);
        assert!(parse_population("user=a\tlatent=-1\n").is_err());
        assert!(parse_population("user=a\tlatent=1\nuser=a\tlatent=2\n").is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let reg = FeatureRegistry::default_config();
        let bad = PopulationParams {
            flip_rate: 1.5,
            ..Default::default()
        };
        assert!(generate_population(&bad, &reg, REF, 0).is_err());
        let bad = PopulationParams {
            networks: vec!["zz".into()],
            ..Default::default()
        };
        assert!(generate_population(&bad, &reg, REF, 0).is_err());
    }
}
