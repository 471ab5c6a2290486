//! Synthetic social worlds with planted communities, attributes, and
//! polarities: a desk-scale ground truth for end-to-end evaluation.
//!
//! Entities are split round-robin across communities with Zipf popularity
//! inside each; users follow mostly their own community, crossing with
//! probability `mixing`. The planted polarity of an entity is its realized
//! audience lean between the two axis communities, so gold values are graded
//! by the actual mixing draws.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::util::seeded_rng;

const STREAM_FOLLOWS: u64 = 0x20;
const STREAM_ATTRS: u64 = 0x21;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("need at least as many entities ({entities}) as communities ({communities})")]
    TooFewEntities { entities: usize, communities: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_users: usize,
    pub n_communities: usize,
    /// Mean follow-set size (Poisson, clipped to [2, n_entities]).
    pub follows_mean: u32,
    /// Probability that a single follow is drawn from a foreign community.
    pub mixing: f64,
    /// Zipf exponent for within-community entity popularity; 0 = uniform.
    pub zipf_exponent: f64,
    /// Communities designated as the (Republican, Democratic) poles.
    pub polarity_axis: (usize, usize),
    /// Probability that a user's attribute flips away from community parity.
    pub attribute_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 100,
            n_users: 1000,
            n_communities: 2,
            follows_mean: 30,
            mixing: 0.1,
            zipf_exponent: 1.0,
            polarity_axis: (0, 1),
            attribute_noise: 0.05,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_communities < 2 {
            return Err(SynthError::InvalidConfig(
                "need at least 2 communities".into(),
            ));
        }
        if self.n_entities < self.n_communities {
            return Err(SynthError::TooFewEntities {
                entities: self.n_entities,
                communities: self.n_communities,
            });
        }
        if self.n_users == 0 {
            return Err(SynthError::InvalidConfig("need at least 1 user".into()));
        }
        if self.follows_mean < 2 {
            return Err(SynthError::InvalidConfig(
                "follows_mean must be at least 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mixing) {
            return Err(SynthError::InvalidConfig("mixing must be in [0,1]".into()));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(SynthError::InvalidConfig(
                "zipf_exponent must be >= 0".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.attribute_noise) {
            return Err(SynthError::InvalidConfig(
                "attribute_noise must be in [0, 0.5]".into(),
            ));
        }
        let (r, d) = self.polarity_axis;
        if r == d || r >= self.n_communities || d >= self.n_communities {
            return Err(SynthError::InvalidConfig(
                "polarity_axis must name two distinct communities".into(),
            ));
        }
        Ok(())
    }
}

/// A generated world. Entity and user identifiers are `e`/`u` plus a fixed-
/// width decimal index, so byte-lexicographic order equals numeric order.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub entity_community: Vec<usize>,
    /// Realized audience lean on the polarity axis, in [-1, 1]: +1 means all
    /// axis followers come from the R community, -1 all from D.
    pub entity_polarity_intensity: Vec<f64>,
    /// Realized follower count of each entity over the sampled corpus.
    pub entity_follower_count: Vec<u64>,
    pub user_community: Vec<usize>,
    pub user_attribute: Vec<u8>,
    /// Most-followed entity of each designated axis community.
    pub anchor_r: usize,
    pub anchor_d: usize,
    community_members: Vec<Vec<usize>>,
    community_cumweights: Vec<Vec<f64>>,
}

impl SyntheticWorld {
    pub fn entity_id(index: usize) -> String {
        format!("e{index:05}")
    }

    pub fn user_id(index: usize) -> String {
        format!("u{index:06}")
    }

    pub fn n_entities(&self) -> usize {
        self.entity_community.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_community.len()
    }
}

/// Builds a world deterministically under the config seed: round-robin
/// community assignment, Zipf popularity within each community, per-user
/// attribute flips, and the realized polarity gold derived from the sampled
/// follow sets.
pub fn generate_world(config: &SynthConfig) -> Result<SyntheticWorld, SynthError> {
    config.validate()?;
    let g = config.n_communities;
    let entity_community: Vec<usize> = (0..config.n_entities).map(|e| e % g).collect();
    let mut community_members: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (entity, &community) in entity_community.iter().enumerate() {
        community_members[community].push(entity);
    }
    let community_cumweights: Vec<Vec<f64>> = community_members
        .iter()
        .map(|members| {
            let mut total = 0.0;
            members
                .iter()
                .enumerate()
                .map(|(rank, _)| {
                    total += ((rank + 1) as f64).powf(-config.zipf_exponent);
                    total
                })
                .collect()
        })
        .collect();

    let user_community: Vec<usize> = (0..config.n_users).map(|u| u % g).collect();
    let mut attr_rng = seeded_rng(config.seed, &[STREAM_ATTRS]);
    let user_attribute: Vec<u8> = user_community
        .iter()
        .map(|&c| {
            let flip = attr_rng.random::<f64>() < config.attribute_noise;
            ((c % 2) as u8) ^ (flip as u8)
        })
        .collect();

    let mut world = SyntheticWorld {
        entity_community,
        entity_polarity_intensity: vec![0.0; config.n_entities],
        entity_follower_count: vec![0; config.n_entities],
        user_community,
        user_attribute,
        anchor_r: 0,
        anchor_d: 0,
        community_members,
        community_cumweights,
    };

    // Realize the corpus once to derive counts and the polarity gold; the
    // same per-user streams make emit_corpus reproduce it exactly.
    let (r_comm, d_comm) = config.polarity_axis;
    let mut followers_r = vec![0u64; config.n_entities];
    let mut followers_d = vec![0u64; config.n_entities];
    for user in 0..config.n_users {
        let set = sample_follows(&world, user, config);
        let community = world.user_community[user];
        for &entity in &set {
            world.entity_follower_count[entity] += 1;
            if community == r_comm {
                followers_r[entity] += 1;
            } else if community == d_comm {
                followers_d[entity] += 1;
            }
        }
    }
    for entity in 0..config.n_entities {
        let r = followers_r[entity] as f64;
        let d = followers_d[entity] as f64;
        world.entity_polarity_intensity[entity] = if r + d > 0.0 { (r - d) / (r + d) } else { 0.0 };
    }

    let most_followed = |community: usize| {
        world.community_members[community]
            .iter()
            .copied()
            .max_by(|&a, &b| {
                world.entity_follower_count[a]
                    .cmp(&world.entity_follower_count[b])
                    .then(b.cmp(&a)) // ties to the lower index
            })
            .expect("communities are non-empty")
    };
    world.anchor_r = most_followed(r_comm);
    world.anchor_d = most_followed(d_comm);
    Ok(world)
}

/// Samples one user's followee set: size Poisson(mean) clipped to
/// [2, n_entities]; each follow comes from the user's own community with
/// probability `1 - mixing`, otherwise from a uniformly random foreign
/// community, Zipf-weighted within the community. Duplicates collapse.
///
/// The draw is a pure function of `(config.seed, user)`, so repeated calls
/// reproduce the same set.
pub fn sample_follows(world: &SyntheticWorld, user: usize, config: &SynthConfig) -> BTreeSet<usize> {
    let mut rng = seeded_rng(config.seed, &[STREAM_FOLLOWS, user as u64]);
    let poisson = Poisson::new(config.follows_mean as f64).expect("validated mean");
    let size = (poisson.sample(&mut rng) as usize).clamp(2, world.n_entities());
    let own = world.user_community[user];
    let g = world.community_members.len();
    let mut set = BTreeSet::new();
    for _ in 0..size {
        let community = if rng.random::<f64>() < config.mixing {
            let mut pick = rng.random_range(0..g - 1);
            if pick >= own {
                pick += 1;
            }
            pick
        } else {
            own
        };
        let cum = &world.community_cumweights[community];
        let total = *cum.last().expect("non-empty community");
        let point = rng.random::<f64>() * total;
        let rank = cum.partition_point(|&c| c <= point).min(cum.len() - 1);
        set.insert(world.community_members[community][rank]);
    }
    set
}

/// Paths of the files written by [`emit_corpus`].
#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub follows: PathBuf,
    pub labels: PathBuf,
    pub gold: PathBuf,
    pub anchors: PathBuf,
}

/// Writes the world as a pipeline-ready file set under `outdir`:
/// `follows.tsv` (follow records), `labels.tsv` (user attributes),
/// `gold.tsv` (entity polarity intensities), and `anchors.tsv`.
pub fn emit_corpus(
    world: &SyntheticWorld,
    config: &SynthConfig,
    outdir: &Path,
) -> Result<EmittedFiles, SynthError> {
    std::fs::create_dir_all(outdir)?;
    let files = EmittedFiles {
        follows: outdir.join("follows.tsv"),
        labels: outdir.join("labels.tsv"),
        gold: outdir.join("gold.tsv"),
        anchors: outdir.join("anchors.tsv"),
    };

    let mut follows = BufWriter::new(File::create(&files.follows)?);
    for user in 0..world.n_users() {
        let set = sample_follows(world, user, config);
        let ids: Vec<String> = set.iter().map(|&e| SyntheticWorld::entity_id(e)).collect();
        writeln!(follows, "{}\t{}", SyntheticWorld::user_id(user), ids.join(" "))?;
    }
    follows.flush()?;

    let mut labels = BufWriter::new(File::create(&files.labels)?);
    for (user, &attribute) in world.user_attribute.iter().enumerate() {
        writeln!(labels, "{}\t{}", SyntheticWorld::user_id(user), attribute)?;
    }
    labels.flush()?;

    let mut gold = BufWriter::new(File::create(&files.gold)?);
    for (entity, &intensity) in world.entity_polarity_intensity.iter().enumerate() {
        writeln!(gold, "{}\t{:?}", SyntheticWorld::entity_id(entity), intensity)?;
    }
    gold.flush()?;

    let mut anchors = BufWriter::new(File::create(&files.anchors)?);
    writeln!(anchors, "R\t{}", SyntheticWorld::entity_id(world.anchor_r))?;
    writeln!(anchors, "D\t{}", SyntheticWorld::entity_id(world.anchor_d))?;
    anchors.flush()?;

    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_follow_records;

    fn config() -> SynthConfig {
        SynthConfig {
            n_entities: 20,
            n_users: 50,
            seed: 7,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn round_robin_communities() {
        let world = generate_world(&SynthConfig {
            n_entities: 4,
            n_users: 10,
            ..config()
        })
        .unwrap();
        assert_eq!(world.entity_community, vec![0, 1, 0, 1]);
    }

    #[test]
    fn same_seed_gives_identical_worlds() {
        let a = generate_world(&config()).unwrap();
        let b = generate_world(&config()).unwrap();
        assert_eq!(a.entity_polarity_intensity, b.entity_polarity_intensity);
        assert_eq!(a.entity_follower_count, b.entity_follower_count);
        assert_eq!(a.user_attribute, b.user_attribute);
        assert_eq!((a.anchor_r, a.anchor_d), (b.anchor_r, b.anchor_d));
        let c = generate_world(&SynthConfig {
            seed: 8,
            ..config()
        })
        .unwrap();
        assert_ne!(a.entity_follower_count, c.entity_follower_count);
    }

    #[test]
    fn zero_mixing_gives_pure_polarities() {
        let world = generate_world(&SynthConfig {
            mixing: 0.0,
            ..config()
        })
        .unwrap();
        for (entity, &intensity) in world.entity_polarity_intensity.iter().enumerate() {
            assert!(
                intensity == 1.0 || intensity == -1.0,
                "entity {entity} has graded intensity {intensity} despite mixing 0"
            );
            let expected = if world.entity_community[entity] == 0 { 1.0 } else { -1.0 };
            assert_eq!(intensity, expected);
        }
    }

    #[test]
    fn zero_mixing_keeps_follows_inside_the_community() {
        let cfg = SynthConfig {
            mixing: 0.0,
            ..config()
        };
        let world = generate_world(&cfg).unwrap();
        for user in 0..world.n_users() {
            let own = world.user_community[user];
            for entity in sample_follows(&world, user, &cfg) {
                assert_eq!(world.entity_community[entity], own);
            }
        }
    }

    #[test]
    fn full_mixing_makes_all_follows_foreign() {
        let cfg = SynthConfig {
            mixing: 1.0,
            ..config()
        };
        let world = generate_world(&cfg).unwrap();
        for user in 0..world.n_users() {
            let own = world.user_community[user];
            for entity in sample_follows(&world, user, &cfg) {
                assert_ne!(world.entity_community[entity], own);
            }
        }
    }

    #[test]
    fn follow_sets_respect_size_bounds() {
        let cfg = config();
        let world = generate_world(&cfg).unwrap();
        for user in 0..world.n_users() {
            let set = sample_follows(&world, user, &cfg);
            assert!(!set.is_empty());
            assert!(set.len() <= cfg.n_entities);
            for &entity in &set {
                assert!(entity < cfg.n_entities);
            }
        }
    }

    #[test]
    fn own_community_fraction_tracks_mixing() {
        // Monte Carlo over ~1e5 draws. Only the collapsed sets are
        // observable, so use uniform popularity over a large entity pool:
        // duplicate collapse is then negligible and symmetric across
        // communities, and the distinct-follow fraction estimates the
        // per-draw own-community probability.
        let cfg = SynthConfig {
            n_entities: 800,
            n_users: 3000,
            mixing: 0.2,
            zipf_exponent: 0.0,
            seed: 11,
            ..SynthConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        let mut own = 0u64;
        let mut total = 0u64;
        for user in 0..world.n_users() {
            let user_comm = world.user_community[user];
            for entity in sample_follows(&world, user, &cfg) {
                own += (world.entity_community[entity] == user_comm) as u64;
                total += 1;
            }
        }
        let fraction = own as f64 / total as f64;
        let expected = 1.0 - cfg.mixing;
        let se = (expected * (1.0 - expected) / total as f64).sqrt();
        assert!(
            (fraction - expected).abs() < 3.0 * se + 0.01,
            "own fraction {fraction} vs expected {expected} over {total} follows"
        );
    }

    #[test]
    fn anchors_are_most_followed_in_axis_communities() {
        let world = generate_world(&config()).unwrap();
        assert_ne!(world.anchor_r, world.anchor_d);
        assert_eq!(world.entity_community[world.anchor_r], 0);
        assert_eq!(world.entity_community[world.anchor_d], 1);
        for (entity, &count) in world.entity_follower_count.iter().enumerate() {
            if world.entity_community[entity] == 0 {
                assert!(count <= world.entity_follower_count[world.anchor_r]);
            } else {
                assert!(count <= world.entity_follower_count[world.anchor_d]);
            }
        }
    }

    #[test]
    fn emit_round_trips_through_the_parser() {
        let cfg = config();
        let world = generate_world(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_corpus(&world, &cfg, dir.path()).unwrap();
        let records = read_follow_records(&files.follows).unwrap();
        assert_eq!(records.len(), world.n_users());
        for (user, record) in records.iter().enumerate() {
            assert_eq!(record.user_id, SyntheticWorld::user_id(user));
            let expected: Vec<String> = sample_follows(&world, user, &cfg)
                .iter()
                .map(|&e| SyntheticWorld::entity_id(e))
                .collect();
            assert_eq!(record.followees, expected);
        }
    }

    #[test]
    fn label_file_has_one_row_per_user() {
        let cfg = config();
        let world = generate_world(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_corpus(&world, &cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files.labels).unwrap();
        assert_eq!(text.lines().count(), cfg.n_users);
        for line in text.lines() {
            let (_, label) = line.split_once('\t').unwrap();
            assert!(label == "0" || label == "1");
        }
    }

    #[test]
    fn gold_signs_match_communities_for_zero_mixing() {
        let cfg = SynthConfig {
            mixing: 0.0,
            ..config()
        };
        let world = generate_world(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_corpus(&world, &cfg, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files.gold).unwrap();
        for (entity, line) in text.lines().enumerate() {
            let (id, value) = line.split_once('\t').unwrap();
            assert_eq!(id, SyntheticWorld::entity_id(entity));
            let value: f64 = value.parse().unwrap();
            let expected = if world.entity_community[entity] == 0 { 1.0 } else { -1.0 };
            assert_eq!(value, expected);
        }
    }

    #[test]
    fn attribute_noise_flips_roughly_the_configured_fraction() {
        let cfg = SynthConfig {
            n_entities: 10,
            n_users: 5000,
            attribute_noise: 0.2,
            seed: 13,
            ..SynthConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        let flips = world
            .user_attribute
            .iter()
            .zip(&world.user_community)
            .filter(|&(&a, &c)| a != (c % 2) as u8)
            .count();
        let fraction = flips as f64 / cfg.n_users as f64;
        assert!((fraction - 0.2).abs() < 0.02, "flip fraction {fraction}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(
            generate_world(&SynthConfig {
                n_entities: 1,
                ..config()
            }),
            Err(SynthError::TooFewEntities { .. })
        ));
        assert!(generate_world(&SynthConfig {
            n_communities: 1,
            ..config()
        })
        .is_err());
        assert!(generate_world(&SynthConfig {
            mixing: 1.5,
            ..config()
        })
        .is_err());
        assert!(generate_world(&SynthConfig {
            polarity_axis: (0, 0),
            ..config()
        })
        .is_err());
    }
}
