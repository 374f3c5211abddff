//! Deterministic synthetic city with a planted cross-layer signal.
//!
//! Communities sit on a grid (4-neighbor borders). Every community is paired
//! with a non-bordering partner; the pair shares a set of dedicated 311
//! request categories, so the partner is only discoverable through the
//! non-police layers. Crime in a community follows
//!
//! ```text
//! count[i][c][t] = round(base[c][t] + seasonal[i][t] + beta * visits[i-12][partner(c)] + noise)
//! ```
//!
//! clamped at zero, where `visits` are the library visitors of the partner.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{
    CommunityId, CrimeTypeRegistry, IngestError, Library, MonthlyCube, PoliceStation, School,
};
use crate::month::{MonthRange, YearMonth};

/// Months of library history simulated before the span starts.
const VISIT_LAG: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthPlan {
    pub communities: usize,
    pub crime_types: usize,
    pub start: YearMonth,
    pub months: usize,
    /// Grid width; 0 picks `ceil(sqrt(communities))`.
    pub grid_columns: usize,
    pub communities_per_station: usize,
    pub max_schools_per_community: usize,
    pub background_request_types: usize,
    /// Dedicated 311 categories shared by each planted pair.
    pub signature_request_types: usize,
    pub beta: f64,
    pub noise_sd: f64,
    pub base_min: f64,
    pub base_max: f64,
    pub seasonal_amplitude: f64,
    pub visits_min: u64,
    pub visits_max: u64,
    pub signature_rate: f64,
    pub background_rate: f64,
    pub stray_rate: f64,
}

impl Default for SynthPlan {
    fn default() -> Self {
        Self {
            communities: 77,
            crime_types: 6,
            start: YearMonth::new(2011, 1).expect("valid month"),
            months: 60,
            grid_columns: 0,
            communities_per_station: 3,
            max_schools_per_community: 3,
            background_request_types: 2,
            signature_request_types: 4,
            beta: 0.02,
            noise_sd: 2.0,
            base_min: 10.0,
            base_max: 40.0,
            seasonal_amplitude: 3.0,
            visits_min: 200,
            visits_max: 1200,
            signature_rate: 60.0,
            background_rate: 20.0,
            stray_rate: 0.2,
        }
    }
}

impl SynthPlan {
    pub fn span(&self) -> Option<MonthRange> {
        MonthRange::starting_at(self.start, self.months)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidPlan(m.to_string()));
        if self.communities < 2 {
            return bad("communities must be at least 2");
        }
        if self.communities > u16::MAX as usize {
            return bad("too many communities");
        }
        if self.crime_types == 0 {
            return bad("crime_types must be positive");
        }
        if self.months == 0 {
            return bad("months must be positive");
        }
        if self.communities_per_station == 0 {
            return bad("communities_per_station must be positive");
        }
        if self.base_min > self.base_max || self.visits_min > self.visits_max {
            return bad("min bound exceeds max bound");
        }
        let nonneg = [
            self.beta,
            self.noise_sd,
            self.base_min,
            self.seasonal_amplitude,
            self.signature_rate,
            self.background_rate,
            self.stray_rate,
        ];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("rates, amplitudes, beta and noise must be finite and non-negative");
        }
        Ok(())
    }
}

/// Generating parameters needed to check recovery of the planted signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Planted similar community of each community (by index).
    pub partner: Vec<CommunityId>,
    pub beta: f64,
    /// `base[c][t]`.
    pub base: Vec<Vec<f64>>,
    /// `seasonal[i][t]` for every month of the span.
    pub seasonal: Vec<Vec<f64>>,
    /// `regressor[i][c]`: partner's library visits twelve months before month `i`.
    pub regressor: Vec<Vec<f64>>,
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u64
}

/// Random perfect matching avoiding bordering pairs; an odd community out is
/// assigned to a random non-bordering community.
fn plant_partners(
    rng: &mut ChaCha8Rng,
    n: usize,
    adjacent: impl Fn(usize, usize) -> bool,
) -> (Vec<usize>, Vec<Vec<usize>>) {
    for _ in 0..1000 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut partner = vec![usize::MAX; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut stuck = false;
        for (pos, &a) in order.iter().enumerate() {
            if partner[a] != usize::MAX {
                continue;
            }
            let b = order[pos + 1..]
                .iter()
                .copied()
                .find(|&b| partner[b] == usize::MAX && !adjacent(a, b));
            match b {
                Some(b) => {
                    partner[a] = b;
                    partner[b] = a;
                    groups.push(vec![a, b]);
                }
                None if n % 2 == 1 && !groups.is_empty() => {
                    let choices: Vec<usize> =
                        (0..n).filter(|&o| o != a && !adjacent(a, o) && partner[o] != usize::MAX).collect();
                    let Some(&o) = choices.as_slice().choose(rng) else {
                        stuck = true;
                        break;
                    };
                    partner[a] = o;
                    if let Some(g) = groups.iter_mut().find(|g| g.contains(&o)) {
                        g.push(a);
                    }
                }
                None => {
                    stuck = true;
                    break;
                }
            }
        }
        if !stuck && partner.iter().all(|&p| p != usize::MAX) {
            return (partner, groups);
        }
    }
    // Tiny or fully connected layouts: fall back to ignoring borders.
    let partner: Vec<usize> = (0..n).map(|a| if a % 2 == 0 { (a + 1) % n } else { a - 1 }).collect();
    let mut groups: Vec<Vec<usize>> = (0..n / 2).map(|k| vec![2 * k, 2 * k + 1]).collect();
    if n % 2 == 1 {
        groups[0].push(n - 1);
    }
    (partner, groups)
}

/// Generates a cube and the parameters that produced it. Pure in `(seed, plan)`.
pub fn generate_synthetic(
    seed: u64,
    plan: &SynthPlan,
) -> Result<(MonthlyCube, GroundTruth), IngestError> {
    plan.validate()?;
    let span = plan.span().ok_or_else(|| IngestError::InvalidPlan("empty span".into()))?;
    let n = plan.communities;
    let n_types = plan.crime_types;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cols = if plan.grid_columns == 0 {
        (n as f64).sqrt().ceil() as usize
    } else {
        plan.grid_columns
    };
    let grid_adjacent = |a: usize, b: usize| {
        let (ra, ca) = (a / cols, a % cols);
        let (rb, cb) = (b / cols, b % cols);
        (ra == rb && ca.abs_diff(cb) == 1) || (ca == cb && ra.abs_diff(rb) == 1)
    };
    let (partner, groups) = plant_partners(&mut rng, n, grid_adjacent);

    let registry = CrimeTypeRegistry::from_labels((0..n_types).map(|t| format!("CRIME-{t:02}")));

    let libraries: Vec<Library> = (0..n)
        .map(|c| Library {
            name: format!("LIBRARY-{:03}", c + 1),
            community: CommunityId::from_index(c),
        })
        .collect();

    let mut request_types: Vec<String> = (0..plan.background_request_types)
        .map(|r| format!("GENERAL-{r:02}"))
        .collect();
    let mut signature_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, members) in groups.iter().enumerate() {
        for j in 0..plan.signature_request_types {
            let r = request_types.len();
            request_types.push(format!("PAIR-{g:03}-{j}"));
            for &m in members {
                signature_of[m].push(r);
            }
        }
    }

    let mut schools = Vec::new();
    for c in 0..n {
        let k = rng.random_range(0..=plan.max_schools_per_community);
        for j in 0..k {
            let act = (rng.random_range(14.0..26.0f64) * 10.0).round() / 10.0;
            schools.push(School {
                id: format!("SCHOOL-{:03}-{j}", c + 1),
                community: CommunityId::from_index(c),
                act: Some(act),
            });
        }
    }

    let police: Vec<PoliceStation> = (0..n)
        .collect::<Vec<_>>()
        .chunks(plan.communities_per_station)
        .enumerate()
        .map(|(p, chunk)| PoliceStation {
            district: format!("{:03}", p + 1),
            communities: chunk.iter().map(|&c| CommunityId::from_index(c)).collect(),
        })
        .collect();

    let mut cube = MonthlyCube::new(
        span,
        n,
        registry,
        libraries,
        request_types,
        schools,
        police,
    );
    for a in 0..n {
        for b in a + 1..n {
            if grid_adjacent(a, b) {
                cube.set_adjacent(CommunityId::from_index(a), CommunityId::from_index(b));
            }
        }
    }

    // visits[k][c] for k in 0..lag+months; k = lag is the first span month
    let total = VISIT_LAG + plan.months;
    let visits: Vec<Vec<u64>> = (0..total)
        .map(|_| {
            (0..n)
                .map(|_| rng.random_range(plan.visits_min..=plan.visits_max))
                .collect()
        })
        .collect();
    for i in 0..plan.months {
        for c in 0..n {
            cube.set_library_visits(i, c, visits[VISIT_LAG + i][c]);
        }
    }

    let base: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..n_types)
                .map(|_| {
                    if plan.base_max > plan.base_min {
                        rng.random_range(plan.base_min..plan.base_max)
                    } else {
                        plan.base_min
                    }
                })
                .collect()
        })
        .collect();
    let phase: Vec<f64> = (0..n_types)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let seasonal: Vec<Vec<f64>> = span
        .iter()
        .map(|m| {
            let angle = std::f64::consts::TAU * (m.month() - 1) as f64 / 12.0;
            phase
                .iter()
                .map(|ph| plan.seasonal_amplitude * (angle + ph).sin())
                .collect()
        })
        .collect();
    let regressor: Vec<Vec<f64>> = (0..plan.months)
        .map(|i| (0..n).map(|c| visits[i][partner[c]] as f64).collect())
        .collect();

    let noise = Normal::new(0.0, plan.noise_sd).expect("finite sd");
    for i in 0..plan.months {
        for c in 0..n {
            for t in 0..n_types {
                let mean = base[c][t] + seasonal[i][t] + plan.beta * regressor[i][c];
                let v = (mean + noise.sample(&mut rng)).round().max(0.0);
                cube.set_crime_count(i, CommunityId::from_index(c), t, v as u32);
            }
        }
        for c in 0..n {
            let cid = CommunityId::from_index(c);
            for r in 0..cube.request_types.len() {
                let rate = if r < plan.background_request_types {
                    plan.background_rate
                } else if signature_of[c].contains(&r) {
                    plan.signature_rate
                } else {
                    plan.stray_rate
                };
                let v = poisson(&mut rng, rate);
                cube.set_service_calls(i, cid, r, v);
            }
        }
    }

    let truth = GroundTruth {
        seed,
        partner: partner.iter().map(|&p| CommunityId::from_index(p)).collect(),
        beta: plan.beta,
        base,
        seasonal,
        regressor,
    };
    Ok((cube, truth))
}
